//! Batch execution of a configuration over its instance grid, and the CSV
//! row types it produces.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io;
use std::time::Instant;

use irsrob_core::channel_model::{generate_scenario, mw_to_dbm, EstimatedChannels, QosSpec, SystemDims};
use irsrob_core::{AoOutcome, AoStatus, DesignError, Method, Scenario};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::complexity::complexity_estimate;
use crate::config::{ExperimentConfig, Point};

pub const RUN_COLUMNS: [&str; 12] = [
    "method",
    "N",
    "M",
    "K",
    "R",
    "delta_g",
    "delta_h",
    "instance_seed",
    "iteration",
    "power_dbm",
    "status",
    "wall_time_ms",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub method: Method,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "R")]
    pub rate: f64,
    pub delta_g: f64,
    pub delta_h: f64,
    pub instance_seed: u64,
    /// 1-based outer iteration; 0 when no design was found.
    pub iteration: usize,
    pub power_dbm: Option<f64>,
    pub status: String,
    pub wall_time_ms: f64,
}

impl Row {
    pub fn feasible(&self) -> bool {
        !matches!(self.status.as_str(), "infeasible" | "error")
    }
}

pub fn status_name(s: AoStatus) -> &'static str {
    match s {
        AoStatus::Converged => "converged",
        AoStatus::IterationLimit => "iteration-limit",
        AoStatus::Infeasible => "infeasible",
        AoStatus::Stalled => "stalled",
    }
}

/// Scenario and estimates of one instance.
pub fn instance_channels(cfg: &ExperimentConfig, p: &Point, seed: u64) -> Result<EstimatedChannels, DesignError> {
    let dims = SystemDims::new(p.n, p.m, p.k)?;
    Ok(EstimatedChannels::from(&generate_scenario(dims, &cfg.geometry, seed)?))
}

/// Run one method on one instance of one grid point.
pub fn solve_instance(
    cfg: &ExperimentConfig,
    method: Method,
    p: &Point,
    seed: u64,
) -> (Result<AoOutcome, DesignError>, f64) {
    let clock = Instant::now();
    let res = instance_channels(cfg, p, seed).and_then(|est| {
        let model = method.error_model(&est, p.delta_g, p.delta_h, cfg.rho)?;
        let qos = QosSpec::uniform(p.k, p.rate, cfg.noise_dbm, cfg.rho);
        method.solve(&est, &model, &qos, seed, &cfg.ao_options())
    });
    (res, clock.elapsed().as_secs_f64() * 1e3)
}

fn rows_for(cfg: &ExperimentConfig, method: Method, p: &Point, seed: u64) -> Vec<Row> {
    let (res, ms) = solve_instance(cfg, method, p, seed);
    let row = |iteration: usize, power: Option<f64>, status: &str, wall: f64| Row {
        method,
        n: p.n,
        m: p.m,
        k: p.k,
        rate: p.rate,
        delta_g: p.delta_g,
        delta_h: p.delta_h,
        instance_seed: seed,
        iteration,
        power_dbm: power,
        status: status.to_string(),
        wall_time_ms: wall,
    };
    match res {
        Ok(out) => {
            let status = status_name(out.status);
            let tr = &out.trace;
            let last = tr.power.len();
            let first = if cfg.per_iteration { 1 } else { last };
            (first..=last)
                .map(|i| {
                    let p = if i == last { out.solution.power } else { tr.power[i - 1] };
                    row(i, Some(mw_to_dbm(p)), status, tr.iter_ms.get(i - 1).copied().unwrap_or(f64::NAN))
                })
                .collect()
        }
        Err(DesignError::Infeasible) => vec![row(0, None, "infeasible", ms)],
        Err(e) => {
            log::warn!("{method} seed {seed} at {p:?}: {e}");
            vec![row(0, None, "error", ms)]
        }
    }
}

/// All rows, in grid order (point, method, instance). `jobs` worker threads.
pub fn run(cfg: &ExperimentConfig, jobs: usize) -> Vec<Row> {
    let mut units = Vec::new();
    for p in cfg.points() {
        for &method in &cfg.methods {
            for i in 0..cfg.n_instances {
                units.push((p.clone(), method, cfg.seed.wrapping_add(i as u64)));
            }
        }
    }
    let work = || units.par_iter().map(|(p, method, seed)| rows_for(cfg, *method, p, *seed)).collect::<Vec<_>>();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build().expect("thread pool");
    let rows: Vec<Row> = pool.install(work).into_iter().flatten().collect();
    if cfg.post_filter {
        post_filter(cfg, rows)
    } else {
        rows
    }
}

/// Keep instances that are feasible at the largest `m` (else `n`) of the
/// grid, per method and remaining grid coordinates.
pub fn post_filter(cfg: &ExperimentConfig, rows: Vec<Row>) -> Vec<Row> {
    use crate::config::Axis;
    let axis = if cfg.grid.contains_key(&Axis::M) {
        Axis::M
    } else if cfg.grid.contains_key(&Axis::N) {
        Axis::N
    } else {
        return rows;
    };
    let top = cfg.grid[&axis].iter().copied().fold(f64::MIN, f64::max) as usize;
    let key = |r: &Row| {
        let (n, m) = match axis {
            Axis::M => (r.n, 0),
            _ => (0, r.m),
        };
        (r.method, n, m, r.k, r.rate.to_bits(), r.delta_g.to_bits(), r.delta_h.to_bits(), r.instance_seed)
    };
    let at_top = |r: &Row| match axis {
        Axis::M => r.m == top,
        _ => r.n == top,
    };
    // the no-IRS benchmark does not depend on M; it follows the IRS designs
    let keep: HashSet<_> = rows.iter().filter(|r| at_top(r) && r.feasible()).map(key).collect();
    let irs_keep: HashSet<_> = keep
        .iter()
        .filter(|k| k.0 != Method::NoIrsBaseline)
        .map(|k| (k.1, k.2, k.3, k.4, k.5, k.6, k.7))
        .collect();
    rows.into_iter()
        .filter(|r| {
            let k = key(r);
            if r.method == Method::NoIrsBaseline {
                irs_keep.contains(&(k.1, k.2, k.3, k.4, k.5, k.6, k.7))
            } else {
                keep.contains(&k)
            }
        })
        .collect()
}

pub fn write_rows<W: io::Write>(w: W, rows: &[Row]) -> csv::Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    if rows.is_empty() {
        wr.write_record(RUN_COLUMNS)?;
    }
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

/// Read run rows, checking the header against [`RUN_COLUMNS`].
pub fn read_rows<R: io::Read>(r: R) -> csv::Result<Vec<Row>> {
    let mut rd = csv::Reader::from_reader(r);
    let header = rd.headers()?.clone();
    if header.iter().ne(RUN_COLUMNS) {
        return Err(csv::Error::from(io::Error::new(
            io::ErrorKind::InvalidData,
            format!("unexpected header {header:?}"),
        )));
    }
    rd.deserialize().collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub method: Method,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "K")]
    pub k: usize,
    pub instances: usize,
    pub iterations: usize,
    pub mean_iter_ms: f64,
    pub complexity: f64,
    /// Bounded method time over the statistical method of the same scenario.
    pub ratio_to_stat: Option<f64>,
}

/// Mean wall time per outer iteration. The first row of each run is the
/// start-up precoder step and is left out when later iterations exist.
pub fn timing(rows: &[Row]) -> Vec<TimingRow> {
    let mut acc: BTreeMap<(usize, usize, usize, String), (Method, HashSet<u64>, Vec<f64>)> = BTreeMap::new();
    let mut per_run: HashMap<(String, usize, usize, usize, u64), Vec<&Row>> = HashMap::new();
    for r in rows.iter().filter(|r| r.iteration > 0) {
        per_run.entry((r.method.to_string(), r.n, r.m, r.k, r.instance_seed)).or_default().push(r);
    }
    for ((name, n, m, k, seed), runs) in per_run {
        let later: Vec<f64> = runs.iter().filter(|r| r.iteration > 1).map(|r| r.wall_time_ms).collect();
        let times = if later.is_empty() { runs.iter().map(|r| r.wall_time_ms).collect() } else { later };
        let e = acc.entry((n, m, k, name)).or_insert_with(|| (runs[0].method, HashSet::new(), Vec::new()));
        e.1.insert(seed);
        e.2.extend(times);
    }
    let mut out: Vec<TimingRow> = acc
        .into_iter()
        .map(|((n, m, k, _), (method, seeds, times))| TimingRow {
            method,
            n,
            m,
            k,
            instances: seeds.len(),
            iterations: times.len(),
            mean_iter_ms: times.iter().sum::<f64>() / times.len().max(1) as f64,
            complexity: complexity_estimate(method, n, m, k),
            ratio_to_stat: None,
        })
        .collect();
    let stat: HashMap<(usize, usize, usize, Scenario), f64> = out
        .iter()
        .filter(|t| matches!(t.method, Method::PcuStat | Method::FcuStat))
        .map(|t| ((t.n, t.m, t.k, t.method.scenario()), t.mean_iter_ms))
        .collect();
    for t in out.iter_mut().filter(|t| matches!(t.method, Method::PcuBounded | Method::FcuBounded)) {
        t.ratio_to_stat = stat.get(&(t.n, t.m, t.k, t.method.scenario())).map(|s| t.mean_iter_ms / s);
    }
    out
}

pub fn write_timing<W: io::Write>(w: W, rows: &[TimingRow]) -> csv::Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    for r in rows {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_timing<R: io::Read>(r: R) -> csv::Result<Vec<TimingRow>> {
    csv::Reader::from_reader(r).deserialize().collect()
}
