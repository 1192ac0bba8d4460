//! Experiment configuration. A config is one JSON document; a `figure`
//! preset fills in every field the document does not set.

use std::collections::BTreeMap;

use irsrob_core::channel_model::{Geometry, SystemDims};
use irsrob_core::{AoOptions, Method};
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Figure {
    /// Power against outer iteration (N = M = 6, K = 3).
    Convergence,
    /// Per-iteration CPU time against M.
    CpuTime,
    /// Power against target rate for K = 2 and 3.
    PowerVsRate,
    /// Feasibility against M for several error levels.
    Feasibility,
    /// PCU-stat power against M for several error levels, with the no-IRS benchmark.
    PowerVsM,
}

/// Grid axes. A grid is the Cartesian product of the listed values.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    N,
    M,
    K,
    Rate,
    DeltaG,
    DeltaH,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub figure: Option<Figure>,
    pub methods: Vec<Method>,
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub geometry: Geometry,
    /// Target rate R (bit/s/Hz), same for every user.
    pub rate: f64,
    pub noise_dbm: f64,
    pub rho: f64,
    pub delta_g: f64,
    pub delta_h: f64,
    pub grid: BTreeMap<Axis, Vec<f64>>,
    pub n_instances: usize,
    /// Instance `i` uses scenario seed `seed + i`.
    pub seed: u64,
    /// Relative power change that ends the alternation.
    pub tolerance: f64,
    pub max_iter: usize,
    /// Keep only instances that are feasible at the largest value of the
    /// `m` (else `n`) axis, per remaining grid point and method.
    pub post_filter: bool,
    /// Rows of every outer iteration (true) or only the final one.
    pub per_iteration: bool,
    pub out: Option<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            figure: None,
            methods: vec![Method::PcuBounded, Method::FcuBounded, Method::PcuStat, Method::FcuStat],
            n: 6,
            m: 6,
            k: 2,
            geometry: Geometry::default(),
            rate: 2.0,
            noise_dbm: -80.0,
            rho: 0.05,
            delta_g: 0.01,
            delta_h: 0.02,
            grid: BTreeMap::new(),
            n_instances: 20,
            seed: 0,
            tolerance: 1e-4,
            max_iter: 30,
            post_filter: false,
            per_iteration: false,
            out: None,
        }
    }
}

fn preset(fig: Figure) -> Value {
    use serde_json::json;
    match fig {
        Figure::Convergence => json!({ "n": 6, "m": 6, "k": 3, "per_iteration": true }),
        Figure::CpuTime => json!({ "n": 6, "k": 2, "grid": { "m": [2, 4, 6, 8, 10] }, "n_instances": 10 }),
        Figure::PowerVsRate => json!({
            "n": 6, "m": 6,
            "grid": { "k": [2, 3], "rate": [1, 2, 3, 4] },
        }),
        Figure::Feasibility => json!({
            "methods": ["pcu-stat"],
            "n": 6, "k": 2, "delta_h": 0.0,
            "grid": { "m": [2, 4, 6, 8, 10, 12, 14, 16], "delta_g": [0.0, 0.05, 0.08, 0.1, 0.12] },
            "n_instances": 100,
        }),
        Figure::PowerVsM => json!({
            "methods": ["pcu-stat", "no-irs-baseline"],
            "n": 6, "k": 2, "delta_h": 0.0,
            "grid": { "m": [4, 6, 8, 10, 12, 14, 16], "delta_g": [0.0, 0.05, 0.08, 0.1, 0.12] },
            "n_instances": 100,
            "post_filter": true,
        }),
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct ConfigError(pub String);

impl ExperimentConfig {
    /// Parse a config document: defaults, then the figure preset, then the
    /// document's own fields.
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let user: Value = serde_json::from_str(text).map_err(|e| ConfigError(format!("config is not JSON: {e}")))?;
        let Value::Object(user) = user else {
            return Err(ConfigError("config must be a JSON object".into()));
        };
        let mut merged = serde_json::to_value(Self::default()).expect("plain data");
        if let Some(f) = user.get("figure") {
            let fig: Figure = serde_json::from_value(f.clone()).map_err(|e| ConfigError(format!("figure: {e}")))?;
            merge(&mut merged, preset(fig));
        }
        merge(&mut merged, Value::Object(user));
        let cfg: Self = serde_json::from_value(merged).map_err(|e| ConfigError(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |s: String| Err(ConfigError(s));
        if self.methods.is_empty() {
            return bad("no methods".into());
        }
        if self.n_instances == 0 {
            return bad("n_instances must be at least 1".into());
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return bad(format!("rho must lie in (0, 1), got {}", self.rho));
        }
        if !(self.tolerance > 0.0) || self.max_iter == 0 {
            return bad("tolerance and max_iter must be positive".into());
        }
        self.geometry.validate().map_err(|e| ConfigError(e.to_string()))?;
        for (axis, vals) in &self.grid {
            if vals.is_empty() {
                return bad(format!("grid axis {axis:?} is empty"));
            }
            for &v in vals {
                let ok = match axis {
                    Axis::N | Axis::K => v >= 1.0 && v.fract() == 0.0,
                    Axis::M => v >= 0.0 && v.fract() == 0.0,
                    Axis::Rate => v > 0.0,
                    Axis::DeltaG | Axis::DeltaH => (0.0..1.0).contains(&v),
                };
                if !ok {
                    return bad(format!("grid axis {axis:?}: bad value {v}"));
                }
            }
        }
        for p in self.points() {
            if !(p.rate > 0.0) || !(0.0..1.0).contains(&p.delta_g) || !(0.0..1.0).contains(&p.delta_h) {
                return bad(format!("bad grid point {p:?}"));
            }
            SystemDims::new(p.n, p.m, p.k).map_err(|e| ConfigError(e.to_string()))?;
        }
        Ok(())
    }

    pub fn ao_options(&self) -> AoOptions {
        AoOptions { tol: self.tolerance, max_iter: self.max_iter, ..AoOptions::default() }
    }

    /// Grid points in deterministic order (axes sorted, last axis fastest).
    pub fn points(&self) -> Vec<Point> {
        let base = Point {
            n: self.n,
            m: self.m,
            k: self.k,
            rate: self.rate,
            delta_g: self.delta_g,
            delta_h: self.delta_h,
        };
        let mut out = vec![base];
        for (axis, vals) in &self.grid {
            let mut next = Vec::with_capacity(out.len() * vals.len());
            for p in &out {
                for &v in vals {
                    let mut q = p.clone();
                    match axis {
                        Axis::N => q.n = v as usize,
                        Axis::M => q.m = v as usize,
                        Axis::K => q.k = v as usize,
                        Axis::Rate => q.rate = v,
                        Axis::DeltaG => q.delta_g = v,
                        Axis::DeltaH => q.delta_h = v,
                    }
                    next.push(q);
                }
            }
            out = next;
        }
        out
    }
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                // grids replace, not merge, so a user grid drops preset axes
                if k == "grid" {
                    b.insert(k, v);
                } else {
                    merge(b.entry(k).or_insert(Value::Null), v);
                }
            }
        }
        (b, o) => *b = o,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Point {
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub rate: f64,
    pub delta_g: f64,
    pub delta_h: f64,
}
