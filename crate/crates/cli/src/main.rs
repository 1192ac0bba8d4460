use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use irsrob_cli::solution::SolutionFile;
use irsrob_cli::{run, timing, write_rows, write_timing, ExperimentConfig};
use irsrob_core::channel_model::{generate_scenario, ChannelFile, EstimatedChannels, QosSpec, SystemDims};
use irsrob_core::validation::{mc_outage, worst_case_rate, SearchBudget, ValidationReport};
use irsrob_core::{DesignError, Method};

#[derive(Parser)]
#[command(name = "irsrob", version, about = "Robust IRS-aided beamforming experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config (JSON). Missing fields take the defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Subcommand)]
enum Cmd {
    /// Draw a channel set and write it as JSON.
    Generate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        k: Option<usize>,
    },
    /// Design a precoder and reflection vector for a channel file.
    Solve {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        channels: PathBuf,
        #[arg(long)]
        method: Method,
    },
    /// Check a design: Monte-Carlo outage (statistical) or worst-rate search (bounded).
    Validate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        channels: PathBuf,
        #[arg(long)]
        solution: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 200)]
        starts: usize,
        #[arg(long, default_value_t = 50)]
        steps: usize,
    },
    /// Run a configured experiment grid and write one CSV row per result.
    Sweep {
        #[command(flatten)]
        common: Common,
    },
    /// Per-iteration wall time of each method over the grid.
    Bench {
        #[command(flatten)]
        common: Common,
    },
}

enum Failure {
    Config(String),
    Io(String),
    AllInfeasible,
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Io(_) => 3,
            Failure::AllInfeasible => 4,
        }
    }
}

fn load_config(c: &Common) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match &c.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?;
            ExperimentConfig::from_json(&text).map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn output_path(c: &Common, cfg: &ExperimentConfig) -> Option<PathBuf> {
    c.out.clone().or_else(|| cfg.out.as_ref().map(PathBuf::from))
}

fn emit(path: Option<&Path>, write: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> Result<(), Failure> {
    let res = match path {
        Some(p) => fs::File::create(p).and_then(|f| {
            let mut w = io::BufWriter::new(f);
            write(&mut w)?;
            w.flush()
        }),
        None => write(&mut io::stdout().lock()),
    };
    res.map_err(|e| Failure::Io(format!("{}: {e}", path.map_or("stdout".into(), |p| p.display().to_string()))))
}

fn read_estimate(path: &Path) -> Result<EstimatedChannels, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    let file = ChannelFile::from_json(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    match file.estimate() {
        Ok(Some(est)) => Ok(est),
        Ok(None) => file
            .truth()
            .map_err(|e| Failure::Config(e.to_string()))?
            .map(|t| EstimatedChannels::from(&t))
            .ok_or_else(|| Failure::Config(format!("{}: no channels", path.display()))),
        Err(e) => Err(Failure::Config(format!("{}: {e}", path.display()))),
    }
}

fn csv_err(e: csv::Error) -> io::Error {
    io::Error::other(e)
}

fn main_inner(cli: Cli) -> Result<(), Failure> {
    match cli.cmd {
        Cmd::Generate { common, n, m, k } => {
            let cfg = load_config(&common)?;
            let dims = SystemDims::new(n.unwrap_or(cfg.n), m.unwrap_or(cfg.m), k.unwrap_or(cfg.k))
                .map_err(|e| Failure::Config(e.to_string()))?;
            let truth = generate_scenario(dims, &cfg.geometry, cfg.seed).map_err(|e| Failure::Config(e.to_string()))?;
            let est = EstimatedChannels::from(&truth);
            let text = ChannelFile::new(dims, Some(&truth), Some(&est)).to_json();
            emit(output_path(&common, &cfg).as_deref(), |w| writeln!(w, "{text}"))
        }
        Cmd::Solve { common, channels, method } => {
            let cfg = load_config(&common)?;
            let est = read_estimate(&channels)?;
            let model = method
                .error_model(&est, cfg.delta_g, cfg.delta_h, cfg.rho)
                .map_err(|e| Failure::Config(e.to_string()))?;
            let qos = QosSpec::uniform(est.n_users(), cfg.rate, cfg.noise_dbm, cfg.rho);
            match method.solve(&est, &model, &qos, cfg.seed, &cfg.ao_options()) {
                Ok(out) => {
                    let text = serde_json::to_string_pretty(&SolutionFile::new(method, &out)).expect("plain data");
                    emit(output_path(&common, &cfg).as_deref(), |w| writeln!(w, "{text}"))
                }
                Err(DesignError::Infeasible) => Err(Failure::AllInfeasible),
                Err(e) => {
                    eprintln!("solve failed: {e}");
                    Err(Failure::AllInfeasible)
                }
            }
        }
        Cmd::Validate { common, channels, solution, samples, starts, steps } => {
            let cfg = load_config(&common)?;
            let est = read_estimate(&channels)?;
            let text = fs::read_to_string(&solution).map_err(|e| Failure::Io(format!("{}: {e}", solution.display())))?;
            let file: SolutionFile =
                serde_json::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", solution.display())))?;
            let sol = file.solution().map_err(Failure::Config)?;
            let model = file
                .method
                .error_model(&est, cfg.delta_g, cfg.delta_h, cfg.rho)
                .map_err(|e| Failure::Config(e.to_string()))?;
            let qos = QosSpec::uniform(est.n_users(), cfg.rate, cfg.noise_dbm, cfg.rho);
            let budget = SearchBudget { starts, steps, ..Default::default() };
            let report = match file.method {
                Method::PcuBounded | Method::FcuBounded => {
                    let w = worst_case_rate(&sol, &est, &model, &qos, &budget, cfg.seed)
                        .map_err(|e| Failure::Config(e.to_string()))?;
                    ValidationReport::from_parts(None, Some(&w), &budget)
                }
                _ => {
                    let o = mc_outage(&sol, &est, &model, &qos, samples, cfg.seed)
                        .map_err(|e| Failure::Config(e.to_string()))?;
                    ValidationReport::from_parts(Some(&o), None, &budget)
                }
            };
            let path = output_path(&common, &cfg);
            let as_csv = path.as_ref().and_then(|p| p.extension()).is_some_and(|x| x == "csv");
            let body = if as_csv { report.to_csv() } else { report.to_json() + "\n" };
            emit(path.as_deref(), |w| w.write_all(body.as_bytes()))
        }
        Cmd::Sweep { common } => {
            let cfg = load_config(&common)?;
            let rows = run(&cfg, common.jobs);
            emit(output_path(&common, &cfg).as_deref(), |w| write_rows(w, &rows).map_err(csv_err))?;
            if !rows.is_empty() && rows.iter().all(|r| !r.feasible()) {
                return Err(Failure::AllInfeasible);
            }
            Ok(())
        }
        Cmd::Bench { common } => {
            let mut cfg = load_config(&common)?;
            cfg.per_iteration = true;
            let rows = run(&cfg, common.jobs);
            let t = timing(&rows);
            emit(output_path(&common, &cfg).as_deref(), |w| write_timing(w, &t).map_err(csv_err))?;
            if rows.iter().all(|r| !r.feasible()) {
                return Err(Failure::AllInfeasible);
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match main_inner(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Config(s) => eprintln!("config error: {s}"),
                Failure::Io(s) => eprintln!("i/o error: {s}"),
                Failure::AllInfeasible => eprintln!("every instance was infeasible"),
            }
            ExitCode::from(f.code())
        }
    }
}
