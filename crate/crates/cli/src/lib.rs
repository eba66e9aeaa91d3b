//! `sps`: runs the single-photon source experiments from a config file and
//! writes CSV tables, a JSON run summary and optional SVG charts.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure, 4 I/O error.

pub mod config;
pub mod plot;

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;
use sps_core::dynamics::DynamicsError;
use sps_core::experiment::{self as exp, Controller, ExperimentError};
use thiserror::Error;

pub use config::{Config, ConfigError};

pub const BUILD_ID: &str = env!("SPS_BUILD_ID");
pub const OUTPUT_DIR_ENV: &str = "SPS_OUTPUT_DIR";

#[derive(Debug, Parser)]
#[command(
    name = "sps",
    version,
    about = "Monitored single-photon source: trajectories, controllers and sweeps"
)]
pub struct Cli {
    /// TOML config file; defaults apply to anything it leaves out.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides the config).
    #[arg(long, global = true, env = OUTPUT_DIR_ENV)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub n_traj: Option<usize>,
    #[arg(long, global = true)]
    pub dt: Option<f64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Lindblad photon statistics against pumping time, plus the best timers.
    Deterministic,
    /// One monitored cycle with its record, detector and filter traces.
    Trajectory {
        #[arg(long, default_value_t = 0)]
        index: u64,
        #[command(flatten)]
        ctrl: ControllerArgs,
    },
    /// Photon statistics averaged over `n_traj` cycles.
    Montecarlo {
        #[command(flatten)]
        ctrl: ControllerArgs,
    },
    /// Best p1 per pump rate and case.
    Sweep,
    /// CUSUM statistics over the threshold grid.
    OptimizeH,
    /// Render a CSV written by another subcommand as an SVG line chart.
    Plot {
        input: PathBuf,
        /// Defaults to the input path with an `.svg` extension.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum ControllerKind {
    Timer,
    Cusum,
    Bayes,
}

#[derive(Debug, Args)]
pub struct ControllerArgs {
    #[arg(long, value_enum)]
    pub controller: Option<ControllerKind>,
    /// Pumping time for the timer controller.
    #[arg(long)]
    pub t_stop: Option<f64>,
    #[arg(long)]
    pub h: Option<f64>,
    #[arg(long)]
    pub epsilon: Option<f64>,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Plot(#[from] plot::PlotError),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Io { .. } => 4,
            CliError::Plot(plot::PlotError::Io { .. }) => 4,
            CliError::Plot(_) => 2,
        }
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::InvalidControl { name, reason } => CliError::Config(ConfigError {
                path: format!("run.{name}"),
                reason,
            }),
            ExperimentError::Dynamics(DynamicsError::InvalidParams { name, reason }) => CliError::Config(ConfigError {
                path: format!("model.{name}"),
                reason,
            }),
            ExperimentError::Dynamics(DynamicsError::DegenerateNoise) => CliError::Config(ConfigError {
                path: "model".into(),
                reason: DynamicsError::DegenerateNoise.to_string(),
            }),
            ExperimentError::Io(source) => CliError::Io {
                context: "writing output".into(),
                source,
            },
            ExperimentError::Csv(e) => CliError::Io {
                context: "writing CSV".into(),
                source: std::io::Error::other(e),
            },
            other => CliError::Numerical(other.to_string()),
        }
    }
}

fn io_err(context: impl Into<String>) -> impl FnOnce(std::io::Error) -> CliError {
    let context = context.into();
    move |source| CliError::Io { context, source }
}

/// Config file, then flags.
pub fn resolve_config(cli: &Cli) -> Result<Config, CliError> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(s) = cli.seed {
        cfg.run.seed = s;
    }
    if let Some(n) = cli.n_traj {
        cfg.run.n_traj = n;
    }
    if let Some(dt) = cli.dt {
        cfg.run.dt = dt;
    }
    if let Some(dir) = &cli.out {
        cfg.output.dir = dir.clone();
    }
    let ctrl = match &cli.command {
        Command::Trajectory { ctrl, .. } | Command::Montecarlo { ctrl } => Some(ctrl),
        _ => None,
    };
    if let Some(c) = ctrl {
        if let Some(kind) = c.controller {
            cfg.run.controller = match kind {
                ControllerKind::Timer => Controller::Timer {
                    t_stop: c.t_stop.unwrap_or(8.0),
                },
                ControllerKind::Cusum => Controller::Cusum,
                ControllerKind::Bayes => Controller::Bayes,
            };
        } else if let (Some(t), Controller::Timer { .. }) = (c.t_stop, cfg.run.controller) {
            cfg.run.controller = Controller::Timer { t_stop: t };
        }
        if let Some(h) = c.h {
            cfg.run.h = h;
        }
        if let Some(e) = c.epsilon {
            cfg.run.epsilon = e;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Serialize)]
struct Summary<'a, R: Serialize> {
    command: &'a str,
    build_id: &'a str,
    config: &'a Config,
    result: R,
}

struct Outputs<'a> {
    cfg: &'a Config,
    written: Vec<PathBuf>,
}

impl Outputs<'_> {
    fn path(&self, name: &str) -> PathBuf {
        self.cfg.output.dir.join(name)
    }

    fn csv(
        &mut self,
        name: &str,
        write: impl FnOnce(BufWriter<File>) -> Result<(), ExperimentError>,
    ) -> Result<(), CliError> {
        let path = self.path(name);
        let f = File::create(&path).map_err(io_err(format!("creating {}", path.display())))?;
        write(BufWriter::new(f))?;
        if self.cfg.output.plot && plot::render(&path).is_ok() {
            let svg = path.with_extension("svg");
            plot::plot_file(&path, &svg)?;
            self.written.push(svg);
        }
        self.written.push(path);
        Ok(())
    }

    fn summary<R: Serialize>(&mut self, command: &str, result: R) -> Result<(), CliError> {
        let path = self.path("summary.json");
        let s = Summary {
            command,
            build_id: BUILD_ID,
            config: self.cfg,
            result,
        };
        let text = serde_json::to_string_pretty(&s).map_err(|e| CliError::Io {
            context: "encoding summary".into(),
            source: e.into(),
        })?;
        std::fs::write(&path, text + "\n").map_err(io_err(format!("writing {}", path.display())))?;
        self.written.push(path);
        Ok(())
    }
}

/// Runs a parsed command line; returns the files written.
pub fn run(cli: &Cli) -> Result<Vec<PathBuf>, CliError> {
    if let Command::Plot { input, output } = &cli.command {
        let out = output.clone().unwrap_or_else(|| input.with_extension("svg"));
        plot::plot_file(input, &out)?;
        return Ok(vec![out]);
    }
    let cfg = resolve_config(cli)?;
    for w in cfg.regime_warnings() {
        eprintln!("warning: {w}");
    }
    std::fs::create_dir_all(&cfg.output.dir).map_err(io_err(format!("creating {}", cfg.output.dir.display())))?;
    let mut out = Outputs {
        cfg: &cfg,
        written: vec![],
    };
    let (model, run) = (cfg.model, cfg.run);
    match &cli.command {
        Command::Deterministic => {
            let grid = exp::uniform_grid(cfg.curve.t_end, cfg.curve.t_step);
            let curve = exp::deterministic_curve(model, run.dt, run.t_tail, &grid)?;
            out.csv("curve.csv", |w| exp::write_curve(w, &curve))?;
            let unconstrained = exp::optimal_timer(&curve, 1.0).ok();
            let constrained = exp::optimal_timer(&curve, run.epsilon).ok();
            out.summary(
                "deterministic",
                json!({ "max_p1": unconstrained, "constrained": constrained }),
            )?;
        }
        Command::Trajectory { index, .. } => {
            let sim = exp::Simulator::new(model, run)?;
            let (outcome, trace) = sim.run_traced(*index)?;
            out.csv("record.csv", |w| exp::write_record(w, &trace.record))?;
            out.csv("detector.csv", |w| exp::write_detector(w, &trace.detector))?;
            out.csv("filter.csv", |w| exp::write_filter(w, &trace.filter))?;
            out.summary("trajectory", json!({ "index": index, "outcome": outcome }))?;
        }
        Command::Montecarlo { .. } => {
            let stats = exp::monte_carlo(model, run)?;
            out.csv("results.csv", |w| exp::write_results(w, std::slice::from_ref(&stats)))?;
            out.summary("montecarlo", &stats)?;
        }
        Command::Sweep => {
            let hs = cfg.sweep.thresholds();
            let rows = exp::sweep_omega(model, &cfg.sweep.omegas, &cfg.sweep.cases, run, &hs)?;
            out.csv("sweep.csv", |w| exp::write_results(w, &rows))?;
            let violations = rows.iter().filter(|r| !r.within_constraint(run.epsilon)).count();
            out.summary(
                "sweep",
                json!({ "rows": rows.len(), "constraint_violations": violations }),
            )?;
        }
        Command::OptimizeH => {
            let scan = exp::optimize_h(model, run, &cfg.sweep.thresholds())?;
            out.csv("h_scan.csv", |w| exp::write_results(w, &scan.rows))?;
            out.summary("optimize-h", json!({ "best": scan.best() }))?;
        }
        Command::Plot { .. } => unreachable!(),
    }
    Ok(out.written)
}

/// Entry point shared by the binary; prints diagnostics and returns the exit code.
pub fn main_with(cli: Cli) -> u8 {
    match run(&cli) {
        Ok(files) => {
            for f in files {
                println!("{}", f.display());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn summary_config(path: &Path) -> Result<Config, CliError> {
    let text = std::fs::read_to_string(path).map_err(io_err(format!("reading {}", path.display())))?;
    let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| CliError::Io {
        context: "parsing summary".into(),
        source: e.into(),
    })?;
    Ok(Config::from_json(&v["config"].to_string())?)
}
