use std::path::PathBuf;

use backflow::spectral::{PowerOptions, Protocol, Start};
use backflow::Route;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "backflow", version, about = "Compute the quantum backflow constant and the dynamics of its maximizing state")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub args: CommonArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    /// Power iteration on one grid
    Lambda,
    /// Grid-refinement protocol h = 1..h-max and both extrapolation fits
    Extrapolate,
    /// Momentum and position representations of the maximizing vector
    Eigenvector,
    /// Density and current of the maximizing vector on a (t, x) window
    Evolve,
    /// Current at the origin, half-space probability and the backflow functional
    Current,
    /// Flow lines of the maximizing vector
    Flowlines,
    /// Cumulative norm of the maximizing vector against sin(k²)/k
    Normconv,
    /// Operator and dynamics self-checks
    Verify,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Lambda => "lambda",
            Command::Extrapolate => "extrapolate",
            Command::Eigenvector => "eigenvector",
            Command::Evolve => "evolve",
            Command::Current => "current",
            Command::Flowlines => "flowlines",
            Command::Normconv => "normconv",
            Command::Verify => "verify",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RouteName {
    Sandwich,
    Hilbert,
}

impl From<RouteName> for Route {
    fn from(r: RouteName) -> Route {
        match r {
            RouteName::Sandwich => Route::ProjectionSandwich,
            RouteName::Hilbert => Route::Hilbert,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StartName {
    Constant,
    Random,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Base number of momentum samples on [0, q]
    #[arg(long, global = true, default_value_t = 10_000)]
    pub n0: usize,
    /// Base momentum cutoff
    #[arg(long, global = true, default_value_t = 50.0)]
    pub q0: f64,
    /// Largest refinement factor for `extrapolate`
    #[arg(long, global = true, default_value_t = 40)]
    pub h_max: u32,
    #[arg(long, global = true, default_value_t = 1000)]
    pub iterations: usize,
    /// Half-width T of the backflow operator's time window
    #[arg(long, global = true, default_value_t = 1.0)]
    pub time: f64,
    #[arg(long, global = true, value_enum, default_value_t = RouteName::Sandwich)]
    pub route: RouteName,
    #[arg(long, global = true, value_enum, default_value_t = StartName::Constant)]
    pub start: StartName,
    /// Seed for `--start random`
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, global = true, default_value_t = -3.0, allow_hyphen_values = true)]
    pub t_min: f64,
    #[arg(long, global = true, default_value_t = 3.0, allow_hyphen_values = true)]
    pub t_max: f64,
    /// Time step of tabulated fields and curves
    #[arg(long, global = true, default_value_t = 0.01)]
    pub t_step: f64,
    #[arg(long, global = true, default_value_t = -20.0, allow_hyphen_values = true)]
    pub x_min: f64,
    #[arg(long, global = true, default_value_t = 20.0, allow_hyphen_values = true)]
    pub x_max: f64,
    /// Flow-line integration step
    #[arg(long, global = true, default_value_t = 0.001)]
    pub dt: f64,
    /// Probability between adjacent flow lines
    #[arg(long, global = true, default_value_t = 0.0024)]
    pub prob_spacing: f64,
    /// Position oversampling relative to the momentum grid's conjugate spacing
    #[arg(long, global = true, default_value_t = 4)]
    pub refine: usize,
    /// Keep every n-th flow-line step
    #[arg(long, global = true, default_value_t = 10)]
    pub record_every: usize,
    /// Reuse the vector stored in a `lambda` or `eigenvector` archive
    #[arg(long, global = true)]
    pub vector: Option<PathBuf>,
    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Output directory
    #[arg(long, global = true, default_value = "backflow-out")]
    pub out: PathBuf,
    /// Checkpoint or archive of an interrupted `extrapolate` run
    #[arg(long, global = true)]
    pub resume: Option<PathBuf>,
}

/// Every parameter that can influence a command's output. Output location,
/// thread count and resume source are deliberately absent so that identical
/// configurations produce identical files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: Command,
    pub n0: usize,
    pub q0: f64,
    pub h_max: u32,
    pub iterations: usize,
    pub time: f64,
    pub route: RouteName,
    pub start: StartName,
    pub seed: u64,
    pub t_min: f64,
    pub t_max: f64,
    pub t_step: f64,
    pub x_min: f64,
    pub x_max: f64,
    pub dt: f64,
    pub prob_spacing: f64,
    pub refine: usize,
    pub record_every: usize,
    pub vector: Option<PathBuf>,
}

fn check(ok: bool, message: impl FnOnce() -> String) -> CliResult<()> {
    if ok {
        Ok(())
    } else {
        Err(CliError::Usage(message()))
    }
}

impl RunConfig {
    pub fn from_args(command: Command, a: &CommonArgs) -> CliResult<Self> {
        let config = Self {
            command,
            n0: a.n0,
            q0: a.q0,
            h_max: a.h_max,
            iterations: a.iterations,
            time: a.time,
            route: a.route,
            start: a.start,
            seed: a.seed,
            t_min: a.t_min,
            t_max: a.t_max,
            t_step: a.t_step,
            x_min: a.x_min,
            x_max: a.x_max,
            dt: a.dt,
            prob_spacing: a.prob_spacing,
            refine: a.refine,
            record_every: a.record_every,
            vector: a.vector.clone(),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> CliResult<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        check(self.n0 >= 1, || "--n0 must be >= 1".into())?;
        check(positive(self.q0), || format!("--q0 must be positive, got {}", self.q0))?;
        check(self.h_max >= 1, || "--h-max must be >= 1".into())?;
        check(self.iterations >= 1, || "--iterations must be >= 1".into())?;
        check(positive(self.time), || format!("--time must be positive, got {}", self.time))?;
        check(self.t_min.is_finite() && self.t_max.is_finite() && self.t_min < self.t_max, || {
            format!("need --t-min < --t-max, got [{}, {}]", self.t_min, self.t_max)
        })?;
        check(positive(self.t_step) && self.t_step <= self.t_max - self.t_min, || format!("bad --t-step {}", self.t_step))?;
        check(self.x_min.is_finite() && self.x_max.is_finite() && self.x_min < self.x_max, || {
            format!("need --x-min < --x-max, got [{}, {}]", self.x_min, self.x_max)
        })?;
        check(positive(self.dt) && self.dt <= self.t_max - self.t_min, || format!("bad --dt {}", self.dt))?;
        check(self.prob_spacing > 0.0 && self.prob_spacing < 1.0, || format!("--prob-spacing must lie in (0, 1), got {}", self.prob_spacing))?;
        check(self.refine >= 1, || "--refine must be >= 1".into())?;
        check(self.record_every >= 1, || "--record-every must be >= 1".into())?;
        Ok(())
    }

    pub fn power_options(&self) -> PowerOptions {
        PowerOptions { iterations: self.iterations, early_stop: None }
    }

    pub fn start_vector(&self) -> Start {
        match self.start {
            StartName::Constant => Start::Constant,
            StartName::Random => Start::RandomPositive { seed: self.seed },
        }
    }

    pub fn protocol(&self) -> Protocol {
        Protocol { n0: self.n0, q0: self.q0, time: self.time, route: self.route.into(), power: self.power_options() }
    }

    /// Largest `|t|` any dynamics command of this configuration evaluates.
    pub fn horizon(&self) -> f64 {
        self.t_min.abs().max(self.t_max.abs()).max(1.0)
    }
}
