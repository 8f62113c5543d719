//! One function per CLI verb. Each writes its archive and tables into the
//! output directory and returns a short human-readable summary.

use std::path::Path;
use std::sync::{Arc, Mutex};

use backflow::dynamics::{backflow_functional, flow_lines, norm_convergence, time_grid, Evolver, FlowConfig, Termination};
use backflow::quadrature::ReferenceNorm;
use backflow::spectral::{estimate_lambda, extrapolate, run_h_protocol, PowerResult};
use backflow::{BackflowOperator, Complex64, MomentumGrid, StateVector};
use serde::{Deserialize, Serialize};

use crate::archive::{write_file, Archive, Outputs, Table};
use crate::config::{Command, RunConfig};
use crate::error::{CliError, CliResult};
use crate::verify::{run_all, Check, VerifyOptions};

/// Where files go and how progress is reported.
pub struct Context<'a> {
    pub out: &'a Path,
    pub resume: Option<&'a Path>,
    pub progress: &'a (dyn Fn(&str) + Sync),
}

pub struct Report {
    pub summary: String,
    pub outputs: Outputs,
}

/// A unit-norm momentum vector with the grid it lives on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorRecord {
    pub n_half: usize,
    pub q_max: f64,
    pub lambda: f64,
    pub k: Vec<f64>,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl VectorRecord {
    fn new(state: &StateVector, lambda: f64) -> Self {
        let grid = state.grid();
        Self {
            n_half: grid.n_half(),
            q_max: grid.q_max(),
            lambda,
            k: grid.k_values().to_vec(),
            re: state.amplitudes().iter().map(|z| z.re).collect(),
            im: state.amplitudes().iter().map(|z| z.im).collect(),
        }
    }

    pub fn state(&self) -> CliResult<StateVector> {
        let grid = Arc::new(MomentumGrid::new(self.n_half, self.q_max)?);
        let amps = self.re.iter().zip(&self.im).map(|(&re, &im)| Complex64::new(re, im)).collect();
        Ok(StateVector::new(grid, amps)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaPayload {
    pub lambda: f64,
    pub final_residual: f64,
    pub iterations: usize,
    pub estimates: Vec<f64>,
    pub residuals: Vec<f64>,
    pub vector: VectorRecord,
}

fn power_run(config: &RunConfig) -> CliResult<(StateVector, PowerResult)> {
    let grid = Arc::new(MomentumGrid::new(config.n0, config.q0)?);
    let op = BackflowOperator::new(grid.clone(), config.time, config.route.into())?;
    let start = config.start_vector().build(grid.clone());
    let result = estimate_lambda(&op, &start, &config.power_options())?;
    Ok((result.final_state(grid)?, result))
}

/// The maximizing vector: loaded from `config.vector` if given, otherwise
/// computed by power iteration on the base grid.
pub fn maximizer(config: &RunConfig, ctx: &Context) -> CliResult<(StateVector, f64)> {
    if let Some(path) = &config.vector {
        let archive = Archive::load(path)?;
        let record = match archive.config.command {
            Command::Lambda => archive.payload::<LambdaPayload>()?.vector,
            Command::Eigenvector => archive.payload::<EigenvectorPayload>()?.vector,
            other => return Err(CliError::Usage(format!("{} holds a `{}` archive, not a vector", path.display(), other.name()))),
        };
        return Ok((record.state()?, record.lambda));
    }
    (ctx.progress)(&format!("power iteration on ({}, {}) with {} steps", config.n0, config.q0, config.iterations));
    let (state, result) = power_run(config)?;
    Ok((state, result.estimate()))
}

pub fn cmd_lambda(config: &RunConfig, ctx: &Context) -> CliResult<Report> {
    (ctx.progress)(&format!("power iteration on ({}, {}) with {} steps", config.n0, config.q0, config.iterations));
    let (state, result) = power_run(config)?;
    let payload = LambdaPayload {
        lambda: result.estimate(),
        final_residual: result.final_residual(),
        iterations: result.iterations,
        vector: VectorRecord::new(&state, result.estimate()),
        estimates: result.estimates,
        residuals: result.residuals,
    };
    let mut outputs = Outputs::default();
    outputs.archive(ctx.out, config, &payload)?;
    let mut table = Table::new(&["iteration", "estimate", "residual"]);
    for (i, (e, r)) in payload.estimates.iter().zip(&payload.residuals).enumerate() {
        table.row(&[(i + 1) as f64, *e, *r]);
    }
    outputs.table(ctx.out, "lambda", config, &table)?;
    Ok(Report {
        summary: format!("lambda = {:.7}  (residual {:.2e} after {} iterations)", payload.lambda, payload.final_residual, payload.iterations),
        outputs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub sqrt_lambda_inf: f64,
    pub sqrt_b: f64,
    pub sqrt_rms: f64,
    pub cubic_coefficients: [f64; 4],
    pub cubic_rms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtrapolatePayload {
    pub h_values: Vec<u32>,
    pub lambda_h: Vec<f64>,
    /// `None` when there are too few points for a fit.
    pub fits: Option<FitSummary>,
    pub fit_error: Option<String>,
    pub lambda_inf: Option<f64>,
}

/// Progress of an interrupted `extrapolate` run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: RunConfig,
    pub points: Vec<(u32, f64)>,
}

fn same_protocol(a: &RunConfig, b: &RunConfig) -> bool {
    a.n0 == b.n0 && a.q0 == b.q0 && a.iterations == b.iterations && a.time == b.time && a.route == b.route
}

fn resumed_points(config: &RunConfig, path: &Path) -> CliResult<Vec<(u32, f64)>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let (previous, points) = if let Ok(cp) = serde_json::from_str::<Checkpoint>(&text) {
        (cp.config, cp.points)
    } else {
        let archive = Archive::load(path)?;
        let payload: ExtrapolatePayload = archive.payload()?;
        (archive.config, payload.h_values.into_iter().zip(payload.lambda_h).collect())
    };
    if !same_protocol(config, &previous) {
        return Err(CliError::Usage(format!("{} was produced with different protocol parameters", path.display())));
    }
    Ok(points)
}

pub fn cmd_extrapolate(config: &RunConfig, ctx: &Context) -> CliResult<Report> {
    let h_list: Vec<u32> = (1..=config.h_max).collect();
    let mut done = match ctx.resume {
        Some(path) => resumed_points(config, path)?,
        None => Vec::new(),
    };
    done.retain(|(h, _)| h_list.contains(h));
    if !done.is_empty() {
        (ctx.progress)(&format!("resuming with {} of {} refinements done", done.len(), h_list.len()));
    }
    let todo: Vec<u32> = h_list.iter().copied().filter(|h| !done.iter().any(|(d, _)| d == h)).collect();

    let checkpoint_path = ctx.out.join("extrapolate.checkpoint.json");
    let state = Mutex::new(done);
    let protocol = config.protocol();
    let on_done = |h: u32, lambda: f64| {
        let mut points = state.lock().expect("checkpoint lock");
        points.push((h, lambda));
        points.sort_by_key(|p| p.0);
        let checkpoint = Checkpoint { config: config.clone(), points: points.clone() };
        let text = serde_json::to_string_pretty(&checkpoint).expect("checkpoints serialize");
        if let Err(e) = write_file(&checkpoint_path, &text) {
            (ctx.progress)(&format!("warning: could not write checkpoint: {e}"));
        }
        (ctx.progress)(&format!("h = {h:>2}: lambda_h = {lambda:.7}"));
    };
    if !todo.is_empty() {
        run_h_protocol(&todo, &protocol, &on_done)?;
    }
    let mut points = state.into_inner().expect("checkpoint lock");
    points.sort_by_key(|p| p.0);

    let (fits, fit_error, lambda_inf) = match extrapolate(&points) {
        Ok(r) => (
            Some(FitSummary {
                sqrt_lambda_inf: r.sqrt_fit.lambda_inf,
                sqrt_b: r.sqrt_fit.b,
                sqrt_rms: r.sqrt_fit.rms,
                cubic_coefficients: r.cubic_fit.coefficients,
                cubic_rms: r.cubic_fit.rms,
            }),
            None,
            Some(r.lambda_inf_reported),
        ),
        Err(e) => (None, Some(e.to_string()), None),
    };
    let payload = ExtrapolatePayload { h_values: points.iter().map(|p| p.0).collect(), lambda_h: points.iter().map(|p| p.1).collect(), fits, fit_error, lambda_inf };

    let mut outputs = Outputs::default();
    outputs.archive(ctx.out, config, &payload)?;
    let mut table = Table::new(&["h", "s", "lambda_h"]);
    for (h, l) in &points {
        table.row(&[*h as f64, 1.0 / (*h as f64).sqrt(), *l]);
    }
    outputs.table(ctx.out, "extrapolate", config, &table)?;
    if let Some(f) = &payload.fits {
        let mut curves = Table::new(&["s", "sqrt_fit", "cubic_fit"]);
        for i in 0..=100 {
            let s = i as f64 / 100.0;
            let c = &f.cubic_coefficients;
            curves.row(&[s, f.sqrt_lambda_inf + f.sqrt_b * s, c[0] + s * (c[1] + s * (c[2] + s * c[3]))]);
        }
        outputs.table(ctx.out, "extrapolate_fits", config, &curves)?;
    }
    if checkpoint_path.exists() {
        let _ = std::fs::remove_file(&checkpoint_path);
    }
    let summary = match (&payload.fits, &payload.fit_error) {
        (Some(f), _) => format!(
            "lambda_inf = {:.7} (cubic in 1/sqrt(h), rms {:.1e}); lambda_inf + b/sqrt(h) gives {:.7} (rms {:.1e})",
            f.cubic_coefficients[0], f.cubic_rms, f.sqrt_lambda_inf, f.sqrt_rms
        ),
        (None, Some(e)) => format!("{} refinements computed; no fit: {e}", points.len()),
        (None, None) => unreachable!("either fits or an error"),
    };
    Ok(Report { summary, outputs })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenvectorPayload {
    pub vector: VectorRecord,
    pub x: Vec<f64>,
    pub psi_re: Vec<f64>,
    pub psi_im: Vec<f64>,
    /// Largest `|Re ψ(x) - Re ψ(-x)|` relative to `max |ψ|`, at `t = 0`.
    pub even_real_residual: f64,
    /// Largest `|Im ψ(x) + Im ψ(-x)|` relative to `max |ψ|`, at `t = 0`.
    pub odd_imag_residual: f64,
    /// Largest `|ψ_{-t}(-x) - conj ψ_t(x)|` relative to `max |ψ_t|`, at `t = 1`.
    pub pt_residual: f64,
}

pub fn cmd_eigenvector(config: &RunConfig, ctx: &Context) -> CliResult<Report> {
    let (state, lambda) = maximizer(config, ctx)?;
    let ev = Evolver::new(&state, 1.0, config.refine)?;
    let psi = ev.evolve_position(0.0);
    let (even, odd) = ev.parity_residuals(0.0);
    let pt = ev.pt_residual(1.0);
    let x_all = ev.x_values();
    let keep: Vec<usize> = (0..x_all.len()).filter(|&m| x_all[m] >= config.x_min && x_all[m] <= config.x_max).collect();
    let payload = EigenvectorPayload {
        vector: VectorRecord::new(&state, lambda),
        x: keep.iter().map(|&m| x_all[m]).collect(),
        psi_re: keep.iter().map(|&m| psi[m].re).collect(),
        psi_im: keep.iter().map(|&m| psi[m].im).collect(),
        even_real_residual: even,
        odd_imag_residual: odd,
        pt_residual: pt,
    };
    let mut outputs = Outputs::default();
    outputs.archive(ctx.out, config, &payload)?;
    let mut momentum = Table::new(&["k", "re", "im"]);
    for i in 0..payload.vector.k.len() {
        momentum.row(&[payload.vector.k[i], payload.vector.re[i], payload.vector.im[i]]);
    }
    outputs.table(ctx.out, "eigenvector_momentum", config, &momentum)?;
    let mut position = Table::new(&["x", "re", "im"]);
    for i in 0..payload.x.len() {
        position.row(&[payload.x[i], payload.psi_re[i], payload.psi_im[i]]);
    }
    outputs.table(ctx.out, "eigenvector_position", config, &position)?;
    Ok(Report {
        summary: format!(
            "lambda = {lambda:.7}; symmetry residuals: even Re {even:.1e}, odd Im {odd:.1e}, PT {pt:.1e}"
        ),
        outputs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolvePayload {
    pub t_values: Vec<f64>,
    pub x_values: Vec<f64>,
    pub rho: Vec<Vec<f64>>,
    pub current: Vec<Vec<f64>>,
    pub total_mass: Vec<f64>,
    pub window_mass: Vec<f64>,
}

pub fn cmd_evolve(config: &RunConfig, ctx: &Context) -> CliResult<Report> {
    let (state, _) = maximizer(config, ctx)?;
    let ev = Evolver::new(&state, config.horizon(), config.refine)?;
    let times = time_grid(config.t_min, config.t_max, config.t_step);
    (ctx.progress)(&format!("evolving over {} time slices", times.len()));
    let field = ev.field(&times, config.x_min, config.x_max)?;
    let window_mass = (0..times.len()).map(|r| field.window_mass(r)).collect();
    let payload = EvolvePayload {
        t_values: field.t_values,
        x_values: field.x_values,
        rho: field.rho,
        current: field.current,
        total_mass: field.total_mass,
        window_mass,
    };
    let mut outputs = Outputs::default();
    outputs.archive(ctx.out, config, &payload)?;
    let mut table = Table::new(&["t", "x", "rho", "j"]);
    for (r, &t) in payload.t_values.iter().enumerate() {
        for (c, &x) in payload.x_values.iter().enumerate() {
            table.row(&[t, x, payload.rho[r][c], payload.current[r][c]]);
        }
    }
    outputs.table(ctx.out, "evolve", config, &table)?;
    let drift = payload.total_mass.iter().map(|m| (m - 1.0).abs()).fold(0.0, f64::max);
    Ok(Report {
        summary: format!(
            "{} x {} samples; total mass within {drift:.1e} of 1; window mass {:.4}..{:.4}",
            payload.t_values.len(),
            payload.x_values.len(),
            payload.window_mass.iter().copied().fold(f64::INFINITY, f64::min),
            payload.window_mass.iter().copied().fold(0.0, f64::max)
        ),
        outputs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurrentPayload {
    pub t_values: Vec<f64>,
    pub current_at_origin: Vec<f64>,
    pub probability: Vec<f64>,
    /// Power-method λ of the vector's grid.
    pub lambda_grid: f64,
    /// `max_{s<t} P(s) - P(t)` over the time grid.
    pub lambda_phi: f64,
    pub s: f64,
    pub t: f64,
    /// Trapezoid integral of `j(t, 0)` over `[-1, 1]` (or the part of it
    /// inside the time grid).
    pub current_integral: f64,
}

pub fn cmd_current(config: &RunConfig, ctx: &Context) -> CliResult<Report> {
    let (state, lambda_grid) = maximizer(config, ctx)?;
    let ev = Evolver::new(&state, config.horizon(), config.refine)?;
    let times = time_grid(config.t_min, config.t_max, config.t_step);
    (ctx.progress)(&format!("current and probability at {} times", times.len()));
    let bf = backflow_functional(&ev, &times)?;
    use rayon::prelude::*;
    let current: Vec<f64> = times.par_iter().map(|&t| ev.current_at_origin(t)).collect();
    let current_integral = times
        .windows(2)
        .zip(current.windows(2))
        .filter(|(t, _)| t[0] >= -1.0 - 1e-12 && t[1] <= 1.0 + 1e-12)
        .map(|(t, j)| 0.5 * (j[0] + j[1]) * (t[1] - t[0]))
        .sum();
    let payload = CurrentPayload {
        t_values: times,
        current_at_origin: current,
        probability: bf.probability,
        lambda_grid,
        lambda_phi: bf.value,
        s: bf.s,
        t: bf.t,
        current_integral,
    };
    let mut outputs = Outputs::default();
    outputs.archive(ctx.out, config, &payload)?;
    let mut table = Table::new(&["t", "j0", "P"]);
    for i in 0..payload.t_values.len() {
        table.row(&[payload.t_values[i], payload.current_at_origin[i], payload.probability[i]]);
    }
    outputs.table(ctx.out, "current", config, &table)?;
    Ok(Report {
        summary: format!(
            "lambda(phi) = {:.7} between s = {:.3} and t = {:.3}; grid lambda {:.7}; integral of j(t,0) over [-1,1] = {:.7}",
            payload.lambda_phi, payload.s, payload.t, payload.lambda_grid, payload.current_integral
        ),
        outputs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineRecord {
    pub seed_quantile: f64,
    /// `completed`, `low_density` or `left_window`.
    pub termination: String,
    pub termination_time: Option<f64>,
    pub t: Vec<f64>,
    pub x: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowPayload {
    pub window_mass: f64,
    pub lines: Vec<LineRecord>,
    pub skipped_quantiles: Vec<f64>,
    pub interline_mass_drift: f64,
    /// `(t, direction)` of every crossing of `x = 0`.
    pub crossings: Vec<(f64, f64)>,
}

pub fn flow_config(config: &RunConfig) -> FlowConfig {
    FlowConfig {
        t_start: config.t_min,
        t_end: config.t_max,
        dt: config.dt,
        probability_spacing: config.prob_spacing,
        x_min: config.x_min,
        x_max: config.x_max,
        record_every: config.record_every,
        ..FlowConfig::default()
    }
}

pub fn cmd_flowlines(config: &RunConfig, ctx: &Context) -> CliResult<Report> {
    let (state, _) = maximizer(config, ctx)?;
    let ev = Evolver::new(&state, config.horizon(), config.refine)?;
    let flow = flow_config(config);
    (ctx.progress)(&format!("integrating flow lines with dt = {}", flow.dt));
    let set = flow_lines(&ev, &flow)?;
    for q in &set.skipped {
        (ctx.progress)(&format!("notice: seed at quantile {q:.4} skipped (density below floor)"));
    }
    let drift = set.interline_mass_drift(&ev, &flow);
    let lines = set
        .lines
        .iter()
        .map(|l| {
            let (termination, time) = match l.termination {
                Termination::Completed => ("completed", None),
                Termination::LowDensity(t) => ("low_density", Some(t)),
                Termination::LeftWindow(t) => ("left_window", Some(t)),
            };
            LineRecord {
                seed_quantile: l.seed_quantile,
                termination: termination.into(),
                termination_time: time,
                t: l.samples.iter().map(|s| s.0).collect(),
                x: l.samples.iter().map(|s| s.1).collect(),
            }
        })
        .collect();
    let payload = FlowPayload { window_mass: set.window_mass, lines, skipped_quantiles: set.skipped.clone(), interline_mass_drift: drift, crossings: set.zero_crossings() };
    let mut outputs = Outputs::default();
    outputs.archive(ctx.out, config, &payload)?;
    let mut table = Table::new(&["line", "t", "x"]);
    for (i, l) in payload.lines.iter().enumerate() {
        for (t, x) in l.t.iter().zip(&l.x) {
            table.row(&[i as f64, *t, *x]);
        }
    }
    outputs.table(ctx.out, "flowlines", config, &table)?;
    let stopped = payload.lines.iter().filter(|l| l.termination != "completed").count();
    let wrong_way = payload.crossings.iter().filter(|c| c.0 > -1.0 && c.0 < 1.0 && c.1 > 0.0).count();
    Ok(Report {
        summary: format!(
            "{} lines ({} stopped early, {} skipped); inter-line mass drift {:.2e}; {} crossings of x = 0, {} positive inside (-1, 1)",
            payload.lines.len(),
            stopped,
            payload.skipped_quantiles.len(),
            drift,
            payload.crossings.len(),
            wrong_way
        ),
        outputs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormPayload {
    pub k_edges: Vec<f64>,
    pub state: Vec<f64>,
    pub reference: Vec<f64>,
    pub reference_deficit: f64,
    pub n_squared: f64,
    pub integral_direct: f64,
    pub integral_half_periods: f64,
    pub normalization_discrepancy: f64,
}

pub fn cmd_normconv(config: &RunConfig, ctx: &Context) -> CliResult<Report> {
    let (state, _) = maximizer(config, ctx)?;
    let nc = norm_convergence(&state);
    let norm = ReferenceNorm::compute();
    let payload = NormPayload {
        k_edges: nc.k_edges,
        state: nc.state,
        reference: nc.reference,
        reference_deficit: nc.reference_deficit,
        n_squared: nc.n_squared,
        integral_direct: norm.integral_direct,
        integral_half_periods: norm.integral_half_periods,
        normalization_discrepancy: nc.normalization_discrepancy,
    };
    let mut outputs = Outputs::default();
    outputs.archive(ctx.out, config, &payload)?;
    let mut table = Table::new(&["k", "state", "reference"]);
    for i in 0..payload.k_edges.len() {
        table.row(&[payload.k_edges[i], payload.state[i], payload.reference[i]]);
    }
    outputs.table(ctx.out, "normconv", config, &table)?;
    // the k at which each curve first reaches 99% of its final value
    let reach = |c: &[f64]| {
        let last = *c.last().unwrap_or(&0.0);
        c.iter().position(|&v| v >= 0.99 * last).map_or(f64::NAN, |i| payload.k_edges[i])
    };
    Ok(Report {
        summary: format!(
            "N^2 = {:.12} (quadratures differ by {:.1e}); reference mass beyond q: {:.2e}; 99% of norm reached at k = {:.3} (vector) vs {:.3} (reference)",
            payload.n_squared,
            payload.normalization_discrepancy,
            payload.reference_deficit,
            reach(&payload.state),
            reach(&payload.reference)
        ),
        outputs,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyPayload {
    pub options: VerifyOptions,
    pub checks: Vec<Check>,
}

pub fn cmd_verify(config: &RunConfig, ctx: &Context) -> CliResult<Report> {
    let options = VerifyOptions { seed: config.seed, ..VerifyOptions::default() };
    let checks = run_all(&options, |c| (ctx.progress)(&c.line()));
    let payload = VerifyPayload { options, checks };
    let mut outputs = Outputs::default();
    outputs.archive(ctx.out, config, &payload)?;
    let failed: Vec<&str> = payload.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    let lines: Vec<String> = payload.checks.iter().map(Check::line).collect();
    if failed.is_empty() {
        Ok(Report { summary: lines.join("\n"), outputs })
    } else {
        Err(CliError::Verification(format!("{}\n{} of {} checks failed: {}", lines.join("\n"), failed.len(), payload.checks.len(), failed.join(", "))))
    }
}

pub fn run(config: &RunConfig, ctx: &Context) -> CliResult<Report> {
    match config.command {
        Command::Lambda => cmd_lambda(config, ctx),
        Command::Extrapolate => cmd_extrapolate(config, ctx),
        Command::Eigenvector => cmd_eigenvector(config, ctx),
        Command::Evolve => cmd_evolve(config, ctx),
        Command::Current => cmd_current(config, ctx),
        Command::Flowlines => cmd_flowlines(config, ctx),
        Command::Normconv => cmd_normconv(config, ctx),
        Command::Verify => cmd_verify(config, ctx),
    }
}
