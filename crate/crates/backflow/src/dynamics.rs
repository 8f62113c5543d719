//! Free evolution of a half-line state in position space: density, current,
//! half-space probability, the backflow functional, Bohmian flow lines and
//! the cumulative-norm comparison.
//!
//! The current is `j = 2 Im(conj(ψ) ∂ₓψ)`, which together with
//! `i ∂ₜψ = -∂ₓ²ψ` gives `∂ₜρ + ∂ₓj = 0`.

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::quadrature::ReferenceNorm;
use crate::transforms::{norm_sqr, FourierPair, LineGrid, Oversampling, StateVector};

/// Position-space evaluator for one state over a time horizon.
///
/// The state is lifted onto an oversampled line wide enough that nothing
/// wraps for `|t| <= horizon`; the momentum range is then zero-padded by
/// `refine` so that positions are sampled at `dx/refine`.
#[derive(Debug, Clone)]
pub struct Evolver {
    pair: FourierPair,
    momentum: Vec<Complex64>,
    k_values: Vec<f64>,
    weight: Vec<f64>,
    horizon: f64,
}

impl Evolver {
    pub fn new(state: &StateVector, horizon: f64, refine: usize) -> Result<Self> {
        if !(horizon >= 0.0 && horizon.is_finite()) {
            return Err(Error::InvalidParameter(format!("time horizon must be finite and >= 0, got {horizon}")));
        }
        if refine == 0 {
            return Err(Error::InvalidParameter("refinement factor must be >= 1".into()));
        }
        let grid = state.grid();
        let sampling = Oversampling::new(grid, 2.0 * grid.q_max() * horizon);
        let lifted = sampling.lift(state.amplitudes());
        let base = *sampling.fine().grid();
        let n = base.len() * refine;
        let line = LineGrid::new(n, base.dk());
        let offset = (n - base.len()) / 2;
        let mut momentum = vec![Complex64::new(0.0, 0.0); n];
        momentum[offset..offset + base.len()].copy_from_slice(&lifted);
        let norm = (norm_sqr(&momentum) * line.dk()).sqrt();
        if !(norm > 0.0) {
            return Err(Error::ZeroStart);
        }
        momentum.iter_mut().for_each(|z| *z /= norm);
        let origin = line.origin();
        let weight = (0..n)
            .map(|m| match m {
                m if m == origin => 0.5,
                m if m > origin => 1.0,
                _ => 0.0,
            })
            .collect();
        Ok(Self { k_values: line.k_values(), pair: FourierPair::new(line), momentum, weight, horizon })
    }

    pub fn line(&self) -> &LineGrid {
        self.pair.grid()
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn x_values(&self) -> Vec<f64> {
        self.line().x_values()
    }

    fn evolved_momentum(&self, t: f64) -> Vec<Complex64> {
        self.momentum
            .iter()
            .zip(&self.k_values)
            .map(|(z, &k)| z * Complex64::from_polar(1.0, -k * k * t))
            .collect()
    }

    /// `ψ_t(x_m)` on the whole line.
    pub fn evolve_position(&self, t: f64) -> Vec<Complex64> {
        let mut buf = self.evolved_momentum(t);
        self.pair.to_position_in_place(&mut buf);
        buf
    }

    /// `(ψ_t, ∂ₓψ_t)` with the derivative taken spectrally.
    pub fn wave_and_gradient(&self, t: f64) -> (Vec<Complex64>, Vec<Complex64>) {
        let evolved = self.evolved_momentum(t);
        let mut grad: Vec<Complex64> = evolved.iter().zip(&self.k_values).map(|(z, &k)| z * Complex64::new(0.0, k)).collect();
        let mut psi = evolved;
        self.pair.to_position_in_place(&mut psi);
        self.pair.to_position_in_place(&mut grad);
        (psi, grad)
    }

    /// `(ρ, j)` at time `t` on the whole line.
    pub fn density_current(&self, t: f64) -> (Vec<f64>, Vec<f64>) {
        let (psi, grad) = self.wave_and_gradient(t);
        let rho = psi.iter().map(|z| z.norm_sqr()).collect();
        let j = psi.iter().zip(&grad).map(|(p, g)| 2.0 * (p.conj() * g).im).collect();
        (rho, j)
    }

    pub fn current_at_origin(&self, t: f64) -> f64 {
        let (_, j) = self.density_current(t);
        j[self.line().origin()]
    }

    /// `Σ ρ dx` over the whole represented line.
    pub fn mass(&self, t: f64) -> f64 {
        norm_sqr(&self.evolve_position(t)) * self.line().dx()
    }

    /// Probability of `x > 0`, with half weight on `x = 0`.
    pub fn half_space_probability(&self, t: f64) -> f64 {
        let psi = self.evolve_position(t);
        psi.iter().zip(&self.weight).map(|(z, w)| w * z.norm_sqr()).sum::<f64>() * self.line().dx()
    }

    /// Maximal deviation from `ψ_{-t}(-x) = conj(ψ_t(x))`, relative to
    /// `max |ψ_t|`.
    pub fn pt_residual(&self, t: f64) -> f64 {
        let forward = self.evolve_position(t);
        let backward = self.evolve_position(-t);
        let n = forward.len();
        let scale = forward.iter().map(|z| z.norm()).fold(0.0, f64::max);
        (1..n).map(|m| (backward[n - m] - forward[m].conj()).norm()).fold(0.0, f64::max) / scale
    }

    /// `(even-part residual of Re ψ, odd-part residual of Im ψ)` at `t`,
    /// relative to `max |ψ|`.
    pub fn parity_residuals(&self, t: f64) -> (f64, f64) {
        let psi = self.evolve_position(t);
        let n = psi.len();
        let scale = psi.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let mut even = 0.0f64;
        let mut odd = 0.0f64;
        for m in 1..n {
            even = even.max((psi[m].re - psi[n - m].re).abs());
            odd = odd.max((psi[m].im + psi[n - m].im).abs());
        }
        (even / scale, odd / scale)
    }

    fn window(&self, x_min: f64, x_max: f64) -> std::ops::Range<usize> {
        let line = self.line();
        let lo = (0..line.len()).find(|&m| line.x(m) >= x_min).unwrap_or(line.len());
        let hi = (0..line.len()).rev().find(|&m| line.x(m) <= x_max).map_or(lo, |m| m + 1);
        lo..hi.max(lo)
    }

    /// Samples `ρ` and `j` on the given times and the part of the line inside
    /// `[x_min, x_max]`. Time slices are computed in parallel.
    pub fn field(&self, t_values: &[f64], x_min: f64, x_max: f64) -> Result<SpacetimeField> {
        if !(x_min < x_max) {
            return Err(Error::InvalidParameter(format!("empty position window [{x_min}, {x_max}]")));
        }
        if let Some(t) = t_values.iter().find(|t| t.abs() > self.horizon * (1.0 + 1e-12)) {
            return Err(Error::InvalidParameter(format!("t = {t} outside evolution horizon {}", self.horizon)));
        }
        let range = self.window(x_min, x_max);
        let dx = self.line().dx();
        let slices: Vec<(Vec<f64>, Vec<f64>, f64)> = t_values
            .par_iter()
            .map(|&t| {
                let (rho, j) = self.density_current(t);
                let mass = rho.iter().sum::<f64>() * dx;
                (rho[range.clone()].to_vec(), j[range.clone()].to_vec(), mass)
            })
            .collect();
        let x_values = range.map(|m| self.line().x(m)).collect();
        let mut rho = Vec::with_capacity(slices.len());
        let mut current = Vec::with_capacity(slices.len());
        let mut total_mass = Vec::with_capacity(slices.len());
        for (r, j, m) in slices {
            rho.push(r);
            current.push(j);
            total_mass.push(m);
        }
        Ok(SpacetimeField { t_values: t_values.to_vec(), x_values, dx, rho, current, total_mass })
    }
}

/// `ρ(t, x)` and `j(t, x)` on a rectangular grid, one row per time.
#[derive(Debug, Clone, PartialEq)]
pub struct SpacetimeField {
    pub t_values: Vec<f64>,
    pub x_values: Vec<f64>,
    pub dx: f64,
    pub rho: Vec<Vec<f64>>,
    pub current: Vec<Vec<f64>>,
    /// `Σ ρ dx` over the whole represented line, per time.
    pub total_mass: Vec<f64>,
}

impl SpacetimeField {
    pub fn window_mass(&self, row: usize) -> f64 {
        self.rho[row].iter().sum::<f64>() * self.dx
    }

    // (row, fraction) for bilinear lookup; None outside the table
    fn locate(values: &[f64], v: f64) -> Option<(usize, f64)> {
        let n = values.len();
        if n < 2 || v < values[0] || v > values[n - 1] {
            return None;
        }
        let i = match values.binary_search_by(|p| p.total_cmp(&v)) {
            Ok(i) => i.min(n - 2),
            Err(i) => (i - 1).min(n - 2),
        };
        let frac = (v - values[i]) / (values[i + 1] - values[i]);
        Some((i, frac))
    }

    /// Bilinear interpolation of `(ρ, j)` at `(t, x)`. Times within a
    /// rounding error of the table ends are clamped onto it.
    pub fn sample(&self, t: f64, x: f64) -> Option<(f64, f64)> {
        let (first, last) = (*self.t_values.first()?, *self.t_values.last()?);
        let slack = 1e-9 * (last - first).abs().max(1.0);
        let t = if t > last && t - last < slack {
            last
        } else if t < first && first - t < slack {
            first
        } else {
            t
        };
        let (it, ft) = Self::locate(&self.t_values, t)?;
        let (ix, fx) = Self::locate(&self.x_values, x)?;
        let bilinear = |table: &Vec<Vec<f64>>| {
            let a = table[it][ix] * (1.0 - fx) + table[it][ix + 1] * fx;
            let b = table[it + 1][ix] * (1.0 - fx) + table[it + 1][ix + 1] * fx;
            a * (1.0 - ft) + b * ft
        };
        Some((bilinear(&self.rho), bilinear(&self.current)))
    }
}

/// `λ(φ) = sup_{s<t} P(φ_s) - P(φ_t)` over a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BackflowFunctional {
    pub value: f64,
    pub s: f64,
    pub t: f64,
    pub t_values: Vec<f64>,
    pub probability: Vec<f64>,
}

pub fn backflow_functional(evolver: &Evolver, t_values: &[f64]) -> Result<BackflowFunctional> {
    if t_values.len() < 2 || t_values.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("time grid must have >= 2 strictly increasing points".into()));
    }
    let probability: Vec<f64> = t_values.par_iter().map(|&t| evolver.half_space_probability(t)).collect();
    let mut best = (0.0, t_values[0], t_values[0]);
    let mut running = (probability[0], t_values[0]);
    for (&p, &t) in probability.iter().zip(t_values).skip(1) {
        if running.0 - p > best.0 {
            best = (running.0 - p, running.1, t);
        }
        if p > running.0 {
            running = (p, t);
        }
    }
    Ok(BackflowFunctional { value: best.0, s: best.1, t: best.2, t_values: t_values.to_vec(), probability })
}

/// Evenly spaced times from `start` to `end` inclusive with step close to `step`.
pub fn time_grid(start: f64, end: f64, step: f64) -> Vec<f64> {
    let n = ((end - start) / step).round().max(1.0) as usize;
    (0..=n).map(|i| start + (end - start) * i as f64 / n as f64).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Termination {
    Completed,
    /// Density fell below the floor at this time.
    LowDensity(f64),
    /// Left the position window at this time.
    LeftWindow(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowLine {
    pub samples: Vec<(f64, f64)>,
    pub seed_quantile: f64,
    pub termination: Termination,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowConfig {
    pub t_start: f64,
    pub t_end: f64,
    pub dt: f64,
    /// Probability between adjacent seeds.
    pub probability_spacing: f64,
    pub x_min: f64,
    pub x_max: f64,
    pub density_floor: f64,
    /// Keep every n-th integration step in the output.
    pub record_every: usize,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            t_start: -3.0,
            t_end: 3.0,
            dt: 1e-3,
            probability_spacing: 2.4e-3,
            x_min: -20.0,
            x_max: 20.0,
            density_floor: 1e-12,
            record_every: 10,
        }
    }
}

/// `ψ` and `∂ₓψ` at one instant on the grid points inside a position window.
///
/// Off-grid values come from six-point Lagrange interpolation of `ψ` and
/// `∂ₓψ`; density and current are formed from the interpolated amplitudes,
/// which stays accurate near zeros of `ρ` where interpolating `ρ` and `j`
/// directly does not.
#[derive(Debug, Clone, PartialEq)]
pub struct Slice {
    pub t: f64,
    pub x0: f64,
    pub dx: f64,
    pub psi: Vec<Complex64>,
    pub grad: Vec<Complex64>,
}

// stencil offsets relative to the cell's left node
const STENCIL: [f64; 6] = [-2.0, -1.0, 0.0, 1.0, 2.0, 3.0];

fn lagrange_weights(u: f64) -> [f64; 6] {
    let mut w = [1.0; 6];
    for (m, wm) in w.iter_mut().enumerate() {
        for (n, &node) in STENCIL.iter().enumerate() {
            if n != m {
                *wm *= (u - node) / (STENCIL[m] - node);
            }
        }
    }
    w
}

// three-point Gauss-Legendre on [0, 1]
const GL3: [(f64, f64); 3] = [
    (0.112_701_665_379_258_31, 5.0 / 18.0),
    (0.5, 8.0 / 18.0),
    (0.887_298_334_620_741_7, 5.0 / 18.0),
];

impl Slice {
    pub fn new(evolver: &Evolver, t: f64, x_min: f64, x_max: f64) -> Self {
        let range = evolver.window(x_min, x_max);
        let (psi, grad) = evolver.wave_and_gradient(t);
        Self {
            t,
            x0: evolver.line().x(range.start),
            dx: evolver.line().dx(),
            psi: psi[range.clone()].to_vec(),
            grad: grad[range].to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.psi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.psi.is_empty()
    }

    /// Cell index and offset for `x`, if the whole stencil is in the window.
    fn cell(&self, x: f64) -> Option<(usize, f64)> {
        let u = (x - self.x0) / self.dx;
        let n = self.len();
        if n < 6 || !(u >= 2.0 && u <= (n - 3) as f64) {
            return None;
        }
        let i = (u.floor() as usize).min(n - 4);
        Some((i, u - i as f64))
    }

    fn interpolate(values: &[Complex64], i: usize, w: &[f64; 6]) -> Complex64 {
        values[i - 2..i + 4].iter().zip(w).map(|(v, w)| v * w).sum()
    }

    fn amplitudes(&self, i: usize, u: f64) -> (Complex64, Complex64) {
        let w = lagrange_weights(u);
        (Self::interpolate(&self.psi, i, &w), Self::interpolate(&self.grad, i, &w))
    }

    /// `(ρ, j)` at `x`.
    pub fn sample(&self, x: f64) -> Option<(f64, f64)> {
        let (i, u) = self.cell(x)?;
        let (psi, grad) = self.amplitudes(i, u);
        Some((psi.norm_sqr(), 2.0 * (psi.conj() * grad).im))
    }

    // ∫ ρ over [x_i, x_i + f·dx] from the interpolant
    fn partial_cell(&self, i: usize, f: f64) -> f64 {
        GL3.iter().map(|&(node, weight)| weight * self.amplitudes(i, node * f).0.norm_sqr()).sum::<f64>() * f * self.dx
    }

    /// Mass from the first interpolable point to each cell boundary:
    /// `out[c]` is the mass up to grid point `c + 2`.
    pub fn cumulative(&self) -> Vec<f64> {
        let n = self.len();
        if n < 6 {
            return vec![0.0];
        }
        let mut acc = 0.0;
        std::iter::once(0.0)
            .chain((2..n - 3).map(|i| {
                acc += self.partial_cell(i, 1.0);
                acc
            }))
            .collect()
    }

    pub fn mass(&self) -> f64 {
        self.cumulative().last().copied().unwrap_or(0.0)
    }

    /// Cumulative mass at `x`, given the output of [`Slice::cumulative`].
    pub fn cumulative_at(&self, cumulative: &[f64], x: f64) -> Option<f64> {
        let (i, f) = self.cell(x)?;
        Some(cumulative[i - 2] + self.partial_cell(i, f))
    }

    /// Positions where the cumulative mass reaches each level, refined by
    /// bisection on the interpolant.
    pub fn quantiles(&self, levels: &[f64]) -> Vec<f64> {
        let cumulative = self.cumulative();
        levels
            .iter()
            .map(|&level| {
                let c = cumulative.partition_point(|&c| c < level).clamp(1, cumulative.len() - 1);
                let i = c - 1 + 2;
                let (mut lo, mut hi) = (0.0, 1.0);
                for _ in 0..60 {
                    let mid = 0.5 * (lo + hi);
                    if cumulative[c - 1] + self.partial_cell(i, mid) < level {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                self.x0 + (i as f64 + 0.5 * (lo + hi)) * self.dx
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowLineSet {
    pub lines: Vec<FlowLine>,
    /// Seed quantiles dropped because the density there was below the floor.
    pub skipped: Vec<f64>,
    /// Mass inside the window at the start time.
    pub window_mass: f64,
}

impl FlowLineSet {
    /// Probability between each pair of adjacent lines at every recorded
    /// time: `out[row][pair]`, `None` once either line has stopped.
    pub fn interline_masses(&self, evolver: &Evolver, config: &FlowConfig) -> (Vec<f64>, Vec<Vec<Option<f64>>>) {
        let Some(longest) = self.lines.iter().map(|l| &l.samples).max_by_key(|s| s.len()) else {
            return (Vec::new(), Vec::new());
        };
        let times: Vec<f64> = longest.iter().map(|s| s.0).collect();
        let masses = times
            .par_iter()
            .enumerate()
            .map(|(row, &t)| {
                let slice = Slice::new(evolver, t, config.x_min, config.x_max);
                let cumulative = slice.cumulative();
                self.lines
                    .windows(2)
                    .map(|pair| {
                        let a = pair[0].samples.get(row)?;
                        let b = pair[1].samples.get(row)?;
                        Some(slice.cumulative_at(&cumulative, b.1)? - slice.cumulative_at(&cumulative, a.1)?)
                    })
                    .collect()
            })
            .collect();
        (times, masses)
    }

    /// Largest relative change of the probability between adjacent lines over
    /// the recorded times at which both lines are still running.
    pub fn interline_mass_drift(&self, evolver: &Evolver, config: &FlowConfig) -> f64 {
        let (_, masses) = self.interline_masses(evolver, config);
        let mut worst = 0.0f64;
        for pair in 0..self.lines.len().saturating_sub(1) {
            let Some(m0) = masses[0][pair] else { continue };
            for row in masses.iter().skip(1) {
                if let Some(m) = row[pair] {
                    worst = worst.max((m / m0 - 1.0).abs());
                }
            }
        }
        worst
    }

    /// `(t, direction)` for every sign change of `x` along a line, with the
    /// crossing time interpolated linearly and direction `±1`.
    pub fn zero_crossings(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        for line in &self.lines {
            for w in line.samples.windows(2) {
                let ((t0, x0), (t1, x1)) = (w[0], w[1]);
                if (x0 < 0.0) != (x1 < 0.0) {
                    let t = t0 + (t1 - t0) * x0 / (x0 - x1);
                    out.push((t, (x1 - x0).signum()));
                }
            }
        }
        out.sort_by(|a, b| a.0.total_cmp(&b.0));
        out
    }
}

fn validate_flow(config: &FlowConfig) -> Result<()> {
    let ok = config.t_start < config.t_end
        && config.dt > 0.0
        && config.probability_spacing > 0.0
        && config.probability_spacing < 1.0
        && config.x_min < config.x_max
        && config.density_floor >= 0.0
        && config.record_every >= 1;
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("invalid flow-line configuration {config:?}")))
    }
}

struct Tracer {
    x: f64,
    samples: Vec<(f64, f64)>,
    termination: Termination,
}

/// Integral curves of `(1, j/ρ)` seeded at equal-probability quantiles of the
/// density at `t_start` inside the window and integrated by classical RK4.
///
/// The density of a state with momenta up to `q` beats at frequencies up to
/// `q²`, far too fast to interpolate in time from a tabulated field. Each RK4
/// stage therefore uses an exact slice at its own time, shared by all lines,
/// and interpolates only in `x`.
pub fn flow_lines(evolver: &Evolver, config: &FlowConfig) -> Result<FlowLineSet> {
    validate_flow(config)?;
    if config.t_start.abs().max(config.t_end.abs()) > evolver.horizon() * (1.0 + 1e-12) {
        return Err(Error::InvalidParameter(format!(
            "flow window [{}, {}] exceeds evolution horizon {}",
            config.t_start,
            config.t_end,
            evolver.horizon()
        )));
    }
    let slice_at = |t: f64| Slice::new(evolver, t, config.x_min, config.x_max);
    let mut current = slice_at(config.t_start);
    let window_mass = current.mass();
    let count = (window_mass / config.probability_spacing).ceil() as usize;
    let levels: Vec<f64> = (1..count).map(|i| i as f64 * config.probability_spacing).filter(|&c| c < window_mass).collect();
    let seeds = current.quantiles(&levels);

    let velocity = |slice: &Slice, x: f64| -> std::result::Result<f64, Termination> {
        match slice.sample(x) {
            None => Err(Termination::LeftWindow(slice.t)),
            Some((rho, _)) if rho < config.density_floor => Err(Termination::LowDensity(slice.t)),
            Some((rho, j)) => Ok(j / rho),
        }
    };

    let mut skipped = Vec::new();
    let mut tracers = Vec::new();
    let mut kept = Vec::new();
    for (&level, &x) in levels.iter().zip(&seeds) {
        if velocity(&current, x).is_ok() {
            tracers.push(Tracer { x, samples: vec![(config.t_start, x)], termination: Termination::Completed });
            kept.push(level / window_mass);
        } else {
            skipped.push(level / window_mass);
        }
    }

    let steps = ((config.t_end - config.t_start) / config.dt).round().max(1.0) as usize;
    let dt = (config.t_end - config.t_start) / steps as f64;
    for step in 0..steps {
        let t = config.t_start + step as f64 * dt;
        let t_next = config.t_start + (step + 1) as f64 * dt;
        let (mid, next) = rayon::join(|| slice_at(t + 0.5 * dt), || slice_at(t_next));
        let record = (step + 1) % config.record_every == 0 || step + 1 == steps;
        tracers.par_iter_mut().filter(|tr| tr.termination == Termination::Completed).for_each(|tr| {
            let x = tr.x;
            let advance = || -> std::result::Result<f64, Termination> {
                let k1 = velocity(&current, x)?;
                let k2 = velocity(&mid, x + 0.5 * dt * k1)?;
                let k3 = velocity(&mid, x + 0.5 * dt * k2)?;
                let k4 = velocity(&next, x + dt * k3)?;
                Ok(x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
            };
            match advance() {
                Ok(x) => {
                    tr.x = x;
                    if record {
                        tr.samples.push((t_next, x));
                    }
                }
                Err(reason) => tr.termination = reason,
            }
        });
        current = next;
    }

    let lines = tracers
        .into_iter()
        .zip(kept)
        .map(|(tr, seed_quantile)| FlowLine { samples: tr.samples, seed_quantile, termination: tr.termination })
        .collect();
    Ok(FlowLineSet { lines, skipped, window_mass })
}

/// Running norm-square `Σ_{i<=j} |φ_i|² dk` of a unit state, together with the
/// same quantity for `f(k) = 𝒩 sin(k²)/k` at the upper cell edges.
#[derive(Debug, Clone, PartialEq)]
pub struct NormConvergence {
    /// Upper cell edges `(j + 1)·dk`.
    pub k_edges: Vec<f64>,
    pub state: Vec<f64>,
    pub reference: Vec<f64>,
    /// `1 - ∫₀^q |f|²`, the reference mass beyond the cutoff.
    pub reference_deficit: f64,
    pub n_squared: f64,
    /// `|𝒩²(route 1) - 𝒩²(route 2)|`.
    pub normalization_discrepancy: f64,
}

pub fn cumulative_norm(state: &StateVector) -> Vec<f64> {
    let dk = state.grid().dk();
    let total = state.norm().powi(2);
    let mut acc = 0.0;
    state
        .amplitudes()
        .iter()
        .map(|z| {
            acc += z.norm_sqr() * dk;
            acc / total
        })
        .collect()
}

pub fn reference_cumulative(k_values: &[f64]) -> (Vec<f64>, ReferenceNorm) {
    let norm = ReferenceNorm::compute();
    (norm.cumulative(k_values), norm)
}

pub fn norm_convergence(state: &StateVector) -> NormConvergence {
    let grid: &Arc<_> = state.grid();
    let k_edges: Vec<f64> = (1..=grid.n_half()).map(|j| j as f64 * grid.dk()).collect();
    let (reference, norm) = reference_cumulative(&k_edges);
    NormConvergence {
        state: cumulative_norm(state),
        reference_deficit: 1.0 - reference.last().copied().unwrap_or(0.0),
        n_squared: norm.n_squared(),
        normalization_discrepancy: norm.discrepancy(),
        reference,
        k_edges,
    }
}
