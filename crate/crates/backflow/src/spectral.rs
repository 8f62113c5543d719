//! Power iteration on `Π B Π + id`, the grid-refinement protocol, and the
//! extrapolation fits in `1/√h`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::operators::{BackflowOperator, LinearOperator, Route, Shifted};
use crate::quadrature::GaussLegendre;
use crate::transforms::{inner, norm_sqr, MomentumGrid, StateVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerOptions {
    pub iterations: usize,
    /// Stop once the residual drops below this value.
    pub early_stop: Option<f64>,
}

impl Default for PowerOptions {
    fn default() -> Self {
        Self { iterations: 1000, early_stop: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerResult {
    /// Rayleigh quotient of each iterate, minus the shift.
    pub estimates: Vec<f64>,
    /// `‖A v_n - a_n v_n‖ / ‖v_n‖`.
    pub residuals: Vec<f64>,
    /// Last iterate, unit Euclidean norm.
    pub final_vector: Vec<Complex64>,
    pub iterations: usize,
}

impl PowerResult {
    pub fn estimate(&self) -> f64 {
        *self.estimates.last().expect("at least one iteration")
    }

    pub fn final_residual(&self) -> f64 {
        *self.residuals.last().expect("at least one iteration")
    }

    /// Final iterate as a unit-norm state (grid measure).
    pub fn final_state(&self, grid: Arc<MomentumGrid>) -> Result<StateVector> {
        Ok(StateVector::new(grid, self.final_vector.clone())?.normalized())
    }
}

/// Power method `v_{n+1} = A v_n / ‖v_n‖` with estimate `⟨A v_n, v_n⟩/‖v_n‖²`
/// at every step. `shift` is subtracted from the recorded estimates.
pub fn power_iterate<A: LinearOperator + ?Sized>(
    op: &A,
    start: &[Complex64],
    options: &PowerOptions,
    shift: f64,
) -> Result<PowerResult> {
    if options.iterations == 0 {
        return Err(Error::InvalidParameter("iteration count must be >= 1".into()));
    }
    if start.len() != op.dim() {
        return Err(Error::LengthMismatch { expected: op.dim(), actual: start.len() });
    }
    let start_norm = norm_sqr(start).sqrt();
    if !(start_norm.is_finite() && start_norm > f64::MIN_POSITIVE * 1e10) {
        return Err(Error::ZeroStart);
    }

    let mut v = start.to_vec();
    let mut estimates = Vec::with_capacity(options.iterations);
    let mut residuals = Vec::with_capacity(options.iterations);
    for iteration in 0..options.iterations {
        let w = op.apply(&v);
        let v_sq = norm_sqr(&v);
        let estimate = inner(&v, &w).re / v_sq;
        let residual = w.iter().zip(&v).map(|(a, b)| (a - b * estimate).norm_sqr()).sum::<f64>().sqrt() / v_sq.sqrt();
        if !(estimate.is_finite() && residual.is_finite()) {
            return Err(Error::NonFinite { iteration });
        }
        estimates.push(estimate - shift);
        residuals.push(residual);
        let scale = 1.0 / v_sq.sqrt();
        v = w.into_iter().map(|z| z * scale).collect();
        if options.early_stop.is_some_and(|tol| residual < tol) {
            break;
        }
    }
    let norm = norm_sqr(&v).sqrt();
    if !(norm.is_finite() && norm > 0.0) {
        return Err(Error::NonFinite { iteration: estimates.len() });
    }
    v.iter_mut().for_each(|z| *z /= norm);
    Ok(PowerResult { iterations: estimates.len(), estimates, residuals, final_vector: v })
}

/// Power method on `Π B_T Π + id`, reporting `λ` estimates (shifted back).
pub fn estimate_lambda(op: &BackflowOperator, start: &StateVector, options: &PowerOptions) -> Result<PowerResult> {
    power_iterate(&Shifted(op), start.amplitudes(), options, 1.0)
}

/// Starting vectors for the power method.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Start {
    /// `v₀ ≡ 1`.
    Constant,
    /// Independent uniform `(0.5, 1.5)` entries.
    RandomPositive { seed: u64 },
}

impl Start {
    pub fn build(&self, grid: Arc<MomentumGrid>) -> StateVector {
        match *self {
            Start::Constant => StateVector::from_fn(grid, |_| Complex64::new(1.0, 0.0)),
            Start::RandomPositive { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let amps = (0..grid.n_half()).map(|_| Complex64::new(0.5 + rng.random::<f64>(), 0.0)).collect();
                StateVector::new(grid, amps).expect("length matches")
            }
        }
    }
}

/// Grid family `N = n0·h`, `q = q0·√h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Protocol {
    pub n0: usize,
    pub q0: f64,
    pub time: f64,
    pub route: Route,
    pub power: PowerOptions,
}

impl Default for Protocol {
    fn default() -> Self {
        Self { n0: 10_000, q0: 50.0, time: 1.0, route: Route::default(), power: PowerOptions::default() }
    }
}

impl Protocol {
    pub fn grid(&self, h: u32) -> Result<MomentumGrid> {
        MomentumGrid::new(self.n0 * h as usize, self.q0 * (h as f64).sqrt())
    }

    /// `λ_h` from a constant start.
    pub fn lambda_at(&self, h: u32) -> Result<f64> {
        let run = || -> Result<f64> {
            let grid = Arc::new(self.grid(h)?);
            let op = BackflowOperator::new(grid.clone(), self.time, self.route)?;
            let start = Start::Constant.build(grid);
            Ok(estimate_lambda(&op, &start, &self.power)?.estimate())
        };
        run().map_err(|e| Error::AtRefinement { h, source: Box::new(e) })
    }
}

/// Runs the protocol for each `h` (ascending, `>= 1`). Refinements are
/// independent and run on the current rayon pool; `on_done` sees each result
/// as it finishes. The returned list is ordered like `h_list`.
pub fn run_h_protocol(
    h_list: &[u32],
    protocol: &Protocol,
    on_done: &(dyn Fn(u32, f64) + Sync),
) -> Result<Vec<(u32, f64)>> {
    if h_list.is_empty() {
        return Err(Error::InvalidParameter("empty h list".into()));
    }
    if h_list[0] < 1 || h_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("h values must be >= 1 and strictly ascending".into()));
    }
    h_list
        .par_iter()
        .map(|&h| {
            let lambda = protocol.lambda_at(h)?;
            on_done(h, lambda);
            Ok((h, lambda))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SqrtFit {
    pub lambda_inf: f64,
    pub b: f64,
    pub rms: f64,
}

impl SqrtFit {
    pub fn eval(&self, h: f64) -> f64 {
        self.lambda_inf + self.b / h.sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CubicFit {
    /// `c0 + c1 s + c2 s² + c3 s³`, `s = 1/√h`.
    pub coefficients: [f64; 4],
    pub rms: f64,
}

impl CubicFit {
    pub fn lambda_inf(&self) -> f64 {
        self.coefficients[0]
    }

    pub fn eval(&self, h: f64) -> f64 {
        let s = 1.0 / h.sqrt();
        self.coefficients.iter().rev().fold(0.0, |acc, c| acc * s + c)
    }
}

fn least_squares(design: DMatrix<f64>, y: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
    let svd = design.clone().svd(true, true);
    let max = svd.singular_values.max();
    let min = svd.singular_values.min();
    if !(max > 0.0) || min <= 1e-12 * max {
        return Err(Error::RankDeficient);
    }
    let coeffs = svd.solve(y, 0.0).map_err(|_| Error::RankDeficient)?;
    let residual = &design * &coeffs - y;
    let rms = (residual.norm_squared() / y.len() as f64).sqrt();
    Ok((coeffs, rms))
}

/// Least squares for `λ_h ≈ λ_∞ + b/√h`.
pub fn fit_sqrt(points: &[(f64, f64)]) -> Result<SqrtFit> {
    if points.len() < 3 {
        return Err(Error::TooFewPoints { needed: 3, got: points.len() });
    }
    let design = DMatrix::from_fn(points.len(), 2, |i, j| if j == 0 { 1.0 } else { 1.0 / points[i].0.sqrt() });
    let y = DVector::from_iterator(points.len(), points.iter().map(|p| p.1));
    let (c, rms) = least_squares(design, &y)?;
    Ok(SqrtFit { lambda_inf: c[0], b: c[1], rms })
}

/// Least squares for a cubic in `s = 1/√h`.
pub fn fit_cubic(points: &[(f64, f64)]) -> Result<CubicFit> {
    if points.len() < 5 {
        return Err(Error::TooFewPoints { needed: 5, got: points.len() });
    }
    let design = DMatrix::from_fn(points.len(), 4, |i, j| (1.0 / points[i].0.sqrt()).powi(j as i32));
    let y = DVector::from_iterator(points.len(), points.iter().map(|p| p.1));
    let (c, rms) = least_squares(design, &y)?;
    Ok(CubicFit { coefficients: [c[0], c[1], c[2], c[3]], rms })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtrapolationResult {
    pub h_values: Vec<u32>,
    pub lambda_h: Vec<f64>,
    pub sqrt_fit: SqrtFit,
    pub cubic_fit: CubicFit,
    /// The cubic intercept.
    pub lambda_inf_reported: f64,
}

pub fn extrapolate(points: &[(u32, f64)]) -> Result<ExtrapolationResult> {
    let pts: Vec<(f64, f64)> = points.iter().map(|&(h, l)| (h as f64, l)).collect();
    let sqrt_fit = fit_sqrt(&pts)?;
    let cubic_fit = fit_cubic(&pts)?;
    Ok(ExtrapolationResult {
        h_values: points.iter().map(|p| p.0).collect(),
        lambda_h: points.iter().map(|p| p.1).collect(),
        sqrt_fit,
        lambda_inf_reported: cubic_fit.lambda_inf(),
        cubic_fit,
    })
}

/// Gaussian momentum profile `exp(-(k - k0)²/(2 w²))`, unit norm on the grid.
pub fn gaussian_probe(grid: Arc<MomentumGrid>, k0: f64, width: f64) -> StateVector {
    StateVector::from_fn(grid, |k| Complex64::new((-(k - k0).powi(2) / (2.0 * width * width)).exp(), 0.0)).normalized()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DollardEntry {
    pub width: f64,
    pub time: f64,
    /// `⟨φ, Π B_T Π φ⟩`.
    pub value: f64,
    /// Fraction of the continuum Gaussian's mass outside `[0, q]`.
    pub leak: f64,
}

impl DollardEntry {
    pub fn leaked(&self) -> bool {
        self.leak > 1e-6
    }
}

/// `⟨φ, Π B_T Π φ⟩` for Gaussian probes at momentum `k0` over a table of
/// widths and times.
pub fn dollard_probe(grid: Arc<MomentumGrid>, k0: f64, widths: &[f64], times: &[f64], route: Route) -> Result<Vec<DollardEntry>> {
    let gl = GaussLegendre::new(16);
    let mut out = Vec::with_capacity(widths.len() * times.len());
    for &width in widths {
        if !(width > 0.0) {
            return Err(Error::InvalidParameter(format!("probe width must be positive, got {width}")));
        }
        let probe = gaussian_probe(grid.clone(), k0, width);
        let density = |k: f64| (-(k - k0).powi(2) / (width * width)).exp();
        let inside = gl.integrate(density, 0.0, grid.q_max(), 256);
        let total = width * std::f64::consts::PI.sqrt();
        let leak = (1.0 - inside / total).max(0.0);
        for &time in times {
            let op = BackflowOperator::new(grid.clone(), time, route)?;
            out.push(DollardEntry { width, time, value: op.expectation(&probe), leak });
        }
    }
    Ok(out)
}
