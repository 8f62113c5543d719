//! Matrix-free backflow operator and the dense integral-kernel oracle.
//!
//! `B_T = Π̃_{-T} - Π̃_T` with `Π̃_t = U_t* F Π F* U_t`, where `U_t` multiplies
//! momentum amplitudes by `exp(-i k² t)` and `F Π F*` keeps positions `x > 0`.
//! The same operator can be written with the Hilbert transform as
//! `(1/2i)(U H U* - U* H U)`, `U = U_T`; both routes are provided.
//!
//! Positive-momentum states on `[0, q]` are lifted onto an oversampled line
//! (see [`Oversampling`]) before evolution so that nothing wraps around the
//! periodic position window during `[-T, T]`.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::transforms::{FourierPair, LineGrid, MomentumGrid, Oversampling, StateVector};

/// A linear map on `C^dim`. Implementations are pure: the input is left alone
/// and a fresh output is returned.
pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, input: &[Complex64]) -> Vec<Complex64>;
}

/// `A + id`.
#[derive(Debug, Clone, Copy)]
pub struct Shifted<'a, A: ?Sized>(pub &'a A);

impl<A: LinearOperator + ?Sized> LinearOperator for Shifted<'_, A> {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn apply(&self, input: &[Complex64]) -> Vec<Complex64> {
        let mut out = self.0.apply(input);
        out.iter_mut().zip(input).for_each(|(o, i)| *o += i);
        out
    }
}

/// Diagonal matrix, mostly for exercising the solvers.
#[derive(Debug, Clone)]
pub struct Diagonal(pub Vec<f64>);

impl LinearOperator for Diagonal {
    fn dim(&self) -> usize {
        self.0.len()
    }

    fn apply(&self, input: &[Complex64]) -> Vec<Complex64> {
        input.iter().zip(&self.0).map(|(z, d)| z * d).collect()
    }
}

/// Multiplies by `exp(-i k² t)` in place.
pub fn apply_free_evolution(k_values: &[f64], data: &mut [Complex64], t: f64) {
    assert_eq!(k_values.len(), data.len());
    for (z, &k) in data.iter_mut().zip(k_values) {
        *z *= Complex64::from_polar(1.0, -k * k * t);
    }
}

/// Evolves a half-line state by `U_t`.
pub fn evolve_state(state: &StateVector, t: f64) -> StateVector {
    let mut out = state.clone();
    let grid = state.grid().clone();
    apply_free_evolution(grid.k_values(), out.amplitudes_mut(), t);
    out
}

/// Discrete `sgn(x)` on a line: `+1` for `x > 0`, `-1` for `x < 0`, and `0` at
/// both `x = 0` and the Nyquist position.
pub fn position_sign(line: &LineGrid) -> Vec<f64> {
    let origin = line.origin();
    (0..line.len())
        .map(|m| match m {
            0 => 0.0,
            m if m == origin => 0.0,
            m if m > origin => 1.0,
            _ => -1.0,
        })
        .collect()
}

/// Position weight of `F Π F*`: `(1 + sgn(x))/2`, so `x = 0` and the Nyquist
/// position carry weight one half.
pub fn position_weight(line: &LineGrid) -> Vec<f64> {
    position_sign(line).into_iter().map(|s| 0.5 * (1.0 + s)).collect()
}

fn multiply_in_position(pair: &FourierPair, data: &mut [Complex64], weights: &[f64]) {
    pair.to_position_in_place(data);
    data.iter_mut().zip(weights).for_each(|(z, w)| *z *= w);
    pair.to_momentum_in_place(data);
}

/// `F Π F*` on full-line momentum samples.
pub fn apply_position_projection(pair: &FourierPair, momentum: &[Complex64]) -> Vec<Complex64> {
    let mut out = momentum.to_vec();
    multiply_in_position(pair, &mut out, &position_weight(pair.grid()));
    out
}

/// Hilbert transform `H = i F sgn F*` on full-line momentum samples.
pub fn apply_hilbert(pair: &FourierPair, momentum: &[Complex64]) -> Vec<Complex64> {
    let mut out = momentum.to_vec();
    multiply_in_position(pair, &mut out, &position_sign(pair.grid()));
    out.iter_mut().for_each(|z| *z *= Complex64::i());
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Route {
    /// `Π̃_{-T} - Π̃_T` from two position projections.
    #[default]
    ProjectionSandwich,
    /// `(1/2i)(U H U* - U* H U)`.
    Hilbert,
}

/// `Π B_T Π` acting on half-line amplitudes.
#[derive(Debug, Clone)]
pub struct BackflowOperator {
    grid: Arc<MomentumGrid>,
    time: f64,
    route: Route,
    sampling: Oversampling,
    // exp(-i k² T) on the fine line
    evolution: Vec<Complex64>,
    sign: Vec<f64>,
    weight: Vec<f64>,
}

impl BackflowOperator {
    pub fn new(grid: Arc<MomentumGrid>, time: f64, route: Route) -> Result<Self> {
        if !(time > 0.0 && time.is_finite()) {
            return Err(Error::InvalidParameter(format!("T must be positive, got {time}")));
        }
        let sampling = Oversampling::new(&grid, 2.0 * grid.q_max() * time);
        let fine = *sampling.fine().grid();
        let evolution = (0..fine.len())
            .map(|j| {
                let k = fine.k(j);
                Complex64::from_polar(1.0, -k * k * time)
            })
            .collect();
        Ok(Self {
            sign: position_sign(&fine),
            weight: position_weight(&fine),
            grid,
            time,
            route,
            sampling,
            evolution,
        })
    }

    pub fn grid(&self) -> &Arc<MomentumGrid> {
        &self.grid
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn route(&self) -> Route {
        self.route
    }

    pub fn sampling(&self) -> &Oversampling {
        &self.sampling
    }

    pub fn with_route(&self, route: Route) -> Self {
        Self { route, ..self.clone() }
    }

    pub fn apply_state(&self, state: &StateVector) -> StateVector {
        let out = self.apply(state.amplitudes());
        StateVector::new(self.grid.clone(), out).expect("operator preserves length")
    }

    /// `⟨φ, Π B_T Π φ⟩` with the grid measure.
    pub fn expectation(&self, state: &StateVector) -> f64 {
        state.inner(&self.apply_state(state)).re
    }

    /// `(Π B_T Π + id) φ`.
    pub fn apply_shifted(&self, state: &StateVector) -> StateVector {
        let out = Shifted(self).apply(state.amplitudes());
        StateVector::new(self.grid.clone(), out).expect("operator preserves length")
    }

    fn conjugated(&self, lifted: &[Complex64], forward: bool, weights: &[f64]) -> Vec<Complex64> {
        let fine = self.sampling.fine();
        // forward: U_T* W U_T, otherwise U_T W U_T*
        let mut buf: Vec<Complex64> = lifted
            .iter()
            .zip(&self.evolution)
            .map(|(z, u)| if forward { z * u } else { z * u.conj() })
            .collect();
        multiply_in_position(fine, &mut buf, weights);
        buf.iter_mut()
            .zip(&self.evolution)
            .for_each(|(z, u)| *z *= if forward { u.conj() } else { *u });
        buf
    }
}

impl LinearOperator for BackflowOperator {
    fn dim(&self) -> usize {
        self.grid.n_half()
    }

    fn apply(&self, input: &[Complex64]) -> Vec<Complex64> {
        let lifted = self.sampling.lift(input);
        let combined: Vec<Complex64> = match self.route {
            Route::ProjectionSandwich => {
                let past = self.conjugated(&lifted, false, &self.weight);
                let future = self.conjugated(&lifted, true, &self.weight);
                past.iter().zip(&future).map(|(a, b)| a - b).collect()
            }
            Route::Hilbert => {
                // (1/2i)(U H U* - U* H U) with H = i F sgn F*
                let past = self.conjugated(&lifted, false, &self.sign);
                let future = self.conjugated(&lifted, true, &self.sign);
                past.iter().zip(&future).map(|(a, b)| 0.5 * (a - b)).collect()
            }
        };
        self.sampling.lower(combined)
    }
}

/// Bracken–Melloy kernel `-(1/π) sin(k² - q²)/(k - q)`, with the analytic
/// value `-2k/π` on the diagonal.
pub fn kernel_entry(k: f64, q: f64) -> f64 {
    let diff = k - q;
    let sum = k + q;
    let s = diff * sum;
    let sinc = if s == 0.0 { 1.0 } else { s.sin() / s };
    -sum * sinc / PI
}

pub const DEFAULT_DENSE_CAP: usize = 20_000;

/// Midpoint-rule discretization of the kernel, `K_ij = kernel_entry(k_i, k_j)·dk`.
#[derive(Debug, Clone)]
pub struct DenseKernel {
    grid: Arc<MomentumGrid>,
    matrix: Vec<f64>,
}

impl DenseKernel {
    pub fn build(grid: Arc<MomentumGrid>) -> Result<Self> {
        Self::build_with_cap(grid, DEFAULT_DENSE_CAP)
    }

    pub fn build_with_cap(grid: Arc<MomentumGrid>, cap: usize) -> Result<Self> {
        let n = grid.n_half();
        if n > cap {
            return Err(Error::TooLarge { n, cap });
        }
        let k = grid.k_values();
        let dk = grid.dk();
        let mut matrix = vec![0.0; n * n];
        matrix.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
            for (j, entry) in row.iter_mut().enumerate() {
                *entry = kernel_entry(k[i], k[j]) * dk;
            }
        });
        Ok(Self { grid, matrix })
    }

    pub fn grid(&self) -> &Arc<MomentumGrid> {
        &self.grid
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.matrix[i * self.grid.n_half() + j]
    }

    pub fn apply_state(&self, state: &StateVector) -> StateVector {
        StateVector::new(self.grid.clone(), self.apply(state.amplitudes())).expect("square kernel")
    }
}

impl LinearOperator for DenseKernel {
    fn dim(&self) -> usize {
        self.grid.n_half()
    }

    fn apply(&self, input: &[Complex64]) -> Vec<Complex64> {
        let n = self.dim();
        assert_eq!(input.len(), n);
        let re: Vec<f64> = input.iter().map(|z| z.re).collect();
        let im: Vec<f64> = input.iter().map(|z| z.im).collect();
        self.matrix
            .par_chunks(n)
            .map(|row| {
                let mut acc_re = 0.0;
                let mut acc_im = 0.0;
                for ((a, x), y) in row.iter().zip(&re).zip(&im) {
                    acc_re += a * x;
                    acc_im += a * y;
                }
                Complex64::new(acc_re, acc_im)
            })
            .collect()
    }
}

/// Result of a dilation: the resampled state and whether interpolation was
/// needed.
#[derive(Debug, Clone)]
pub struct Dilated {
    pub state: StateVector,
    pub interpolated: bool,
}

/// `(V_μ φ)(k) = √μ φ(μ k)` onto the grid with the same sample count and
/// cutoff `q/μ`. Midpoints map onto midpoints, so this is exact.
pub fn apply_dilation(state: &StateVector, mu: f64) -> Result<Dilated> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::InvalidParameter(format!("dilation factor must be positive, got {mu}")));
    }
    let grid = state.grid();
    let target = Arc::new(MomentumGrid::new(grid.n_half(), grid.q_max() / mu)?);
    let scale = mu.sqrt();
    let amplitudes = state.amplitudes().iter().map(|z| z * scale).collect();
    Ok(Dilated { state: StateVector::new(target, amplitudes)?, interpolated: false })
}

/// `V_μ` onto an arbitrary target grid. Values are linearly interpolated unless
/// every `μ k'` coincides with a source sample; outside the source samples the
/// result is zero.
pub fn apply_dilation_onto(state: &StateVector, mu: f64, target: Arc<MomentumGrid>) -> Result<Dilated> {
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(Error::InvalidParameter(format!("dilation factor must be positive, got {mu}")));
    }
    let src = state.grid();
    let dk = src.dk();
    let n = src.n_half();
    let amps = state.amplitudes();
    let scale = mu.sqrt();
    let mut interpolated = false;
    let values = target
        .k_values()
        .iter()
        .map(|&kp| {
            // fractional index of μk' in the midpoint samples
            let pos = mu * kp / dk - 0.5;
            let nearest = pos.round();
            if (pos - nearest).abs() < 1e-9 {
                let i = nearest as isize;
                return if (0..n as isize).contains(&i) { amps[i as usize] * scale } else { Complex64::new(0.0, 0.0) };
            }
            interpolated = true;
            if pos < 0.0 || pos > (n - 1) as f64 {
                return Complex64::new(0.0, 0.0);
            }
            let lo = pos.floor() as usize;
            let frac = pos - lo as f64;
            (amps[lo] * (1.0 - frac) + amps[lo + 1] * frac) * scale
        })
        .collect();
    Ok(Dilated { state: StateVector::new(target, values)?, interpolated })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transforms::norm_sqr;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_vec(n: usize, rng: &mut ChaCha8Rng) -> Vec<Complex64> {
        (0..n).map(|_| Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)).collect()
    }

    fn small_op(route: Route) -> BackflowOperator {
        let grid = Arc::new(MomentumGrid::new(200, 10.0).unwrap());
        BackflowOperator::new(grid, 1.0, route).unwrap()
    }

    #[test]
    fn kernel_values() {
        assert!((kernel_entry(1.5, 1.5) + 3.0 / PI).abs() < 1e-15);
        assert_eq!(kernel_entry(1.0, 2.0), kernel_entry(2.0, 1.0));
        assert!((kernel_entry(1.0, 2.0) + 3f64.sin() / PI).abs() < 1e-15);
        assert!((kernel_entry(1.0, 2.0) + 0.04491).abs() < 1e-5);
    }

    #[test]
    fn dense_is_symmetric_and_capped() {
        let grid = Arc::new(MomentumGrid::new(64, 5.0).unwrap());
        let k = DenseKernel::build(grid.clone()).unwrap();
        for i in 0..64 {
            for j in 0..64 {
                assert_eq!(k.entry(i, j), k.entry(j, i));
                assert!(k.entry(i, j).is_finite());
            }
        }
        assert!(matches!(DenseKernel::build_with_cap(grid, 10), Err(Error::TooLarge { .. })));
    }

    #[test]
    fn free_evolution_group() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let k: Vec<f64> = (0..32).map(|j| j as f64 * 0.3).collect();
        let f = random_vec(32, &mut rng);
        let mut g = f.clone();
        apply_free_evolution(&k, &mut g, 0.0);
        assert_eq!(f, g);
        apply_free_evolution(&k, &mut g, 1.7);
        assert!((norm_sqr(&g) - norm_sqr(&f)).abs() < 1e-12);
        apply_free_evolution(&k, &mut g, -1.7);
        assert!(f.iter().zip(&g).all(|(a, b)| (a - b).norm() < 1e-12));
    }

    #[test]
    fn zero_in_zero_out() {
        let op = small_op(Route::ProjectionSandwich);
        let z = StateVector::zeros(op.grid().clone());
        assert!(op.apply_shifted(&z).norm() == 0.0);
    }

    #[test]
    fn routes_agree() {
        let a = small_op(Route::ProjectionSandwich);
        let b = a.with_route(Route::Hilbert);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let f = random_vec(200, &mut rng);
            let x = a.apply(&f);
            let y = b.apply(&f);
            let diff: Vec<_> = x.iter().zip(&y).map(|(p, q)| p - q).collect();
            assert!(norm_sqr(&diff).sqrt() <= 1e-10 * norm_sqr(&x).sqrt());
        }
    }

    #[test]
    fn real_input_gives_real_output() {
        let op = small_op(Route::ProjectionSandwich);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let f: Vec<_> = (0..200).map(|_| Complex64::new(rng.random::<f64>(), 0.0)).collect();
        let out = op.apply(&f);
        let im: f64 = out.iter().map(|z| z.im * z.im).sum::<f64>().sqrt();
        assert!(im <= 1e-10 * norm_sqr(&out).sqrt());
    }

    #[test]
    fn narrow_packet_at_large_time_flows_forward() {
        let grid = Arc::new(MomentumGrid::new(1000, 12.0).unwrap());
        let op = BackflowOperator::new(grid.clone(), 8.0, Route::default()).unwrap();
        let phi = StateVector::from_fn(grid, |k| Complex64::new((-(k - 5.0).powi(2) / 2.0).exp(), 0.0)).normalized();
        assert!(op.expectation(&phi) < -0.95);
    }

    #[test]
    fn hilbert_matches_dense_principal_value_for_smooth_input() {
        // H of a Gaussian is the Dawson-type function 2/√π·F(k) (Dawson F).
        let line = LineGrid::new(512, 0.1);
        let pair = FourierPair::new(line);
        let f: Vec<_> = (0..512).map(|j| Complex64::new((-line.k(j).powi(2)).exp(), 0.0)).collect();
        let h = apply_hilbert(&pair, &f);
        // dawson(1) ≈ 0.5380795069127684, value at k = 1: (1/π) PV∫ e^{-q²}/(k-q) dq = (2/√π) D(k)
        let j = (0..512).min_by(|&a, &b| (line.k(a) - 1.05).abs().total_cmp(&(line.k(b) - 1.05).abs())).unwrap();
        let k = line.k(j);
        let dawson = dawson_series(k);
        let expected = 2.0 / PI.sqrt() * dawson;
        assert!((h[j].re - expected).abs() < 1e-3, "{} vs {expected}", h[j].re);
    }

    fn dawson_series(x: f64) -> f64 {
        // D(x) = Σ (-1)^n 2^n x^{2n+1} / (2n+1)!!
        let mut term = x;
        let mut sum = x;
        for n in 1..60 {
            term *= -2.0 * x * x / (2 * n + 1) as f64;
            sum += term;
        }
        sum
    }

    #[test]
    fn dilation() {
        let grid = Arc::new(MomentumGrid::new(100, 5.0).unwrap());
        let phi = StateVector::from_fn(grid.clone(), |k| Complex64::new(k * (-k).exp(), 0.3));
        let d = apply_dilation(&phi, 1.0).unwrap();
        assert_eq!(d.state.amplitudes(), phi.amplitudes());
        let d = apply_dilation(&phi, 2.0).unwrap();
        assert!(!d.interpolated);
        assert!((d.state.norm() - phi.norm()).abs() < 1e-12);
        assert!((d.state.grid().q_max() - 2.5).abs() < 1e-15);

        let target = Arc::new(MomentumGrid::new(60, 3.0).unwrap());
        let d = apply_dilation_onto(&phi, 2.0, target).unwrap();
        assert!(d.interpolated);
        let same = apply_dilation_onto(&phi, 1.0, grid.clone()).unwrap();
        assert!(!same.interpolated);
        assert!(apply_dilation(&phi, 0.0).is_err());
    }
}
