//! Momentum grids, the symmetric full-line embedding, and the discrete Fourier
//! pair between momentum and position samples.
//!
//! Conventions (fixed here and nowhere else):
//!
//! * A full line of `n` samples (even) has momenta `k_j = (j - n/2 + 1/2)·dk`
//!   and positions `x_m = (m - n/2)·dx` with `dk·dx = 2π/n`. Index `n/2` of the
//!   position array is `x = 0`, index `0` is the Nyquist position `-n·dx/2`.
//!   Momentum indices `j >= n/2` are exactly the positive momenta.
//! * `ψ(x_m) = (2π)^{-1/2} Σ_j exp(+i k_j x_m) φ(k_j) dk`, and the inverse with
//!   `exp(-i k_j x_m)` and measure `dx`. With these measures the pair is
//!   unitary.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Largest prime factor accepted in a grid size.
pub const MAX_PRIME_FACTOR: usize = 61;

pub(crate) fn largest_prime_factor(mut n: usize) -> usize {
    let mut largest = 1;
    let mut p = 2;
    while p * p <= n {
        while n % p == 0 {
            largest = p;
            n /= p;
        }
        p += 1;
    }
    if n > 1 {
        largest = largest.max(n);
    }
    largest
}

fn is_seven_smooth(mut n: usize) -> bool {
    for p in [2, 3, 5, 7] {
        while n % p == 0 {
            n /= p;
        }
    }
    n == 1
}

/// Uniform midpoint samples of the momentum half-line `[0, q_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentumGrid {
    n_half: usize,
    q_max: f64,
    dk: f64,
    k_values: Vec<f64>,
}

impl MomentumGrid {
    pub fn new(n_half: usize, q_max: f64) -> Result<Self> {
        if n_half < 2 {
            return Err(Error::InvalidParameter(format!("n_half must be >= 2, got {n_half}")));
        }
        if !(q_max > 0.0 && q_max.is_finite()) {
            return Err(Error::InvalidParameter(format!("q_max must be positive, got {q_max}")));
        }
        let factor = largest_prime_factor(n_half);
        if factor > MAX_PRIME_FACTOR {
            return Err(Error::UnfriendlySize { n: n_half, factor, max: MAX_PRIME_FACTOR });
        }
        let dk = q_max / n_half as f64;
        let k_values = (0..n_half).map(|j| (j as f64 + 0.5) * dk).collect();
        Ok(Self { n_half, q_max, dk, k_values })
    }

    pub fn n_half(&self) -> usize {
        self.n_half
    }

    pub fn n_full(&self) -> usize {
        2 * self.n_half
    }

    pub fn q_max(&self) -> f64 {
        self.q_max
    }

    pub fn dk(&self) -> f64 {
        self.dk
    }

    pub fn k_values(&self) -> &[f64] {
        &self.k_values
    }

    /// The symmetric full line `[-q, q)` with the same spacing.
    pub fn line(&self) -> LineGrid {
        LineGrid::new(self.n_full(), self.dk)
    }
}

/// Complex amplitudes `φ(k_j)` on a [`MomentumGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    grid: Arc<MomentumGrid>,
    amplitudes: Vec<Complex64>,
}

impl StateVector {
    pub fn new(grid: Arc<MomentumGrid>, amplitudes: Vec<Complex64>) -> Result<Self> {
        if amplitudes.len() != grid.n_half() {
            return Err(Error::LengthMismatch { expected: grid.n_half(), actual: amplitudes.len() });
        }
        Ok(Self { grid, amplitudes })
    }

    pub fn zeros(grid: Arc<MomentumGrid>) -> Self {
        let amplitudes = vec![Complex64::new(0.0, 0.0); grid.n_half()];
        Self { grid, amplitudes }
    }

    /// Samples `f(k_j)` on every grid point.
    pub fn from_fn(grid: Arc<MomentumGrid>, f: impl Fn(f64) -> Complex64) -> Self {
        let amplitudes = grid.k_values().iter().map(|&k| f(k)).collect();
        Self { grid, amplitudes }
    }

    pub fn grid(&self) -> &Arc<MomentumGrid> {
        &self.grid
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amplitudes
    }

    /// `sqrt(Σ |φ_j|² dk)`.
    pub fn norm(&self) -> f64 {
        (norm_sqr(&self.amplitudes) * self.grid.dk()).sqrt()
    }

    /// `Σ conj(self_j) other_j dk`.
    pub fn inner(&self, other: &StateVector) -> Complex64 {
        inner(&self.amplitudes, &other.amplitudes) * self.grid.dk()
    }

    /// Copy scaled to unit norm. A zero state is returned unchanged.
    pub fn normalized(&self) -> StateVector {
        let n = self.norm();
        let mut out = self.clone();
        if n > 0.0 {
            out.amplitudes.iter_mut().for_each(|a| *a /= n);
        }
        out
    }
}

pub(crate) fn norm_sqr(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum()
}

pub(crate) fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// A symmetric full line of `n` momentum samples and its conjugate position
/// samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineGrid {
    n: usize,
    dk: f64,
    dx: f64,
}

impl LineGrid {
    /// `n` must be even.
    pub fn new(n: usize, dk: f64) -> Self {
        assert!(n >= 2 && n % 2 == 0, "full-line size must be even, got {n}");
        let dx = 2.0 * PI / (n as f64 * dk);
        Self { n, dk, dx }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dk(&self) -> f64 {
        self.dk
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn k(&self, j: usize) -> f64 {
        (j as f64 - (self.n / 2) as f64 + 0.5) * self.dk
    }

    pub fn x(&self, m: usize) -> f64 {
        (m as f64 - (self.n / 2) as f64) * self.dx
    }

    /// Position index of `x = 0`.
    pub fn origin(&self) -> usize {
        self.n / 2
    }

    pub fn k_values(&self) -> Vec<f64> {
        (0..self.n).map(|j| self.k(j)).collect()
    }

    pub fn x_values(&self) -> Vec<f64> {
        (0..self.n).map(|m| self.x(m)).collect()
    }
}

/// Planned momentum↔position transforms on one [`LineGrid`]. Immutable and
/// shareable across threads.
#[derive(Clone)]
pub struct FourierPair {
    grid: LineGrid,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    // exp(iπ(1-n)(m-n/2)/n); the (-1)^j momentum factor is applied inline
    position_phase: Vec<Complex64>,
}

impl std::fmt::Debug for FourierPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FourierPair").field("grid", &self.grid).finish()
    }
}

impl FourierPair {
    pub fn new(grid: LineGrid) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(grid.n);
        let inverse = planner.plan_fft_inverse(grid.n);
        let n = grid.n as f64;
        let half = (grid.n / 2) as f64;
        let position_phase = (0..grid.n)
            .map(|m| {
                let theta = PI * (1.0 - n) * (m as f64 - half) / n;
                Complex64::from_polar(1.0, theta.rem_euclid(2.0 * PI))
            })
            .collect();
        Self { grid, forward, inverse, position_phase }
    }

    pub fn grid(&self) -> &LineGrid {
        &self.grid
    }

    pub fn to_position_in_place(&self, data: &mut [Complex64]) {
        assert_eq!(data.len(), self.grid.n);
        for (j, z) in data.iter_mut().enumerate() {
            if j % 2 == 1 {
                *z = -*z;
            }
        }
        self.inverse.process(data);
        let scale = self.grid.dk / (2.0 * PI).sqrt();
        for (z, c) in data.iter_mut().zip(&self.position_phase) {
            *z *= c * scale;
        }
    }

    pub fn to_momentum_in_place(&self, data: &mut [Complex64]) {
        assert_eq!(data.len(), self.grid.n);
        for (z, c) in data.iter_mut().zip(&self.position_phase) {
            *z *= c.conj();
        }
        self.forward.process(data);
        let scale = self.grid.dx / (2.0 * PI).sqrt();
        for (j, z) in data.iter_mut().enumerate() {
            *z *= if j % 2 == 1 { -scale } else { scale };
        }
    }

    pub fn to_position(&self, momentum: &[Complex64]) -> Vec<Complex64> {
        let mut out = momentum.to_vec();
        self.to_position_in_place(&mut out);
        out
    }

    pub fn to_momentum(&self, position: &[Complex64]) -> Vec<Complex64> {
        let mut out = position.to_vec();
        self.to_momentum_in_place(&mut out);
        out
    }
}

/// Places half-line samples on the symmetric full line, zeros on `k < 0`.
pub fn embed_full_line(state: &StateVector) -> Vec<Complex64> {
    let n = state.grid().n_half();
    let mut full = vec![Complex64::new(0.0, 0.0); 2 * n];
    full[n..].copy_from_slice(state.amplitudes());
    full
}

/// Keeps the positive-momentum samples of a full-line array.
pub fn restrict_half(grid: &Arc<MomentumGrid>, full: &[Complex64]) -> Result<StateVector> {
    if full.len() != grid.n_full() {
        return Err(Error::LengthMismatch { expected: grid.n_full(), actual: full.len() });
    }
    StateVector::new(grid.clone(), full[grid.n_half()..].to_vec())
}

/// Band-limited interpolation of half-line samples onto an oversampled full
/// line.
///
/// The coarse full line has position window `[-L/2, L/2)` with `L = 2π/dk`.
/// Lifting copies that window into the centre of a longer position window of
/// the same `dx` (finer momentum spacing, same momentum range) and then keeps
/// only positive fine momenta. The coarse Nyquist position sample is dropped so
/// that real momentum profiles lift to real profiles. Anything moving at most `reach` during an
/// evolution stays clear of the periodic seam of the longer window.
#[derive(Debug, Clone)]
pub struct Oversampling {
    coarse: FourierPair,
    fine: FourierPair,
    offset: usize,
    n_half: usize,
}

const MIN_SEAM_CLEARANCE: usize = 1024;

impl Oversampling {
    pub fn new(grid: &MomentumGrid, reach: f64) -> Self {
        let coarse_line = grid.line();
        let n = coarse_line.len();
        let dx = coarse_line.dx();
        // The coarse window is cut open at its seam, and the resulting
        // interpolation tails decay only like 1/x. They must stay well clear of
        // the fine seam, or edge-of-band states pick up a spurious backflow.
        let margin = (reach.abs() / dx).ceil() as usize + (n / 8).max(MIN_SEAM_CLEARANCE);
        let mut fine_n = n + 2 * margin;
        fine_n += fine_n % 2;
        while !is_seven_smooth(fine_n) {
            fine_n += 2;
        }
        let fine_dk = 2.0 * PI / (fine_n as f64 * dx);
        let fine_line = LineGrid::new(fine_n, fine_dk);
        Self {
            coarse: FourierPair::new(coarse_line),
            fine: FourierPair::new(fine_line),
            offset: (fine_n - n) / 2,
            n_half: grid.n_half(),
        }
    }

    pub fn coarse(&self) -> &FourierPair {
        &self.coarse
    }

    pub fn fine(&self) -> &FourierPair {
        &self.fine
    }

    /// Half-line amplitudes → fine full-line momentum samples, negative fine
    /// momenta zeroed.
    pub fn lift(&self, half: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(half.len(), self.n_half);
        let n = 2 * self.n_half;
        let mut coarse = vec![Complex64::new(0.0, 0.0); n];
        coarse[self.n_half..].copy_from_slice(half);
        self.coarse.to_position_in_place(&mut coarse);
        // the Nyquist position has no mirror image in the window
        coarse[0] = Complex64::new(0.0, 0.0);
        let fine_n = self.fine.grid().len();
        let mut fine = vec![Complex64::new(0.0, 0.0); fine_n];
        fine[self.offset..self.offset + n].copy_from_slice(&coarse);
        self.fine.to_momentum_in_place(&mut fine);
        fine[..fine_n / 2].iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
        fine
    }

    /// Adjoint of [`Oversampling::lift`]. Consumes the fine buffer.
    pub fn lower(&self, mut fine: Vec<Complex64>) -> Vec<Complex64> {
        let fine_n = self.fine.grid().len();
        assert_eq!(fine.len(), fine_n);
        fine[..fine_n / 2].iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
        self.fine.to_position_in_place(&mut fine);
        let n = 2 * self.n_half;
        let mut coarse = fine[self.offset..self.offset + n].to_vec();
        coarse[0] = Complex64::new(0.0, 0.0);
        self.coarse.to_momentum_in_place(&mut coarse);
        coarse.split_off(self.n_half)
    }
}
