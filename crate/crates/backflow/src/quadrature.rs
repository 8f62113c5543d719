//! Gauss–Legendre and adaptive Simpson quadrature, plus the normalization of
//! the reference profile `sin(k²)/k`.

use std::f64::consts::PI;

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Composite Gauss–Legendre rule over `panels` equal panels.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(order: usize) -> Self {
        let (nodes, weights) = gauss_legendre(order);
        Self { nodes, weights }
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
        let h = (b - a) / panels as f64;
        let mut total = 0.0;
        for p in 0..panels {
            let lo = a + p as f64 * h;
            let mid = lo + 0.5 * h;
            let panel: f64 = self.nodes.iter().zip(&self.weights).map(|(x, w)| w * f(mid + 0.5 * h * x)).sum();
            total += 0.5 * h * panel;
        }
        total
    }
}

/// Adaptive Simpson quadrature to absolute tolerance `tol`.
pub fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn recurse(f: &impl Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    let fa = f(a);
    let fb = f(b);
    let fm = f(0.5 * (a + b));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    recurse(f, a, b, fa, fm, fb, whole, tol, 50)
}

/// `sin²(k²)/k²`, continuous at the origin.
pub fn reference_density(k: f64) -> f64 {
    if k == 0.0 {
        return 0.0;
    }
    let s = (k * k).sin() / k;
    s * s
}

/// `∫₀^∞ sin²(k²)/k² dk` by direct quadrature on `[0, K]` plus the asymptotic
/// expansion of the tail.
pub fn reference_integral_direct() -> f64 {
    let cutoff: f64 = 24.0;
    let gl = GaussLegendre::new(16);
    // one panel per quarter oscillation at the far end
    let panels = (4.0 * cutoff * cutoff / PI).ceil() as usize;
    let head = gl.integrate(reference_density, 0.0, cutoff, panels);
    // tail = 1/(2K) - (1/2)∫_K^∞ cos(2k²)/k² dk
    //      = 1/(2K) - (1/(2√2)) ∫_U^∞ cos(u) u^{-3/2} du,  U = 2K²
    let u0 = 2.0 * cutoff * cutoff;
    let oscillatory = cosine_power_tail(u0, 1.5);
    head + 1.0 / (2.0 * cutoff) - oscillatory / (2.0 * 2f64.sqrt())
}

// ∫_U^∞ cos(u) u^{-a} du by repeated integration by parts.
fn cosine_power_tail(u0: f64, a: f64) -> f64 {
    let (s, c) = u0.sin_cos();
    let mut sum = 0.0;
    let mut coeff = 1.0;
    let mut power = a;
    // terms: -sinU U^{-a} + a cosU U^{-a-1} + a(a+1) sinU U^{-a-2} - ...
    for n in 0..12 {
        let trig = match n % 4 {
            0 => -s,
            1 => c,
            2 => s,
            _ => -c,
        };
        sum += coeff * trig * u0.powf(-power);
        coeff *= power;
        power += 1.0;
    }
    sum
}

/// The same integral through `2∫₀^∞ sin(2k²) dk = (1/√2)∫₀^∞ sin(u)/√u du`,
/// summed over half periods with repeated averaging of the alternating partial
/// sums.
pub fn reference_integral_half_periods() -> f64 {
    let gl = GaussLegendre::new(24);
    // first half period with u = s² to remove the 1/√u singularity
    let first = gl.integrate(|s| 2.0 * (s * s).sin(), 0.0, PI.sqrt(), 8);
    let terms = 40;
    let mut partial = Vec::with_capacity(terms);
    let mut acc = first;
    partial.push(acc);
    for n in 1..terms {
        let a = n as f64 * PI;
        acc += gl.integrate(|u| u.sin() / u.sqrt(), a, a + PI, 2);
        partial.push(acc);
    }
    // repeated averaging of the last partial sums (Euler-type acceleration)
    let mut row: Vec<f64> = partial[terms - 24..].to_vec();
    while row.len() > 1 {
        row = row.windows(2).map(|w| 0.5 * (w[0] + w[1])).collect();
    }
    row[0] / 2f64.sqrt()
}

/// Normalization `𝒩` of `f(k) = 𝒩 sin(k²)/k` on `[0, ∞)`, with both
/// quadrature routes kept for cross-checking.
#[derive(Debug, Clone, Copy)]
pub struct ReferenceNorm {
    pub integral_direct: f64,
    pub integral_half_periods: f64,
}

impl ReferenceNorm {
    pub fn compute() -> Self {
        Self { integral_direct: reference_integral_direct(), integral_half_periods: reference_integral_half_periods() }
    }

    /// `𝒩²`, from the direct route.
    pub fn n_squared(&self) -> f64 {
        1.0 / self.integral_direct
    }

    pub fn discrepancy(&self) -> f64 {
        (1.0 / self.integral_direct - 1.0 / self.integral_half_periods).abs()
    }

    /// `∫₀^q |f(k)|² dk` at each (ascending) `q`.
    pub fn cumulative(&self, q_values: &[f64]) -> Vec<f64> {
        let gl = GaussLegendre::new(8);
        let n_sq = self.n_squared();
        let mut out = Vec::with_capacity(q_values.len());
        let mut lo = 0.0;
        let mut acc = 0.0;
        for &q in q_values {
            assert!(q >= lo, "cumulative abscissae must be ascending");
            if q > lo {
                // panels resolve the local oscillation period π/k
                let panels = (((q - lo) * q.max(1.0) * 4.0 / PI).ceil() as usize).max(1);
                acc += gl.integrate(reference_density, lo, q, panels);
            }
            out.push(acc * n_sq);
            lo = q;
        }
        out
    }
}
