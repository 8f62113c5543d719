use std::sync::{Arc, OnceLock};

use backflow::dynamics::{backflow_functional, flow_lines, norm_convergence, time_grid, Evolver, FlowConfig};
use backflow::spectral::{estimate_lambda, PowerOptions, Start};
use backflow::{BackflowOperator, MomentumGrid, Route, StateVector};

/// Maximizing vector of a moderate grid and its power-method λ.
fn maximizer() -> &'static (StateVector, f64) {
    static CELL: OnceLock<(StateVector, f64)> = OnceLock::new();
    CELL.get_or_init(|| {
        let grid = Arc::new(MomentumGrid::new(1000, 20.0).unwrap());
        let op = BackflowOperator::new(grid.clone(), 1.0, Route::default()).unwrap();
        let r = estimate_lambda(&op, &Start::Constant.build(grid.clone()), &PowerOptions { iterations: 800, early_stop: None }).unwrap();
        let lambda = r.estimate();
        (r.final_state(grid).unwrap(), lambda)
    })
}

fn evolver() -> Evolver {
    Evolver::new(&maximizer().0, 3.0, 4).unwrap()
}

#[test]
fn maximizer_is_pt_symmetric_and_conserves_mass() {
    let ev = evolver();
    for t in [0.0, 0.5, 1.0, 2.5] {
        assert!(ev.pt_residual(t) < 1e-9, "t = {t}: {}", ev.pt_residual(t));
        assert!((ev.mass(t) - 1.0).abs() < 1e-12);
    }
    let (even, odd) = ev.parity_residuals(0.0);
    assert!(even < 1e-9 && odd < 1e-9);
}

#[test]
fn maximizer_realizes_its_eigenvalue_between_minus_one_and_one() {
    let (_, lambda) = maximizer();
    let ev = evolver();
    let bf = backflow_functional(&ev, &time_grid(-3.0, 3.0, 0.005)).unwrap();
    assert!((bf.value - lambda).abs() < 5e-3, "{} vs {lambda}", bf.value);
    assert!((bf.s + 1.0).abs() < 0.05 && (bf.t - 1.0).abs() < 0.05, "({}, {})", bf.s, bf.t);

    // the probability lost equals the current that flowed back through x = 0
    let times = time_grid(bf.s, bf.t, 0.002);
    let j: Vec<f64> = times.iter().map(|&t| ev.current_at_origin(t)).collect();
    let area: f64 = times.windows(2).zip(j.windows(2)).map(|(t, j)| 0.5 * (j[0] + j[1]) * (t[1] - t[0])).sum();
    assert!((area + bf.value).abs() < 0.02 * bf.value, "{area} vs {}", bf.value);
    assert!(times.iter().filter(|t| t.abs() < 0.9).all(|&t| ev.current_at_origin(t) < 0.0));
}

#[test]
fn flow_lines_of_the_maximizer_move_left_through_the_origin() {
    let ev = evolver();
    let config = FlowConfig { t_start: -1.5, t_end: 1.5, dt: 5e-4, probability_spacing: 0.02, x_min: -10.0, x_max: 10.0, ..FlowConfig::default() };
    let set = flow_lines(&ev, &config).unwrap();
    assert!(set.lines.len() > 20);
    let inner: Vec<(f64, f64)> = set.zero_crossings().into_iter().filter(|c| c.0.abs() < 0.9).collect();
    assert!(!inner.is_empty());
    assert!(inner.iter().all(|c| c.1 < 0.0), "{inner:?}");
    let drift = set.interline_mass_drift(&ev, &config);
    assert!(drift < 0.05, "{drift}");
}

#[test]
fn cumulative_norms_rise_to_their_totals() {
    let nc = norm_convergence(&maximizer().0);
    for curve in [&nc.state, &nc.reference] {
        assert!(curve.windows(2).all(|w| w[1] >= w[0]));
    }
    assert!((nc.state.last().unwrap() - 1.0).abs() < 1e-12);
    assert!(nc.normalization_discrepancy < 1e-8);
}
