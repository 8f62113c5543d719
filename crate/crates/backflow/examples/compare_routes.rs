//! Compares the matrix-free λ with the dense-kernel λ on a few grids.
//!
//! ```text
//! cargo run --release --example compare_routes -- 20 300 600 1200
//! ```
//! The first argument is the cutoff q, the rest are half-line sizes.

use std::sync::Arc;

use backflow::operators::Shifted;
use backflow::spectral::{estimate_lambda, power_iterate, PowerOptions, Start};
use backflow::{BackflowOperator, DenseKernel, MomentumGrid, Route};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let q: f64 = args.next().ok_or("usage: compare_routes <q> <n>...")?.parse()?;
    let power = PowerOptions { iterations: 1000, early_stop: None };
    for n in args {
        let n: usize = n.parse()?;
        let grid = Arc::new(MomentumGrid::new(n, q)?);
        let start = Start::Constant.build(grid.clone());
        let free = estimate_lambda(&BackflowOperator::new(grid.clone(), 1.0, Route::default())?, &start, &power)?;
        let dense = DenseKernel::build(grid)?;
        let dense = power_iterate(&Shifted(&dense), start.amplitudes(), &power, 1.0)?;
        println!("n = {n:>5}, q = {q}: matrix-free {:.6}  dense {:.6}", free.estimate(), dense.estimate());
    }
    Ok(())
}
