//! Closed-form vs numerical equilibrium energy for a deep linear network.
//!
//! For Identity activations the equilibrated energy is a rescaled MSE that
//! can be evaluated in closed form. Running inference for longer horizons
//! drives the numerical energy down onto the closed-form value, so the gap
//! measures whether inference has been run long enough.

use ndarray::Array2;
use pcflow::{energy_gap, init_network, rescaling_matrix, Activation, RngSeed, SolverConfig};

fn main() -> pcflow::Result<()> {
    let network = init_network::<f64>(&[12, 32, 32, 32, 32, 6], Activation::Identity, RngSeed(4))?;
    let x = Array2::from_shape_fn((64, 12), |(i, j)| ((i * 12 + j) as f64 * 0.17).sin());
    let y = Array2::from_shape_fn((64, 6), |(i, j)| ((i * 6 + j) as f64 * 0.29).cos());

    let s = rescaling_matrix(&network)?;
    println!("rescaling matrix: {}×{}, trace {:.4}\n", s.dim(), s.dim(), s.matrix().diag().sum());

    println!("{:>8} {:>16} {:>16} {:>12}", "t_max", "theoretical", "numerical", "gap");
    for t_max in [5.0, 10.0, 20.0, 50.0, 100.0, 200.0, 500.0] {
        let gap = energy_gap(&network, &x, &y, &SolverConfig::euler(0.1, t_max))?;
        println!(
            "{t_max:>8} {:>16.10} {:>16.10} {:>12.3e}",
            gap.theoretical, gap.numerical, gap.gap
        );
    }
    Ok(())
}
