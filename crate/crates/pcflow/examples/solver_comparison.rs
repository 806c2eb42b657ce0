//! Compares the cost of Euler and Heun inference on the same problem.
//!
//! Both integrate to the same horizon; Heun's PID controller stretches the
//! step size as the flow flattens, so it reaches a comparable equilibrium
//! energy with far fewer right-hand-side evaluations.

use ndarray::Array2;
use pcflow::{
    init_activities_with_ffwd, init_network, pc_energy, solve_inference, Activation, RngSeed,
    SolverConfig,
};

fn main() -> pcflow::Result<()> {
    let network = init_network::<f64>(&[16, 64, 64, 64, 64, 10], Activation::Tanh, RngSeed(5))?;
    let x = Array2::from_shape_fn((64, 16), |(i, j)| ((i + 3 * j) as f64 * 0.21).sin());
    let y = Array2::from_shape_fn((64, 10), |(i, j)| if i % 10 == j { 1.0 } else { 0.0 });
    let mut state = init_activities_with_ffwd(&network, &x)?;
    state.clamp_output(&y)?;

    println!("{:<22} {:>10} {:>10} {:>10} {:>14}", "solver", "accepted", "rejected", "rhs evals", "energy");
    for (label, config) in [
        ("euler dt=0.5", SolverConfig::euler(0.5, 100.0)),
        ("euler dt=0.1", SolverConfig::euler(0.1, 100.0)),
        ("euler dt=0.05", SolverConfig::euler(0.05, 100.0)),
        ("heun dt0=0.1 (PID)", SolverConfig::heun(0.1, 100.0)),
    ] {
        match solve_inference(&network, &state, &config) {
            Ok((equilibrium, stats)) => {
                let energy = pc_energy(&network, &equilibrium)?.total();
                println!(
                    "{label:<22} {:>10} {:>10} {:>10} {:>14.9}",
                    stats.accepted_steps, stats.rejected_steps, stats.rhs_evaluations, energy
                );
            }
            Err(err) => println!("{label:<22} failed: {err}"),
        }
    }
    Ok(())
}
