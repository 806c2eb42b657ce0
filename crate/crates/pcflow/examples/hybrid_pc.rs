//! Hybrid predictive coding: a generative model whose inference is
//! initialized by a separate amortiser network running in the opposite
//! direction.
//!
//! The amortiser's feedforward pass seeds the generator's activities, cutting
//! down the inference work; it is trained to predict the generator's
//! equilibrated activities in reverse order.

use ndarray::Array2;
use pcflow::{
    init_network, make_hpc_step, Activation, OptimKind, OptimState, RecordFlags, RngSeed,
    SolverConfig,
};

fn main() -> pcflow::Result<()> {
    // 2-D latent generating 6-D observations.
    let mut generator = init_network::<f64>(&[2, 8, 6], Activation::Tanh, RngSeed(0))?;
    let mut amortiser = init_network::<f64>(&[6, 8, 2], Activation::Tanh, RngSeed(1))?;
    let mut gen_optim = OptimState::new(OptimKind::adam(5e-3), &generator);
    let mut am_optim = OptimState::new(OptimKind::adam(5e-3), &amortiser);

    let patterns = [[0.9, 0.1, -0.4, 0.5, -0.8, 0.2], [-0.3, 0.7, 0.6, -0.5, 0.1, -0.9]];
    let y = Array2::from_shape_fn((16, 6), |(i, j)| {
        patterns[i % 2][j] + 0.05 * ((i + j) as f64).cos()
    });
    let solver = SolverConfig::heun(0.1, 20.0);

    for step_idx in 0..100 {
        let step = make_hpc_step(
            &generator,
            &amortiser,
            &gen_optim,
            &am_optim,
            &y,
            None,
            &solver,
            RecordFlags::default(),
        )?;
        if step_idx % 25 == 0 || step_idx == 99 {
            println!(
                "step {step_idx}: generator energy {:.5}, amortiser energy {:.5}, \
                 inference evals {}",
                step.generator_energies.total(),
                step.amortiser_energies.total(),
                step.stats.rhs_evaluations
            );
        }
        generator = step.generator;
        amortiser = step.amortiser;
        gen_optim = step.generator_optim;
        am_optim = step.amortiser_optim;
    }
    Ok(())
}
