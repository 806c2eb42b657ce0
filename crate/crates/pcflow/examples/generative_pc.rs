//! Unsupervised generative predictive coding.
//!
//! The output layer is clamped to observed data; the input layer is left free
//! and relaxes together with the hidden activities, acting as a learned
//! latent code.

use ndarray::Array2;
use pcflow::{
    init_network, make_pc_step, test_generative_pc, Activation, OptimKind, OptimState,
    RecordFlags, RngSeed, SolverConfig,
};

fn main() -> pcflow::Result<()> {
    // Observations: three noisy prototype vectors.
    let prototypes = [[0.8, -0.4, 0.3, 0.6], [-0.5, 0.7, -0.2, 0.1], [0.2, 0.2, -0.7, -0.6]];
    let y = Array2::from_shape_fn((24, 4), |(i, j)| {
        prototypes[i % 3][j] + 0.03 * ((i * 7 + j * 3) as f64).sin()
    });

    let mut network = init_network::<f64>(&[2, 16, 4], Activation::Tanh, RngSeed(3))?;
    let mut optim = OptimState::new(OptimKind::adam(5e-3), &network);
    let solver = SolverConfig::heun(0.1, 30.0);

    for step_idx in 0..200 {
        let step = make_pc_step(
            &network,
            &optim,
            &y,
            None, // unsupervised: z_0 free, randomly initialized
            &solver,
            RecordFlags::default(),
            RngSeed(1000 + step_idx),
        )?;
        network = step.network;
        optim = step.optim_state;
        if step_idx % 50 == 0 || step_idx == 199 {
            println!(
                "step {step_idx}: equilibrium energy {:.6}",
                step.energies.total()
            );
        }
    }

    let (mse, energy) =
        test_generative_pc(&network, &y, None, &solver, RngSeed(77))?;
    println!("reconstruction mse {mse:.6}, equilibrium energy {:.6}", energy.total());
    Ok(())
}
