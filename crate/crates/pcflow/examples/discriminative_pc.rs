//! Trains a small classifier with predictive coding on synthetic blobs.
//!
//! The output layer is clamped to the one-hot label, the input layer to the
//! features; the hidden activities relax to an energy minimum before each
//! weight update.

use pcflow::{
    batches, init_network, make_pc_step, synthetic_classification, test_discriminative_pc,
    Activation, BatchPlan, OptimKind, OptimState, RecordFlags, RngSeed, SolverConfig,
};

fn main() -> pcflow::Result<()> {
    let train = synthetic_classification(1024, 16, 4, RngSeed(1))?;
    let test = synthetic_classification(256, 16, 4, RngSeed(2))?;

    let mut network = init_network::<f64>(&[16, 32, 32, 4], Activation::Tanh, RngSeed(0))?;
    let mut optim = OptimState::new(OptimKind::adam(1e-2), &network);
    let solver = SolverConfig::heun(0.1, 20.0);

    let test_x = test.inputs_as::<f64>();
    for epoch in 0..5 {
        let plan = BatchPlan {
            batch_size: 64,
            seed: RngSeed(100 + epoch),
            drop_last: false,
        };
        let mut energy = 0.0;
        let mut steps = 0;
        for (x, y) in batches::<f64>(&train, &plan)? {
            let step = make_pc_step(
                &network,
                &optim,
                &y,
                Some(&x),
                &solver,
                RecordFlags::default(),
                RngSeed(0),
            )?;
            energy += step.energies.total();
            steps += 1;
            network = step.network;
            optim = step.optim_state;
        }
        let accuracy = test_discriminative_pc(&network, &test_x, test.labels())?;
        println!(
            "epoch {epoch}: mean equilibrium energy {:.5}, test accuracy {:.3}",
            energy / steps as f64,
            accuracy
        );
    }
    Ok(())
}
