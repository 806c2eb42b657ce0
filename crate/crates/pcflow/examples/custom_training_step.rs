//! The advanced API, piece by piece: initialize activities, solve the
//! inference ODE, update parameters — exactly what `make_pc_step` composes.

use ndarray::Array2;
use pcflow::{
    activity_grad, init_activities_with_ffwd, init_network, pc_energy, solve_inference,
    update_params, Activation, OptimKind, OptimState, RngSeed, SolverConfig,
};

fn main() -> pcflow::Result<()> {
    let network = init_network::<f64>(&[8, 24, 24, 3], Activation::Tanh, RngSeed(7))?;
    let optim = OptimState::new(OptimKind::adam(1e-3), &network);
    let x = Array2::from_shape_fn((32, 8), |(i, j)| ((i * 8 + j) as f64 * 0.13).sin());
    let y = Array2::from_shape_fn((32, 3), |(i, j)| if i % 3 == j { 1.0 } else { 0.0 });

    // 1. initialize activities with a feedforward pass and clamp the target
    let mut state = init_activities_with_ffwd(&network, &x)?;
    state.clamp_output(&y)?;
    println!("initial energy          {:.6}", pc_energy(&network, &state)?.total());
    println!(
        "initial gradient norm   {:.6}",
        activity_grad(&network, &state)?.max_norm()
    );

    // 2. integrate the gradient flow to the horizon
    let solver = SolverConfig::heun(0.05, 50.0).with_early_stop(1e-8);
    let (equilibrium, stats) = solve_inference(&network, &state, &solver)?;
    println!(
        "equilibrium energy      {:.6} (accepted {}, rejected {}, rhs evals {}, t = {:.2})",
        pc_energy(&network, &equilibrium)?.total(),
        stats.accepted_steps,
        stats.rejected_steps,
        stats.rhs_evaluations,
        stats.t_reached,
    );
    println!("final gradient norm     {:.3e}", stats.final_grad_norm);

    // 3. update the parameters at the activities' solution
    let (updated, _optim) = update_params(&network, &equilibrium, &optim, &y, Some(&x))?;
    let mut after = init_activities_with_ffwd(&updated, &x)?;
    after.clamp_output(&y)?;
    let (after_eq, _) = solve_inference(&updated, &after, &solver)?;
    println!(
        "energy after one update {:.6}",
        pc_energy(&updated, &after_eq)?.total()
    );
    Ok(())
}
