//! One-call training and evaluation steps composing inference and learning.
//!
//! [`make_pc_step`] is nothing more than the composition
//! `init activities -> solve_inference -> update_params`; the pieces are all
//! public for custom training loops.

use ndarray::Array2;

use crate::energy::{
    amortiser_target_state, check_mirrored, hpc_energy, param_grad, pc_energy, EnergyReport,
};
use crate::error::{Error, Result};
use crate::network::{
    forward, init_activities_random, init_activities_with_ffwd, ActivityState, Network, RngSeed,
    DEFAULT_ACTIVITY_SCALE,
};
use crate::optim::{apply_update, OptimState};
use crate::real::Real;
use crate::solver::{solve_inference_observed, SolveStats, SolverConfig};
use crate::data::argmax_rows;

/// Opt-in trajectory recording for a training step.
#[derive(Clone, Copy, Debug, Default)]
pub struct RecordFlags {
    /// Record the total energy at the initial state and after every accepted
    /// inference step.
    pub energies: bool,
    /// Record activity snapshots at the same points. Memory grows with the
    /// number of accepted steps, which is bounded by `max_steps`.
    pub activities: bool,
}

/// Everything produced by one PC training step.
#[derive(Clone, Debug)]
pub struct StepResult<F: Real> {
    pub network: Network<F>,
    pub optim_state: OptimState<F>,
    /// Activities at the end of inference.
    pub equilibrium: ActivityState<F>,
    /// Energy of the (pre-update) network at the equilibrium activities.
    pub energies: EnergyReport,
    pub stats: SolveStats,
    pub recorded_energies: Option<Vec<f64>>,
    pub recorded_activities: Option<Vec<ActivityState<F>>>,
}

/// One full PC training step: initialize activities (feedforward from `x`
/// when supervised, random when `x` is `None`), clamp the boundaries, run
/// inference to the horizon, then update parameters at the equilibrium.
///
/// `init_seed` is used only for the random initialization of the
/// unsupervised path.
pub fn make_pc_step<F: Real>(
    network: &Network<F>,
    optim_state: &OptimState<F>,
    y: &Array2<F>,
    x: Option<&Array2<F>>,
    solver: &SolverConfig,
    record: RecordFlags,
    init_seed: RngSeed,
) -> Result<StepResult<F>> {
    if let Some(x) = x {
        if x.nrows() != y.nrows() {
            return Err(Error::ShapeMismatch {
                layer: 0,
                details: format!("x has {} rows, y has {}", x.nrows(), y.nrows()),
            });
        }
    }
    let mut state = match x {
        Some(x) => init_activities_with_ffwd(network, x)?,
        None => init_activities_random(network, y.nrows(), init_seed, DEFAULT_ACTIVITY_SCALE)?,
    };
    state.clamp_output(y)?;

    let (equilibrium, stats, recorded_energies, recorded_activities) =
        solve_recorded(network, &state, solver, record)?;
    let energies = pc_energy(network, &equilibrium)?;
    let (network, optim_state) = update_params(network, &equilibrium, optim_state, y, x)?;
    Ok(StepResult {
        network,
        optim_state,
        equilibrium,
        energies,
        stats,
        recorded_energies,
        recorded_activities,
    })
}

type Recorded<F> = (
    ActivityState<F>,
    SolveStats,
    Option<Vec<f64>>,
    Option<Vec<ActivityState<F>>>,
);

fn solve_recorded<F: Real>(
    network: &Network<F>,
    state: &ActivityState<F>,
    solver: &SolverConfig,
    record: RecordFlags,
) -> Result<Recorded<F>> {
    let mut energies = record.energies.then(Vec::new);
    let mut snapshots = record.activities.then(Vec::new);
    if let Some(es) = energies.as_mut() {
        es.push(pc_energy(network, state)?.total());
    }
    if let Some(snaps) = snapshots.as_mut() {
        snaps.push(state.clone());
    }
    let (equilibrium, stats) = solve_inference_observed(network, state, solver, |s, _t| {
        if let Some(es) = energies.as_mut() {
            if let Ok(report) = pc_energy(network, s) {
                es.push(report.total());
            }
        }
        if let Some(snaps) = snapshots.as_mut() {
            snaps.push(s.clone());
        }
    })?;
    Ok((equilibrium, stats, energies, snapshots))
}

/// Result of one hybrid PC training step.
#[derive(Clone, Debug)]
pub struct HpcStepResult<F: Real> {
    pub generator: Network<F>,
    pub amortiser: Network<F>,
    pub generator_optim: OptimState<F>,
    pub amortiser_optim: OptimState<F>,
    pub equilibrium: ActivityState<F>,
    pub generator_energies: EnergyReport,
    pub amortiser_energies: EnergyReport,
    pub stats: SolveStats,
    pub recorded_energies: Option<Vec<f64>>,
}

/// One hybrid PC step: the amortiser's feedforward pass (from `y`)
/// initializes the generator's activities, the generator relaxes to
/// equilibrium, then both models are updated — the generator from its own
/// equilibrium state, the amortiser against the generator's equilibrated
/// activities in reverse order.
pub fn make_hpc_step<F: Real>(
    generator: &Network<F>,
    amortiser: &Network<F>,
    generator_optim: &OptimState<F>,
    amortiser_optim: &OptimState<F>,
    y: &Array2<F>,
    x: Option<&Array2<F>>,
    solver: &SolverConfig,
    record: RecordFlags,
) -> Result<HpcStepResult<F>> {
    check_mirrored(generator, amortiser)?;
    let amortised = init_activities_with_ffwd(amortiser, y)?;

    // Generator activities: z_ℓ starts at the amortiser's level L-ℓ.
    let levels = generator.num_layers() + 1;
    let mut activities: Vec<Array2<F>> = (0..levels)
        .map(|l| amortised.activity(levels - 1 - l).clone())
        .collect();
    if let Some(x) = x {
        if x.nrows() != y.nrows() {
            return Err(Error::ShapeMismatch {
                layer: 0,
                details: format!("x has {} rows, y has {}", x.nrows(), y.nrows()),
            });
        }
        activities[0] = x.clone();
    }
    let mut state = ActivityState::new(activities, x.is_some(), false)?;
    state.clamp_output(y)?;

    let (equilibrium, stats, recorded_energies, _) = solve_recorded(
        generator,
        &state,
        solver,
        RecordFlags {
            activities: false,
            ..record
        },
    )?;

    let (generator_energies, amortiser_energies) =
        hpc_energy(generator, amortiser, &equilibrium, y, x)?;

    let gen_grads = param_grad(generator, &equilibrium)?;
    let (generator, generator_optim) = apply_update(generator, &gen_grads, generator_optim)?;

    let amortiser_state = amortiser_target_state(&equilibrium, y, x)?;
    let am_grads = param_grad(amortiser, &amortiser_state)?;
    let (amortiser, amortiser_optim) = apply_update(amortiser, &am_grads, amortiser_optim)?;

    Ok(HpcStepResult {
        generator,
        amortiser,
        generator_optim,
        amortiser_optim,
        equilibrium,
        generator_energies,
        amortiser_energies,
        stats,
        recorded_energies,
    })
}

/// Classification accuracy of the feedforward pass against integer labels.
/// Argmax ties break toward the lowest class index.
pub fn test_discriminative_pc<F: Real>(
    network: &Network<F>,
    x: &Array2<F>,
    labels: &[usize],
) -> Result<f64> {
    if labels.len() != x.nrows() {
        return Err(Error::InvalidArgument(format!(
            "{} labels for {} inputs",
            labels.len(),
            x.nrows()
        )));
    }
    if labels.is_empty() {
        return Err(Error::InvalidArgument("no samples to evaluate".into()));
    }
    let out = forward(network, x)?;
    let predictions = argmax_rows(&out);
    let correct = predictions
        .iter()
        .zip(labels)
        .filter(|(p, l)| p == l)
        .count();
    Ok(correct as f64 / labels.len() as f64)
}

/// Generative evaluation: clamps `y`, runs inference (input free when `x` is
/// `None`), and reports the mean squared error of the top-layer prediction
/// `f_L(z_{L-1} W_L^T + b_L)` against `y` plus the equilibrium energy.
///
/// The mean is taken over all `N × d_y` entries.
pub fn test_generative_pc<F: Real>(
    network: &Network<F>,
    y: &Array2<F>,
    x: Option<&Array2<F>>,
    solver: &SolverConfig,
    init_seed: RngSeed,
) -> Result<(f64, EnergyReport)> {
    let mut state = match x {
        Some(x) => init_activities_with_ffwd(network, x)?,
        None => init_activities_random(network, y.nrows(), init_seed, DEFAULT_ACTIVITY_SCALE)?,
    };
    state.clamp_output(y)?;
    let (equilibrium, _stats) =
        crate::solver::solve_inference(network, &state, solver)?;
    let last = network.layer(network.num_layers() - 1);
    let prediction = last.forward(equilibrium.activity(network.num_layers() - 1));
    let diff = &prediction - y;
    let mse = diff.iter().map(|&d| (d * d).to_f64()).sum::<f64>() / diff.len() as f64;
    let report = pc_energy(network, &equilibrium)?;
    Ok((mse, report))
}

/// Parameter gradients at the supplied activities (with `y`/`x` written back
/// into the boundary levels), followed by one optimizer update. Exposed
/// separately for custom training loops.
pub fn update_params<F: Real>(
    network: &Network<F>,
    equilibrated: &ActivityState<F>,
    optim_state: &OptimState<F>,
    y: &Array2<F>,
    x: Option<&Array2<F>>,
) -> Result<(Network<F>, OptimState<F>)> {
    let mut state = equilibrated.clone();
    state.clamp_output(y)?;
    if let Some(x) = x {
        state.clamp_input(x)?;
    }
    let grads = param_grad(network, &state)?;
    apply_update(network, &grads, optim_state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{init_network, Activation, Layer, RngSeed};
    use crate::optim::OptimKind;
    use crate::solver::{solve_inference, SolverConfig};
    use ndarray::{array, Array1};

    fn scalar_chain(weights: &[f64]) -> Network<f64> {
        let layers = weights
            .iter()
            .map(|&w| Layer::new(array![[w]], Array1::zeros(1), Activation::Identity).unwrap())
            .collect();
        Network::from_layers(1, layers).unwrap()
    }

    fn seed() -> RngSeed {
        RngSeed(0)
    }

    #[test]
    fn matching_target_leaves_network_unchanged() {
        let net = init_network::<f64>(&[3, 5, 2], Activation::Tanh, RngSeed(1)).unwrap();
        let optim = OptimState::new(OptimKind::sgd(0.1), &net);
        let x = Array2::from_shape_simple_fn((4, 3), || 0.3);
        let y = forward(&net, &x).unwrap();
        let result = make_pc_step(
            &net,
            &optim,
            &y,
            Some(&x),
            &SolverConfig::heun(0.1, 5.0),
            RecordFlags::default(),
            seed(),
        )
        .unwrap();
        assert_eq!(result.network, net);
        assert_eq!(result.energies.total(), 0.0);
    }

    #[test]
    fn scalar_chain_step_matches_hand_computation() {
        // W1=2, W2=3, x=1, y=10. The equilibrium of
        // F(z1) = ½[(z1-2)² + (10-3z1)²] is z1* = 3.2, where
        // ε1 = 1.2, ε2 = 0.4, so dF/dW1 = -1.2, dF/dW2 = -1.28,
        // dF/db1 = -1.2, dF/db2 = -0.4.
        let net = scalar_chain(&[2.0, 3.0]);
        let optim = OptimState::new(OptimKind::sgd(0.1), &net);
        let result = make_pc_step(
            &net,
            &optim,
            &array![[10.0]],
            Some(&array![[1.0]]),
            &SolverConfig::euler(0.02, 60.0).with_early_stop(1e-12),
            RecordFlags::default(),
            seed(),
        )
        .unwrap();
        let z1 = result.equilibrium.activity(1)[[0, 0]];
        assert!((z1 - 3.2).abs() < 1e-9, "equilibrium {z1}");
        let w1 = result.network.layer(0).weight()[[0, 0]];
        let w2 = result.network.layer(1).weight()[[0, 0]];
        let b1 = result.network.layer(0).bias()[0];
        let b2 = result.network.layer(1).bias()[0];
        assert!((w1 - (2.0 + 0.1 * 1.2)).abs() < 1e-8);
        assert!((w2 - (3.0 + 0.1 * 1.28)).abs() < 1e-8);
        assert!((b1 - 0.1 * 1.2).abs() < 1e-8);
        assert!((b2 - 0.1 * 0.4).abs() < 1e-8);
    }

    #[test]
    fn repeated_steps_decrease_equilibrium_energy() {
        let mut net = init_network::<f64>(&[4, 6, 3], Activation::Tanh, RngSeed(3)).unwrap();
        let mut optim = OptimState::new(OptimKind::adam(5e-3), &net);
        let x = array![[0.9, -0.3, 0.5, 0.1]];
        let y = Array2::from_shape_simple_fn((1, 3), || 0.8);
        let solver = SolverConfig::heun(0.1, 20.0);
        let mut energies = Vec::new();
        for _ in 0..10 {
            let result =
                make_pc_step(&net, &optim, &y, Some(&x), &solver, RecordFlags::default(), seed())
                    .unwrap();
            energies.push(result.energies.total());
            net = result.network;
            optim = result.optim_state;
        }
        for pair in energies.windows(2) {
            assert!(pair[1] < pair[0], "energies not decreasing: {energies:?}");
        }
    }

    #[test]
    fn step_is_exactly_the_advanced_api_composition() {
        let net = init_network::<f64>(&[3, 4, 4, 2], Activation::Tanh, RngSeed(4)).unwrap();
        let optim = OptimState::new(OptimKind::adam(1e-3), &net);
        let x = Array2::from_shape_simple_fn((5, 3), || -0.1);
        let y = Array2::from_shape_simple_fn((5, 2), || 0.4);
        let solver = SolverConfig::heun(0.05, 10.0);

        let composed = {
            let mut state = init_activities_with_ffwd(&net, &x).unwrap();
            state.clamp_output(&y).unwrap();
            let (eq, _) = solve_inference(&net, &state, &solver).unwrap();
            update_params(&net, &eq, &optim, &y, Some(&x)).unwrap()
        };
        let step = make_pc_step(
            &net,
            &optim,
            &y,
            Some(&x),
            &solver,
            RecordFlags::default(),
            seed(),
        )
        .unwrap();
        // Bitwise equality: the basic API adds nothing beyond composition.
        assert_eq!(step.network, composed.0);
        assert_eq!(step.optim_state.step_count(), composed.1.step_count());
    }

    #[test]
    fn unsupervised_step_is_deterministic_per_seed() {
        let net = init_network::<f64>(&[3, 4, 2], Activation::Tanh, RngSeed(5)).unwrap();
        let optim = OptimState::new(OptimKind::sgd(1e-2), &net);
        let y = Array2::from_shape_simple_fn((2, 2), || 0.3);
        let solver = SolverConfig::euler(0.1, 5.0);
        let a = make_pc_step(&net, &optim, &y, None, &solver, RecordFlags::default(), RngSeed(7))
            .unwrap();
        let b = make_pc_step(&net, &optim, &y, None, &solver, RecordFlags::default(), RngSeed(7))
            .unwrap();
        let c = make_pc_step(&net, &optim, &y, None, &solver, RecordFlags::default(), RngSeed(8))
            .unwrap();
        assert_eq!(a.network, b.network);
        assert_ne!(a.equilibrium, c.equilibrium);
        assert!(!a.equilibrium.clamped_input());
    }

    #[test]
    fn recorded_energies_monotone_for_stable_euler() {
        let net = init_network::<f64>(&[3, 5, 2], Activation::Tanh, RngSeed(6)).unwrap();
        let optim = OptimState::new(OptimKind::sgd(1e-3), &net);
        let x = Array2::from_shape_simple_fn((3, 3), || 0.5);
        let y = Array2::from_shape_simple_fn((3, 2), || -0.2);
        let result = make_pc_step(
            &net,
            &optim,
            &y,
            Some(&x),
            &SolverConfig::euler(0.05, 5.0),
            RecordFlags {
                energies: true,
                activities: true,
            },
            seed(),
        )
        .unwrap();
        let energies = result.recorded_energies.unwrap();
        let snaps = result.recorded_activities.unwrap();
        assert_eq!(energies.len(), 101); // initial + 100 accepted steps
        assert_eq!(snaps.len(), energies.len());
        for pair in energies.windows(2) {
            assert!(pair[1] <= pair[0] + 1e-12);
        }
    }

    #[test]
    fn hpc_step_matches_pc_step_when_amortiser_reproduces_ffwd_init() {
        // Generator 1 -> 1 -> 1 with weights (1, 2); x = 1 gives the
        // feedforward activities (1, 1, 2). The amortiser (0.5, 1) maps
        // y = 2 back through 1 to 1, exactly the feedforward init, so the
        // generator sees the identical inference problem.
        let generator = scalar_chain(&[1.0, 2.0]);
        let amortiser = scalar_chain(&[0.5, 1.0]);
        let gen_optim = OptimState::new(OptimKind::sgd(0.1), &generator);
        let am_optim = OptimState::new(OptimKind::sgd(0.1), &amortiser);
        let x = array![[1.0]];
        let y = array![[2.0]];
        let solver = SolverConfig::euler(0.05, 10.0);

        let hpc = make_hpc_step(
            &generator,
            &amortiser,
            &gen_optim,
            &am_optim,
            &y,
            Some(&x),
            &solver,
            RecordFlags::default(),
        )
        .unwrap();
        let pc = make_pc_step(
            &generator,
            &gen_optim,
            &y,
            Some(&x),
            &solver,
            RecordFlags::default(),
            seed(),
        )
        .unwrap();
        assert_eq!(hpc.generator, pc.network);
        // The amortiser already produces the generator's activities exactly,
        // so its gradients vanish and it stays unchanged.
        assert_eq!(hpc.amortiser, amortiser);
        assert_eq!(hpc.amortiser_energies.total(), 0.0);
    }

    #[test]
    fn hpc_joint_training_reduces_both_energies() {
        let generator = init_network::<f64>(&[2, 4, 3], Activation::Tanh, RngSeed(10)).unwrap();
        let amortiser = init_network::<f64>(&[3, 4, 2], Activation::Tanh, RngSeed(11)).unwrap();
        let mut gen = generator.clone();
        let mut am = amortiser.clone();
        let mut gen_optim = OptimState::new(OptimKind::adam(1e-2), &gen);
        let mut am_optim = OptimState::new(OptimKind::adam(1e-2), &am);
        let targets = [0.6, -0.4, 0.2];
        let y = Array2::from_shape_fn((8, 3), |(_, j)| targets[j]);
        let solver = SolverConfig::heun(0.1, 10.0);
        let mut first = None;
        let mut last = None;
        for _ in 0..50 {
            let step = make_hpc_step(
                &gen,
                &am,
                &gen_optim,
                &am_optim,
                &y,
                None,
                &solver,
                RecordFlags::default(),
            )
            .unwrap();
            let pair = (
                step.generator_energies.total(),
                step.amortiser_energies.total(),
            );
            if first.is_none() {
                first = Some(pair);
            }
            last = Some(pair);
            gen = step.generator;
            am = step.amortiser;
            gen_optim = step.generator_optim;
            am_optim = step.amortiser_optim;
        }
        let (g0, a0) = first.unwrap();
        let (g1, a1) = last.unwrap();
        assert!(g1 < g0, "generator energy {g0} -> {g1}");
        assert!(a1 < a0, "amortiser energy {a0} -> {a1}");
    }

    #[test]
    fn accuracy_on_exact_one_hot_outputs() {
        // Identity net mapping inputs straight through: feeding one-hot rows
        // yields exact one-hot outputs.
        let eye = Array2::from_shape_fn((4, 4), |(i, j)| if i == j { 1.0 } else { 0.0 });
        let net = Network::from_layers(
            4,
            vec![Layer::new(eye.clone(), Array1::zeros(4), Activation::Identity).unwrap()],
        )
        .unwrap();
        let labels = vec![2usize, 0, 3, 1];
        let x = Array2::from_shape_fn((4, 4), |(i, j)| if labels[i] == j { 1.0 } else { 0.0 });
        assert_eq!(test_discriminative_pc(&net, &x, &labels).unwrap(), 1.0);
    }

    #[test]
    fn accuracy_matches_hand_rolled_loop() {
        let net = init_network::<f64>(&[5, 8, 10], Activation::Tanh, RngSeed(12)).unwrap();
        let x = init_activities_random(&net, 100, RngSeed(13), 1.0)
            .unwrap()
            .activity(0)
            .clone();
        let labels: Vec<usize> = (0..100).map(|i| (i * 7) % 10).collect();
        let out = forward(&net, &x).unwrap();
        let mut correct = 0usize;
        for (i, label) in labels.iter().enumerate() {
            let mut best = 0usize;
            for j in 1..10 {
                if out[[i, j]] > out[[i, best]] {
                    best = j;
                }
            }
            if best == *label {
                correct += 1;
            }
        }
        let expected = correct as f64 / 100.0;
        assert_eq!(test_discriminative_pc(&net, &x, &labels).unwrap(), expected);
        // Untrained network against arbitrary labels stays near chance.
        assert!(expected < 0.3);
    }

    #[test]
    fn generative_eval_perfect_reconstruction() {
        let net = init_network::<f64>(&[3, 5, 2], Activation::Tanh, RngSeed(14)).unwrap();
        let x = Array2::from_shape_simple_fn((4, 3), || 0.2);
        let y = forward(&net, &x).unwrap();
        let (mse, report) =
            test_generative_pc(&net, &y, Some(&x), &SolverConfig::heun(0.1, 5.0), seed()).unwrap();
        assert_eq!(mse, 0.0);
        assert_eq!(report.total(), 0.0);
    }

    #[test]
    fn generative_eval_mse_nonnegative() {
        let net = init_network::<f64>(&[3, 5, 2], Activation::Tanh, RngSeed(15)).unwrap();
        let y = Array2::from_shape_simple_fn((4, 2), || 0.9);
        let (mse, _) =
            test_generative_pc(&net, &y, None, &SolverConfig::heun(0.1, 10.0), seed()).unwrap();
        assert!(mse >= 0.0);
    }
}
