//! Acceptance suite: one test per release criterion, each printing a
//! PASS/FAIL line (visible with `--nocapture`) and asserting its runtime
//! budget.
//!
//! The protocol-level criteria (4-7) run on real MNIST IDX files when
//! `PCFLOW_DATA_DIR` points at them, and on the built-in synthetic
//! image-classification substitute otherwise, through identical code paths.

mod common;

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use common::*;
use pcflow::bench::{self, csv::parse_csv, DatasetKind, RunConfig};
use pcflow::{
    activity_grad, heun_step, init_activities_random, init_activities_with_ffwd, init_network,
    linear_equilibrium_energy, param_grad, parse_idx_images, pc_energy, solve_inference,
    update_params, Activation, ActivityState, Network, OptimKind, OptimState, RngSeed,
    SolverConfig,
};

fn pass(criterion: usize, name: &str, started: Instant, budget_s: f64) {
    let elapsed = started.elapsed().as_secs_f64();
    println!("acceptance {criterion} ({name}): PASS in {elapsed:.1}s (budget {budget_s}s)");
    assert!(
        elapsed < budget_s,
        "criterion {criterion} exceeded its {budget_s}s budget: {elapsed:.1}s"
    );
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pcflow"))
}

fn run_config_for_protocols() -> RunConfig {
    match mnist_dir() {
        Some(dir) => RunConfig {
            dataset: DatasetKind::Mnist,
            data_dir: Some(dir),
            ..RunConfig::default()
        },
        None => RunConfig {
            dataset: DatasetKind::Synthetic,
            ..RunConfig::default()
        },
    }
}

/// Criterion 1: activity and parameter gradients match central finite
/// differences of the energy on 50 random networks covering every activation
/// kind, depth ≤ 4, widths ≤ 8, batch ≤ 4.
#[test]
fn c1_gradient_correctness() {
    let started = Instant::now();
    let mut rng = TestRng(0x9E3779B97F4A7C15);
    let h = 1e-6;
    let (rtol, atol) = (1e-5, 1e-8);
    let mut checked = 0usize;
    for case in 0..50 {
        let network = random_small_network(&mut rng, case);
        let state = random_state(&network, &mut rng, case);

        let analytic = activity_grad(&network, &state).unwrap();
        let reference = fd_activity_grad(&network, &state, h);
        for level in 0..state.num_levels() {
            for (a, r) in analytic.grad(level).iter().zip(reference[level].iter()) {
                assert!(
                    gradients_match(*a, *r, rtol, atol),
                    "case {case}: activity grad {a} vs fd {r} at level {level}"
                );
                checked += 1;
            }
        }

        let analytic = param_grad(&network, &state).unwrap();
        let reference = fd_param_grad(&network, &state, h);
        for l in 0..network.num_layers() {
            for (a, r) in analytic.layer(l).weight.iter().zip(reference[l].0.iter()) {
                assert!(
                    gradients_match(*a, *r, rtol, atol),
                    "case {case}: weight grad {a} vs fd {r} at layer {l}"
                );
                checked += 1;
            }
            for (a, r) in analytic.layer(l).bias.iter().zip(reference[l].1.iter()) {
                assert!(
                    gradients_match(*a, *r, rtol, atol),
                    "case {case}: bias grad {a} vs fd {r} at layer {l}"
                );
                checked += 1;
            }
        }
    }
    assert!(checked > 2000, "too few gradient entries exercised: {checked}");
    pass(1, "gradient correctness", started, 10.0);
}

/// Criterion 2: halving dt scales the terminal error by ~2 for Euler and ~4
/// for Heun on a fixed random quadratic activity energy.
#[test]
fn c2_solver_order() {
    let started = Instant::now();
    let mut rng = TestRng(42);
    let network: Network<f64> =
        init_network(&[3, 4, 4, 3], Activation::Identity, RngSeed(7)).unwrap();
    let batch = 2;
    let mut state = init_activities_random(&network, batch, RngSeed(8), 1.0).unwrap();
    state.clamp_input(&rng.matrix(batch, 3)).unwrap();
    state.clamp_output(&rng.matrix(batch, 3)).unwrap();
    let t_end = 1.0;

    let heun_fixed = |dt: f64| -> ActivityState<f64> {
        let steps = (t_end / dt).round() as usize;
        let mut z = state.clone();
        for _ in 0..steps {
            let (next, _err) =
                heun_step(&z, |s| activity_grad(&network, s), dt).unwrap();
            z = next;
        }
        z
    };
    let euler_terminal = |dt: f64| -> ActivityState<f64> {
        let config = SolverConfig::euler(dt, t_end);
        solve_inference(&network, &state, &config).unwrap().0
    };
    let reference = heun_fixed(1.0 / 2048.0);
    let error_of = |z: &ActivityState<f64>| -> f64 {
        let mut acc = 0.0;
        for level in 0..z.num_levels() {
            if z.is_clamped(level) {
                continue;
            }
            acc += (z.activity(level) - reference.activity(level))
                .iter()
                .map(|d| d * d)
                .sum::<f64>();
        }
        acc.sqrt()
    };

    let euler_ratio = error_of(&euler_terminal(1.0 / 8.0)) / error_of(&euler_terminal(1.0 / 16.0));
    assert!(
        (1.8..=2.2).contains(&euler_ratio),
        "Euler self-convergence ratio {euler_ratio} outside [1.8, 2.2]"
    );
    let heun_ratio = error_of(&heun_fixed(1.0 / 8.0)) / error_of(&heun_fixed(1.0 / 16.0));
    assert!(
        (3.5..=4.5).contains(&heun_ratio),
        "Heun self-convergence ratio {heun_ratio} outside [3.5, 4.5]"
    );
    pass(2, "solver order", started, 5.0);
}

/// Criterion 3: the closed-form equilibrium energy of deep linear networks
/// matches the numerically equilibrated energy to 0.1% at desk scale.
#[test]
fn c3_linear_closed_form_equivalence() {
    let started = Instant::now();
    for (case, hidden) in [3usize, 10].into_iter().enumerate() {
        let mut dims = vec![32];
        dims.extend(std::iter::repeat_n(32, hidden));
        dims.push(10);
        let network: Network<f64> =
            init_network(&dims, Activation::Identity, RngSeed(100 + case as u64)).unwrap();
        let mut rng = TestRng(900 + case as u64);
        let x = rng.matrix(64, 32);
        let y = rng.matrix(64, 10);

        let theoretical = linear_equilibrium_energy(&network, &x, &y).unwrap();
        let mut state = init_activities_with_ffwd(&network, &x).unwrap();
        state.clamp_output(&y).unwrap();
        let config = SolverConfig::euler(0.05, 2000.0).with_early_stop(1e-10);
        let (equilibrium, stats) = solve_inference(&network, &state, &config).unwrap();
        let numerical = pc_energy(&network, &equilibrium).unwrap().total();

        let rel = (numerical - theoretical).abs() / theoretical.abs();
        assert!(
            rel < 1e-3,
            "H={hidden}: closed form {theoretical} vs numerical {numerical} (rel {rel:.2e}, \
             stopped at t={} with grad norm {:.2e})",
            stats.t_reached,
            stats.final_grad_norm
        );
    }
    pass(3, "closed-form equivalence", started, 60.0);
}

/// Criterion 4: the theory protocol (one epoch per horizon on an H=10 linear
/// network) yields a monotonically non-increasing theory-numerics gap and a
/// positive rank correlation between horizon and final test accuracy.
#[test]
fn c4_theory_protocol() {
    let started = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("theory.csv");
    let mut cmd = bin();
    cmd.arg("theory")
        .args(dataset_args())
        .args(["--hidden-layers", "10", "--width", "32", "--dt", "0.2"])
        .args(["--t-grid", "5,10,20,50,100,200"])
        .args(["--train-size", "5000", "--test-size", "1000", "--seed", "0"])
        .arg("--out")
        .arg(&out);
    let status = cmd.status().expect("launch pcflow theory");
    assert!(status.success(), "pcflow theory failed");

    let parsed = parse_csv(&out).unwrap();
    assert_eq!(parsed.mode, "theory");
    let horizons = [5.0, 10.0, 20.0, 50.0, 100.0, 200.0];
    let mut mean_gaps = Vec::new();
    let mut final_accuracies = Vec::new();
    for &t in &horizons {
        let mut gaps = Vec::new();
        let mut accuracy = None;
        for row in 0..parsed.rows.len() {
            if parsed.cell_f64(row, "t_max") == Some(t) {
                let gap = parsed.cell_f64(row, "gap").unwrap();
                assert!(gap >= -1e-9, "negative gap {gap} at t_max {t}");
                gaps.push(gap);
                accuracy = parsed.cell_f64(row, "test_acc");
            }
        }
        assert!(!gaps.is_empty(), "no rows for t_max {t}");
        mean_gaps.push(gaps.iter().sum::<f64>() / gaps.len() as f64);
        final_accuracies.push(accuracy.expect("accuracy column"));
    }
    for pair in mean_gaps.windows(2) {
        assert!(
            pair[1] <= pair[0] * (1.0 + 1e-9) + 1e-15,
            "mean gap increased along the horizon grid: {mean_gaps:?}"
        );
    }
    let rho = spearman(&horizons, &final_accuracies);
    assert!(
        rho > 0.0,
        "Spearman(T, accuracy) = {rho} with accuracies {final_accuracies:?}"
    );
    println!("  mean gaps {mean_gaps:?}");
    println!("  final accuracies {final_accuracies:?} (rho {rho:.3})");
    pass(4, "theory protocol", started, 900.0);
}

/// Criterion 5: on a Tanh H=10 width-64 network, Heun+PID matches the Euler
/// reference's per-step equilibrium energy within 1% while spending strictly
/// fewer rhs evaluations on at least 80% of training steps.
#[test]
fn c5_heun_efficiency() {
    let started = Instant::now();
    let cfg = RunConfig {
        hidden_layers: 10,
        width: 64,
        activation: Activation::Tanh,
        train_size: 5000,
        test_size: 1000,
        batch_size: 64,
        seed: 0,
        ..run_config_for_protocols()
    };
    let (train, _test) = bench::load_dataset(&cfg).unwrap();
    let dims = cfg.network_dims(train.input_dim(), train.num_classes());
    let mut network: Network<f64> = init_network(&dims, Activation::Tanh, RngSeed(1)).unwrap();
    let mut optim = OptimState::new(OptimKind::adam(1e-3), &network);

    let euler_cfg = SolverConfig::euler(0.05, 20.0);
    let heun_cfg = SolverConfig::heun(0.05, 20.0);
    let plan = pcflow::BatchPlan {
        batch_size: cfg.batch_size,
        seed: RngSeed(2),
        drop_last: false,
    };

    let mut steps = 0usize;
    let mut heun_fewer = 0usize;
    let mut worst_rel = 0.0f64;
    let mut euler_wall = 0.0;
    let mut heun_wall = 0.0;
    let mut euler_evals = 0usize;
    let mut heun_evals = 0usize;
    for (x, y) in pcflow::batches::<f64>(&train, &plan).unwrap() {
        let mut state = init_activities_with_ffwd(&network, &x).unwrap();
        state.clamp_output(&y).unwrap();

        let t0 = Instant::now();
        let (eq_euler, stats_euler) = solve_inference(&network, &state, &euler_cfg).unwrap();
        euler_wall += t0.elapsed().as_secs_f64();
        let t0 = Instant::now();
        let (eq_heun, stats_heun) = solve_inference(&network, &state, &heun_cfg).unwrap();
        heun_wall += t0.elapsed().as_secs_f64();

        let e_euler = pc_energy(&network, &eq_euler).unwrap().total();
        let e_heun = pc_energy(&network, &eq_heun).unwrap().total();
        let rel = (e_heun - e_euler).abs() / e_euler;
        worst_rel = worst_rel.max(rel);
        assert!(
            rel <= 0.01,
            "step {steps}: Heun energy {e_heun} vs Euler {e_euler} (rel {rel:.3e})"
        );
        if stats_heun.rhs_evaluations < stats_euler.rhs_evaluations {
            heun_fewer += 1;
        }
        euler_evals += stats_euler.rhs_evaluations;
        heun_evals += stats_heun.rhs_evaluations;

        let (next, next_optim) =
            update_params(&network, &eq_heun, &optim, &y, Some(&x)).unwrap();
        network = next;
        optim = next_optim;
        steps += 1;
    }
    let share = heun_fewer as f64 / steps as f64;
    println!(
        "  {steps} steps: Heun fewer evals on {share:.0}% (total {heun_evals} vs {euler_evals}), \
         worst energy mismatch {worst_rel:.2e}, wall {heun_wall:.1}s vs {euler_wall:.1}s"
    );
    assert!(
        share >= 0.8,
        "Heun used fewer rhs evaluations on only {share:.2} of steps"
    );
    pass(5, "heun efficiency", started, 600.0);
}

/// Criterion 6: with the best dt per solver from a mini-sweep, Euler and
/// Heun reach final test accuracies within 3 percentage points (mean over 3
/// seeds).
#[test]
fn c6_solver_accuracy_parity() {
    let started = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("grid.csv");
    let mut cmd = bin();
    cmd.arg("sweep")
        .args(dataset_args())
        .args(["--depths", "10", "--width", "64", "--activation", "tanh"])
        .args(["--dt-grid", "0.5,0.1", "--t-grid", "20", "--seeds", "0,1,2"])
        .args(["--solvers", "euler,heun"])
        .args(["--train-size", "5000", "--test-size", "1000"])
        .args(["--batch-size", "64", "--lr", "1e-3"])
        .arg("--out")
        .arg(&out);
    let status = cmd.status().expect("launch pcflow sweep");
    assert!(status.success(), "pcflow sweep failed");

    let selection = parse_csv(&out.with_extension("selection.csv")).unwrap();
    let mut accuracy = [f64::NAN; 2];
    for row in 0..selection.rows.len() {
        let solver = selection.cell(row, "solver").unwrap();
        let mean = selection.cell_f64(row, "mean_acc").unwrap();
        let dt = selection.cell_f64(row, "dt").unwrap();
        println!("  best {solver}: dt={dt}, mean accuracy {mean:.4}");
        match solver {
            "euler" => accuracy[0] = mean,
            "heun" => accuracy[1] = mean,
            other => panic!("unexpected solver {other}"),
        }
    }
    assert!(accuracy.iter().all(|a| a.is_finite()), "missing selections");
    let diff = (accuracy[0] - accuracy[1]).abs();
    assert!(
        diff < 0.03,
        "best-dt accuracies differ by {diff:.4} (euler {} vs heun {})",
        accuracy[0],
        accuracy[1]
    );
    pass(6, "solver accuracy parity", started, 1200.0);
}

/// Criterion 7: the H=3 width-64 Tanh run (Adam 1e-3, batch 64, one epoch,
/// Heun defaults) reaches at least 75% test accuracy.
#[test]
fn c7_training_sanity() {
    let started = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run.csv");
    let mut cmd = bin();
    cmd.arg("run")
        .args(dataset_args())
        .args(["--hidden-layers", "3", "--width", "64", "--activation", "tanh"])
        .args(["--solver", "heun", "--dt", "0.05", "--t-max", "20"])
        .args(["--lr", "1e-3", "--batch-size", "64", "--epochs", "1", "--seed", "0"])
        .args(["--train-size", "5000", "--test-size", "1000"])
        .arg("--out")
        .arg(&out);
    let status = cmd.status().expect("launch pcflow run");
    assert!(status.success(), "pcflow run failed");

    let parsed = parse_csv(&out).unwrap();
    let mut last_accuracy = None;
    for row in 0..parsed.rows.len() {
        if let Some(acc) = parsed.cell_f64(row, "test_acc") {
            last_accuracy = Some(acc);
        }
    }
    let accuracy = last_accuracy.expect("no accuracy rows in run CSV");
    println!("  final test accuracy {accuracy:.4}");
    assert!(accuracy >= 0.75, "accuracy {accuracy} below the 0.75 bound");
    pass(7, "training sanity", started, 300.0);
}

/// Criterion 8: identical flags and seed produce byte-identical CSVs aside
/// from the wall-clock column.
#[test]
fn c8_run_determinism() {
    let started = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &Path| {
        let mut cmd = bin();
        cmd.arg("run")
            .args([
                "--dataset",
                "synthetic",
                "--hidden-layers",
                "2",
                "--width",
                "16",
                "--train-size",
                "256",
                "--test-size",
                "128",
                "--batch-size",
                "64",
                "--eval-every",
                "2",
                "--seed",
                "11",
            ])
            .arg("--out")
            .arg(out);
        cmd
    };
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    assert!(args(&a).status().unwrap().success());
    assert!(args(&b).status().unwrap().success());

    let mask_wall = |path: &Path| -> String {
        let text = std::fs::read_to_string(path).unwrap();
        text.lines()
            .map(|line| {
                if line.starts_with('#') || line.starts_with("step,") {
                    line.to_string()
                } else {
                    let mut cells: Vec<&str> = line.split(',').collect();
                    if cells.len() > 1 {
                        cells[1] = "WALL";
                    }
                    cells.join(",")
                }
            })
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(mask_wall(&a), mask_wall(&b), "CSVs differ beyond wall_ms");
    pass(8, "run determinism", started, 120.0);
}

/// Criterion 9: corrupt IDX inputs (truncations, header bit flips, garbage,
/// absurd counts) always yield typed errors, never panics or misparses.
#[test]
fn c9_idx_robustness() {
    let started = Instant::now();

    // A valid base pair: 8 images of 4×3 pixels.
    let mut images: Vec<u8> = Vec::new();
    images.extend(0x0000_0803u32.to_be_bytes());
    images.extend(8u32.to_be_bytes());
    images.extend(4u32.to_be_bytes());
    images.extend(3u32.to_be_bytes());
    images.extend((0..8 * 12).map(|i| (i * 7 % 256) as u8));
    let mut labels: Vec<u8> = Vec::new();
    labels.extend(0x0000_0801u32.to_be_bytes());
    labels.extend(8u32.to_be_bytes());
    labels.extend((0..8u8).map(|i| i % 3));
    assert!(parse_idx_images(&images, "base").is_ok());

    let mut rng = TestRng(0xFEED);
    let mut cases = 0usize;
    while cases < 1000 {
        let kind = cases % 4;
        let corrupt_images = rng.below(2) == 0;
        let (base, header_len) = if corrupt_images {
            (&images, 16)
        } else {
            (&labels, 8)
        };
        let mutated: Vec<u8> = match kind {
            // Truncate anywhere strictly inside the file.
            0 => {
                let cut = rng.below(base.len().max(1));
                base[..cut].to_vec()
            }
            // Flip one bit somewhere in the header.
            1 => {
                let mut m = base.clone();
                let byte = rng.below(header_len);
                m[byte] ^= 1 << rng.below(8);
                m
            }
            // Random garbage of random small length.
            2 => (0..rng.below(64)).map(|_| (rng.next_u64() & 0xFF) as u8).collect(),
            // Absurd counts that would overflow or exceed the payload.
            _ => {
                let mut m = base.clone();
                let huge = [(cases as u32).wrapping_mul(2654435761).max(9), u32::MAX][rng.below(2)];
                m[4..8].copy_from_slice(&huge.to_be_bytes());
                m
            }
        };
        if mutated == *base {
            continue;
        }
        let outcome = if corrupt_images {
            parse_idx_images(&mutated, "fuzz").map(|_| ())
        } else {
            pcflow::parse_idx_labels(&mutated, "fuzz").map(|_| ())
        };
        assert!(
            outcome.is_err(),
            "case {cases} (kind {kind}) silently parsed a corrupted file"
        );
        cases += 1;
    }

    // File-level path: a count mismatch between otherwise valid files.
    let dir = tempfile::tempdir().unwrap();
    let ip = dir.path().join("train-images-idx3-ubyte");
    let lp = dir.path().join("train-labels-idx1-ubyte");
    std::fs::write(&ip, &images).unwrap();
    let mut short_labels: Vec<u8> = Vec::new();
    short_labels.extend(0x0000_0801u32.to_be_bytes());
    short_labels.extend(5u32.to_be_bytes());
    short_labels.extend([0, 1, 2, 0, 1]);
    std::fs::write(&lp, &short_labels).unwrap();
    assert!(matches!(
        pcflow::load_idx(&ip, &lp),
        Err(pcflow::Error::IdxCountMismatch { images: 8, labels: 5 })
    ));

    pass(9, "idx robustness", started, 30.0);
}
