//! Benchmark harness behind the `pcflow` binary: training runs with CSV
//! output, dt × T sweeps with the max-mean-accuracy selection rule,
//! theory-vs-numerics runs on deep linear networks, and SVG plotting.
//!
//! Timing discipline: `wall_ms` is measured with a monotonic clock around
//! exactly inference plus the parameter update. Activity initialization, data
//! handling and energy reporting sit outside the timed region (recording
//! energies with `--record-energies` necessarily adds observer work inside
//! it). Step 0 is measured and written but excluded from every aggregate.

pub mod cli;
pub mod csv;
pub mod svg;

use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use crate::data::{batches, load_idx, synthetic_classification, BatchPlan, Dataset};
use crate::energy::{param_grad, pc_energy};
use crate::error::{Error, Result};
use crate::network::{init_activities_with_ffwd, init_network, Activation, Network, RngSeed};
use crate::optim::{apply_update, OptimKind, OptimState};
use crate::real::Real;
use crate::solver::{solve_inference, solve_inference_observed, SolverConfig, SolverKind};
use crate::theory::linear_equilibrium_energy;
use crate::trainer::test_discriminative_pc;

/// Environment variable consulted when `--data-dir` is not given.
pub const DATA_DIR_ENV: &str = "PCFLOW_DATA_DIR";

/// Derivation streams for the user-facing seed.
const STREAM_WEIGHTS: u64 = 1;
const STREAM_SHUFFLE: u64 = 2;
const STREAM_TRAIN_DATA: u64 = 3;
const STREAM_TEST_DATA: u64 = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DatasetKind {
    Mnist,
    Fashion,
    Synthetic,
}

impl DatasetKind {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "mnist" => Some(DatasetKind::Mnist),
            "fashion" => Some(DatasetKind::Fashion),
            "synthetic" => Some(DatasetKind::Synthetic),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DatasetKind::Mnist => "mnist",
            DatasetKind::Fashion => "fashion",
            DatasetKind::Synthetic => "synthetic",
        }
    }
}

/// Full configuration of one training run.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub dataset: DatasetKind,
    pub data_dir: Option<PathBuf>,
    pub hidden_layers: usize,
    pub width: usize,
    pub activation: Activation,
    pub solver: SolverKind,
    pub dt: f64,
    pub t_max: f64,
    pub rtol: f64,
    pub atol: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub record_energies: bool,
    pub float32: bool,
    pub train_size: usize,
    pub test_size: usize,
    /// Evaluate test accuracy every this many steps (0 = at epoch ends only).
    pub eval_every: usize,
    pub synthetic_dim: usize,
    pub synthetic_classes: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetKind::Mnist,
            data_dir: None,
            hidden_layers: 3,
            width: 300,
            activation: Activation::Tanh,
            solver: SolverKind::Heun,
            dt: 0.05,
            t_max: 20.0,
            rtol: crate::solver::DEFAULT_RTOL,
            atol: crate::solver::DEFAULT_ATOL,
            lr: 1e-3,
            batch_size: 64,
            epochs: 1,
            seed: 0,
            record_energies: false,
            float32: false,
            train_size: 5000,
            test_size: 1000,
            eval_every: 0,
            synthetic_dim: 64,
            synthetic_classes: 10,
        }
    }
}

impl RunConfig {
    pub fn solver_config(&self) -> SolverConfig {
        let mut config = match self.solver {
            SolverKind::Euler => SolverConfig::euler(self.dt, self.t_max),
            SolverKind::Heun => SolverConfig::heun(self.dt, self.t_max),
        };
        config.rtol = self.rtol;
        config.atol = self.atol;
        config
    }

    pub fn network_dims(&self, input_dim: usize, classes: usize) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.hidden_layers + 2);
        dims.push(input_dim);
        dims.extend(std::iter::repeat_n(self.width, self.hidden_layers));
        dims.push(classes);
        dims
    }

    pub fn metadata(&self) -> Vec<(String, String)> {
        let meta = |k: &str, v: String| (k.to_string(), v);
        vec![
            meta("version", env!("CARGO_PKG_VERSION").to_string()),
            meta("build", env!("PCFLOW_GIT_DESCRIBE").to_string()),
            meta("dataset", self.dataset.name().to_string()),
            meta(
                "data_dir",
                self.data_dir
                    .as_ref()
                    .map(|p| p.display().to_string())
                    .unwrap_or_default(),
            ),
            meta("hidden_layers", self.hidden_layers.to_string()),
            meta("width", self.width.to_string()),
            meta("activation", self.activation.to_string()),
            meta("solver", self.solver.to_string()),
            meta("dt", self.dt.to_string()),
            meta("t_max", self.t_max.to_string()),
            meta("rtol", self.rtol.to_string()),
            meta("atol", self.atol.to_string()),
            meta("optimizer", format!("adam lr={}", self.lr)),
            meta("batch_size", self.batch_size.to_string()),
            meta("epochs", self.epochs.to_string()),
            meta("seed", self.seed.to_string()),
            meta(
                "precision",
                if self.float32 { "f32" } else { "f64" }.to_string(),
            ),
            meta("train_size", self.train_size.to_string()),
            meta("test_size", self.test_size.to_string()),
            meta("eval_every", self.eval_every.to_string()),
            meta("record_energies", self.record_energies.to_string()),
            meta("input_scaling", "pixels / 255 (idx), raw features (synthetic)".to_string()),
        ]
    }
}

/// One per-training-step record.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RunRecord {
    pub step: usize,
    pub wall_ms: f64,
    pub energy: f64,
    pub rhs_evaluations: usize,
    pub accepted: usize,
    pub rejected: usize,
}

/// A CSV row: either a training record or a periodic accuracy measurement.
#[derive(Clone, Debug, PartialEq)]
pub enum RunRow {
    Train(RunRecord),
    Accuracy { step: usize, accuracy: f64 },
}

/// Everything produced by one run.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub rows: Vec<RunRow>,
    pub final_accuracy: f64,
    /// Per-inference-step energies per training step, when recording.
    pub recorded_energies: Option<Vec<(usize, Vec<f64>)>>,
}

impl RunOutcome {
    pub fn train_records(&self) -> impl Iterator<Item = &RunRecord> {
        self.rows.iter().filter_map(|r| match r {
            RunRow::Train(rec) => Some(rec),
            RunRow::Accuracy { .. } => None,
        })
    }
}

/// Resolves the dataset named by the configuration into train/test splits.
pub fn load_dataset(cfg: &RunConfig) -> Result<(Dataset, Dataset)> {
    match cfg.dataset {
        DatasetKind::Synthetic => {
            let seed = RngSeed(cfg.seed);
            let train = synthetic_classification(
                cfg.train_size,
                cfg.synthetic_dim,
                cfg.synthetic_classes,
                seed.derive(STREAM_TRAIN_DATA),
            )?;
            let test = synthetic_classification(
                cfg.test_size,
                cfg.synthetic_dim,
                cfg.synthetic_classes,
                seed.derive(STREAM_TEST_DATA),
            )?;
            Ok((train, test))
        }
        DatasetKind::Mnist | DatasetKind::Fashion => {
            let dir = cfg
                .data_dir
                .clone()
                .or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from))
                .ok_or_else(|| {
                    Error::InvalidArgument(format!(
                        "dataset `{}` needs --data-dir or {DATA_DIR_ENV}",
                        cfg.dataset.name()
                    ))
                })?;
            let base = resolve_idx_dir(&dir, cfg.dataset);
            let train = load_idx(
                &base.join("train-images-idx3-ubyte"),
                &base.join("train-labels-idx1-ubyte"),
            )?;
            let test = load_idx(
                &base.join("t10k-images-idx3-ubyte"),
                &base.join("t10k-labels-idx1-ubyte"),
            )?;
            Ok((train.take(cfg.train_size), test.take(cfg.test_size)))
        }
    }
}

fn resolve_idx_dir(dir: &Path, kind: DatasetKind) -> PathBuf {
    let subdirs: &[&str] = match kind {
        DatasetKind::Mnist => &["", "mnist"],
        DatasetKind::Fashion => &["", "fashion", "fashion-mnist"],
        DatasetKind::Synthetic => &[""],
    };
    for sub in subdirs {
        let candidate = if sub.is_empty() {
            dir.to_path_buf()
        } else {
            dir.join(sub)
        };
        if candidate.join("train-images-idx3-ubyte").exists() {
            return candidate;
        }
    }
    dir.to_path_buf()
}

/// Trains one run and collects per-step records.
pub fn execute_run(cfg: &RunConfig) -> Result<RunOutcome> {
    let (train, test) = load_dataset(cfg)?;
    if cfg.float32 {
        run_typed::<f32>(cfg, &train, &test)
    } else {
        run_typed::<f64>(cfg, &train, &test)
    }
}

fn run_typed<F: Real>(cfg: &RunConfig, train: &Dataset, test: &Dataset) -> Result<RunOutcome> {
    if train.is_empty() || test.is_empty() {
        return Err(Error::InvalidArgument("empty dataset".into()));
    }
    let seed = RngSeed(cfg.seed);
    let dims = cfg.network_dims(train.input_dim(), train.num_classes());
    let mut network = init_network::<F>(&dims, cfg.activation, seed.derive(STREAM_WEIGHTS))?;
    let mut optim = OptimState::new(OptimKind::adam(cfg.lr), &network);
    let solver = cfg.solver_config();
    solver.validate()?;

    let test_inputs = test.inputs_as::<F>();
    let test_labels = test.labels();

    let mut rows = Vec::new();
    let mut recorded = cfg.record_energies.then(Vec::new);
    let mut final_accuracy = 0.0;
    let mut step = 0usize;

    for epoch in 0..cfg.epochs {
        let plan = BatchPlan {
            batch_size: cfg.batch_size,
            seed: seed.derive(STREAM_SHUFFLE).derive(epoch as u64),
            drop_last: false,
        };
        for (x, y) in batches::<F>(train, &plan)? {
            let mut state = init_activities_with_ffwd(&network, &x)?;
            state.clamp_output(&y)?;

            let mut energies = cfg.record_energies.then(Vec::new);
            let start = Instant::now();
            let (equilibrium, stats) =
                solve_inference_observed(&network, &state, &solver, |s, _t| {
                    if let Some(es) = energies.as_mut() {
                        if let Ok(report) = pc_energy(&network, s) {
                            es.push(report.total());
                        }
                    }
                })?;
            let grads = param_grad(&network, &equilibrium)?;
            let (next_network, next_optim) = apply_update(&network, &grads, &optim)?;
            let wall_ms = start.elapsed().as_secs_f64() * 1e3;

            let energy = pc_energy(&network, &equilibrium)?.total();
            rows.push(RunRow::Train(RunRecord {
                step,
                wall_ms,
                energy,
                rhs_evaluations: stats.rhs_evaluations,
                accepted: stats.accepted_steps,
                rejected: stats.rejected_steps,
            }));
            if let (Some(all), Some(es)) = (recorded.as_mut(), energies) {
                all.push((step, es));
            }
            network = next_network;
            optim = next_optim;

            if cfg.eval_every > 0 && (step + 1) % cfg.eval_every == 0 {
                let accuracy = test_discriminative_pc(&network, &test_inputs, test_labels)?;
                rows.push(RunRow::Accuracy { step, accuracy });
            }
            step += 1;
        }
        let accuracy = test_discriminative_pc(&network, &test_inputs, test_labels)?;
        final_accuracy = accuracy;
        rows.push(RunRow::Accuracy {
            step: step.saturating_sub(1),
            accuracy,
        });
    }

    Ok(RunOutcome {
        rows,
        final_accuracy,
        recorded_energies: recorded,
    })
}

/// Runs one training run and writes its CSV (plus an `.energies.csv` sidecar
/// when recording).
pub fn cmd_run(cfg: &RunConfig, out: &Path) -> Result<()> {
    let outcome = execute_run(cfg)?;
    let contents = csv::render_run_csv(&cfg.metadata(), &outcome.rows);
    csv::write_atomic(out, &contents)?;
    if let Some(recorded) = &outcome.recorded_energies {
        let mut sidecar = String::from("# pcflow energies\nstep,inference_step,energy\n");
        for (step, energies) in recorded {
            for (k, e) in energies.iter().enumerate() {
                sidecar.push_str(&format!("{step},{k},{e}\n"));
            }
        }
        csv::write_atomic(&out.with_extension("energies.csv"), &sidecar)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

/// The grid swept by `pcflow sweep`.
#[derive(Clone, Debug)]
pub struct SweepSpec {
    pub solvers: Vec<SolverKind>,
    pub depths: Vec<usize>,
    pub dt_grid: Vec<f64>,
    pub t_grid: Vec<f64>,
    pub seeds: Vec<u64>,
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        if self.solvers.is_empty()
            || self.depths.is_empty()
            || self.dt_grid.is_empty()
            || self.t_grid.is_empty()
            || self.seeds.is_empty()
        {
            return Err(Error::InvalidArgument("sweep grids must be non-empty".into()));
        }
        Ok(())
    }
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            solvers: vec![SolverKind::Euler, SolverKind::Heun],
            depths: vec![3],
            dt_grid: vec![0.5, 0.1, 0.05],
            t_grid: vec![5.0, 10.0, 20.0, 50.0, 100.0, 200.0, 500.0],
            seeds: vec![0, 1, 2],
        }
    }
}

/// One grid cell with per-seed outcomes. The per-run scalar is the final
/// test accuracy; `mean` and `sd` aggregate it across seeds (sample standard
/// deviation, zero for a single seed).
#[derive(Clone, Debug)]
pub struct SweepCell {
    pub solver: SolverKind,
    pub depth: usize,
    pub dt: f64,
    pub t_max: f64,
    pub accuracies: Vec<f64>,
    pub failures: Vec<(u64, String)>,
}

impl SweepCell {
    pub fn mean_accuracy(&self) -> f64 {
        if self.accuracies.is_empty() {
            return f64::NAN;
        }
        self.accuracies.iter().sum::<f64>() / self.accuracies.len() as f64
    }

    pub fn sd_accuracy(&self) -> f64 {
        let n = self.accuracies.len();
        if n <= 1 {
            return 0.0;
        }
        let mean = self.mean_accuracy();
        let var = self
            .accuracies
            .iter()
            .map(|a| (a - mean).powi(2))
            .sum::<f64>()
            / (n - 1) as f64;
        var.sqrt()
    }

    pub fn usable(&self) -> bool {
        !self.accuracies.is_empty()
    }
}

/// Runs the full grid. Cells run in a worker pool; failed runs are recorded
/// on their cell and the sweep continues.
pub fn execute_sweep(base: &RunConfig, spec: &SweepSpec) -> Result<Vec<SweepCell>> {
    spec.validate()?;
    let mut cells: Vec<SweepCell> = Vec::new();
    for &solver in &spec.solvers {
        for &depth in &spec.depths {
            for &dt in &spec.dt_grid {
                for &t_max in &spec.t_grid {
                    cells.push(SweepCell {
                        solver,
                        depth,
                        dt,
                        t_max,
                        accuracies: Vec::new(),
                        failures: Vec::new(),
                    });
                }
            }
        }
    }
    let jobs: Vec<(usize, u64)> = cells
        .iter()
        .enumerate()
        .flat_map(|(idx, _)| spec.seeds.iter().map(move |&s| (idx, s)))
        .collect();
    let results: Vec<(usize, u64, std::result::Result<f64, String>)> = jobs
        .par_iter()
        .map(|&(idx, run_seed)| {
            let cell = &cells[idx];
            let mut cfg = base.clone();
            cfg.solver = cell.solver;
            cfg.hidden_layers = cell.depth;
            cfg.dt = cell.dt;
            cfg.t_max = cell.t_max;
            cfg.seed = run_seed;
            cfg.record_energies = false;
            let outcome = execute_run(&cfg)
                .map(|o| o.final_accuracy)
                .map_err(|e| e.to_string());
            (idx, run_seed, outcome)
        })
        .collect();
    for (idx, run_seed, outcome) in results {
        match outcome {
            Ok(acc) => cells[idx].accuracies.push(acc),
            Err(message) => cells[idx].failures.push((run_seed, message)),
        }
    }
    Ok(cells)
}

/// The selection rule: per (solver, depth), take the cell with the highest
/// mean accuracy; among cells within one standard deviation (of the best
/// cell) of that maximum, prefer the smallest `t_max`, then the highest mean,
/// then the smallest `dt`.
pub fn select_cells(cells: &[SweepCell]) -> Vec<SweepCell> {
    let mut groups: Vec<(SolverKind, usize)> = Vec::new();
    for cell in cells {
        if !groups.contains(&(cell.solver, cell.depth)) {
            groups.push((cell.solver, cell.depth));
        }
    }
    let mut selected = Vec::new();
    for (solver, depth) in groups {
        let members: Vec<&SweepCell> = cells
            .iter()
            .filter(|c| c.solver == solver && c.depth == depth && c.usable())
            .collect();
        let Some(best) = members.iter().max_by(|a, b| {
            a.mean_accuracy()
                .partial_cmp(&b.mean_accuracy())
                .unwrap_or(std::cmp::Ordering::Equal)
        }) else {
            continue;
        };
        let threshold = best.mean_accuracy() - best.sd_accuracy();
        let mut candidates: Vec<&&SweepCell> = members
            .iter()
            .filter(|c| c.mean_accuracy() >= threshold)
            .collect();
        candidates.sort_by(|a, b| {
            a.t_max
                .total_cmp(&b.t_max)
                .then(b.mean_accuracy().total_cmp(&a.mean_accuracy()))
                .then(a.dt.total_cmp(&b.dt))
        });
        if let Some(choice) = candidates.first() {
            selected.push((***choice).clone());
        }
    }
    selected
}

/// Rebuilds sweep cells from a grid CSV, for offline re-selection.
pub fn cells_from_grid_csv(parsed: &csv::ParsedCsv) -> Result<Vec<SweepCell>> {
    let mut cells = Vec::new();
    for row in 0..parsed.rows.len() {
        let solver = parsed
            .cell(row, "solver")
            .and_then(SolverKind::parse)
            .ok_or_else(|| Error::InvalidArgument(format!("row {row}: bad solver")))?;
        let get = |col: &str| {
            parsed
                .cell_f64(row, col)
                .ok_or_else(|| Error::InvalidArgument(format!("row {row}: missing {col}")))
        };
        let n_ok = get("n_ok")? as usize;
        let mean = parsed.cell_f64(row, "mean_acc").unwrap_or(f64::NAN);
        let sd = parsed.cell_f64(row, "sd_acc").unwrap_or(0.0);
        // Reconstruct a two-point sample with the recorded mean and sd so the
        // selection rule sees the same statistics.
        let accuracies = match n_ok {
            0 => Vec::new(),
            1 => vec![mean],
            _ => {
                let spread = sd * ((n_ok - 1) as f64 / n_ok as f64 * 0.5).sqrt();
                let mut v = vec![mean + spread, mean - spread];
                v.extend(std::iter::repeat_n(mean, n_ok - 2));
                v
            }
        };
        cells.push(SweepCell {
            solver,
            depth: get("depth")? as usize,
            dt: get("dt")?,
            t_max: get("t_max")?,
            accuracies,
            failures: (0..get("n_failed")? as usize)
                .map(|i| (i as u64, "recorded failure".to_string()))
                .collect(),
        });
    }
    Ok(cells)
}

/// Runs (or re-selects) a sweep and writes the grid plus selection CSVs.
pub fn cmd_sweep(
    base: &RunConfig,
    spec: &SweepSpec,
    select_from: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let cells = match select_from {
        Some(grid_path) => cells_from_grid_csv(&csv::parse_csv(grid_path)?)?,
        None => execute_sweep(base, spec)?,
    };
    let mut meta = base.metadata();
    meta.push(("solvers".into(), join(&spec.solvers, "|")));
    meta.push(("depths".into(), join(&spec.depths, "|")));
    meta.push(("dt_grid".into(), join(&spec.dt_grid, "|")));
    meta.push(("t_grid".into(), join(&spec.t_grid, "|")));
    meta.push(("seeds".into(), join(&spec.seeds, "|")));
    if select_from.is_none() {
        csv::write_atomic(out, &csv::render_sweep_csv(&meta, &cells))?;
    }
    let selection = select_cells(&cells);
    let selection_path = out.with_extension("selection.csv");
    csv::write_atomic(
        &selection_path,
        &csv::render_sweep_csv(&meta, &selection),
    )?;
    Ok(())
}

fn join<T: std::fmt::Display>(values: &[T], sep: &str) -> String {
    values
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(sep)
}

// ---------------------------------------------------------------------------
// Theory runs
// ---------------------------------------------------------------------------

/// Configuration for `pcflow theory`: one training epoch per horizon in
/// `t_grid`, on a linear (Identity, zero-bias) network, comparing the
/// closed-form equilibrium energy with the numerically equilibrated one at
/// every step.
#[derive(Clone, Debug)]
pub struct TheoryConfig {
    pub base: RunConfig,
    pub t_grid: Vec<f64>,
}

impl Default for TheoryConfig {
    fn default() -> Self {
        Self {
            base: RunConfig {
                hidden_layers: 10,
                width: 32,
                activation: Activation::Identity,
                solver: SolverKind::Euler,
                dt: 0.1,
                float32: false,
                ..RunConfig::default()
            },
            t_grid: vec![5.0, 10.0, 20.0, 50.0, 100.0, 200.0],
        }
    }
}

/// One per-step theory record.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TheoryRow {
    pub t_max: f64,
    pub step: usize,
    pub theoretical: f64,
    pub numerical: f64,
    pub gap: f64,
    pub test_accuracy: f64,
}

/// Aggregates per horizon.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TheorySummary {
    pub t_max: f64,
    pub mean_theoretical: f64,
    pub mean_numerical: f64,
    pub mean_gap: f64,
    pub final_accuracy: f64,
}

/// Runs one epoch per horizon (horizons in parallel) and returns per-step
/// rows plus per-horizon summaries. The network is forced to Identity
/// activations and biases stay frozen at zero so the closed form applies
/// throughout training; precision is always `f64`.
pub fn execute_theory(cfg: &TheoryConfig) -> Result<(Vec<TheoryRow>, Vec<TheorySummary>)> {
    if cfg.t_grid.is_empty() {
        return Err(Error::InvalidArgument("t grid must be non-empty".into()));
    }
    let mut base = cfg.base.clone();
    base.activation = Activation::Identity;
    base.float32 = false;
    let (train, test) = load_dataset(&base)?;

    let per_horizon: Vec<Result<Vec<TheoryRow>>> = cfg
        .t_grid
        .par_iter()
        .map(|&t_max| theory_epoch(&base, &train, &test, t_max))
        .collect();

    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    for outcome in per_horizon {
        let horizon_rows = outcome?;
        let n = horizon_rows.len().max(1) as f64;
        let sum = |f: fn(&TheoryRow) -> f64| horizon_rows.iter().map(f).sum::<f64>() / n;
        summaries.push(TheorySummary {
            t_max: horizon_rows.first().map_or(0.0, |r| r.t_max),
            mean_theoretical: sum(|r| r.theoretical),
            mean_numerical: sum(|r| r.numerical),
            mean_gap: sum(|r| r.gap),
            final_accuracy: horizon_rows.last().map_or(0.0, |r| r.test_accuracy),
        });
        rows.extend(horizon_rows);
    }
    Ok((rows, summaries))
}

fn theory_epoch(
    base: &RunConfig,
    train: &Dataset,
    test: &Dataset,
    t_max: f64,
) -> Result<Vec<TheoryRow>> {
    let seed = RngSeed(base.seed);
    let dims = base.network_dims(train.input_dim(), train.num_classes());
    let mut network: Network<f64> =
        init_network(&dims, Activation::Identity, seed.derive(STREAM_WEIGHTS))?;
    let mut optim = OptimState::new(OptimKind::adam(base.lr), &network);
    let mut solver = match base.solver {
        SolverKind::Euler => SolverConfig::euler(base.dt, t_max),
        SolverKind::Heun => SolverConfig::heun(base.dt, t_max),
    };
    solver.rtol = base.rtol;
    solver.atol = base.atol;

    let test_inputs = test.inputs_as::<f64>();
    let plan = BatchPlan {
        batch_size: base.batch_size,
        seed: seed.derive(STREAM_SHUFFLE),
        drop_last: false,
    };
    let mut rows = Vec::new();
    for (step, (x, y)) in batches::<f64>(train, &plan)?.into_iter().enumerate() {
        let theoretical = linear_equilibrium_energy(&network, &x, &y)?;
        let mut state = init_activities_with_ffwd(&network, &x)?;
        state.clamp_output(&y)?;
        let (equilibrium, _stats) = solve_inference(&network, &state, &solver)?;
        let numerical = pc_energy(&network, &equilibrium)?.total();

        // Biases stay frozen so the closed form keeps applying.
        let grads = param_grad(&network, &equilibrium)?.with_zero_bias();
        let (next_network, next_optim) = apply_update(&network, &grads, &optim)?;
        network = next_network;
        optim = next_optim;

        let test_accuracy = test_discriminative_pc(&network, &test_inputs, test.labels())?;
        rows.push(TheoryRow {
            t_max,
            step,
            theoretical,
            numerical,
            gap: numerical - theoretical,
            test_accuracy,
        });
    }
    Ok(rows)
}

/// Runs the theory protocol, writes the CSV, and renders the two SVG plots
/// (`<out stem>_energy.svg`, `<out stem>_accuracy.svg`).
pub fn cmd_theory(cfg: &TheoryConfig, out: &Path) -> Result<()> {
    let (rows, summaries) = execute_theory(cfg)?;
    let mut meta = cfg.base.metadata();
    meta.push(("t_grid".into(), join(&cfg.t_grid, "|")));
    csv::write_atomic(out, &csv::render_theory_csv(&meta, &rows))?;

    let energy_series = vec![
        svg::Series {
            label: "theoretical".into(),
            points: summaries
                .iter()
                .map(|s| (s.t_max, s.mean_theoretical))
                .collect(),
            band: None,
        },
        svg::Series {
            label: "numerical".into(),
            points: summaries
                .iter()
                .map(|s| (s.t_max, s.mean_numerical))
                .collect(),
            band: None,
        },
    ];
    let accuracy_series = vec![svg::Series {
        label: "test accuracy".into(),
        points: summaries
            .iter()
            .map(|s| (s.t_max, s.final_accuracy))
            .collect(),
        band: None,
    }];
    write_sibling_svg(out, "_energy.svg", &svg::line_plot(
        "Mean per-step energy vs inference horizon",
        "t_max",
        "energy",
        &energy_series,
    ))?;
    write_sibling_svg(out, "_accuracy.svg", &svg::line_plot(
        "Final test accuracy vs inference horizon",
        "t_max",
        "accuracy",
        &accuracy_series,
    ))?;
    Ok(())
}

fn write_sibling_svg(out: &Path, suffix: &str, contents: &str) -> Result<()> {
    let stem = out
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "plot".into());
    let path = out.with_file_name(format!("{stem}{suffix}"));
    csv::write_atomic(&path, contents)
}

// ---------------------------------------------------------------------------
// Plotting
// ---------------------------------------------------------------------------

/// Renders SVG plots from CSVs produced by this tool. Run CSVs are grouped by
/// their `solver` metadata into wall-clock-per-step curves with a ±1 sd band
/// across files (seeds); a theory CSV becomes energy-vs-horizon and
/// accuracy-vs-horizon curves. Step 0 is excluded from aggregates.
pub fn cmd_plot(inputs: &[PathBuf], out_dir: &Path) -> Result<()> {
    if inputs.is_empty() {
        return Err(Error::InvalidArgument("no input CSVs given".into()));
    }
    let mut run_files: Vec<csv::ParsedCsv> = Vec::new();
    let mut theory_files: Vec<(PathBuf, csv::ParsedCsv)> = Vec::new();
    for path in inputs {
        let parsed = csv::parse_csv(path)?;
        match parsed.mode.as_str() {
            "run" => run_files.push(parsed),
            "theory" => theory_files.push((path.clone(), parsed)),
            other => {
                return Err(Error::InvalidArgument(format!(
                    "{}: cannot plot mode `{other}`",
                    path.display()
                )))
            }
        }
    }
    std::fs::create_dir_all(out_dir).map_err(|source| Error::Io {
        path: out_dir.display().to_string(),
        source,
    })?;

    if !run_files.is_empty() {
        let series = wall_clock_series(&run_files)?;
        let rendered = svg::line_plot(
            "Wall-clock time per training step",
            "training step",
            "wall ms",
            &series,
        );
        csv::write_atomic(&out_dir.join("wall_clock.svg"), &rendered)?;
    }
    for (path, parsed) in &theory_files {
        let summaries = theory_summaries_from_csv(parsed)?;
        let series = vec![
            svg::Series {
                label: "theoretical".into(),
                points: summaries.iter().map(|s| (s.t_max, s.mean_theoretical)).collect(),
                band: None,
            },
            svg::Series {
                label: "numerical".into(),
                points: summaries.iter().map(|s| (s.t_max, s.mean_numerical)).collect(),
                band: None,
            },
        ];
        let stem = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "theory".into());
        csv::write_atomic(
            &out_dir.join(format!("{stem}_energy.svg")),
            &svg::line_plot(
                "Mean per-step energy vs inference horizon",
                "t_max",
                "energy",
                &series,
            ),
        )?;
        let acc = vec![svg::Series {
            label: "test accuracy".into(),
            points: summaries.iter().map(|s| (s.t_max, s.final_accuracy)).collect(),
            band: None,
        }];
        csv::write_atomic(
            &out_dir.join(format!("{stem}_accuracy.svg")),
            &svg::line_plot(
                "Final test accuracy vs inference horizon",
                "t_max",
                "accuracy",
                &acc,
            ),
        )?;
    }
    Ok(())
}

/// Groups run CSVs by solver and reduces wall_ms across files per step.
fn wall_clock_series(files: &[csv::ParsedCsv]) -> Result<Vec<svg::Series>> {
    let mut groups: Vec<(String, Vec<Vec<f64>>)> = Vec::new();
    for parsed in files {
        let solver = parsed.meta_value("solver").unwrap_or("run").to_string();
        let mut walls = Vec::new();
        for row in 0..parsed.rows.len() {
            let step = parsed.cell_f64(row, "step");
            let wall = parsed.cell_f64(row, "wall_ms");
            if let (Some(step), Some(wall)) = (step, wall) {
                if step >= 1.0 {
                    walls.push(wall);
                }
            }
        }
        if walls.is_empty() {
            return Err(Error::InvalidArgument(
                "a run CSV holds no training rows past step 0".into(),
            ));
        }
        match groups.iter_mut().find(|(name, _)| *name == solver) {
            Some((_, members)) => members.push(walls),
            None => groups.push((solver, vec![walls])),
        }
    }
    let mut series = Vec::new();
    for (name, members) in groups {
        let len = members.iter().map(Vec::len).min().unwrap_or(0);
        let mut points = Vec::with_capacity(len);
        let mut band = Vec::with_capacity(len);
        for i in 0..len {
            let values: Vec<f64> = members.iter().map(|m| m[i]).collect();
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            let sd = if values.len() > 1 {
                (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>()
                    / (values.len() - 1) as f64)
                    .sqrt()
            } else {
                0.0
            };
            let x = (i + 1) as f64;
            points.push((x, mean));
            band.push((x, mean - sd, mean + sd));
        }
        series.push(svg::Series {
            label: name,
            points,
            band: Some(band),
        });
    }
    Ok(series)
}

fn theory_summaries_from_csv(parsed: &csv::ParsedCsv) -> Result<Vec<TheorySummary>> {
    let mut horizons: Vec<f64> = Vec::new();
    for row in 0..parsed.rows.len() {
        if let Some(t) = parsed.cell_f64(row, "t_max") {
            if !horizons.contains(&t) {
                horizons.push(t);
            }
        }
    }
    let mut summaries = Vec::new();
    for t in horizons {
        let mut theory_sum = 0.0;
        let mut numerical_sum = 0.0;
        let mut gap_sum = 0.0;
        let mut count = 0usize;
        let mut final_accuracy = 0.0;
        for row in 0..parsed.rows.len() {
            if parsed.cell_f64(row, "t_max") == Some(t) {
                theory_sum += parsed.cell_f64(row, "theory").unwrap_or(0.0);
                numerical_sum += parsed.cell_f64(row, "numerical").unwrap_or(0.0);
                gap_sum += parsed.cell_f64(row, "gap").unwrap_or(0.0);
                if let Some(acc) = parsed.cell_f64(row, "test_acc") {
                    final_accuracy = acc;
                }
                count += 1;
            }
        }
        let n = count.max(1) as f64;
        summaries.push(TheorySummary {
            t_max: t,
            mean_theoretical: theory_sum / n,
            mean_numerical: numerical_sum / n,
            mean_gap: gap_sum / n,
            final_accuracy,
        });
    }
    Ok(summaries)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_synthetic_cfg() -> RunConfig {
        RunConfig {
            dataset: DatasetKind::Synthetic,
            hidden_layers: 1,
            width: 8,
            dt: 0.1,
            t_max: 2.0,
            batch_size: 16,
            train_size: 64,
            test_size: 32,
            synthetic_dim: 6,
            synthetic_classes: 3,
            ..RunConfig::default()
        }
    }

    #[test]
    fn run_produces_rows_and_accuracy() {
        let outcome = execute_run(&tiny_synthetic_cfg()).unwrap();
        let trains = outcome.train_records().count();
        assert_eq!(trains, 4); // 64 samples / batch 16
        assert!(outcome
            .rows
            .iter()
            .any(|r| matches!(r, RunRow::Accuracy { .. })));
        assert!(outcome.final_accuracy >= 0.0 && outcome.final_accuracy <= 1.0);
        for record in outcome.train_records() {
            assert!(record.wall_ms > 0.0);
            assert!(record.rhs_evaluations >= record.accepted);
        }
    }

    #[test]
    fn run_rows_deterministic_modulo_wall() {
        let cfg = tiny_synthetic_cfg();
        let a = execute_run(&cfg).unwrap();
        let b = execute_run(&cfg).unwrap();
        assert_eq!(a.rows.len(), b.rows.len());
        for (ra, rb) in a.rows.iter().zip(&b.rows) {
            match (ra, rb) {
                (RunRow::Train(ta), RunRow::Train(tb)) => {
                    assert_eq!(ta.step, tb.step);
                    assert_eq!(ta.energy, tb.energy);
                    assert_eq!(ta.rhs_evaluations, tb.rhs_evaluations);
                    assert_eq!(ta.accepted, tb.accepted);
                    assert_eq!(ta.rejected, tb.rejected);
                }
                (a, b) => assert_eq!(a, b),
            }
        }
    }

    #[test]
    fn float32_runs_and_differs_from_f64() {
        let mut cfg = tiny_synthetic_cfg();
        let f64_outcome = execute_run(&cfg).unwrap();
        cfg.float32 = true;
        let f32_outcome = execute_run(&cfg).unwrap();
        let e64 = f64_outcome.train_records().next().unwrap().energy;
        let e32 = f32_outcome.train_records().next().unwrap().energy;
        assert!((e64 - e32).abs() < 1e-3 * e64.abs().max(1.0));
        assert_ne!(e64, e32);
    }

    #[test]
    fn record_energies_collects_trajectories() {
        let mut cfg = tiny_synthetic_cfg();
        cfg.record_energies = true;
        let outcome = execute_run(&cfg).unwrap();
        let recorded = outcome.recorded_energies.unwrap();
        assert_eq!(recorded.len(), 4);
        assert!(recorded.iter().all(|(_, es)| !es.is_empty()));
    }

    #[test]
    fn sweep_aggregates_and_selects() {
        let base = tiny_synthetic_cfg();
        let spec = SweepSpec {
            solvers: vec![SolverKind::Euler, SolverKind::Heun],
            depths: vec![1],
            dt_grid: vec![0.5, 0.1],
            t_grid: vec![2.0, 5.0],
            seeds: vec![0, 1],
        };
        let cells = execute_sweep(&base, &spec).unwrap();
        assert_eq!(cells.len(), 2 * 2 * 2);
        assert!(cells.iter().all(|c| c.accuracies.len() == 2));
        let selected = select_cells(&cells);
        assert_eq!(selected.len(), 2); // one per (solver, depth)
    }

    #[test]
    fn selection_prefers_smaller_t_within_one_sd() {
        let mk = |t_max: f64, accs: &[f64]| SweepCell {
            solver: SolverKind::Euler,
            depth: 3,
            dt: 0.1,
            t_max,
            accuracies: accs.to_vec(),
            failures: Vec::new(),
        };
        // T=200 is nominally best but T=50 ties within one sd: pick T=50.
        let cells = vec![mk(200.0, &[0.90, 0.92, 0.91]), mk(50.0, &[0.905, 0.90, 0.91])];
        let selected = select_cells(&cells);
        assert_eq!(selected.len(), 1);
        assert_eq!(selected[0].t_max, 50.0);

        // A clear winner outside the sd window is kept.
        let cells = vec![mk(200.0, &[0.95, 0.951, 0.949]), mk(50.0, &[0.70, 0.71, 0.69])];
        let selected = select_cells(&cells);
        assert_eq!(selected[0].t_max, 200.0);
    }

    #[test]
    fn sweep_sd_matches_hand_computation() {
        let cell = SweepCell {
            solver: SolverKind::Heun,
            depth: 3,
            dt: 0.1,
            t_max: 20.0,
            accuracies: vec![0.8, 0.9, 0.85],
            failures: Vec::new(),
        };
        let mean: f64 = (0.8 + 0.9 + 0.85) / 3.0;
        let hand = (((0.8 - mean) as f64).powi(2) + (0.9 - mean).powi(2) + (0.85 - mean).powi(2))
            / 2.0;
        assert!((cell.sd_accuracy() - hand.sqrt()).abs() < 1e-15);
        assert!((cell.mean_accuracy() - mean).abs() < 1e-15);
    }

    #[test]
    fn failed_cells_are_recorded_not_fatal() {
        let base = tiny_synthetic_cfg();
        let spec = SweepSpec {
            solvers: vec![SolverKind::Euler],
            depths: vec![1],
            // dt > t_max is invalid and must fail per-cell, not abort.
            dt_grid: vec![5.0, 0.1],
            t_grid: vec![2.0],
            seeds: vec![0],
        };
        let cells = execute_sweep(&base, &spec).unwrap();
        let failed: Vec<_> = cells.iter().filter(|c| !c.failures.is_empty()).collect();
        let ok: Vec<_> = cells.iter().filter(|c| c.usable()).collect();
        assert_eq!(failed.len(), 1);
        assert_eq!(ok.len(), 1);
        let selected = select_cells(&cells);
        assert_eq!(selected.len(), 1);
        assert_eq!(selected[0].dt, 0.1);
    }

    #[test]
    fn theory_rows_have_nonnegative_gaps() {
        let cfg = TheoryConfig {
            base: RunConfig {
                dataset: DatasetKind::Synthetic,
                hidden_layers: 2,
                width: 8,
                activation: Activation::Identity,
                solver: SolverKind::Euler,
                dt: 0.1,
                batch_size: 16,
                train_size: 48,
                test_size: 32,
                synthetic_dim: 6,
                synthetic_classes: 3,
                ..RunConfig::default()
            },
            t_grid: vec![2.0, 10.0],
        };
        let (rows, summaries) = execute_theory(&cfg).unwrap();
        assert_eq!(rows.len(), 2 * 3); // two horizons × three batches
        for row in &rows {
            assert!(row.gap >= -1e-9, "gap {} at step {}", row.gap, row.step);
        }
        assert_eq!(summaries.len(), 2);
        assert!(summaries[1].mean_gap <= summaries[0].mean_gap);
    }
}
