//! Command-line interface of the `pcflow` binary.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::{Error, Result};
use crate::network::Activation;
use crate::solver::SolverKind;

use super::{cmd_plot, cmd_run, cmd_sweep, cmd_theory, DatasetKind, RunConfig, SweepSpec, TheoryConfig};

#[derive(Parser, Debug)]
#[command(
    name = "pcflow",
    version,
    about = "Train predictive coding networks by integrating the gradient-flow inference dynamics with explicit ODE solvers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train one run and write a per-step CSV
    Run(RunArgs),
    /// Run a dt × T × solver × seed grid and select the best cells
    Sweep(SweepArgs),
    /// Compare closed-form and numerical energies on a deep linear network
    Theory(TheoryArgs),
    /// Render SVG plots from CSVs produced by this tool
    Plot(PlotArgs),
}

#[derive(Args, Debug, Clone)]
struct RunArgs {
    /// Dataset: mnist, fashion or synthetic
    #[arg(long, default_value = "mnist")]
    dataset: String,
    /// Directory holding the IDX files (falls back to $PCFLOW_DATA_DIR)
    #[arg(long)]
    data_dir: Option<PathBuf>,
    /// Number of hidden layers H
    #[arg(long, default_value_t = 3)]
    hidden_layers: usize,
    /// Hidden width
    #[arg(long, default_value_t = 300)]
    width: usize,
    /// Activation: identity, tanh, relu or leaky_relu:SLOPE
    #[arg(long, default_value = "tanh")]
    activation: String,
    /// Inference integrator: euler or heun
    #[arg(long, default_value = "heun")]
    solver: String,
    /// Fixed (Euler) or initial (Heun) step size
    #[arg(long, default_value_t = 0.05)]
    dt: f64,
    /// Upper integration limit T
    #[arg(long, default_value_t = 20.0)]
    t_max: f64,
    /// Relative tolerance of the adaptive error norm (Heun)
    #[arg(long, default_value_t = 1e-3)]
    rtol: f64,
    /// Absolute tolerance of the adaptive error norm (Heun)
    #[arg(long, default_value_t = 1e-6)]
    atol: f64,
    /// Adam learning rate
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    #[arg(long, default_value_t = 1)]
    epochs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV path
    #[arg(long, default_value = "run.csv")]
    out: PathBuf,
    /// Record per-inference-step energies into a sidecar CSV
    #[arg(long)]
    record_energies: bool,
    /// Train in 32-bit floats
    #[arg(long)]
    float32: bool,
    /// Training subset size
    #[arg(long, default_value_t = 5000)]
    train_size: usize,
    /// Test subset size
    #[arg(long, default_value_t = 1000)]
    test_size: usize,
    /// Evaluate test accuracy every N steps (0 = at epoch ends only)
    #[arg(long, default_value_t = 0)]
    eval_every: usize,
    /// Feature dimension of the synthetic dataset
    #[arg(long, default_value_t = 64)]
    synthetic_dim: usize,
    /// Number of classes of the synthetic dataset
    #[arg(long, default_value_t = 10)]
    synthetic_classes: usize,
}

impl RunArgs {
    fn to_config(&self) -> Result<RunConfig> {
        let dataset = DatasetKind::parse(&self.dataset).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "unknown dataset `{}` (expected mnist, fashion or synthetic)",
                self.dataset
            ))
        })?;
        let activation = Activation::parse(&self.activation).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "unknown activation `{}` (expected identity, tanh, relu or leaky_relu:SLOPE)",
                self.activation
            ))
        })?;
        let solver = SolverKind::parse(&self.solver).ok_or_else(|| {
            Error::InvalidArgument(format!(
                "unknown solver `{}` (expected euler or heun)",
                self.solver
            ))
        })?;
        Ok(RunConfig {
            dataset,
            data_dir: self.data_dir.clone(),
            hidden_layers: self.hidden_layers,
            width: self.width,
            activation,
            solver,
            dt: self.dt,
            t_max: self.t_max,
            rtol: self.rtol,
            atol: self.atol,
            lr: self.lr,
            batch_size: self.batch_size,
            epochs: self.epochs,
            seed: self.seed,
            record_energies: self.record_energies,
            float32: self.float32,
            train_size: self.train_size,
            test_size: self.test_size,
            eval_every: self.eval_every,
            synthetic_dim: self.synthetic_dim,
            synthetic_classes: self.synthetic_classes,
        })
    }
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Solvers to sweep (comma-separated; overrides --solver)
    #[arg(long, default_value = "euler,heun", value_delimiter = ',')]
    solvers: Vec<String>,
    /// Hidden-layer counts to sweep (overrides --hidden-layers)
    #[arg(long, default_value = "3", value_delimiter = ',')]
    depths: Vec<usize>,
    /// Step sizes to sweep (overrides --dt)
    #[arg(long, default_value = "0.5,0.1,0.05", value_delimiter = ',')]
    dt_grid: Vec<f64>,
    /// Horizons to sweep (overrides --t-max)
    #[arg(long, default_value = "5,10,20,50,100,200,500", value_delimiter = ',')]
    t_grid: Vec<f64>,
    /// Seeds to sweep (overrides --seed)
    #[arg(long, default_value = "0,1,2", value_delimiter = ',')]
    seeds: Vec<u64>,
    /// Re-run only the selection rule on an existing grid CSV
    #[arg(long)]
    select_from: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TheoryArgs {
    #[arg(long, default_value = "mnist")]
    dataset: String,
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    hidden_layers: usize,
    #[arg(long, default_value_t = 32)]
    width: usize,
    /// Step size of the (Euler) integrator
    #[arg(long, default_value_t = 0.1)]
    dt: f64,
    /// Inference horizons to compare
    #[arg(long, default_value = "5,10,20,50,100,200", value_delimiter = ',')]
    t_grid: Vec<f64>,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "theory.csv")]
    out: PathBuf,
    #[arg(long, default_value_t = 5000)]
    train_size: usize,
    #[arg(long, default_value_t = 1000)]
    test_size: usize,
    #[arg(long, default_value_t = 64)]
    synthetic_dim: usize,
    #[arg(long, default_value_t = 10)]
    synthetic_classes: usize,
}

#[derive(Args, Debug)]
struct PlotArgs {
    /// CSV files produced by `run` or `theory`
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Directory for the rendered SVGs
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(args) => {
            let cfg = args.to_config()?;
            cmd_run(&cfg, &args.out)?;
            eprintln!("wrote {}", args.out.display());
            Ok(())
        }
        Command::Sweep(args) => {
            let base = args.run.to_config()?;
            let solvers = args
                .solvers
                .iter()
                .map(|s| {
                    SolverKind::parse(s).ok_or_else(|| {
                        Error::InvalidArgument(format!("unknown solver `{s}` in --solvers"))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let spec = SweepSpec {
                solvers,
                depths: args.depths.clone(),
                dt_grid: args.dt_grid.clone(),
                t_grid: args.t_grid.clone(),
                seeds: args.seeds.clone(),
            };
            cmd_sweep(&base, &spec, args.select_from.as_deref(), &args.run.out)?;
            eprintln!(
                "wrote {} and {}",
                args.run.out.display(),
                args.run.out.with_extension("selection.csv").display()
            );
            Ok(())
        }
        Command::Theory(args) => {
            let base = RunConfig {
                dataset: DatasetKind::parse(&args.dataset).ok_or_else(|| {
                    Error::InvalidArgument(format!("unknown dataset `{}`", args.dataset))
                })?,
                data_dir: args.data_dir.clone(),
                hidden_layers: args.hidden_layers,
                width: args.width,
                activation: Activation::Identity,
                solver: SolverKind::Euler,
                dt: args.dt,
                lr: args.lr,
                batch_size: args.batch_size,
                seed: args.seed,
                train_size: args.train_size,
                test_size: args.test_size,
                synthetic_dim: args.synthetic_dim,
                synthetic_classes: args.synthetic_classes,
                ..RunConfig::default()
            };
            let cfg = TheoryConfig {
                base,
                t_grid: args.t_grid.clone(),
            };
            cmd_theory(&cfg, &args.out)?;
            eprintln!("wrote {}", args.out.display());
            Ok(())
        }
        Command::Plot(args) => {
            cmd_plot(&args.inputs, &args.out_dir)?;
            eprintln!("wrote plots to {}", args.out_dir.display());
            Ok(())
        }
    }
}

/// Entry point used by the `pcflow` binary. Unknown flags exit with clap's
/// usage error; runtime failures print to stderr and exit nonzero.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}
