//! Predictive coding networks trained by numerically integrating the
//! gradient-flow inference dynamics with explicit ODE solvers.
//!
//! A predictive coding network (PCN) scores a set of per-layer activities
//! `z_0 ... z_L` with the energy
//!
//! ```text
//! F = (1/2N) Σ_i Σ_ℓ ||z_ℓ,i - f_ℓ(z_{ℓ-1,i} W_ℓ^T + b_ℓ)||²
//! ```
//!
//! and trains in a bi-level fashion: clamp the boundary layers to data, relax
//! the free activities to an equilibrium of `F` by integrating
//! `ż = -∂F/∂z` (inference), then update the weights at that equilibrium
//! (learning). Inference is an ODE solve, so the integrator is pluggable:
//! fixed-step Euler or adaptive Heun under a PID step-size controller.
//!
//! # Module map
//!
//! - [`network`] — topology, activations, activity states, seeded init
//! - [`energy`] — the PC energy and its hand-derived gradients
//! - [`solver`] — Euler and Heun integrators, PID controller, inference solve
//! - [`optim`] — SGD and Adam applied at the equilibrium
//! - [`trainer`] — one-call training/eval steps ([`make_pc_step`] et al.)
//! - [`theory`] — closed-form equilibrium energy for deep linear networks
//! - [`data`] — IDX loading, synthetic datasets, batching
//! - [`checkpoint`] — stable binary network serialization
//! - [`bench`] — the benchmark harness behind the `pcflow` binary
//!
//! # Runnable examples
//!
//! Each major capability has a runnable example:
//!
//! ```bash
//! cargo run --release --example discriminative_pc   # classify synthetic blobs
//! cargo run --release --example generative_pc       # unsupervised generation
//! cargo run --release --example hybrid_pc           # generator + amortiser
//! cargo run --release --example custom_training_step # the advanced API, piece by piece
//! cargo run --release --example solver_comparison   # Euler vs Heun cost at equal accuracy
//! cargo run --release --example linear_theory       # closed-form vs numerical energy
//! cargo run --release --example checkpoint_roundtrip # save/load networks
//! ```
//!
//! # Quickstart
//!
//! ```
//! use pcflow::{
//!     init_network, make_pc_step, Activation, OptimKind, OptimState, RecordFlags, RngSeed,
//!     SolverConfig,
//! };
//!
//! let net = init_network::<f64>(&[4, 16, 3], Activation::Tanh, RngSeed(0))?;
//! let optim = OptimState::new(OptimKind::adam(1e-3), &net);
//! let x = ndarray::Array2::from_elem((8, 4), 0.1);
//! let y = ndarray::Array2::from_elem((8, 3), 0.5);
//! let step = make_pc_step(
//!     &net,
//!     &optim,
//!     &y,
//!     Some(&x),
//!     &SolverConfig::heun(0.05, 20.0),
//!     RecordFlags::default(),
//!     RngSeed(0),
//! )?;
//! println!("equilibrium energy {:.6}", step.energies.total());
//! # Ok::<(), pcflow::Error>(())
//! ```

pub mod bench;
pub mod checkpoint;
pub mod data;
pub mod energy;
pub mod error;
pub mod network;
pub mod optim;
pub mod real;
pub mod solver;
pub mod theory;
pub mod trainer;

pub use checkpoint::{load_network, save_network};
pub use data::{
    argmax_rows, batches, load_idx, one_hot, parse_idx_images, parse_idx_labels, shuffled_indices,
    synthetic_blobs, synthetic_classification, BatchPlan, Dataset,
};
pub use energy::{
    activity_grad, hpc_energy, param_grad, pc_energy, ActivityGradient, EnergyReport,
    LayerGradient, ParamGradient,
};
pub use error::{Error, Result};
pub use network::{
    forward, init_activities_random, init_activities_with_ffwd, init_network, Activation,
    ActivityState, Layer, Network, RngSeed,
};
pub use optim::{adam_update, apply_update, sgd_update, OptimKind, OptimState};
pub use real::Real;
pub use solver::{
    euler_step, heun_step, pid_adapt, scaled_error_norm, solve_inference,
    solve_inference_observed, ControllerState, PidCoeffs, SolveStats, SolverConfig, SolverKind,
};
pub use theory::{
    energy_gap, linear_equilibrium_energy, rescaling_matrix, weight_chain, EnergyGap,
    RescalingMatrix,
};
pub use trainer::{
    make_hpc_step, make_pc_step, test_discriminative_pc, test_generative_pc, update_params,
    HpcStepResult, RecordFlags, StepResult,
};
