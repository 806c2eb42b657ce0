//! The predictive coding energy and its analytic gradients.
//!
//! The energy of a state is the batch-mean sum of squared prediction errors,
//!
//! ```text
//! F = (1/2N) Σ_i Σ_{ℓ=1..L} ||z_ℓ,i - f_ℓ(z_{ℓ-1,i} W_ℓ^T + b_ℓ)||²
//! ```
//!
//! The `1/(2N)` prefactor is used throughout the crate, so the closed-form
//! equilibrium value from [`crate::theory`] equals this module's output with
//! no conversion. Gradients are hand-derived per activation and guarded by
//! finite-difference tests rather than produced by automatic differentiation.

use ndarray::{Array2, Axis};

use crate::error::{Error, Result};
use crate::network::{ActivityState, Network};
use crate::real::Real;

/// Per-layer and total energy. Values are reported in `f64` regardless of the
/// network precision.
#[derive(Clone, Debug, PartialEq)]
pub struct EnergyReport {
    per_layer: Vec<f64>,
    total: f64,
}

impl EnergyReport {
    pub fn per_layer(&self) -> &[f64] {
        &self.per_layer
    }

    pub fn total(&self) -> f64 {
        self.total
    }
}

/// Gradient of the energy with respect to the activities. One matrix per
/// level; clamped levels hold exact zeros.
#[derive(Clone, Debug, PartialEq)]
pub struct ActivityGradient<F: Real> {
    grads: Vec<Array2<F>>,
}

impl<F: Real> ActivityGradient<F> {
    /// Builds a gradient container from raw per-level matrices. Callers are
    /// responsible for zero-filling clamped levels.
    pub fn new(grads: Vec<Array2<F>>) -> Self {
        Self { grads }
    }

    pub fn grads(&self) -> &[Array2<F>] {
        &self.grads
    }

    pub fn grad(&self, level: usize) -> &Array2<F> {
        &self.grads[level]
    }

    pub fn num_levels(&self) -> usize {
        self.grads.len()
    }

    /// Max-norm over all entries (clamped levels contribute zeros).
    pub fn max_norm(&self) -> f64 {
        self.grads
            .iter()
            .flat_map(|g| g.iter())
            .fold(0.0_f64, |acc, &v| acc.max(v.abs().to_f64()))
    }

    /// `ca * a + cb * b`, elementwise per level.
    pub(crate) fn combine(a: &Self, b: &Self, ca: F, cb: F) -> Self {
        let grads = a
            .grads
            .iter()
            .zip(&b.grads)
            .map(|(ga, gb)| ga * ca + gb * cb)
            .collect();
        Self { grads }
    }

    pub(crate) fn matches_state(&self, state: &ActivityState<F>) -> bool {
        self.grads.len() == state.num_levels()
            && self
                .grads
                .iter()
                .zip(state.activities())
                .all(|(g, z)| g.dim() == z.dim())
    }
}

/// Gradient of the energy with respect to one layer's parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerGradient<F: Real> {
    pub weight: Array2<F>,
    pub bias: ndarray::Array1<F>,
}

/// Gradients for every layer, shapes mirroring the network.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamGradient<F: Real> {
    layers: Vec<LayerGradient<F>>,
}

impl<F: Real> ParamGradient<F> {
    pub fn new(layers: Vec<LayerGradient<F>>) -> Self {
        Self { layers }
    }

    pub fn layers(&self) -> &[LayerGradient<F>] {
        &self.layers
    }

    pub fn layer(&self, idx: usize) -> &LayerGradient<F> {
        &self.layers[idx]
    }

    pub fn max_norm(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(l.bias.iter()))
            .fold(0.0_f64, |acc, &v| acc.max(v.abs().to_f64()))
    }

    /// Zeroes the bias gradients, for training runs that keep biases frozen.
    pub fn with_zero_bias(mut self) -> Self {
        for layer in &mut self.layers {
            layer.bias.fill(F::zero());
        }
        self
    }

    pub(crate) fn zeros_like(network: &Network<F>) -> Self {
        let layers = network
            .layers()
            .iter()
            .map(|l| LayerGradient {
                weight: Array2::zeros(l.weight().dim()),
                bias: ndarray::Array1::zeros(l.bias().len()),
            })
            .collect();
        Self { layers }
    }

    pub(crate) fn check_shapes(&self, network: &Network<F>) -> Result<()> {
        if self.layers.len() != network.num_layers() {
            return Err(Error::ShapeMismatch {
                layer: 0,
                details: format!(
                    "gradient has {} layers, network has {}",
                    self.layers.len(),
                    network.num_layers()
                ),
            });
        }
        for (idx, (g, l)) in self.layers.iter().zip(network.layers()).enumerate() {
            if g.weight.dim() != l.weight().dim() || g.bias.len() != l.bias().len() {
                return Err(Error::ShapeMismatch {
                    layer: idx + 1,
                    details: "gradient shape does not mirror the layer".into(),
                });
            }
        }
        Ok(())
    }
}

/// Preactivation and prediction error of one layer for a given state.
struct LayerTerms<F: Real> {
    preact: Array2<F>,
    error: Array2<F>,
}

/// Computes `a_ℓ` and `ε_ℓ = z_ℓ - f_ℓ(a_ℓ)` for ℓ = 1..L (index ℓ-1).
fn layer_terms<F: Real>(network: &Network<F>, state: &ActivityState<F>) -> Vec<LayerTerms<F>> {
    (0..network.num_layers())
        .map(|idx| {
            let layer = network.layer(idx);
            let preact = layer.preactivation(state.activity(idx));
            let prediction = layer.activation().apply_matrix(&preact);
            let error = state.activity(idx + 1) - &prediction;
            LayerTerms { preact, error }
        })
        .collect()
}

/// Computes the per-layer and total energy of `state` under `network`.
pub fn pc_energy<F: Real>(network: &Network<F>, state: &ActivityState<F>) -> Result<EnergyReport> {
    network.check_state(state)?;
    let n = state.batch_size();
    if n == 0 {
        return Err(Error::InvalidArgument("batch must be at least 1".into()));
    }
    let scale = 1.0 / (2.0 * n as f64);
    let per_layer: Vec<f64> = layer_terms(network, state)
        .iter()
        .map(|t| {
            let ss: F = t.error.iter().map(|&e| e * e).sum();
            ss.to_f64() * scale
        })
        .collect();
    let total = per_layer.iter().sum();
    Ok(EnergyReport { per_layer, total })
}

/// Gradient of the energy with respect to each free level's activities.
///
/// For a free level ℓ:
///
/// ```text
/// ∂F/∂z_ℓ = (1/N) [ ε_ℓ - (ε_{ℓ+1} ⊙ f'_{ℓ+1}(a_{ℓ+1})) W_{ℓ+1} ]
/// ```
///
/// with the `ε_ℓ` term absent at ℓ = 0 (no incoming prediction) and the
/// top-down term absent at ℓ = L. Clamped levels return exact zeros.
pub fn activity_grad<F: Real>(
    network: &Network<F>,
    state: &ActivityState<F>,
) -> Result<ActivityGradient<F>> {
    network.check_state(state)?;
    let n = state.batch_size();
    if n == 0 {
        return Err(Error::InvalidArgument("batch must be at least 1".into()));
    }
    let terms = layer_terms(network, state);
    let inv_n = F::from_f64(1.0 / n as f64);
    let levels = network.num_layers() + 1;
    let grads = (0..levels)
        .map(|level| {
            if state.is_clamped(level) {
                return Array2::zeros(state.activity(level).dim());
            }
            let mut g: Array2<F> = if level >= 1 {
                terms[level - 1].error.clone()
            } else {
                Array2::zeros(state.activity(0).dim())
            };
            if level < network.num_layers() {
                let above = &terms[level];
                let act = network.layer(level).activation();
                let weighted = &above.error * &act.derivative_matrix(&above.preact);
                g = g - weighted.dot(network.layer(level).weight());
            }
            g * inv_n
        })
        .collect();
    Ok(ActivityGradient { grads })
}

/// Gradient of the energy with respect to every layer's parameters:
///
/// ```text
/// ∂F/∂W_ℓ = -(1/N) (ε_ℓ ⊙ f'_ℓ(a_ℓ))^T z_{ℓ-1}
/// ∂F/∂b_ℓ = -(1/N) Σ_batch (ε_ℓ ⊙ f'_ℓ(a_ℓ))
/// ```
pub fn param_grad<F: Real>(
    network: &Network<F>,
    state: &ActivityState<F>,
) -> Result<ParamGradient<F>> {
    network.check_state(state)?;
    let n = state.batch_size();
    if n == 0 {
        return Err(Error::InvalidArgument("batch must be at least 1".into()));
    }
    let terms = layer_terms(network, state);
    let inv_n = F::from_f64(1.0 / n as f64);
    let layers = terms
        .iter()
        .enumerate()
        .map(|(idx, t)| {
            let act = network.layer(idx).activation();
            let delta = &t.error * &act.derivative_matrix(&t.preact);
            let weight = delta.t().dot(state.activity(idx)) * (-inv_n);
            let bias = delta.sum_axis(Axis(0)) * (-inv_n);
            LayerGradient { weight, bias }
        })
        .collect();
    Ok(ParamGradient { layers })
}

/// Energies of a generator/amortiser pair.
///
/// The amortiser runs in the opposite direction: its level-`k` target is the
/// generator's activity `z_{L-k}`, so its energy is the ordinary energy of the
/// amortiser network evaluated at the generator's activities in reverse
/// order, with `y` at the bottom and `x` (or the generator's input activity)
/// at the top.
pub fn hpc_energy<F: Real>(
    generator: &Network<F>,
    amortiser: &Network<F>,
    gen_state: &ActivityState<F>,
    y: &Array2<F>,
    x: Option<&Array2<F>>,
) -> Result<(EnergyReport, EnergyReport)> {
    check_mirrored(generator, amortiser)?;
    let generator_report = pc_energy(generator, gen_state)?;
    let amortiser_state = amortiser_target_state(gen_state, y, x)?;
    let amortiser_report = pc_energy(amortiser, &amortiser_state)?;
    Ok((generator_report, amortiser_report))
}

/// Builds the amortiser's target state from a generator state: activities in
/// reverse order, with the boundaries replaced by `y` and (optionally) `x`.
pub(crate) fn amortiser_target_state<F: Real>(
    gen_state: &ActivityState<F>,
    y: &Array2<F>,
    x: Option<&Array2<F>>,
) -> Result<ActivityState<F>> {
    let levels = gen_state.num_levels();
    let mut activities: Vec<Array2<F>> = gen_state.activities().iter().rev().cloned().collect();
    if y.dim() != activities[0].dim() {
        return Err(Error::ShapeMismatch {
            layer: levels - 1,
            details: format!(
                "target is {:?}, generator output level is {:?}",
                y.dim(),
                activities[0].dim()
            ),
        });
    }
    activities[0] = y.clone();
    if let Some(x) = x {
        if x.dim() != activities[levels - 1].dim() {
            return Err(Error::ShapeMismatch {
                layer: 0,
                details: format!(
                    "input is {:?}, generator input level is {:?}",
                    x.dim(),
                    activities[levels - 1].dim()
                ),
            });
        }
        activities[levels - 1] = x.clone();
    }
    ActivityState::new(activities, true, true)
}

pub(crate) fn check_mirrored<F: Real>(
    generator: &Network<F>,
    amortiser: &Network<F>,
) -> Result<()> {
    let mut mirrored = generator.dims();
    mirrored.reverse();
    if amortiser.dims() != mirrored {
        return Err(Error::MirrorMismatch {
            generator: generator.dims(),
            amortiser: amortiser.dims(),
        });
    }
    Ok(())
}
