//! Network topology, activations, activity states and deterministic
//! initialization.
//!
//! A [`Network`] is an ordered list of layers, each a dense affine map
//! followed by an elementwise activation. Activities live in an
//! [`ActivityState`]: one batch-major matrix per level `z_0 ... z_L`, with
//! clamp flags marking which boundary levels are held fixed during inference.

use ndarray::{Array1, Array2};
use rand::distr::Uniform;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::real::Real;

/// Default standard deviation for random activity initialization.
pub const DEFAULT_ACTIVITY_SCALE: f64 = 0.05;

/// Seed for every random draw in the crate.
///
/// An identical seed and an identical call sequence produce bit-identical
/// results, independent of platform.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RngSeed(pub u64);

impl RngSeed {
    pub(crate) fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }

    /// Derives an unrelated seed, for when one user-facing seed feeds several
    /// independent consumers (weight init, shuffling, activity init, ...).
    pub fn derive(self, stream: u64) -> RngSeed {
        RngSeed(
            self.0
                .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
                .rotate_left(17)
                ^ stream,
        )
    }
}

/// Elementwise activation function tag.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    Identity,
    Tanh,
    Relu,
    LeakyRelu { slope: f64 },
}

impl Activation {
    #[inline]
    pub fn apply<F: Real>(self, a: F) -> F {
        match self {
            Activation::Identity => a,
            Activation::Tanh => a.tanh(),
            Activation::Relu => {
                if a > F::zero() {
                    a
                } else {
                    F::zero()
                }
            }
            Activation::LeakyRelu { slope } => {
                if a > F::zero() {
                    a
                } else {
                    a * F::from_f64(slope)
                }
            }
        }
    }

    /// Derivative at the preactivation. `Relu` and `LeakyRelu` take their
    /// negative-side value at exactly zero.
    #[inline]
    pub fn derivative<F: Real>(self, a: F) -> F {
        match self {
            Activation::Identity => F::one(),
            Activation::Tanh => {
                let t = a.tanh();
                F::one() - t * t
            }
            Activation::Relu => {
                if a > F::zero() {
                    F::one()
                } else {
                    F::zero()
                }
            }
            Activation::LeakyRelu { slope } => {
                if a > F::zero() {
                    F::one()
                } else {
                    F::from_f64(slope)
                }
            }
        }
    }

    pub fn apply_matrix<F: Real>(self, a: &Array2<F>) -> Array2<F> {
        a.mapv(|v| self.apply(v))
    }

    pub fn derivative_matrix<F: Real>(self, a: &Array2<F>) -> Array2<F> {
        a.mapv(|v| self.derivative(v))
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::Tanh => "tanh",
            Activation::Relu => "relu",
            Activation::LeakyRelu { .. } => "leaky_relu",
        }
    }

    /// Parses `identity`, `tanh`, `relu` or `leaky_relu:SLOPE`.
    pub fn parse(s: &str) -> Option<Activation> {
        match s {
            "identity" => Some(Activation::Identity),
            "tanh" => Some(Activation::Tanh),
            "relu" => Some(Activation::Relu),
            _ => {
                let rest = s.strip_prefix("leaky_relu:")?;
                let slope: f64 = rest.parse().ok()?;
                slope.is_finite().then_some(Activation::LeakyRelu { slope })
            }
        }
    }
}

impl std::fmt::Display for Activation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Activation::LeakyRelu { slope } => write!(f, "leaky_relu:{slope}"),
            other => f.write_str(other.name()),
        }
    }
}

/// One dense layer: `z = f(input W^T + b)` with `W` of shape
/// `(output_dim, input_dim)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer<F: Real> {
    weight: Array2<F>,
    bias: Array1<F>,
    activation: Activation,
}

impl<F: Real> Layer<F> {
    pub fn new(weight: Array2<F>, bias: Array1<F>, activation: Activation) -> Result<Self> {
        if weight.nrows() != bias.len() {
            return Err(Error::ShapeMismatch {
                layer: 0,
                details: format!(
                    "weight has {} rows but bias has {} entries",
                    weight.nrows(),
                    bias.len()
                ),
            });
        }
        if weight.iter().any(|v| !v.is_finite()) || bias.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "layer parameters must be finite".to_string(),
            ));
        }
        Ok(Self {
            weight,
            bias,
            activation,
        })
    }

    /// Construction path for optimizer updates that preserve shapes.
    pub(crate) fn from_parts_unchecked(
        weight: Array2<F>,
        bias: Array1<F>,
        activation: Activation,
    ) -> Self {
        Self {
            weight,
            bias,
            activation,
        }
    }

    pub fn weight(&self) -> &Array2<F> {
        &self.weight
    }

    pub fn bias(&self) -> &Array1<F> {
        &self.bias
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.nrows()
    }

    /// `input W^T + b`, without the activation.
    pub fn preactivation(&self, input: &Array2<F>) -> Array2<F> {
        input.dot(&self.weight.t()) + &self.bias
    }

    /// `f(input W^T + b)`.
    pub fn forward(&self, input: &Array2<F>) -> Array2<F> {
        self.activation.apply_matrix(&self.preactivation(input))
    }
}

/// A feedforward network of `L >= 1` dense layers.
#[derive(Clone, Debug, PartialEq)]
pub struct Network<F: Real> {
    input_dim: usize,
    layers: Vec<Layer<F>>,
}

impl<F: Real> Network<F> {
    pub fn from_layers(input_dim: usize, layers: Vec<Layer<F>>) -> Result<Self> {
        if input_dim == 0 {
            return Err(Error::InvalidDimension("input_dim must be positive".into()));
        }
        if layers.is_empty() {
            return Err(Error::InvalidDimension(
                "a network needs at least one layer".into(),
            ));
        }
        let mut prev = input_dim;
        for (idx, layer) in layers.iter().enumerate() {
            if layer.input_dim() != prev {
                return Err(Error::ShapeMismatch {
                    layer: idx + 1,
                    details: format!(
                        "expects {} input columns but the previous level has width {}",
                        layer.input_dim(),
                        prev
                    ),
                });
            }
            prev = layer.output_dim();
        }
        Ok(Self { input_dim, layers })
    }

    /// Number of layers `L`.
    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").output_dim()
    }

    /// Level widths `[d_0, d_1, ..., d_L]` (length `L + 1`).
    pub fn dims(&self) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.layers.len() + 1);
        dims.push(self.input_dim);
        dims.extend(self.layers.iter().map(Layer::output_dim));
        dims
    }

    pub fn layers(&self) -> &[Layer<F>] {
        &self.layers
    }

    /// Layer by 0-based index (layer `idx` maps level `idx` to level `idx+1`).
    pub fn layer(&self, idx: usize) -> &Layer<F> {
        &self.layers[idx]
    }

    pub fn is_linear(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.activation() == Activation::Identity)
    }

    /// Functional parameter update: builds a new network from
    /// `f(layer_index, layer) -> (weight, bias)`, keeping activations.
    pub(crate) fn map_params(
        &self,
        mut f: impl FnMut(usize, &Layer<F>) -> (Array2<F>, Array1<F>),
    ) -> Network<F> {
        let layers = self
            .layers
            .iter()
            .enumerate()
            .map(|(idx, layer)| {
                let (weight, bias) = f(idx, layer);
                debug_assert_eq!(weight.dim(), layer.weight.dim());
                debug_assert_eq!(bias.len(), layer.bias.len());
                Layer::from_parts_unchecked(weight, bias, layer.activation)
            })
            .collect();
        Network {
            input_dim: self.input_dim,
            layers,
        }
    }

    /// Checks that `state` has the right number of levels and widths.
    pub fn check_state(&self, state: &ActivityState<F>) -> Result<()> {
        if state.num_levels() != self.num_layers() + 1 {
            return Err(Error::ShapeMismatch {
                layer: 0,
                details: format!(
                    "state has {} levels, network needs {}",
                    state.num_levels(),
                    self.num_layers() + 1
                ),
            });
        }
        for (level, width) in self.dims().into_iter().enumerate() {
            if state.activity(level).ncols() != width {
                return Err(Error::ShapeMismatch {
                    layer: level,
                    details: format!(
                        "activity has width {}, layer width is {}",
                        state.activity(level).ncols(),
                        width
                    ),
                });
            }
        }
        Ok(())
    }
}

/// Builds a network with weights drawn uniformly from
/// `[-1/sqrt(fan_in), +1/sqrt(fan_in)]` and zero biases. Deterministic for a
/// fixed seed.
pub fn init_network<F: Real>(
    dims: &[usize],
    activation: Activation,
    seed: RngSeed,
) -> Result<Network<F>> {
    if dims.len() < 2 {
        return Err(Error::InvalidDimension(
            "need at least an input and an output width".into(),
        ));
    }
    if let Some(pos) = dims.iter().position(|&d| d == 0) {
        return Err(Error::InvalidDimension(format!(
            "width 0 at position {pos}"
        )));
    }
    let mut rng = seed.rng();
    let mut layers = Vec::with_capacity(dims.len() - 1);
    for w in dims.windows(2) {
        let (fan_in, fan_out) = (w[0], w[1]);
        let bound = 1.0 / (fan_in as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound).expect("valid bounds");
        let weight =
            Array2::from_shape_simple_fn((fan_out, fan_in), || F::from_f64(rng.sample(dist)));
        let bias = Array1::zeros(fan_out);
        layers.push(Layer::new(weight, bias, activation)?);
    }
    Network::from_layers(dims[0], layers)
}

/// Per-level activities `z_0 ... z_L`, each `(batch, width)`, plus clamp
/// flags. Clamped levels are never changed by the solvers.
#[derive(Clone, Debug, PartialEq)]
pub struct ActivityState<F: Real> {
    activities: Vec<Array2<F>>,
    clamped_input: bool,
    clamped_output: bool,
}

impl<F: Real> ActivityState<F> {
    pub fn new(
        activities: Vec<Array2<F>>,
        clamped_input: bool,
        clamped_output: bool,
    ) -> Result<Self> {
        if activities.is_empty() {
            return Err(Error::InvalidDimension(
                "an activity state needs at least one level".into(),
            ));
        }
        let batch = activities[0].nrows();
        for (level, z) in activities.iter().enumerate() {
            if z.nrows() != batch {
                return Err(Error::ShapeMismatch {
                    layer: level,
                    details: format!("batch {} differs from batch {} at level 0", z.nrows(), batch),
                });
            }
        }
        Ok(Self {
            activities,
            clamped_input,
            clamped_output,
        })
    }

    pub fn activities(&self) -> &[Array2<F>] {
        &self.activities
    }

    pub fn activity(&self, level: usize) -> &Array2<F> {
        &self.activities[level]
    }

    /// Top-level activity `z_L`.
    pub fn output(&self) -> &Array2<F> {
        self.activities.last().expect("non-empty")
    }

    pub fn batch_size(&self) -> usize {
        self.activities[0].nrows()
    }

    /// Number of levels `L + 1`.
    pub fn num_levels(&self) -> usize {
        self.activities.len()
    }

    pub fn clamped_input(&self) -> bool {
        self.clamped_input
    }

    pub fn clamped_output(&self) -> bool {
        self.clamped_output
    }

    pub fn is_clamped(&self, level: usize) -> bool {
        (level == 0 && self.clamped_input)
            || (level + 1 == self.num_levels() && self.clamped_output)
    }

    pub(crate) fn free_levels(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.num_levels()).filter(|&l| !self.is_clamped(l))
    }

    /// Fixes the output level to `y` for the rest of inference.
    pub fn clamp_output(&mut self, y: &Array2<F>) -> Result<()> {
        let last = self.activities.len() - 1;
        if y.dim() != self.activities[last].dim() {
            return Err(Error::ShapeMismatch {
                layer: last,
                details: format!(
                    "target is {:?}, output level is {:?}",
                    y.dim(),
                    self.activities[last].dim()
                ),
            });
        }
        self.activities[last] = y.clone();
        self.clamped_output = true;
        Ok(())
    }

    /// Fixes the input level to `x` for the rest of inference.
    pub fn clamp_input(&mut self, x: &Array2<F>) -> Result<()> {
        if x.dim() != self.activities[0].dim() {
            return Err(Error::ShapeMismatch {
                layer: 0,
                details: format!(
                    "input is {:?}, input level is {:?}",
                    x.dim(),
                    self.activities[0].dim()
                ),
            });
        }
        self.activities[0] = x.clone();
        self.clamped_input = true;
        Ok(())
    }

    /// Replaces one level's activities. Clamp flags are unaffected; they only
    /// constrain the solvers.
    pub fn set_activity(&mut self, level: usize, values: Array2<F>) -> Result<()> {
        if values.dim() != self.activities[level].dim() {
            return Err(Error::ShapeMismatch {
                layer: level,
                details: format!(
                    "given {:?}, level holds {:?}",
                    values.dim(),
                    self.activities[level].dim()
                ),
            });
        }
        self.activities[level] = values;
        Ok(())
    }

    pub(crate) fn activity_mut(&mut self, level: usize) -> &mut Array2<F> {
        &mut self.activities[level]
    }
}

/// Runs the feedforward pass `z_ℓ = f_ℓ(z_{ℓ-1} W_ℓ^T + b_ℓ)`.
pub fn forward<F: Real>(network: &Network<F>, x: &Array2<F>) -> Result<Array2<F>> {
    if x.ncols() != network.input_dim() {
        return Err(Error::ShapeMismatch {
            layer: 0,
            details: format!(
                "input has {} columns, network expects {}",
                x.ncols(),
                network.input_dim()
            ),
        });
    }
    let mut z = x.clone();
    for layer in network.layers() {
        z = layer.forward(&z);
    }
    Ok(z)
}

/// Initializes activities with a feedforward pass from `x`. The input level
/// is clamped; the output is left free until a target is attached.
pub fn init_activities_with_ffwd<F: Real>(
    network: &Network<F>,
    x: &Array2<F>,
) -> Result<ActivityState<F>> {
    if x.ncols() != network.input_dim() {
        return Err(Error::ShapeMismatch {
            layer: 0,
            details: format!(
                "input has {} columns, network expects {}",
                x.ncols(),
                network.input_dim()
            ),
        });
    }
    let mut activities = Vec::with_capacity(network.num_layers() + 1);
    activities.push(x.clone());
    for layer in network.layers() {
        let next = layer.forward(activities.last().expect("non-empty"));
        activities.push(next);
    }
    ActivityState::new(activities, true, false)
}

/// Fills every level with i.i.d. Gaussian entries of standard deviation
/// `scale`. All levels start free; clamp the boundaries afterwards as needed.
pub fn init_activities_random<F: Real>(
    network: &Network<F>,
    batch: usize,
    seed: RngSeed,
    scale: f64,
) -> Result<ActivityState<F>> {
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "activity scale must be positive and finite, got {scale}"
        )));
    }
    if batch == 0 {
        return Err(Error::InvalidArgument("batch must be at least 1".into()));
    }
    let mut rng = seed.rng();
    let activities = network
        .dims()
        .into_iter()
        .map(|width| {
            Array2::from_shape_simple_fn((batch, width), || {
                F::from_f64(scale * rng.sample::<f64, _>(StandardNormal))
            })
        })
        .collect();
    ActivityState::new(activities, false, false)
}
