//! Parameter optimizers applied at the inference equilibrium.
//!
//! Optimizers are functional: they take the current network plus gradients
//! and return fresh values, never mutating their inputs.

use crate::energy::ParamGradient;
use crate::error::{Error, Result};
use crate::network::Network;
use crate::real::Real;

pub const DEFAULT_LEARNING_RATE: f64 = 1e-3;
pub const DEFAULT_ADAM_BETA1: f64 = 0.9;
pub const DEFAULT_ADAM_BETA2: f64 = 0.999;
pub const DEFAULT_ADAM_EPS: f64 = 1e-8;

/// Optimizer family and hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OptimKind {
    Sgd {
        lr: f64,
    },
    Adam {
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
    },
}

impl OptimKind {
    pub fn sgd(lr: f64) -> Self {
        OptimKind::Sgd { lr }
    }

    /// Adam with the usual constants.
    pub fn adam(lr: f64) -> Self {
        OptimKind::Adam {
            lr,
            beta1: DEFAULT_ADAM_BETA1,
            beta2: DEFAULT_ADAM_BETA2,
            eps: DEFAULT_ADAM_EPS,
        }
    }

    pub fn learning_rate(&self) -> f64 {
        match *self {
            OptimKind::Sgd { lr } | OptimKind::Adam { lr, .. } => lr,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            OptimKind::Sgd { .. } => "sgd",
            OptimKind::Adam { .. } => "adam",
        }
    }
}

/// Optimizer state: step counter plus, for Adam, first and second moment
/// accumulators whose shapes mirror the network exactly.
#[derive(Clone, Debug)]
pub struct OptimState<F: Real> {
    kind: OptimKind,
    step_count: u64,
    first_moment: Option<ParamGradient<F>>,
    second_moment: Option<ParamGradient<F>>,
}

impl<F: Real> OptimState<F> {
    pub fn new(kind: OptimKind, network: &Network<F>) -> Self {
        let moments = matches!(kind, OptimKind::Adam { .. })
            .then(|| ParamGradient::zeros_like(network));
        Self {
            kind,
            step_count: 0,
            first_moment: moments.clone(),
            second_moment: moments,
        }
    }

    pub fn kind(&self) -> OptimKind {
        self.kind
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }
}

/// `W ← W - lr · ∂F/∂W` (and biases likewise).
pub fn sgd_update<F: Real>(
    network: &Network<F>,
    grads: &ParamGradient<F>,
    lr: f64,
) -> Result<Network<F>> {
    if !(lr > 0.0) || !lr.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "learning rate must be positive and finite, got {lr}"
        )));
    }
    grads.check_shapes(network)?;
    let step = F::from_f64(lr);
    Ok(network.map_params(|idx, layer| {
        let g = grads.layer(idx);
        (
            layer.weight() - &(&g.weight * step),
            layer.bias() - &(&g.bias * step),
        )
    }))
}

/// One Adam step with bias correction:
///
/// ```text
/// m ← β1 m + (1-β1) g        v ← β2 v + (1-β2) g²
/// W ← W - lr · (m / (1-β1^t)) / (sqrt(v / (1-β2^t)) + ε)
/// ```
pub fn adam_update<F: Real>(
    network: &Network<F>,
    grads: &ParamGradient<F>,
    state: &OptimState<F>,
) -> Result<(Network<F>, OptimState<F>)> {
    let OptimKind::Adam {
        lr,
        beta1,
        beta2,
        eps,
    } = state.kind
    else {
        return Err(Error::InvalidArgument(
            "adam_update called with a non-Adam optimizer state".into(),
        ));
    };
    grads.check_shapes(network)?;
    let (m_prev, v_prev) = (
        state.first_moment.as_ref().expect("adam state has moments"),
        state
            .second_moment
            .as_ref()
            .expect("adam state has moments"),
    );

    let t = state.step_count + 1;
    let b1 = F::from_f64(beta1);
    let b2 = F::from_f64(beta2);
    let one_m_b1 = F::from_f64(1.0 - beta1);
    let one_m_b2 = F::from_f64(1.0 - beta2);
    let bc1 = F::from_f64(1.0 - beta1.powi(t as i32));
    let bc2 = F::from_f64(1.0 - beta2.powi(t as i32));
    let lr_f = F::from_f64(lr);
    let eps_f = F::from_f64(eps);

    let mut m_layers = Vec::with_capacity(network.num_layers());
    let mut v_layers = Vec::with_capacity(network.num_layers());
    for (idx, g) in grads.layers().iter().enumerate() {
        let m = crate::energy::LayerGradient {
            weight: &m_prev.layer(idx).weight * b1 + &g.weight * one_m_b1,
            bias: &m_prev.layer(idx).bias * b1 + &g.bias * one_m_b1,
        };
        let v = crate::energy::LayerGradient {
            weight: &v_prev.layer(idx).weight * b2 + g.weight.mapv(|x| x * x) * one_m_b2,
            bias: &v_prev.layer(idx).bias * b2 + g.bias.mapv(|x| x * x) * one_m_b2,
        };
        m_layers.push(m);
        v_layers.push(v);
    }
    let m_new = ParamGradient::new(m_layers);
    let v_new = ParamGradient::new(v_layers);

    let network = network.map_params(|idx, layer| {
        let m = m_new.layer(idx);
        let v = v_new.layer(idx);
        let dw = m
            .weight
            .mapv(|x| x / bc1)
            / &(v.weight.mapv(|x| (x / bc2).sqrt()) + eps_f);
        let db =
            m.bias.mapv(|x| x / bc1) / &(v.bias.mapv(|x| (x / bc2).sqrt()) + eps_f);
        (
            layer.weight() - &(dw * lr_f),
            layer.bias() - &(db * lr_f),
        )
    });

    let next = OptimState {
        kind: state.kind,
        step_count: t,
        first_moment: Some(m_new),
        second_moment: Some(v_new),
    };
    Ok((network, next))
}

/// Dispatches to the optimizer selected by `state.kind()`.
pub fn apply_update<F: Real>(
    network: &Network<F>,
    grads: &ParamGradient<F>,
    state: &OptimState<F>,
) -> Result<(Network<F>, OptimState<F>)> {
    match state.kind {
        OptimKind::Sgd { lr } => {
            let network = sgd_update(network, grads, lr)?;
            let next = OptimState {
                step_count: state.step_count + 1,
                ..state.clone()
            };
            Ok((network, next))
        }
        OptimKind::Adam { .. } => adam_update(network, grads, state),
    }
}
