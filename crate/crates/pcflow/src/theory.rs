//! Closed-form equilibrated energy for deep linear networks.
//!
//! For a network whose activations are all `Identity` (and, for the energy
//! formula, whose biases are zero), the energy at the inference equilibrium
//! has the closed form
//!
//! ```text
//! F* = (1/2N) Σ_i (y_i - W_{L:1} x_i)^T S^{-1} (y_i - W_{L:1} x_i)
//! S  = I + Σ_{ℓ=2..L} W_{L:ℓ} W_{L:ℓ}^T,   W_{k:ℓ} = W_k ··· W_ℓ
//! ```
//!
//! a rescaled mean squared error. Since `S ⪰ I`, the linear solve against `S`
//! is always well posed; we use a Cholesky factorization rather than an
//! explicit inverse. Comparing `F*` with the numerically equilibrated energy
//! diagnoses whether inference has been run long enough.

use ndarray::Array2;

use crate::energy::pc_energy;
use crate::error::{Error, Result};
use crate::network::{init_activities_with_ffwd, Activation, Network};
use crate::solver::{solve_inference, SolverConfig};

/// The rescaling matrix `S`, symmetric positive definite with eigenvalues
/// at least 1.
#[derive(Clone, Debug, PartialEq)]
pub struct RescalingMatrix {
    matrix: Array2<f64>,
}

impl RescalingMatrix {
    pub fn matrix(&self) -> &Array2<f64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

fn require_linear(network: &Network<f64>) -> Result<()> {
    for (idx, layer) in network.layers().iter().enumerate() {
        if layer.activation() != Activation::Identity {
            return Err(Error::NotLinear {
                layer: idx + 1,
                activation: layer.activation().to_string(),
            });
        }
    }
    Ok(())
}

fn require_zero_bias(network: &Network<f64>) -> Result<()> {
    for (idx, layer) in network.layers().iter().enumerate() {
        if layer.bias().iter().any(|&b| b != 0.0) {
            return Err(Error::NonzeroBias { layer: idx + 1 });
        }
    }
    Ok(())
}

/// The weight product `W_k W_{k-1} ··· W_ℓ` of a linear network, with
/// 1-based layer numbers and `1 <= ℓ <= k <= L`.
pub fn weight_chain(network: &Network<f64>, k: usize, l: usize) -> Result<Array2<f64>> {
    require_linear(network)?;
    if !(1 <= l && l <= k && k <= network.num_layers()) {
        return Err(Error::InvalidArgument(format!(
            "need 1 <= l <= k <= {}, got l={l}, k={k}",
            network.num_layers()
        )));
    }
    let mut acc = network.layer(l - 1).weight().clone();
    for j in l..k {
        acc = network.layer(j).weight().dot(&acc);
    }
    Ok(acc)
}

/// Builds `S = I + Σ_{ℓ=2..L} W_{L:ℓ} W_{L:ℓ}^T`. For `L = 1` the sum is
/// empty and `S = I`.
pub fn rescaling_matrix(network: &Network<f64>) -> Result<RescalingMatrix> {
    require_linear(network)?;
    let dy = network.output_dim();
    let big_l = network.num_layers();
    let mut s = Array2::<f64>::eye(dy);
    // Extend W_{L:ℓ} downward from ℓ = L to ℓ = 2.
    let mut chain: Option<Array2<f64>> = None;
    for l in (2..=big_l).rev() {
        let next = match chain {
            None => network.layer(big_l - 1).weight().clone(),
            Some(c) => c.dot(network.layer(l - 1).weight()),
        };
        s = s + next.dot(&next.t());
        chain = Some(next);
    }
    // Accumulated products can be asymmetric at rounding level.
    let s = (&s + &s.t()) * 0.5;
    Ok(RescalingMatrix { matrix: s })
}

/// The equilibrated energy `F*` of a deep linear network with zero biases,
/// computed with a Cholesky solve against `S` (no explicit inverse).
pub fn linear_equilibrium_energy(
    network: &Network<f64>,
    x: &Array2<f64>,
    y: &Array2<f64>,
) -> Result<f64> {
    require_linear(network)?;
    require_zero_bias(network)?;
    if x.ncols() != network.input_dim() {
        return Err(Error::ShapeMismatch {
            layer: 0,
            details: format!(
                "x has {} columns, network expects {}",
                x.ncols(),
                network.input_dim()
            ),
        });
    }
    if y.ncols() != network.output_dim() {
        return Err(Error::ShapeMismatch {
            layer: network.num_layers(),
            details: format!(
                "y has {} columns, network outputs {}",
                y.ncols(),
                network.output_dim()
            ),
        });
    }
    if x.nrows() != y.nrows() || x.nrows() == 0 {
        return Err(Error::InvalidArgument(format!(
            "need matching non-empty batches, got {} and {}",
            x.nrows(),
            y.nrows()
        )));
    }
    let n = x.nrows();
    let product = weight_chain(network, network.num_layers(), 1)?;
    let residual = y - &x.dot(&product.t()); // N × d_y
    let s = rescaling_matrix(network)?;
    let factor = linalg::cholesky(s.matrix())?;
    let solved = linalg::cholesky_solve(&factor, &residual.t().to_owned()); // d_y × N
    let quad: f64 = residual
        .t()
        .iter()
        .zip(solved.iter())
        .map(|(&r, &z)| r * z)
        .sum();
    Ok(quad / (2.0 * n as f64))
}

/// Closed-form energy, numerically equilibrated energy, and their difference
/// for one inference run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyGap {
    pub theoretical: f64,
    pub numerical: f64,
    pub gap: f64,
}

/// Runs inference with the given solver configuration and compares the
/// resulting energy against the closed form. The gap tends to zero as the
/// horizon grows.
pub fn energy_gap(
    network: &Network<f64>,
    x: &Array2<f64>,
    y: &Array2<f64>,
    solver: &SolverConfig,
) -> Result<EnergyGap> {
    let theoretical = linear_equilibrium_energy(network, x, y)?;
    let mut state = init_activities_with_ffwd(network, x)?;
    state.clamp_output(y)?;
    let (equilibrium, _stats) = solve_inference(network, &state, solver)?;
    let numerical = pc_energy(network, &equilibrium)?.total();
    Ok(EnergyGap {
        theoretical,
        numerical,
        gap: numerical - theoretical,
    })
}

/// Dense symmetric-positive-definite helpers used by the closed form.
pub(crate) mod linalg {
    use ndarray::Array2;

    use crate::error::{Error, Result};

    /// Lower-triangular Cholesky factor of a symmetric positive definite
    /// matrix.
    pub(crate) fn cholesky(a: &Array2<f64>) -> Result<Array2<f64>> {
        let n = a.nrows();
        assert_eq!(n, a.ncols(), "cholesky needs a square matrix");
        let mut l = Array2::<f64>::zeros((n, n));
        for j in 0..n {
            let mut diag = a[[j, j]];
            for k in 0..j {
                diag -= l[[j, k] ] * l[[j, k]];
            }
            if diag <= 0.0 || !diag.is_finite() {
                return Err(Error::NotPositiveDefinite {
                    row: j,
                    pivot: diag,
                });
            }
            let d = diag.sqrt();
            l[[j, j]] = d;
            for i in j + 1..n {
                let mut v = a[[i, j]];
                for k in 0..j {
                    v -= l[[i, k]] * l[[j, k]];
                }
                l[[i, j]] = v / d;
            }
        }
        Ok(l)
    }

    /// Solves `A X = B` given the lower Cholesky factor `L` of `A`, by
    /// forward then backward substitution. `B` is `n × m`.
    pub(crate) fn cholesky_solve(l: &Array2<f64>, b: &Array2<f64>) -> Array2<f64> {
        let n = l.nrows();
        let m = b.ncols();
        assert_eq!(b.nrows(), n, "rhs rows must match the factor");
        let mut x = b.clone();
        // L y = b
        for col in 0..m {
            for i in 0..n {
                let mut v = x[[i, col]];
                for k in 0..i {
                    v -= l[[i, k]] * x[[k, col]];
                }
                x[[i, col]] = v / l[[i, i]];
            }
        }
        // L^T x = y
        for col in 0..m {
            for i in (0..n).rev() {
                let mut v = x[[i, col]];
                for k in i + 1..n {
                    v -= l[[k, i]] * x[[k, col]];
                }
                x[[i, col]] = v / l[[i, i]];
            }
        }
        x
    }
}
