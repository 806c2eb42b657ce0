use thiserror::Error;

use crate::solver::SolveStats;

pub type Result<T> = std::result::Result<T, Error>;

/// Error type for all fallible operations in the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// A matrix or vector had the wrong shape. `layer` is the 1-based layer
    /// number where the mismatch was detected (0 for the input level).
    #[error("shape mismatch at layer {layer}: {details}")]
    ShapeMismatch { layer: usize, details: String },

    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// The integrator produced non-finite activity values. `step` is the
    /// index of the offending step within the enclosing solve (0 when the
    /// step was taken outside of `solve_inference`).
    #[error("inference diverged at step {step}: non-finite activity values")]
    Divergence { step: usize },

    /// The step budget ran out before `t_max` was reached. Carries the
    /// statistics accumulated up to that point.
    #[error(
        "step budget of {max_steps} exhausted at t={t:.6} (accepted {a}, rejected {r})",
        t = stats.t_reached,
        a = stats.accepted_steps,
        r = stats.rejected_steps
    )]
    Budget { max_steps: usize, stats: SolveStats },

    #[error("inference requires a clamped output layer")]
    OutputNotClamped,

    #[error("not a linear network: layer {layer} uses {activation}")]
    NotLinear { layer: usize, activation: String },

    #[error("closed-form energy requires zero biases, layer {layer} has a nonzero bias")]
    NonzeroBias { layer: usize },

    #[error("matrix is not positive definite (pivot {pivot:e} at row {row})")]
    NotPositiveDefinite { row: usize, pivot: f64 },

    #[error("amortiser dims {amortiser:?} do not mirror generator dims {generator:?}")]
    MirrorMismatch {
        generator: Vec<usize>,
        amortiser: Vec<usize>,
    },

    #[error("{origin}: bad IDX magic: expected {expected:#010x}, found {found:#010x}")]
    IdxBadMagic {
        origin: String,
        expected: u32,
        found: u32,
    },

    #[error("{origin}: truncated or malformed IDX data: {details}")]
    IdxTruncated { origin: String, details: String },

    #[error("IDX count mismatch: {images} images vs {labels} labels")]
    IdxCountMismatch { images: usize, labels: usize },

    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },

    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },

    #[error("{path}:{line}: malformed CSV: {details}")]
    CsvFormat {
        path: String,
        line: usize,
        details: String,
    },

    #[error("checkpoint format error: {0}")]
    Checkpoint(String),
}
