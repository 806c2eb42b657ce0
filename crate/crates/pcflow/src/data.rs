//! Dataset ingestion: IDX image files, synthetic generators, label encoding
//! and seeded batching.
//!
//! IDX layout, exactly as consumed here: a 4-byte big-endian magic
//! (`0x00000803` for images, `0x00000801` for labels), big-endian 32-bit
//! dimension sizes (count, rows, cols for images; count for labels), then raw
//! unsigned bytes. Pixels are scaled to `[0, 1]` by dividing by 255.

use std::fs;
use std::io::Cursor;
use std::path::Path;

use byteorder::{BigEndian, ReadBytesExt};
use ndarray::{Array2, Axis};
use rand::Rng;

use crate::error::{Error, Result};
use crate::network::RngSeed;
use crate::real::Real;

pub const IDX_IMAGE_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABEL_MAGIC: u32 = 0x0000_0801;

/// Noise standard deviation used by [`synthetic_classification`].
pub const DEFAULT_BLOB_NOISE: f64 = 0.25;

/// An in-memory classification dataset. Inputs are `f64` and converted to the
/// training precision on demand.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    inputs: Array2<f64>,
    labels: Vec<usize>,
    num_classes: usize,
}

impl Dataset {
    pub fn new(inputs: Array2<f64>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if labels.len() != inputs.nrows() {
            return Err(Error::InvalidArgument(format!(
                "{} labels for {} inputs",
                labels.len(),
                inputs.nrows()
            )));
        }
        if num_classes == 0 {
            return Err(Error::InvalidArgument("num_classes must be positive".into()));
        }
        if inputs.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("inputs must be finite".into()));
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::LabelOutOfRange {
                label,
                num_classes,
            });
        }
        Ok(Self {
            inputs,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn inputs(&self) -> &Array2<f64> {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn inputs_as<F: Real>(&self) -> Array2<F> {
        self.inputs.mapv(F::from_f64)
    }

    /// The first `n` samples (all of them if `n` exceeds the length).
    pub fn take(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        Dataset {
            inputs: self.inputs.slice_axis(Axis(0), (0..n).into()).to_owned(),
            labels: self.labels[..n].to_vec(),
            num_classes: self.num_classes,
        }
    }
}

/// Loads an IDX image/label pair into a dataset.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let read = |path: &Path| -> Result<Vec<u8>> {
        fs::read(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })
    };
    let images_bytes = read(images_path)?;
    let labels_bytes = read(labels_path)?;
    let (inputs, image_count) =
        parse_idx_images(&images_bytes, &images_path.display().to_string())?;
    let labels = parse_idx_labels(&labels_bytes, &labels_path.display().to_string())?;
    if image_count != labels.len() {
        return Err(Error::IdxCountMismatch {
            images: image_count,
            labels: labels.len(),
        });
    }
    let num_classes = labels.iter().max().map_or(1, |&m| m + 1);
    Dataset::new(inputs, labels, num_classes)
}

/// Parses IDX image bytes into a `(count, rows*cols)` matrix of pixels in
/// `[0, 1]`. `origin` names the source in error messages.
pub fn parse_idx_images(bytes: &[u8], origin: &str) -> Result<(Array2<f64>, usize)> {
    let mut cursor = Cursor::new(bytes);
    let truncated = |details: &str| Error::IdxTruncated {
        origin: origin.to_string(),
        details: details.to_string(),
    };
    let magic = cursor
        .read_u32::<BigEndian>()
        .map_err(|_| truncated("missing magic"))?;
    if magic != IDX_IMAGE_MAGIC {
        return Err(Error::IdxBadMagic {
            origin: origin.to_string(),
            expected: IDX_IMAGE_MAGIC,
            found: magic,
        });
    }
    let count = cursor
        .read_u32::<BigEndian>()
        .map_err(|_| truncated("missing image count"))? as usize;
    let rows = cursor
        .read_u32::<BigEndian>()
        .map_err(|_| truncated("missing row count"))? as usize;
    let cols = cursor
        .read_u32::<BigEndian>()
        .map_err(|_| truncated("missing column count"))? as usize;
    let pixels_per_image = rows
        .checked_mul(cols)
        .ok_or_else(|| truncated("rows × cols overflows"))?;
    let expected = count
        .checked_mul(pixels_per_image)
        .ok_or_else(|| truncated("count × rows × cols overflows"))?;
    let body = &bytes[cursor.position() as usize..];
    if body.len() != expected {
        return Err(truncated(&format!(
            "header promises {expected} pixel bytes, file holds {}",
            body.len()
        )));
    }
    if count > 0 && pixels_per_image == 0 {
        return Err(truncated("zero-sized images"));
    }
    let data: Vec<f64> = body.iter().map(|&b| b as f64 / 255.0).collect();
    let inputs = Array2::from_shape_vec((count, pixels_per_image), data)
        .map_err(|e| truncated(&e.to_string()))?;
    Ok((inputs, count))
}

/// Parses IDX label bytes into class ids.
pub fn parse_idx_labels(bytes: &[u8], origin: &str) -> Result<Vec<usize>> {
    let mut cursor = Cursor::new(bytes);
    let truncated = |details: &str| Error::IdxTruncated {
        origin: origin.to_string(),
        details: details.to_string(),
    };
    let magic = cursor
        .read_u32::<BigEndian>()
        .map_err(|_| truncated("missing magic"))?;
    if magic != IDX_LABEL_MAGIC {
        return Err(Error::IdxBadMagic {
            origin: origin.to_string(),
            expected: IDX_LABEL_MAGIC,
            found: magic,
        });
    }
    let count = cursor
        .read_u32::<BigEndian>()
        .map_err(|_| truncated("missing label count"))? as usize;
    let body = &bytes[cursor.position() as usize..];
    if body.len() != count {
        return Err(truncated(&format!(
            "header promises {count} label bytes, file holds {}",
            body.len()
        )));
    }
    Ok(body.iter().map(|&b| b as usize).collect())
}

/// Gaussian blobs, one per class, with unit-separated means and noise
/// standard deviation [`DEFAULT_BLOB_NOISE`]. Labels are balanced
/// round-robin. Deterministic per seed.
pub fn synthetic_classification(
    n: usize,
    d: usize,
    classes: usize,
    seed: RngSeed,
) -> Result<Dataset> {
    synthetic_blobs(n, d, classes, DEFAULT_BLOB_NOISE, seed)
}

/// [`synthetic_classification`] with an explicit noise level.
pub fn synthetic_blobs(
    n: usize,
    d: usize,
    classes: usize,
    noise: f64,
    seed: RngSeed,
) -> Result<Dataset> {
    if classes == 0 || d == 0 {
        return Err(Error::InvalidArgument(
            "need at least one class and one feature".into(),
        ));
    }
    if n < classes {
        return Err(Error::InvalidArgument(format!(
            "need at least one sample per class ({n} < {classes})"
        )));
    }
    if !(noise > 0.0) || !noise.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "noise must be positive and finite, got {noise}"
        )));
    }
    // Class c sits at coordinate c mod d with magnitude 1 + floor(c/d), so
    // any two means are at least distance 1 apart.
    let mean = |class: usize, coord: usize| -> f64 {
        if coord == class % d {
            1.0 + (class / d) as f64
        } else {
            0.0
        }
    };
    let mut rng = seed.rng();
    let mut inputs = Array2::zeros((n, d));
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % classes;
        labels.push(class);
        for j in 0..d {
            inputs[[i, j]] =
                mean(class, j) + noise * rng.sample::<f64, _>(rand_distr::StandardNormal);
        }
    }
    Dataset::new(inputs, labels, classes)
}

/// One-hot encodes integer labels into an `N × num_classes` matrix.
pub fn one_hot<F: Real>(labels: &[usize], num_classes: usize) -> Result<Array2<F>> {
    if let Some(&label) = labels.iter().find(|&&l| l >= num_classes) {
        return Err(Error::LabelOutOfRange {
            label,
            num_classes,
        });
    }
    let mut out = Array2::zeros((labels.len(), num_classes));
    for (i, &label) in labels.iter().enumerate() {
        out[[i, label]] = F::one();
    }
    Ok(out)
}

/// Row-wise argmax with ties broken toward the lowest index.
pub fn argmax_rows<F: Real>(matrix: &Array2<F>) -> Vec<usize> {
    matrix
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0usize;
            for (j, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// A seeded Fisher-Yates permutation of `0..n`.
pub fn shuffled_indices(n: usize, seed: RngSeed) -> Vec<usize> {
    let mut indices: Vec<usize> = (0..n).collect();
    let mut rng = seed.rng();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        indices.swap(i, j);
    }
    indices
}

/// Batching plan: fixed-size batches over a seeded shuffle, with the
/// remainder dropped iff `drop_last`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BatchPlan {
    pub batch_size: usize,
    pub seed: RngSeed,
    pub drop_last: bool,
}

/// Splits a dataset into `(inputs, one-hot targets)` minibatches.
pub fn batches<F: Real>(
    dataset: &Dataset,
    plan: &BatchPlan,
) -> Result<Vec<(Array2<F>, Array2<F>)>> {
    if plan.batch_size == 0 {
        return Err(Error::InvalidArgument("batch_size must be at least 1".into()));
    }
    let indices = shuffled_indices(dataset.len(), plan.seed);
    let inputs = dataset.inputs_as::<F>();
    let targets = one_hot::<F>(dataset.labels(), dataset.num_classes())?;
    let mut out = Vec::new();
    for chunk in indices.chunks(plan.batch_size) {
        if chunk.len() < plan.batch_size && plan.drop_last {
            break;
        }
        out.push((inputs.select(Axis(0), chunk), targets.select(Axis(0), chunk)));
    }
    Ok(out)
}
