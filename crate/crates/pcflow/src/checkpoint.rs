//! Network checkpoint serialization.
//!
//! Layout (stable across versions, all multi-byte values little-endian):
//!
//! ```text
//! offset  size  field
//! 0       8     magic b"PCFLOW01"
//! 8       4     u32 L, number of layers
//! 12      4     u32 d_0, input width
//! then per layer ℓ = 1..L:
//!         4     u32 d_ℓ, output width
//!         1     u8 activation tag (0 identity, 1 tanh, 2 relu, 3 leaky_relu)
//!         8     f64 activation parameter (leaky slope; 0 otherwise)
//! then per layer ℓ = 1..L:
//!         d_ℓ·d_{ℓ-1}·8   row-major f64 weights
//!         d_ℓ·8           f64 biases
//! ```
//!
//! Weights are always written as 64-bit floats; loading into an `f32`
//! network rounds them.

use std::fs;
use std::io::Cursor;
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{Array1, Array2};

use crate::error::{Error, Result};
use crate::network::{Activation, Layer, Network};
use crate::real::Real;

const MAGIC: &[u8; 8] = b"PCFLOW01";

fn activation_tag(activation: Activation) -> (u8, f64) {
    match activation {
        Activation::Identity => (0, 0.0),
        Activation::Tanh => (1, 0.0),
        Activation::Relu => (2, 0.0),
        Activation::LeakyRelu { slope } => (3, slope),
    }
}

fn activation_from_tag(tag: u8, param: f64) -> Result<Activation> {
    match tag {
        0 => Ok(Activation::Identity),
        1 => Ok(Activation::Tanh),
        2 => Ok(Activation::Relu),
        3 => Ok(Activation::LeakyRelu { slope: param }),
        other => Err(Error::Checkpoint(format!("unknown activation tag {other}"))),
    }
}

/// Serializes a network to the checkpoint format.
pub fn save_network<F: Real>(network: &Network<F>, path: &Path) -> Result<()> {
    let mut buf: Vec<u8> = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.write_u32::<LittleEndian>(network.num_layers() as u32)
        .expect("in-memory write");
    buf.write_u32::<LittleEndian>(network.input_dim() as u32)
        .expect("in-memory write");
    for layer in network.layers() {
        buf.write_u32::<LittleEndian>(layer.output_dim() as u32)
            .expect("in-memory write");
        let (tag, param) = activation_tag(layer.activation());
        buf.push(tag);
        buf.write_f64::<LittleEndian>(param).expect("in-memory write");
    }
    for layer in network.layers() {
        for &w in layer.weight().iter() {
            buf.write_f64::<LittleEndian>(w.to_f64())
                .expect("in-memory write");
        }
        for &b in layer.bias().iter() {
            buf.write_f64::<LittleEndian>(b.to_f64())
                .expect("in-memory write");
        }
    }
    fs::write(path, buf).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Loads a network from the checkpoint format.
pub fn load_network<F: Real>(path: &Path) -> Result<Network<F>> {
    let bytes = fs::read(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    let short = |what: &str| Error::Checkpoint(format!("unexpected end of file in {what}"));

    if bytes.len() < 8 || &bytes[..8] != MAGIC {
        return Err(Error::Checkpoint(
            "missing PCFLOW01 magic; not a checkpoint file".into(),
        ));
    }
    let mut cursor = Cursor::new(&bytes[8..]);
    let num_layers = cursor
        .read_u32::<LittleEndian>()
        .map_err(|_| short("header"))? as usize;
    if num_layers == 0 {
        return Err(Error::Checkpoint("zero layers".into()));
    }
    let input_dim = cursor
        .read_u32::<LittleEndian>()
        .map_err(|_| short("header"))? as usize;

    let mut dims = vec![input_dim];
    let mut activations = Vec::with_capacity(num_layers);
    for _ in 0..num_layers {
        let width = cursor
            .read_u32::<LittleEndian>()
            .map_err(|_| short("layer table"))? as usize;
        let tag = cursor.read_u8().map_err(|_| short("layer table"))?;
        let param = cursor
            .read_f64::<LittleEndian>()
            .map_err(|_| short("layer table"))?;
        dims.push(width);
        activations.push(activation_from_tag(tag, param)?);
    }

    // Validate the promised payload size before allocating anything.
    let mut expected = 0usize;
    for w in dims.windows(2) {
        let params = w[0]
            .checked_mul(w[1])
            .and_then(|p| p.checked_add(w[1]))
            .ok_or_else(|| Error::Checkpoint("dimension product overflows".into()))?;
        expected = expected
            .checked_add(params)
            .ok_or_else(|| Error::Checkpoint("dimension product overflows".into()))?;
    }
    let remaining = bytes.len() - 8 - cursor.position() as usize;
    let expected_bytes = expected
        .checked_mul(8)
        .ok_or_else(|| Error::Checkpoint("dimension product overflows".into()))?;
    if remaining != expected_bytes {
        return Err(Error::Checkpoint(format!(
            "header promises {expected_bytes} parameter bytes, file holds {remaining}"
        )));
    }

    let mut layers = Vec::with_capacity(num_layers);
    for (idx, w) in dims.windows(2).enumerate() {
        let (d_in, d_out) = (w[0], w[1]);
        let mut weight = Vec::with_capacity(d_in * d_out);
        for _ in 0..d_in * d_out {
            weight.push(F::from_f64(
                cursor
                    .read_f64::<LittleEndian>()
                    .map_err(|_| short("weights"))?,
            ));
        }
        let mut bias = Vec::with_capacity(d_out);
        for _ in 0..d_out {
            bias.push(F::from_f64(
                cursor
                    .read_f64::<LittleEndian>()
                    .map_err(|_| short("biases"))?,
            ));
        }
        let weight = Array2::from_shape_vec((d_out, d_in), weight)
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        layers.push(Layer::new(weight, Array1::from_vec(bias), activations[idx])?);
    }
    Network::from_layers(input_dim, layers)
}
