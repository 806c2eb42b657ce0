//! Shared oracles and helpers for the integration tests.
//!
//! The finite-difference gradients and rank statistics here are written
//! independently of the library's analytic paths: they only consume the
//! public energy evaluation.

use ndarray::Array2;
use pcflow::{
    init_activities_random, init_network, pc_energy, Activation, ActivityState, Layer, Network,
    RngSeed,
};
use std::path::PathBuf;

/// xorshift64* stream for test data; deterministic and independent of the
/// library's RNG.
pub struct TestRng(pub u64);

impl TestRng {
    pub fn next_u64(&mut self) -> u64 {
        let mut x = self.0;
        x ^= x >> 12;
        x ^= x << 25;
        x ^= x >> 27;
        self.0 = x;
        x.wrapping_mul(0x2545F4914F6CDD1D)
    }

    /// Uniform in [-1, 1).
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
    }

    pub fn below(&mut self, n: usize) -> usize {
        (self.next_u64() % n as u64) as usize
    }

    pub fn matrix(&mut self, rows: usize, cols: usize) -> Array2<f64> {
        Array2::from_shape_simple_fn((rows, cols), || self.uniform())
    }
}

/// Central finite differences of the energy with respect to the activities
/// of one level. Clamped levels get zeros.
pub fn fd_activity_grad(
    network: &Network<f64>,
    state: &ActivityState<f64>,
    h: f64,
) -> Vec<Array2<f64>> {
    (0..state.num_levels())
        .map(|level| {
            let dim = state.activity(level).dim();
            if state.is_clamped(level) {
                return Array2::zeros(dim);
            }
            Array2::from_shape_fn(dim, |(i, j)| {
                let mut plus = state.clone();
                let mut z = plus.activity(level).clone();
                z[[i, j]] += h;
                plus.set_activity(level, z).unwrap();
                let mut minus = state.clone();
                let mut z = minus.activity(level).clone();
                z[[i, j]] -= h;
                minus.set_activity(level, z).unwrap();
                (pc_energy(network, &plus).unwrap().total()
                    - pc_energy(network, &minus).unwrap().total())
                    / (2.0 * h)
            })
        })
        .collect()
}

/// Central finite differences of the energy with respect to the parameters:
/// per layer, a weight-gradient matrix and a bias-gradient vector.
pub fn fd_param_grad(
    network: &Network<f64>,
    state: &ActivityState<f64>,
    h: f64,
) -> Vec<(Array2<f64>, Vec<f64>)> {
    let energy_with = |mutate: &dyn Fn(&mut Vec<Layer<f64>>)| {
        let mut layers: Vec<Layer<f64>> = network.layers().to_vec();
        mutate(&mut layers);
        let net = Network::from_layers(network.input_dim(), layers).unwrap();
        pc_energy(&net, state).unwrap().total()
    };
    (0..network.num_layers())
        .map(|l| {
            let layer = network.layer(l);
            let weight = Array2::from_shape_fn(layer.weight().dim(), |(i, j)| {
                let bump = |delta: f64| {
                    energy_with(&|layers: &mut Vec<Layer<f64>>| {
                        let mut w = layers[l].weight().clone();
                        w[[i, j]] += delta;
                        layers[l] =
                            Layer::new(w, layers[l].bias().clone(), layers[l].activation())
                                .unwrap();
                    })
                };
                (bump(h) - bump(-h)) / (2.0 * h)
            });
            let bias = (0..layer.bias().len())
                .map(|i| {
                    let bump = |delta: f64| {
                        energy_with(&|layers: &mut Vec<Layer<f64>>| {
                            let mut b = layers[l].bias().clone();
                            b[i] += delta;
                            layers[l] =
                                Layer::new(layers[l].weight().clone(), b, layers[l].activation())
                                    .unwrap();
                        })
                    };
                    (bump(h) - bump(-h)) / (2.0 * h)
                })
                .collect();
            (weight, bias)
        })
        .collect()
}

/// Gradient check against the finite-difference oracle. The absolute term
/// covers the oracle's own resolution (roundoff ~ eps·E/h plus O(h²)
/// truncation); above it the comparison is the relative criterion.
pub fn gradients_match(analytic: f64, reference: f64, rtol: f64, atol: f64) -> bool {
    let scale = analytic.abs().max(reference.abs());
    (analytic - reference).abs() <= atol + rtol * scale
}

/// A small random network cycling through every activation kind.
pub fn random_small_network(rng: &mut TestRng, case: usize) -> Network<f64> {
    let activations = [
        Activation::Identity,
        Activation::Tanh,
        Activation::Relu,
        Activation::LeakyRelu { slope: 0.1 },
    ];
    let num_layers = 1 + case % 4;
    let dims: Vec<usize> = (0..=num_layers).map(|_| 1 + rng.below(8)).collect();
    init_network(&dims, activations[case % 4], RngSeed(rng.next_u64())).unwrap()
}

/// A random activity state for the network cycling through clamp patterns.
pub fn random_state(
    network: &Network<f64>,
    rng: &mut TestRng,
    case: usize,
) -> ActivityState<f64> {
    let batch = 1 + rng.below(4);
    let mut state =
        init_activities_random(network, batch, RngSeed(rng.next_u64()), 0.9).unwrap();
    let (clamp_in, clamp_out) = [(false, false), (true, false), (false, true), (true, true)]
        [case % 4];
    if clamp_in {
        let x = rng.matrix(batch, network.input_dim());
        state.clamp_input(&x).unwrap();
    }
    if clamp_out {
        let y = rng.matrix(batch, network.output_dim());
        state.clamp_output(&y).unwrap();
    }
    state
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let rx = average_ranks(xs);
    let ry = average_ranks(ys);
    pearson(&rx, &ry)
}

fn average_ranks(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; n];
    let mut idx = 0;
    while idx < n {
        let mut j = idx;
        while j + 1 < n && values[order[j + 1]] == values[order[idx]] {
            j += 1;
        }
        let rank = (idx + j) as f64 / 2.0 + 1.0;
        for &k in &order[idx..=j] {
            ranks[k] = rank;
        }
        idx = j + 1;
    }
    ranks
}

fn pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        cov += (x - mx) * (y - my);
        vx += (x - mx) * (x - mx);
        vy += (y - my) * (y - my);
    }
    if vx == 0.0 || vy == 0.0 {
        return 0.0;
    }
    cov / (vx * vy).sqrt()
}

/// Directory holding real MNIST IDX files, when one is available. Checked so
/// the protocol tests can run on the real dataset where present and fall
/// back to the synthetic generator otherwise.
pub fn mnist_dir() -> Option<PathBuf> {
    let dir = std::env::var_os("PCFLOW_DATA_DIR").map(PathBuf::from)?;
    for candidate in [dir.clone(), dir.join("mnist")] {
        if candidate.join("train-images-idx3-ubyte").exists() {
            return Some(candidate);
        }
    }
    None
}

/// CLI arguments selecting the dataset for protocol-level tests.
pub fn dataset_args() -> Vec<String> {
    match mnist_dir() {
        Some(dir) => vec![
            "--dataset".into(),
            "mnist".into(),
            "--data-dir".into(),
            dir.display().to_string(),
        ],
        None => vec!["--dataset".into(), "synthetic".into()],
    }
}
