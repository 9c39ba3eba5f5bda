//! Bias-free ReLU multilayer perceptron with a per-row L2 norm cap.
//!
//! `h(x) = W_K relu(... W_2 relu(W_1 x))`: ReLU after every layer except the
//! last, no bias terms, and every row of every `W_k` has Euclidean norm at
//! most `w_max`.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Result, RldError};

const CHECKPOINT_FORMAT: &str = "nrld-mlp";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    /// `weights[k]` has shape `layer_sizes[k + 1] x layer_sizes[k]`.
    pub weights: Vec<DMatrix<f64>>,
    pub w_max: f64,
    /// Widths from input to output, inclusive.
    pub layer_sizes: Vec<usize>,
    /// Seed the parameters were initialized from, if any.
    pub seed: Option<u64>,
}

/// Per-layer activations recorded by [`forward`] for use in [`vjp`].
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub input: DVector<f64>,
    pub pre: Vec<DVector<f64>>,
    /// ReLU of `pre` for hidden layers; equal to `pre` for the output layer.
    pub post: Vec<DVector<f64>>,
}

/// Full layer widths for `input -> hidden... -> output`.
pub fn layer_widths(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut v = Vec::with_capacity(hidden.len() + 2);
    v.push(input);
    v.extend_from_slice(hidden);
    v.push(output);
    v
}

impl MlpParams {
    pub fn zeros(layer_sizes: &[usize], w_max: f64) -> Result<Self> {
        check_sizes(layer_sizes, w_max)?;
        let weights = layer_sizes
            .windows(2)
            .map(|w| DMatrix::zeros(w[1], w[0]))
            .collect();
        Ok(MlpParams {
            weights,
            w_max,
            layer_sizes: layer_sizes.to_vec(),
            seed: None,
        })
    }

    pub fn n_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn max_row_norm(&self) -> f64 {
        self.weights
            .iter()
            .flat_map(|w| w.row_iter().map(|r| r.norm()).collect::<Vec<_>>())
            .fold(0.0, f64::max)
    }

    pub fn n_params(&self) -> usize {
        self.weights.iter().map(|w| w.len()).sum()
    }

    /// Rescales in place every row whose norm exceeds `w_max`.
    pub fn project_rows_mut(&mut self) {
        let cap = self.w_max;
        for w in &mut self.weights {
            for mut row in w.row_iter_mut() {
                let norm = row.norm();
                if norm > cap {
                    row *= cap / norm;
                    // Rounding can leave the norm an ulp above the cap, which
                    // would make a second projection move the row again.
                    while row.norm() > cap {
                        row *= 1.0 - f64::EPSILON;
                    }
                }
            }
        }
    }

    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, ForwardTrace)> {
        forward(self, x)
    }

    /// Output only, without keeping a trace.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(RldError::Dimension(format!(
                "input has length {}, network expects {}",
                x.len(),
                self.input_dim()
            )));
        }
        let mut a = DVector::from_column_slice(x);
        let last = self.weights.len() - 1;
        for (k, w) in self.weights.iter().enumerate() {
            a = w * a;
            if k < last {
                a.apply(|v| *v = v.max(0.0));
            }
        }
        Ok(a.as_slice().to_vec())
    }
}

fn check_sizes(layer_sizes: &[usize], w_max: f64) -> Result<()> {
    if layer_sizes.len() < 2 {
        return Err(RldError::InvalidArgument(
            "a network needs at least one weight matrix".into(),
        ));
    }
    if layer_sizes.contains(&0) {
        return Err(RldError::InvalidArgument(format!(
            "layer widths must be positive: {layer_sizes:?}"
        )));
    }
    if !(w_max.is_finite() && w_max > 0.0) {
        return Err(RldError::InvalidArgument(format!("w_max must be positive, got {w_max}")));
    }
    Ok(())
}

/// He-style Gaussian initialization (`N(0, 2 / fan_in)`), then projection
/// onto the row-norm ball.
pub fn init_params(layer_sizes: &[usize], w_max: f64, seed: u64) -> Result<MlpParams> {
    check_sizes(layer_sizes, w_max)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights = layer_sizes
        .windows(2)
        .map(|w| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let std = (2.0 / fan_in as f64).sqrt();
            let mut m = DMatrix::zeros(fan_out, fan_in);
            // Fill row-major so the draw order is independent of storage.
            for i in 0..fan_out {
                for j in 0..fan_in {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    m[(i, j)] = std * z;
                }
            }
            m
        })
        .collect();
    let mut params = MlpParams {
        weights,
        w_max,
        layer_sizes: layer_sizes.to_vec(),
        seed: Some(seed),
    };
    params.project_rows_mut();
    Ok(params)
}

pub fn forward(params: &MlpParams, x: &[f64]) -> Result<(Vec<f64>, ForwardTrace)> {
    if x.len() != params.input_dim() {
        return Err(RldError::Dimension(format!(
            "input has length {}, network expects {}",
            x.len(),
            params.input_dim()
        )));
    }
    let input = DVector::from_column_slice(x);
    let last = params.weights.len() - 1;
    let mut pre = Vec::with_capacity(params.weights.len());
    let mut post: Vec<DVector<f64>> = Vec::with_capacity(params.weights.len());
    for (k, w) in params.weights.iter().enumerate() {
        let z = if k == 0 { w * &input } else { w * &post[k - 1] };
        let a = if k < last { z.map(|v| v.max(0.0)) } else { z.clone() };
        pre.push(z);
        post.push(a);
    }
    let u = post[last].as_slice().to_vec();
    Ok((u, ForwardTrace { input, pre, post }))
}

/// Gradients of `upstream^T h(x)` with respect to every weight matrix.
/// The ReLU derivative at exactly zero is taken as zero.
pub fn vjp(params: &MlpParams, trace: &ForwardTrace, upstream: &[f64]) -> Result<Vec<DMatrix<f64>>> {
    let k_layers = params.weights.len();
    if trace.pre.len() != k_layers || upstream.len() != params.output_dim() {
        return Err(RldError::Dimension(format!(
            "trace has {} layers for a {k_layers}-layer network; upstream length {} vs output {}",
            trace.pre.len(),
            upstream.len(),
            params.output_dim()
        )));
    }
    let mut grads = vec![DMatrix::zeros(0, 0); k_layers];
    let mut delta = DVector::from_column_slice(upstream);
    for k in (0..k_layers).rev() {
        let below = if k == 0 { &trace.input } else { &trace.post[k - 1] };
        grads[k] = &delta * below.transpose();
        if k > 0 {
            let mut back = params.weights[k].transpose() * &delta;
            for (b, z) in back.iter_mut().zip(trace.pre[k - 1].iter()) {
                if *z <= 0.0 {
                    *b = 0.0;
                }
            }
            delta = back;
        }
    }
    Ok(grads)
}

pub fn project_rows(params: &MlpParams) -> MlpParams {
    let mut p = params.clone();
    p.project_rows_mut();
    p
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    format: String,
    version: u32,
    layer_sizes: Vec<usize>,
    w_max: f64,
    seed: Option<u64>,
    /// Row-major entries of each weight matrix.
    weights: Vec<Vec<f64>>,
}

pub fn params_to_json(params: &MlpParams) -> String {
    let ck = Checkpoint {
        format: CHECKPOINT_FORMAT.into(),
        version: CHECKPOINT_VERSION,
        layer_sizes: params.layer_sizes.clone(),
        w_max: params.w_max,
        seed: params.seed,
        weights: params
            .weights
            .iter()
            .map(|w| w.transpose().as_slice().to_vec())
            .collect(),
    };
    serde_json::to_string_pretty(&ck).expect("checkpoint serialization cannot fail")
}

pub fn params_from_json(text: &str) -> Result<MlpParams> {
    let ck: Checkpoint =
        serde_json::from_str(text).map_err(|e| RldError::Parse(format!("checkpoint: {e}")))?;
    if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
        return Err(RldError::Version(format!(
            "unsupported checkpoint {} v{}",
            ck.format, ck.version
        )));
    }
    check_sizes(&ck.layer_sizes, ck.w_max)?;
    if ck.weights.len() != ck.layer_sizes.len() - 1 {
        return Err(RldError::Version(format!(
            "header declares {} layers but {} weight arrays are present",
            ck.layer_sizes.len() - 1,
            ck.weights.len()
        )));
    }
    let mut weights = Vec::with_capacity(ck.weights.len());
    for (k, data) in ck.weights.iter().enumerate() {
        let (cols, rows) = (ck.layer_sizes[k], ck.layer_sizes[k + 1]);
        if data.len() != rows * cols {
            return Err(RldError::Version(format!(
                "layer {k}: header shape {rows}x{cols} does not match {} entries",
                data.len()
            )));
        }
        weights.push(DMatrix::from_row_slice(rows, cols, data));
    }
    Ok(MlpParams {
        weights,
        w_max: ck.w_max,
        layer_sizes: ck.layer_sizes,
        seed: ck.seed,
    })
}

pub fn save_params(params: &MlpParams, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, params_to_json(params)).map_err(|e| RldError::io(path, e))
}

pub fn load_params(path: impl AsRef<Path>) -> Result<MlpParams> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| RldError::io(path, e))?;
    params_from_json(&text)
}
