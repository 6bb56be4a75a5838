//! Policy/value network.
//!
//! A bidirectional LSTM reads the feature rows of a dashboard in order and in
//! reverse; the two final hidden states are concatenated into the shared
//! embedding `s`. A linear value head reads `s`. Each action head `k` is a
//! classification block:
//!
//! ```text
//! z_k      = tanh(W_in_k u_k + b_in_k)
//! logits_k = W_out_k [z_k; s] + b_out_k
//! ```
//!
//! where `u_0 = s` and `u_{k+1} = [z_k; s]`, so each block sees the previous
//! block's embedding fused with the shared one. With independent heads every
//! block reads `u_k = s`. Masks are applied to the logits before the softmax.
//!
//! Gradients are computed by hand; [`NetworkParams::backward`] takes the
//! gradient with respect to every head's logits and the value.

mod checkpoint;
mod forward;
mod optim;
mod policy;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CheckpointError};
pub use forward::{ForwardCache, LstmCache};
pub use optim::{clip_global_norm, Adam, AdamConfig};
pub use policy::{
    entropy, episode_gradients, episode_loss, greedy_decision, log_softmax_masked, masked_softmax,
    returns_to_go, sample_decision, sample_index, LossCoefficients, LossError, LossParts, PolicyOutput, SampledAction,
    StepSample,
};

use crate::encode::ROW_WIDTH;
use crate::env::{head_arities, NUM_HEADS};
use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

pub const PARAMS_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkShape {
    pub input: usize,
    pub hidden: usize,
    pub embed: usize,
    pub arities: [usize; NUM_HEADS],
    /// Blocks read only the shared embedding.
    pub independent_heads: bool,
}

impl NetworkShape {
    pub fn new(hidden: usize, embed: usize, n_max: usize, independent_heads: bool) -> Self {
        Self {
            input: ROW_WIDTH,
            hidden,
            embed,
            arities: head_arities(n_max),
            independent_heads,
        }
    }

    pub fn shared(&self) -> usize {
        2 * self.hidden
    }

    /// Input width of block `k`.
    pub fn block_input(&self, k: usize) -> usize {
        if self.independent_heads || k == 0 {
            self.shared()
        } else {
            self.embed + self.shared()
        }
    }
}

impl Default for NetworkShape {
    fn default() -> Self {
        Self::new(128, 64, 10, false)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    /// Input weights, `4H x input`, gate order i, f, g, o.
    pub wx: Array2<f64>,
    /// Recurrent weights, `4H x H`.
    pub wh: Array2<f64>,
    pub b: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockParams {
    pub w_in: Array2<f64>,
    pub b_in: Array1<f64>,
    pub w_out: Array2<f64>,
    pub b_out: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub shape: NetworkShape,
    pub version: u32,
    pub forward: LstmParams,
    pub backward: LstmParams,
    pub value_w: Array1<f64>,
    pub value_b: Array1<f64>,
    pub blocks: Vec<BlockParams>,
}

fn uniform(rng: &mut impl Rng, rows: usize, cols: usize) -> Array2<f64> {
    let bound = 1.0 / (cols as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-bound..bound))
}

impl LstmParams {
    fn init(rng: &mut impl Rng, input: usize, hidden: usize) -> Self {
        let mut b = Array1::zeros(4 * hidden);
        b.slice_mut(ndarray::s![hidden..2 * hidden]).fill(1.0);
        Self {
            wx: uniform(rng, 4 * hidden, input),
            wh: uniform(rng, 4 * hidden, hidden),
            b,
        }
    }

    fn zeros(input: usize, hidden: usize) -> Self {
        Self {
            wx: Array2::zeros((4 * hidden, input)),
            wh: Array2::zeros((4 * hidden, hidden)),
            b: Array1::zeros(4 * hidden),
        }
    }
}

impl NetworkParams {
    /// Fan-in scaled uniform initialization, forget-gate bias 1.
    pub fn init(shape: NetworkShape, rng: &mut impl Rng) -> Self {
        let h = shape.hidden;
        let forward = LstmParams::init(rng, shape.input, h);
        let backward = LstmParams::init(rng, shape.input, h);
        let value_w = uniform(rng, 1, shape.shared()).into_shape_with_order(shape.shared()).expect("1 x n");
        let blocks = (0..NUM_HEADS)
            .map(|k| BlockParams {
                w_in: uniform(rng, shape.embed, shape.block_input(k)),
                b_in: Array1::zeros(shape.embed),
                w_out: uniform(rng, shape.arities[k], shape.embed + shape.shared()),
                b_out: Array1::zeros(shape.arities[k]),
            })
            .collect();
        Self {
            shape,
            version: PARAMS_VERSION,
            forward,
            backward,
            value_w,
            value_b: Array1::zeros(1),
            blocks,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros_like_shape(self.shape)
    }

    pub fn zeros_like_shape(shape: NetworkShape) -> Self {
        Self {
            shape,
            version: PARAMS_VERSION,
            forward: LstmParams::zeros(shape.input, shape.hidden),
            backward: LstmParams::zeros(shape.input, shape.hidden),
            value_w: Array1::zeros(shape.shared()),
            value_b: Array1::zeros(1),
            blocks: (0..NUM_HEADS)
                .map(|k| BlockParams {
                    w_in: Array2::zeros((shape.embed, shape.block_input(k))),
                    b_in: Array1::zeros(shape.embed),
                    w_out: Array2::zeros((shape.arities[k], shape.embed + shape.shared())),
                    b_out: Array1::zeros(shape.arities[k]),
                })
                .collect(),
        }
    }

    /// Names and shapes of every tensor, in storage order.
    pub fn tensor_specs(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        for (dir, p) in [("lstm_fwd", &self.forward), ("lstm_bwd", &self.backward)] {
            out.push((format!("{dir}.wx"), p.wx.shape().to_vec()));
            out.push((format!("{dir}.wh"), p.wh.shape().to_vec()));
            out.push((format!("{dir}.b"), p.b.shape().to_vec()));
        }
        out.push(("value.w".into(), self.value_w.shape().to_vec()));
        out.push(("value.b".into(), self.value_b.shape().to_vec()));
        for (k, b) in self.blocks.iter().enumerate() {
            out.push((format!("block{k}.w_in"), b.w_in.shape().to_vec()));
            out.push((format!("block{k}.b_in"), b.b_in.shape().to_vec()));
            out.push((format!("block{k}.w_out"), b.w_out.shape().to_vec()));
            out.push((format!("block{k}.b_out"), b.b_out.shape().to_vec()));
        }
        out
    }

    /// Every tensor as a flat slice, in [`tensor_specs`](Self::tensor_specs) order.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for p in [&self.forward, &self.backward] {
            out.push(p.wx.as_slice().expect("standard layout"));
            out.push(p.wh.as_slice().expect("standard layout"));
            out.push(p.b.as_slice().expect("standard layout"));
        }
        out.push(self.value_w.as_slice().expect("standard layout"));
        out.push(self.value_b.as_slice().expect("standard layout"));
        for b in &self.blocks {
            out.push(b.w_in.as_slice().expect("standard layout"));
            out.push(b.b_in.as_slice().expect("standard layout"));
            out.push(b.w_out.as_slice().expect("standard layout"));
            out.push(b.b_out.as_slice().expect("standard layout"));
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for p in [&mut self.forward, &mut self.backward] {
            out.push(p.wx.as_slice_mut().expect("standard layout"));
            out.push(p.wh.as_slice_mut().expect("standard layout"));
            out.push(p.b.as_slice_mut().expect("standard layout"));
        }
        out.push(self.value_w.as_slice_mut().expect("standard layout"));
        out.push(self.value_b.as_slice_mut().expect("standard layout"));
        for b in &mut self.blocks {
            out.push(b.w_in.as_slice_mut().expect("standard layout"));
            out.push(b.b_in.as_slice_mut().expect("standard layout"));
            out.push(b.w_out.as_slice_mut().expect("standard layout"));
            out.push(b.b_out.as_slice_mut().expect("standard layout"));
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &NetworkParams, scale: f64) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += scale * y;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= factor);
        }
    }

    pub fn norm(&self) -> f64 {
        self.tensors()
            .iter()
            .flat_map(|t| t.iter())
            .map(|x| x * x)
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }
}

#[cfg(test)]
mod tests;
