use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// Parameters of the conditional recurrent translation model.
///
/// Matrices are stored row-major. With `V` the vocabulary size, `d` the
/// embedding width and `h` the hidden width:
///
/// | field   | shape |
/// |---------|-------|
/// | `embed` | V×d   |
/// | `w_hh`  | h×h   |
/// | `w_in`  | h×d   |
/// | `w_src` | h×d   |
/// | `w_ctx` | h×d   |
/// | `b_h`   | h     |
/// | `w_out` | V×h   |
/// | `b_out` | V     |
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub vocab_size: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub embed: Vec<f64>,
    pub w_hh: Vec<f64>,
    pub w_in: Vec<f64>,
    pub w_src: Vec<f64>,
    pub w_ctx: Vec<f64>,
    pub b_h: Vec<f64>,
    pub w_out: Vec<f64>,
    pub b_out: Vec<f64>,
}

/// Gradients share the parameter layout exactly.
pub type GradientBundle = PolicyParams;

pub const TENSOR_NAMES: [&str; 8] = [
    "embed", "w_hh", "w_in", "w_src", "w_ctx", "b_h", "w_out", "b_out",
];

impl PolicyParams {
    pub fn zeros(vocab_size: usize, embed_dim: usize, hidden_dim: usize) -> Self {
        let (v, d, h) = (vocab_size, embed_dim, hidden_dim);
        PolicyParams {
            vocab_size,
            embed_dim,
            hidden_dim,
            embed: vec![0.0; v * d],
            w_hh: vec![0.0; h * h],
            w_in: vec![0.0; h * d],
            w_src: vec![0.0; h * d],
            w_ctx: vec![0.0; h * d],
            b_h: vec![0.0; h],
            w_out: vec![0.0; v * h],
            b_out: vec![0.0; v],
        }
    }

    /// Seeded initialization: unit-scale embeddings, fan-in scaled matrices,
    /// zero biases.
    pub fn init(vocab_size: usize, embed_dim: usize, hidden_dim: usize, seed: u64) -> Self {
        let mut p = Self::zeros(vocab_size, embed_dim, hidden_dim);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fill = |t: &mut [f64], scale: f64| {
            for x in t {
                *x = rng.random_range(-scale..scale);
            }
        };
        let inv = |n: usize| (3.0 / n as f64).sqrt();
        fill(&mut p.embed, 1.0);
        fill(&mut p.w_hh, inv(hidden_dim));
        fill(&mut p.w_in, inv(embed_dim));
        fill(&mut p.w_src, inv(embed_dim));
        fill(&mut p.w_ctx, inv(embed_dim));
        fill(&mut p.w_out, inv(hidden_dim));
        p
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.vocab_size, self.embed_dim, self.hidden_dim)
    }

    pub fn tensors(&self) -> [&[f64]; 8] {
        [
            &self.embed, &self.w_hh, &self.w_in, &self.w_src, &self.w_ctx, &self.b_h,
            &self.w_out, &self.b_out,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Vec<f64>; 8] {
        [
            &mut self.embed, &mut self.w_hh, &mut self.w_in, &mut self.w_src, &mut self.w_ctx,
            &mut self.b_h, &mut self.w_out, &mut self.b_out,
        ]
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Flat view over all tensors in declaration order.
    pub fn get(&self, flat: usize) -> f64 {
        let mut i = flat;
        for t in self.tensors() {
            if i < t.len() {
                return t[i];
            }
            i -= t.len();
        }
        panic!("flat parameter index {flat} out of range")
    }

    pub fn set(&mut self, flat: usize, value: f64) {
        let mut i = flat;
        for t in self.tensors_mut() {
            if i < t.len() {
                t[i] = value;
                return;
            }
            i -= t.len();
        }
        panic!("flat parameter index {flat} out of range")
    }

    /// Which tensor a flat index falls in.
    pub fn tensor_of(&self, flat: usize) -> &'static str {
        let mut i = flat;
        for (name, t) in TENSOR_NAMES.iter().zip(self.tensors()) {
            if i < t.len() {
                return name;
            }
            i -= t.len();
        }
        panic!("flat parameter index {flat} out of range")
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.vocab_size == other.vocab_size
            && self.embed_dim == other.embed_dim
            && self.hidden_dim == other.hidden_dim
    }

    /// `self += scale * other`
    pub fn add_scaled(&mut self, other: &Self, scale: f64) {
        debug_assert!(self.same_shape(other));
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (a, b) in dst.iter_mut().zip(src) {
                *a += scale * b;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x *= factor);
        }
    }

    pub fn fill_zero(&mut self) {
        for t in self.tensors_mut() {
            t.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    pub fn l2_norm(&self) -> f64 {
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

    pub fn validate(&self) -> Result<()> {
        let (v, d, h) = (self.vocab_size, self.embed_dim, self.hidden_dim);
        let want = [v * d, h * h, h * d, h * d, h * d, h, v * h, v];
        for ((name, t), n) in TENSOR_NAMES.iter().zip(self.tensors()).zip(want) {
            if t.len() != n {
                return Err(Error::Usage(format!("tensor {name} has {} entries, expected {n}", t.len())));
            }
        }
        if !self.is_finite() {
            return Err(Error::Numeric("non-finite parameter".into()));
        }
        Ok(())
    }
}
