//! Layer primitives: convolution, k-max pooling, dense layers, softmax and
//! the loss functions, plus seeded parameter initialization.
//!
//! These are the forward definitions; exact reverse-mode gradients live in
//! [`crate::tape`]. Everything is f64.

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::rng::uniform_sym;
use crate::tensor::Tensor2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Sigmoid,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => sigmoid(z),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation output `y`.
    #[inline]
    pub fn deriv_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Identity => 1.0,
        }
    }
}

#[inline]
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Convolution filter bank shared across the three contexts.
///
/// Filter i is stored as row i of `filters`, flattened row-major from its
/// width x emb_dim matrix.
#[derive(Debug, Clone)]
pub struct ConvLayer {
    pub filters: Tensor2,
    pub bias: Vec<f64>,
    pub width: usize,
    pub emb_dim: usize,
}

impl ConvLayer {
    pub fn new(num_filters: usize, width: usize, emb_dim: usize) -> Self {
        ConvLayer {
            filters: Tensor2::zeros(num_filters, width * emb_dim),
            bias: vec![0.0; num_filters],
            width,
            emb_dim,
        }
    }

    pub fn from_filters(filters: Vec<Tensor2>, bias: Vec<f64>) -> Result<Self> {
        if filters.is_empty() {
            return Err(Error::InvalidShape("conv layer needs >= 1 filter".into()));
        }
        let width = filters[0].rows();
        let emb_dim = filters[0].cols();
        if filters.len() != bias.len() {
            return Err(Error::InvalidShape("bias length != filter count".into()));
        }
        let mut stacked = Tensor2::zeros(filters.len(), width * emb_dim);
        for (i, f) in filters.iter().enumerate() {
            if f.rows() != width || f.cols() != emb_dim {
                return Err(Error::InvalidShape("filters differ in shape".into()));
            }
            stacked.row_mut(i).copy_from_slice(f.data());
        }
        Ok(ConvLayer {
            filters: stacked,
            bias,
            width,
            emb_dim,
        })
    }

    pub fn num_filters(&self) -> usize {
        self.filters.rows()
    }

    /// Filter i as its width x emb_dim matrix.
    pub fn filter(&self, i: usize) -> Tensor2 {
        Tensor2::from_vec(self.width, self.emb_dim, self.filters.row(i).to_vec()).unwrap()
    }

    pub fn init(&mut self, rng: &mut ChaCha8Rng) {
        let fan_in = self.width * self.emb_dim;
        let fan_out = self.num_filters();
        init_uniform(&mut self.filters, fan_in, fan_out, rng);
        let r = glorot_radius(fan_in, fan_out);
        for b in self.bias.iter_mut() {
            *b = uniform_sym(rng, r);
        }
    }
}

/// Fully connected layer; `weights` is input_dim x output_dim so the forward
/// pass computes activation(weights^T x + bias).
#[derive(Debug, Clone)]
pub struct DenseLayer {
    pub weights: Tensor2,
    pub bias: Vec<f64>,
}

impl DenseLayer {
    pub fn new(input_dim: usize, output_dim: usize) -> Self {
        DenseLayer {
            weights: Tensor2::zeros(input_dim, output_dim),
            bias: vec![0.0; output_dim],
        }
    }

    pub fn init(&mut self, rng: &mut ChaCha8Rng) {
        let fan_in = self.weights.rows();
        let fan_out = self.weights.cols();
        init_uniform(&mut self.weights, fan_in, fan_out, rng);
        let r = glorot_radius(fan_in, fan_out);
        for b in self.bias.iter_mut() {
            *b = uniform_sym(rng, r);
        }
    }
}

pub fn glorot_radius(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Fill `t` with uniform values in [-r, r), r = sqrt(6 / (fan_in + fan_out)),
/// drawing in row-major order so initialization is reproducible.
pub fn init_uniform(t: &mut Tensor2, fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) {
    let r = glorot_radius(fan_in, fan_out);
    for v in t.data_mut() {
        *v = uniform_sym(rng, r);
    }
}

/// Tanh convolution of one context: out[i, t] = tanh(sum_{j,k} F_i[j,k] *
/// input[t+j, k] + bias[i]).
pub fn conv_forward(input: &Tensor2, layer: &ConvLayer) -> Result<Tensor2> {
    let t_len = input.rows();
    let d = input.cols();
    if d != layer.emb_dim {
        return Err(Error::InvalidShape(format!(
            "conv input dim {} != filter emb dim {}",
            d, layer.emb_dim
        )));
    }
    if t_len < layer.width {
        return Err(Error::InvalidShape(format!(
            "conv input length {} < filter width {}",
            t_len, layer.width
        )));
    }
    let m = layer.num_filters();
    let out_len = t_len - layer.width + 1;
    let mut out = Tensor2::zeros(m, out_len);
    for i in 0..m {
        let f = layer.filters.row(i);
        for t in 0..out_len {
            let mut z = layer.bias[i];
            for j in 0..layer.width {
                let xr = input.row(t + j);
                let fr = &f[j * d..(j + 1) * d];
                for k in 0..d {
                    z += fr[k] * xr[k];
                }
            }
            out.set(i, t, z.tanh());
        }
    }
    Ok(out)
}

/// Per-row indices of the k largest values, kept in original time order.
/// Ties are broken toward earlier indices.
pub fn kmax_indices(row: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..row.len()).collect();
    // Stable sort by value descending keeps earlier indices first among ties.
    idx.sort_by(|&a, &b| row[b].partial_cmp(&row[a]).unwrap());
    let mut kept: Vec<usize> = idx.into_iter().take(k).collect();
    kept.sort_unstable();
    kept
}

/// k-max pooling: row i of the result holds the k largest values of row i of
/// `c`, in their original order of appearance.
pub fn kmax_pool(c: &Tensor2, k: usize) -> Result<Tensor2> {
    if c.cols() < k {
        return Err(Error::InvalidShape(format!(
            "k-max pooling needs >= {} columns, got {}",
            k,
            c.cols()
        )));
    }
    let mut out = Tensor2::zeros(c.rows(), k);
    for i in 0..c.rows() {
        let kept = kmax_indices(c.row(i), k);
        for (a, &t) in kept.iter().enumerate() {
            out.set(i, a, c.get(i, t));
        }
    }
    Ok(out)
}

/// activation(weights^T x + bias); `x` is a column vector.
pub fn dense_forward(x: &[f64], layer: &DenseLayer, act: Activation) -> Result<Vec<f64>> {
    if x.len() != layer.weights.rows() {
        return Err(Error::InvalidShape(format!(
            "dense input len {} != weight rows {}",
            x.len(),
            layer.weights.rows()
        )));
    }
    let out_dim = layer.weights.cols();
    let mut out = layer.bias.clone();
    debug_assert_eq!(out.len(), out_dim);
    for (i, &xi) in x.iter().enumerate() {
        let wr = layer.weights.row(i);
        for j in 0..out_dim {
            out[j] += wr[j] * xi;
        }
    }
    for o in out.iter_mut() {
        *o = act.apply(*o);
    }
    Ok(out)
}

/// Numerically stable softmax (max-shifted).
pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = z.iter().map(|&v| (v - m).exp()).collect();
    let s: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / s).collect()
}

/// Log-sum-exp with max shift; handles all-(-inf) inputs.
pub fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let s: f64 = z.iter().map(|&v| (v - m).exp()).sum();
    m + s.ln()
}

/// Negative log-likelihood of the gold class under a probability vector.
pub fn nll_loss(probs: &[f64], gold: usize) -> Result<f64> {
    if gold >= probs.len() {
        return Err(Error::InvalidLabel(format!(
            "gold index {} for {} classes",
            gold,
            probs.len()
        )));
    }
    Ok(-probs[gold].ln())
}

/// Sum of per-element binary cross-entropies between probabilities and a
/// {0,1}-valued (or soft) target vector.
pub fn bce_loss(preds: &[f64], targets: &[f64]) -> Result<f64> {
    if preds.len() != targets.len() {
        return Err(Error::InvalidShape(format!(
            "bce preds len {} != targets len {}",
            preds.len(),
            targets.len()
        )));
    }
    let mut loss = 0.0;
    for (&p, &t) in preds.iter().zip(targets.iter()) {
        loss += -t * p.ln() - (1.0 - t) * (1.0 - p).ln();
    }
    Ok(loss)
}

/// Same BCE sum but from logits, computed without forming the sigmoid
/// explicitly: max(z,0) - z*t + ln(1 + exp(-|z|)) per element.
pub fn bce_with_logits(logits: &[f64], targets: &[f64]) -> Result<f64> {
    if logits.len() != targets.len() {
        return Err(Error::InvalidShape(format!(
            "bce logits len {} != targets len {}",
            logits.len(),
            targets.len()
        )));
    }
    let mut loss = 0.0;
    for (&z, &t) in logits.iter().zip(targets.iter()) {
        loss += z.max(0.0) - z * t + (-z.abs()).exp().ln_1p();
    }
    Ok(loss)
}
