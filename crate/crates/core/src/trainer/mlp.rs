//! Dense ReLU network with a softmax output and cross-entropy loss.

use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// Weights and biases of a fully connected network.
///
/// `weights[l]` is row-major `dims[l+1] × dims[l]`. The same type holds
/// gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub dims: Vec<usize>,
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl MlpParams {
    pub fn zeros(dims: &[usize]) -> Self {
        let weights = dims.windows(2).map(|w| vec![0.0; w[0] * w[1]]).collect();
        let biases = dims[1..].iter().map(|&d| vec![0.0; d]).collect();
        Self {
            dims: dims.to_vec(),
            weights,
            biases,
        }
    }

    pub fn n_layers(&self) -> usize {
        self.weights.len()
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn n_params(&self) -> usize {
        self.weights.iter().map(Vec::len).sum::<usize>() + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    /// All parameters, layer by layer, weights before biases.
    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| w.iter().chain(b.iter()))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weights
            .iter_mut()
            .zip(self.biases.iter_mut())
            .flat_map(|(w, b)| w.iter_mut().chain(b.iter_mut()))
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|x| x.is_finite())
    }

    /// Largest absolute element-wise difference; infinite on shape mismatch.
    pub fn max_abs_diff(&self, other: &MlpParams) -> f64 {
        if self.dims != other.dims {
            return f64::INFINITY;
        }
        self.iter()
            .zip(other.iter())
            .map(|(a, b)| if a.to_bits() == b.to_bits() { 0.0 } else { (a - b).abs() })
            .fold(0.0, f64::max)
    }

    pub fn bit_identical(&self, other: &MlpParams) -> bool {
        self.dims == other.dims && self.iter().zip(other.iter()).all(|(a, b)| a.to_bits() == b.to_bits())
    }

    /// `self -= lr * grad`.
    pub fn sgd_step(&mut self, grad: &MlpParams, lr: f64) {
        let pairs = self
            .weights
            .iter_mut()
            .zip(&grad.weights)
            .chain(self.biases.iter_mut().zip(&grad.biases));
        for (p, g) in pairs {
            for (pi, gi) in p.iter_mut().zip(g) {
                *pi -= lr * gi;
            }
        }
    }
}

pub fn validate_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 || dims.contains(&0) {
        return Err(Error::invalid(format!("invalid layer dims {dims:?}")));
    }
    Ok(())
}

/// Glorot-uniform weights, zero biases.
pub fn init_mlp_with(dims: &[usize], rng: &mut SeededRng) -> Result<MlpParams> {
    validate_dims(dims)?;
    let mut p = MlpParams::zeros(dims);
    for (l, w) in p.weights.iter_mut().enumerate() {
        let limit = (6.0 / (dims[l] + dims[l + 1]) as f64).sqrt();
        w.iter_mut().for_each(|x| *x = rng.uniform(-limit, limit));
    }
    Ok(p)
}

pub fn init_mlp(dims: &[usize], seed: u64) -> Result<MlpParams> {
    init_mlp_with(dims, &mut SeededRng::new(seed))
}

/// Activation buffers reused across samples.
#[derive(Debug, Clone)]
pub struct Scratch {
    // activations[0] is the input copy; activations[l] for l ≥ 1 is post-ReLU
    // (or logits for the last layer).
    activations: Vec<Vec<f64>>,
}

impl Scratch {
    pub fn new(dims: &[usize]) -> Self {
        Self {
            activations: dims.iter().map(|&d| vec![0.0; d]).collect(),
        }
    }
}

/// Four independent partial sums; fixed order, so results are reproducible.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn forward_into(params: &MlpParams, x: &[f64], scratch: &mut Scratch) {
    scratch.activations[0].copy_from_slice(x);
    let last = params.n_layers() - 1;
    for l in 0..params.n_layers() {
        let (inp, out) = scratch.activations.split_at_mut(l + 1);
        let input = &inp[l];
        let output = &mut out[0];
        let n_in = params.dims[l];
        let w = &params.weights[l];
        let b = &params.biases[l];
        for (o, out_v) in output.iter_mut().enumerate() {
            let row = &w[o * n_in..(o + 1) * n_in];
            let acc = b[o] + dot(row, input);
            *out_v = if l < last { acc.max(0.0) } else { acc };
        }
    }
}

fn softmax_in_place(z: &mut [f64]) {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for v in z.iter_mut() {
        *v = (*v - m).exp();
        s += *v;
    }
    z.iter_mut().for_each(|v| *v /= s);
}

/// Raw output-layer pre-activations.
pub fn logits(params: &MlpParams, x: &[f64]) -> Vec<f64> {
    let mut scratch = Scratch::new(&params.dims);
    forward_into(params, x, &mut scratch);
    scratch.activations.last().unwrap().clone()
}

/// Softmax class probabilities for one input.
pub fn predict_proba(params: &MlpParams, x: &[f64]) -> Vec<f64> {
    let mut p = logits(params, x);
    softmax_in_place(&mut p);
    p
}

/// `c ← a·b (+ c when accumulate)` for row-major `a: m×k` and `b` given by
/// its row and column strides.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: (&[f64], isize, isize), b: (&[f64], isize, isize), c: &mut [f64], accumulate: bool) {
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: callers size every buffer for the given shapes and strides.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.0.as_ptr(),
            a.1,
            a.2,
            b.0.as_ptr(),
            b.1,
            b.2,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Reusable buffers for mini-batch training. Activations and deltas are
/// row-major `batch × width` matrices.
#[derive(Debug, Clone)]
pub struct Workspace {
    grad: MlpParams,
    activations: Vec<Vec<f64>>,
    deltas: Vec<Vec<f64>>,
    exps: Vec<f64>,
}

impl Workspace {
    pub fn new(dims: &[usize]) -> Self {
        Self {
            grad: MlpParams::zeros(dims),
            activations: dims.iter().map(|_| Vec::new()).collect(),
            deltas: dims.iter().map(|_| Vec::new()).collect(),
            exps: Vec::new(),
        }
    }

    /// Mean loss and gradient over `batch` (exactly `batch_len` pairs).
    pub fn batch_gradient<'a, I>(&mut self, params: &MlpParams, batch: I, batch_len: usize) -> f64
    where
        I: IntoIterator<Item = (&'a [f64], &'a [f64])>,
    {
        let dims = &params.dims;
        let n_layers = params.n_layers();
        let rows = batch_len;
        for (l, &d) in dims.iter().enumerate() {
            self.activations[l].resize(rows * d, 0.0);
            self.deltas[l].resize(rows * d, 0.0);
        }
        let n_out = dims[n_layers];
        let mut seen = 0;
        for (r, (x, q)) in batch.into_iter().enumerate() {
            self.activations[0][r * dims[0]..(r + 1) * dims[0]].copy_from_slice(x);
            // Targets go into the output delta for now.
            self.deltas[n_layers][r * n_out..(r + 1) * n_out].copy_from_slice(q);
            seen += 1;
        }
        assert_eq!(seen, rows, "batch_len does not match the batch");

        for l in 0..n_layers {
            let (n_in, n_o) = (dims[l], dims[l + 1]);
            let (lower, upper) = self.activations.split_at_mut(l + 1);
            let out = &mut upper[0];
            for r in 0..rows {
                out[r * n_o..(r + 1) * n_o].copy_from_slice(&params.biases[l]);
            }
            // out += A_l · W_lᵀ
            gemm(
                rows,
                n_in,
                n_o,
                (&lower[l], n_in as isize, 1),
                (&params.weights[l], 1, n_in as isize),
                out,
                true,
            );
            if l + 1 < n_layers {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
            }
        }

        let scale = 1.0 / rows as f64;
        let mut loss = 0.0;
        {
            let logits = &self.activations[n_layers];
            let delta = &mut self.deltas[n_layers];
            for r in 0..rows {
                let z = &logits[r * n_out..(r + 1) * n_out];
                let d = &mut delta[r * n_out..(r + 1) * n_out];
                let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                self.exps.clear();
                self.exps.extend(z.iter().map(|v| (v - m).exp()));
                let sum: f64 = self.exps.iter().sum();
                let lse = m + sum.ln();
                for ((dc, zc), e) in d.iter_mut().zip(z).zip(&self.exps) {
                    let q = *dc;
                    if q != 0.0 {
                        loss -= q * (zc - lse);
                    }
                    *dc = (e / sum - q) * scale;
                }
            }
        }

        for l in (0..n_layers).rev() {
            let (n_in, n_o) = (dims[l], dims[l + 1]);
            let (lower, upper) = self.deltas.split_at_mut(l + 1);
            let delta = &upper[0];
            let input = &self.activations[l];
            // gW = δᵀ · A_l
            gemm(
                n_o,
                rows,
                n_in,
                (delta, 1, n_o as isize),
                (input, n_in as isize, 1),
                &mut self.grad.weights[l],
                false,
            );
            let gb = &mut self.grad.biases[l];
            gb.iter_mut().for_each(|v| *v = 0.0);
            for r in 0..rows {
                for (g, d) in gb.iter_mut().zip(&delta[r * n_o..(r + 1) * n_o]) {
                    *g += d;
                }
            }
            if l > 0 {
                let below = &mut lower[l];
                // δ_{l-1} = δ · W_l, masked by the ReLU.
                gemm(
                    rows,
                    n_o,
                    n_in,
                    (delta, n_o as isize, 1),
                    (&params.weights[l], n_in as isize, 1),
                    below,
                    false,
                );
                for (b, a) in below.iter_mut().zip(input) {
                    if *a <= 0.0 {
                        *b = 0.0;
                    }
                }
            }
        }
        loss * scale
    }

    pub fn gradient(&self) -> &MlpParams {
        &self.grad
    }
}

/// Mean cross-entropy `H(q, softmax(f(x)))` over a batch and its gradient.
pub fn loss_and_grad(params: &MlpParams, xs: &[Vec<f64>], qs: &[Vec<f64>]) -> Result<(f64, MlpParams)> {
    if xs.is_empty() || xs.len() != qs.len() {
        return Err(Error::invalid(format!(
            "batch has {} inputs and {} targets",
            xs.len(),
            qs.len()
        )));
    }
    for (x, q) in xs.iter().zip(qs) {
        if x.len() != params.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: params.input_dim(),
                actual: x.len(),
            });
        }
        if q.len() != params.output_dim() {
            return Err(Error::DimensionMismatch {
                expected: params.output_dim(),
                actual: q.len(),
            });
        }
        if x.iter().chain(q).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("batch"));
        }
    }
    if !params.is_finite() {
        return Err(Error::NonFinite("parameters"));
    }
    let mut ws = Workspace::new(&params.dims);
    let loss = ws.batch_gradient(
        params,
        xs.iter().zip(qs).map(|(x, q)| (x.as_slice(), q.as_slice())),
        xs.len(),
    );
    Ok((loss, ws.grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_batch(dims: &[usize], n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let mut rng = SeededRng::new(seed);
        let xs = (0..n).map(|_| (0..dims[0]).map(|_| rng.normal()).collect()).collect();
        let c = *dims.last().unwrap();
        let qs = (0..n)
            .map(|_| {
                let mut q: Vec<f64> = (0..c).map(|_| rng.unit()).collect();
                let s: f64 = q.iter().sum();
                q.iter_mut().for_each(|v| *v /= s);
                q
            })
            .collect();
        (xs, qs)
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let dims = [45, 16, 16, 10];
        let a = init_mlp(&dims, 3).unwrap();
        assert!(a.bit_identical(&init_mlp(&dims, 3).unwrap()));
        assert!(a.biases.iter().flatten().all(|b| *b == 0.0));
        for l in 0..3 {
            let limit = (6.0 / (dims[l] + dims[l + 1]) as f64).sqrt();
            assert!(a.weights[l].iter().all(|w| w.abs() <= limit));
        }
        assert!(init_mlp(&[3], 0).is_err());
    }

    #[test]
    fn zero_output_layer_is_uniform() {
        let mut p = init_mlp(&[4, 8, 8, 5], 1).unwrap();
        p.weights[2].iter_mut().for_each(|w| *w = 0.0);
        let probs = predict_proba(&p, &[1.0, -2.0, 0.5, 3.0]);
        assert!(probs.iter().all(|v| (v - 0.2).abs() < 1e-15));
    }

    #[test]
    fn bias_shift_leaves_output_unchanged() {
        let p = init_mlp(&[4, 8, 8, 5], 2).unwrap();
        let mut shifted = p.clone();
        shifted.biases[2].iter_mut().for_each(|b| *b += 7.25);
        let x = [0.3, 0.1, -0.4, 2.0];
        for (a, b) in predict_proba(&p, &x).iter().zip(predict_proba(&shifted, &x)) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn probabilities_normalized() {
        let p = init_mlp(&[6, 12, 12, 9], 5).unwrap();
        let mut rng = SeededRng::new(6);
        for _ in 0..1000 {
            let x: Vec<f64> = (0..6).map(|_| 3.0 * rng.normal()).collect();
            let s: f64 = predict_proba(&p, &x).iter().sum();
            assert!((s - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn output_delta_vanishes_when_target_matches() {
        let mut p = init_mlp(&[3, 4, 4, 3], 7).unwrap();
        let x = vec![0.2, -0.1, 0.9];
        let q = predict_proba(&p, &x);
        let (_, g) = loss_and_grad(&p, std::slice::from_ref(&x), &[q]).unwrap();
        // dL/db3 = p - q.
        assert!(g.biases[2].iter().all(|v| v.abs() < 1e-9));
        p.biases[2][0] += 1.0;
        let (_, g) = loss_and_grad(&p, std::slice::from_ref(&x), &[predict_proba(&p, &x)]).unwrap();
        assert!(g.biases[2].iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn duplicated_batch_gives_same_mean() {
        let dims = [5, 7, 7, 4];
        let p = init_mlp(&dims, 8).unwrap();
        let (xs, qs) = random_batch(&dims, 10, 9);
        let (l1, g1) = loss_and_grad(&p, &xs, &qs).unwrap();
        let xs2: Vec<_> = xs.iter().chain(&xs).cloned().collect();
        let qs2: Vec<_> = qs.iter().chain(&qs).cloned().collect();
        let (l2, g2) = loss_and_grad(&p, &xs2, &qs2).unwrap();
        assert!((l1 - l2).abs() < 1e-12);
        assert!(g1.max_abs_diff(&g2) < 1e-12);
    }

    #[test]
    fn rejects_bad_batches() {
        let p = init_mlp(&[2, 3, 3, 2], 0).unwrap();
        assert!(loss_and_grad(&p, &[vec![f64::NAN, 0.0]], &[vec![0.5, 0.5]]).is_err());
        assert!(loss_and_grad(&p, &[vec![0.0]], &[vec![0.5, 0.5]]).is_err());
        assert!(loss_and_grad(&p, &[], &[]).is_err());
    }
}
