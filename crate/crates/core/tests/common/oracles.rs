//! Independent reference implementations used as test oracles.

use mobility_unlearn::rng::SeededRng;
use mobility_unlearn::sharding::Point;
use mobility_unlearn::trainer::{init_mlp, loss_and_grad, MlpParams};

pub const GRAD_STEP: f64 = 1e-5;
pub const GRAD_REL_TOL: f64 = 1e-4;

/// Naive mean cross-entropy, written without the library's kernels.
pub fn oracle_loss(p: &MlpParams, xs: &[Vec<f64>], qs: &[Vec<f64>]) -> f64 {
    let mut total = 0.0;
    for (x, q) in xs.iter().zip(qs) {
        let mut a = x.clone();
        for l in 0..p.weights.len() {
            let (n_in, n_out) = (p.dims[l], p.dims[l + 1]);
            let mut z = vec![0.0; n_out];
            for o in 0..n_out {
                z[o] = p.biases[l][o];
                for i in 0..n_in {
                    z[o] += p.weights[l][o * n_in + i] * a[i];
                }
            }
            if l + 1 < p.weights.len() {
                for v in &mut z {
                    *v = v.max(0.0);
                }
            }
            a = z;
        }
        let m = a.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + a.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        total -= q.iter().zip(&a).map(|(qc, zc)| qc * (zc - lse)).sum::<f64>();
    }
    total / xs.len() as f64
}

/// Plain diagonal EM, independent of the library.
pub fn oracle_em(points: &[Point], mut means: Vec<Point>, iters: usize) -> Vec<Point> {
    let k = means.len();
    let n = points.len() as f64;
    let mut weights = vec![1.0 / k as f64; k];
    let mut vars = vec![[1.0, 1.0]; k];
    for _ in 0..iters {
        let mut r = vec![vec![0.0; k]; points.len()];
        for (i, p) in points.iter().enumerate() {
            for c in 0..k {
                let mut dens = weights[c];
                for d in 0..2 {
                    let z = p[d] - means[c][d];
                    dens *= (-0.5 * z * z / vars[c][d]).exp() / (2.0 * std::f64::consts::PI * vars[c][d]).sqrt();
                }
                r[i][c] = dens;
            }
            let s: f64 = r[i].iter().sum();
            r[i].iter_mut().for_each(|v| *v /= s);
        }
        for c in 0..k {
            let nk: f64 = r.iter().map(|ri| ri[c]).sum();
            weights[c] = nk / n;
            for d in 0..2 {
                means[c][d] = points.iter().zip(&r).map(|(p, ri)| ri[c] * p[d]).sum::<f64>() / nk;
            }
            for d in 0..2 {
                vars[c][d] = points.iter().zip(&r).map(|(p, ri)| ri[c] * (p[d] - means[c][d]).powi(2)).sum::<f64>() / nk;
            }
        }
    }
    means
}

fn batch(rng: &mut SeededRng, n: usize, d_in: usize, d_out: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let xs = (0..n).map(|_| (0..d_in).map(|_| rng.normal()).collect()).collect();
    let qs = (0..n)
        .map(|_| {
            let raw: Vec<f64> = (0..d_out).map(|_| rng.unit() + 0.01).collect();
            let s: f64 = raw.iter().sum();
            raw.into_iter().map(|v| v / s).collect()
        })
        .collect();
    (xs, qs)
}

fn perturb(p: &mut MlpParams, layer: usize, is_bias: bool, idx: usize, delta: f64) {
    if is_bias {
        p.biases[layer][idx] += delta;
    } else {
        p.weights[layer][idx] += delta;
    }
}

/// Worst relative error between backprop and central differences of
/// [`oracle_loss`] over every parameter, on one random point and a
/// 10-sample batch.
pub fn max_gradient_error(dims: &[usize], seed: u64) -> f64 {
    let mut rng = SeededRng::new(seed);
    let mut params = init_mlp(dims, seed).unwrap();
    // Non-zero biases so the check also exercises them.
    for b in params.biases.iter_mut().flatten() {
        *b = 0.1 * rng.normal();
    }
    let (xs, qs) = batch(&mut rng, 10, dims[0], *dims.last().unwrap());
    let (loss, grad) = loss_and_grad(&params, &xs, &qs).unwrap();
    assert!((loss - oracle_loss(&params, &xs, &qs)).abs() < 1e-12);

    let mut worst: f64 = 0.0;
    for layer in 0..params.weights.len() {
        for is_bias in [false, true] {
            let n = if is_bias { params.biases[layer].len() } else { params.weights[layer].len() };
            for idx in 0..n {
                let mut plus = params.clone();
                perturb(&mut plus, layer, is_bias, idx, GRAD_STEP);
                let mut minus = params.clone();
                perturb(&mut minus, layer, is_bias, idx, -GRAD_STEP);
                let numeric = (oracle_loss(&plus, &xs, &qs) - oracle_loss(&minus, &xs, &qs)) / (2.0 * GRAD_STEP);
                let analytic = if is_bias { grad.biases[layer][idx] } else { grad.weights[layer][idx] };
                let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
                worst = worst.max(rel);
            }
        }
    }
    worst
}

/// Two isotropic blobs (sd 0.5) at (0,0) and (10,10), interleaved.
pub fn blobs(n_each: usize, seed: u64) -> (Vec<Point>, Vec<usize>) {
    let mut rng = SeededRng::new(seed);
    let mut points = Vec::new();
    let mut truth = Vec::new();
    for i in 0..2 * n_each {
        let c = if i % 2 == 0 { 0.0 } else { 10.0 };
        points.push([c + 0.5 * rng.normal(), c + 0.5 * rng.normal()]);
        truth.push(i % 2);
    }
    (points, truth)
}
