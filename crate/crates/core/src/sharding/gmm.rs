//! Diagonal-covariance Gaussian mixture fitted by expectation-maximization.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeededRng;

pub const VARIANCE_FLOOR: f64 = 1e-6;
const MAX_RESEEDS: usize = 3;
const EMPTY_MASS: f64 = 1e-8;

pub type Point = [f64; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GmmConfig {
    pub n_components: usize,
    pub seed: u64,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for GmmConfig {
    fn default() -> Self {
        Self {
            n_components: 8,
            seed: 0,
            tol: 1e-6,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmParams {
    pub n_components: usize,
    pub weights: Vec<f64>,
    pub means: Vec<Point>,
    pub variances: Vec<Point>,
    /// Mean per-point log-likelihood after each E-step. Restarts if a
    /// collapsed component had to be re-seeded.
    pub log_likelihood_trace: Vec<f64>,
}

impl GmmParams {
    fn log_joint(&self, p: &Point, out: &mut [f64]) {
        for k in 0..self.n_components {
            let mut lp = self.weights[k].ln();
            for d in 0..2 {
                let var = self.variances[k][d];
                let diff = p[d] - self.means[k][d];
                lp += -0.5 * ((2.0 * PI * var).ln() + diff * diff / var);
            }
            out[k] = lp;
        }
    }

    /// Posterior component probabilities of `point`.
    pub fn responsibilities(&self, point: &Point) -> Vec<f64> {
        let mut lj = vec![0.0; self.n_components];
        self.log_joint(point, &mut lj);
        let lse = log_sum_exp(&lj);
        lj.iter().map(|l| (l - lse).exp()).collect()
    }

    /// Log density of the mixture at `point`.
    pub fn log_density(&self, point: &Point) -> f64 {
        let mut lj = vec![0.0; self.n_components];
        self.log_joint(point, &mut lj);
        log_sum_exp(&lj)
    }

    /// Argmax responsibility per point, ties to the lowest index.
    pub fn hard_assign(&self, points: &[Point]) -> Vec<usize> {
        let mut lj = vec![0.0; self.n_components];
        points
            .iter()
            .map(|p| {
                self.log_joint(p, &mut lj);
                argmax(&lj)
            })
            .collect()
    }
}

pub fn responsibilities(gmm: &GmmParams, point: &Point) -> Vec<f64> {
    gmm.responsibilities(point)
}

pub fn hard_assign(gmm: &GmmParams, points: &[Point]) -> Vec<usize> {
    gmm.hard_assign(points)
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate() {
        if *x > xs[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

fn sq_dist(a: &Point, b: &Point) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

fn data_variance(points: &[Point]) -> Point {
    let n = points.len() as f64;
    let mut mean = [0.0; 2];
    for p in points {
        mean[0] += p[0];
        mean[1] += p[1];
    }
    mean[0] /= n;
    mean[1] /= n;
    let mut var = [0.0; 2];
    for p in points {
        var[0] += (p[0] - mean[0]).powi(2);
        var[1] += (p[1] - mean[1]).powi(2);
    }
    [(var[0] / n).max(VARIANCE_FLOOR), (var[1] / n).max(VARIANCE_FLOOR)]
}

/// k-means++ seeding: first mean uniform, the rest proportional to squared
/// distance from the nearest chosen mean.
fn kmeanspp(points: &[Point], k: usize, rng: &mut SeededRng) -> Vec<Point> {
    let mut means = vec![points[rng.below(points.len())]];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &means[0])).collect();
    while means.len() < k {
        let total: f64 = d2.iter().sum();
        let idx = if total <= 0.0 {
            rng.below(points.len())
        } else {
            let target = rng.unit() * total;
            let mut acc = 0.0;
            let mut chosen = points.len() - 1;
            for (i, d) in d2.iter().enumerate() {
                acc += d;
                if acc > target {
                    chosen = i;
                    break;
                }
            }
            chosen
        };
        let m = points[idx];
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &m));
        }
        means.push(m);
    }
    means
}

/// E-step: fills `resp` (row-major n × k) and returns mean log-likelihood.
fn e_step(gmm: &GmmParams, points: &[Point], resp: &mut [f64], point_ll: &mut [f64]) -> f64 {
    let k = gmm.n_components;
    let mut total = 0.0;
    for (i, p) in points.iter().enumerate() {
        let row = &mut resp[i * k..(i + 1) * k];
        gmm.log_joint(p, row);
        let lse = log_sum_exp(row);
        row.iter_mut().for_each(|r| *r = (*r - lse).exp());
        point_ll[i] = lse;
        total += lse;
    }
    total / points.len() as f64
}

/// Fits a `n_components` mixture to 2-D points.
pub fn fit_gmm(points: &[Point], config: &GmmConfig) -> Result<GmmParams> {
    let k = config.n_components;
    let n = points.len();
    if k == 0 {
        return Err(Error::invalid("n_components must be at least 1"));
    }
    if k > n {
        return Err(Error::invalid(format!(
            "n_components {k} exceeds number of points {n}"
        )));
    }
    if points.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
        return Err(Error::NonFinite("mixture input"));
    }

    let mut rng = SeededRng::new(config.seed);
    let global_var = data_variance(points);
    let mut gmm = GmmParams {
        n_components: k,
        weights: vec![1.0 / k as f64; k],
        means: kmeanspp(points, k, &mut rng),
        variances: vec![global_var; k],
        log_likelihood_trace: Vec::new(),
    };

    let mut resp = vec![0.0; n * k];
    let mut point_ll = vec![0.0; n];
    let mut ll = e_step(&gmm, points, &mut resp, &mut point_ll);
    gmm.log_likelihood_trace.push(ll);
    let mut reseeds = 0;

    for _ in 0..config.max_iter {
        // M-step
        let mut mass = vec![0.0; k];
        for i in 0..n {
            for c in 0..k {
                mass[c] += resp[i * k + c];
            }
        }
        if let Some(empty) = mass.iter().position(|m| *m < EMPTY_MASS) {
            if reseeds == MAX_RESEEDS {
                return Err(Error::EmptyComponent {
                    component: empty,
                    retries: reseeds,
                });
            }
            reseeds += 1;
            let worst = (0..n).fold(0, |w, i| if point_ll[i] < point_ll[w] { i } else { w });
            gmm.means[empty] = points[worst];
            gmm.variances[empty] = global_var;
            gmm.weights = vec![1.0 / k as f64; k];
            ll = e_step(&gmm, points, &mut resp, &mut point_ll);
            gmm.log_likelihood_trace.clear();
            gmm.log_likelihood_trace.push(ll);
            continue;
        }
        for c in 0..k {
            let mut mu = [0.0; 2];
            for i in 0..n {
                let r = resp[i * k + c];
                mu[0] += r * points[i][0];
                mu[1] += r * points[i][1];
            }
            mu[0] /= mass[c];
            mu[1] /= mass[c];
            let mut var = [0.0; 2];
            for i in 0..n {
                let r = resp[i * k + c];
                var[0] += r * (points[i][0] - mu[0]).powi(2);
                var[1] += r * (points[i][1] - mu[1]).powi(2);
            }
            gmm.means[c] = mu;
            gmm.variances[c] = [
                (var[0] / mass[c]).max(VARIANCE_FLOOR),
                (var[1] / mass[c]).max(VARIANCE_FLOOR),
            ];
            gmm.weights[c] = mass[c] / n as f64;
        }
        let next = e_step(&gmm, points, &mut resp, &mut point_ll);
        gmm.log_likelihood_trace.push(next);
        let improved = next - ll;
        ll = next;
        if improved < config.tol {
            break;
        }
    }
    Ok(gmm)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs(seed: u64, n_each: usize) -> (Vec<Point>, Vec<usize>) {
        let mut rng = SeededRng::new(seed);
        let mut pts = Vec::new();
        let mut truth = Vec::new();
        for (label, c) in [[0.0, 0.0], [10.0, 10.0]].iter().enumerate() {
            for _ in 0..n_each {
                pts.push([c[0] + 0.5 * rng.normal(), c[1] + 0.5 * rng.normal()]);
                truth.push(label);
            }
        }
        (pts, truth)
    }

    #[test]
    fn single_component_is_closed_form() {
        let (pts, _) = blobs(1, 50);
        let gmm = fit_gmm(&pts, &GmmConfig { n_components: 1, ..Default::default() }).unwrap();
        let n = pts.len() as f64;
        for d in 0..2 {
            let mean = pts.iter().map(|p| p[d]).sum::<f64>() / n;
            let var = pts.iter().map(|p| (p[d] - mean).powi(2)).sum::<f64>() / n;
            assert!((gmm.means[0][d] - mean).abs() < 1e-6);
            assert!((gmm.variances[0][d] - var).abs() < 1e-6);
        }
        assert_eq!(gmm.responsibilities(&[3.0, -2.0]), vec![1.0]);
        assert!(gmm.hard_assign(&pts).iter().all(|&l| l == 0));
    }

    #[test]
    fn two_blobs_recovered() {
        let (pts, truth) = blobs(2, 200);
        let gmm = fit_gmm(&pts, &GmmConfig { n_components: 2, seed: 3, ..Default::default() }).unwrap();
        let mut centers = gmm.means.clone();
        centers.sort_by(|a, b| a[0].total_cmp(&b[0]));
        assert!(sq_dist(&centers[0], &[0.0, 0.0]).sqrt() < 0.2);
        assert!(sq_dist(&centers[1], &[10.0, 10.0]).sqrt() < 0.2);
        for p in &pts {
            let r = gmm.responsibilities(p);
            assert!(r.iter().cloned().fold(0.0, f64::max) > 0.99);
        }
        let labels = gmm.hard_assign(&pts);
        let low = labels[0];
        let agree = labels
            .iter()
            .zip(&truth)
            .filter(|(l, t)| (**l == low) == (**t == 0))
            .count();
        assert!(agree as f64 >= 0.99 * pts.len() as f64);
        for m in &gmm.means {
            let r = gmm.responsibilities(m);
            assert!(r.iter().cloned().fold(0.0, f64::max) > 0.99);
        }
    }

    #[test]
    fn symmetric_point_splits_evenly() {
        let gmm = GmmParams {
            n_components: 2,
            weights: vec![0.5, 0.5],
            means: vec![[-2.0, 0.0], [2.0, 0.0]],
            variances: vec![[1.0, 1.0], [1.0, 1.0]],
            log_likelihood_trace: vec![],
        };
        let r = gmm.responsibilities(&[0.0, 5.0]);
        assert!((r[0] - 0.5).abs() < 1e-6 && (r[1] - 0.5).abs() < 1e-6);
        // exact tie goes to the lowest index
        assert_eq!(gmm.hard_assign(&[[0.0, 5.0]]), vec![0]);
    }

    #[test]
    fn too_many_components_rejected() {
        let pts = vec![[0.0, 0.0], [1.0, 1.0]];
        assert!(fit_gmm(&pts, &GmmConfig { n_components: 3, ..Default::default() }).is_err());
        assert!(fit_gmm(&pts, &GmmConfig { n_components: 0, ..Default::default() }).is_err());
    }

    #[test]
    fn trace_is_monotone() {
        let mut rng = SeededRng::new(9);
        let pts: Vec<Point> = (0..300).map(|_| [rng.normal() * 3.0, rng.normal() + rng.unit() * 5.0]).collect();
        let gmm = fit_gmm(&pts, &GmmConfig { n_components: 5, ..Default::default() }).unwrap();
        assert!(gmm.log_likelihood_trace.windows(2).all(|w| w[1] >= w[0] - 1e-9));
        let s: f64 = gmm.weights.iter().sum();
        assert!((s - 1.0).abs() < 1e-9);
    }

    #[test]
    fn hard_assign_is_pointwise() {
        let (pts, _) = blobs(4, 30);
        let gmm = fit_gmm(&pts, &GmmConfig { n_components: 2, ..Default::default() }).unwrap();
        let labels = gmm.hard_assign(&pts);
        let rev: Vec<Point> = pts.iter().rev().cloned().collect();
        let rev_labels = gmm.hard_assign(&rev);
        assert!(labels.iter().rev().eq(rev_labels.iter()));
    }
}
