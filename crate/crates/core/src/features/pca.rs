use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const JACOBI_TOL: f64 = 1e-9;
const JACOBI_MAX_SWEEPS: usize = 100;

/// Principal-component projection fitted on a sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean: Vec<f64>,
    /// `out_dim` rows of length `in_dim`, orthonormal.
    pub components: Vec<Vec<f64>>,
    /// Eigenvalue (sample variance) per component, non-increasing.
    pub explained_variance: Vec<f64>,
}

impl PcaModel {
    pub fn in_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn out_dim(&self) -> usize {
        self.components.len()
    }

    /// `components · (v − mean)`.
    pub fn project(&self, v: &[f64]) -> Result<Vec<f64>> {
        if v.len() != self.in_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.in_dim(),
                actual: v.len(),
            });
        }
        Ok(self
            .components
            .iter()
            .map(|c| c.iter().zip(v).zip(&self.mean).map(|((c, x), m)| c * (x - m)).sum())
            .collect())
    }
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// `a` is row-major `n × n`. Returns eigenvalues and the matching
/// eigenvectors (as rows), in no particular order.
pub fn symmetric_eigen(mut a: Vec<f64>, n: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    assert_eq!(a.len(), n * n);
    // v holds eigenvectors as columns.
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    for _ in 0..JACOBI_MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| ((i + 1)..n).map(move |j| (i, j)))
            .map(|(i, j)| a[i * n + j] * a[i * n + j])
            .sum::<f64>()
            .sqrt();
        if off <= JACOBI_TOL * scale * 1e-3 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let values = (0..n).map(|i| a[i * n + i]).collect();
    let vectors = (0..n).map(|j| (0..n).map(|i| v[i * n + j]).collect()).collect();
    (values, vectors)
}

/// Sample covariance (n − 1 denominator) and column means.
pub fn covariance(rows: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = rows.len();
    if n < 2 {
        return Err(Error::invalid("covariance needs at least two rows"));
    }
    let d = rows[0].len();
    let mut mean = vec![0.0; d];
    for r in rows {
        if r.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: r.len(),
            });
        }
        for (m, x) in mean.iter_mut().zip(r) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let mut cov = vec![0.0; d * d];
    let mut centered = vec![0.0; d];
    for r in rows {
        for j in 0..d {
            centered[j] = r[j] - mean[j];
        }
        for i in 0..d {
            let ci = centered[i];
            if ci == 0.0 {
                continue;
            }
            let row = &mut cov[i * d..(i + 1) * d];
            for j in i..d {
                row[j] += ci * centered[j];
            }
        }
    }
    let denom = (n - 1) as f64;
    for i in 0..d {
        for j in i..d {
            let c = cov[i * d + j] / denom;
            cov[i * d + j] = c;
            cov[j * d + i] = c;
        }
    }
    Ok((mean, cov))
}

/// Fits the top-`out_dim` principal axes.
///
/// Components are sorted by descending eigenvalue and each is signed so
/// that its largest-magnitude entry is positive.
pub fn fit_pca(rows: &[Vec<f64>], out_dim: usize) -> Result<PcaModel> {
    if out_dim == 0 {
        return Err(Error::invalid("out_dim must be at least 1"));
    }
    let in_dim = rows.first().map(|r| r.len()).unwrap_or(0);
    if out_dim > in_dim {
        return Err(Error::invalid(format!(
            "out_dim {out_dim} exceeds input dimension {in_dim}"
        )));
    }
    if rows.len() < out_dim + 1 {
        return Err(Error::invalid(format!(
            "PCA to {out_dim} dims needs at least {} rows, got {}",
            out_dim + 1,
            rows.len()
        )));
    }
    let (mean, cov) = covariance(rows)?;
    if cov.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("PCA input"));
    }
    let (values, vectors) = symmetric_eigen(cov, in_dim);
    let mut order: Vec<usize> = (0..in_dim).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));

    let mut components = Vec::with_capacity(out_dim);
    let mut explained_variance = Vec::with_capacity(out_dim);
    for &k in order.iter().take(out_dim) {
        let mut c = vectors[k].clone();
        let pivot = c
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |best, (i, x)| if x.abs() > best.1 + 1e-12 { (i, x.abs()) } else { best })
            .0;
        if c[pivot] < 0.0 {
            c.iter_mut().for_each(|x| *x = -*x);
        }
        components.push(c);
        explained_variance.push(values[k].max(0.0));
    }
    Ok(PcaModel {
        mean,
        components,
        explained_variance,
    })
}
