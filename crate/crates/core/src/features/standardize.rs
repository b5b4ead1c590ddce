use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MIN_SD: f64 = 1e-12;

/// Per-column z-scoring with population statistics of the fit set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let first = rows.first().ok_or_else(|| Error::invalid("cannot standardize an empty set"))?;
        let d = first.len();
        let n = rows.len() as f64;
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
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for r in rows {
            for j in 0..d {
                var[j] += (r[j] - mean[j]).powi(2);
            }
        }
        let sd = var
            .into_iter()
            .map(|v| {
                let s = (v / n).sqrt();
                if s < MIN_SD {
                    1.0
                } else {
                    s
                }
            })
            .collect();
        Ok(Self { mean, sd })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn transform(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: row.len(),
            });
        }
        Ok(row
            .iter()
            .zip(self.mean.iter().zip(&self.sd))
            .map(|(x, (m, s))| (x - m) / s)
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_column_keeps_unit_sd() {
        let rows = vec![vec![1.0, 5.0], vec![3.0, 5.0], vec![5.0, 5.0]];
        let s = Standardizer::fit(&rows).unwrap();
        assert_eq!(s.sd[1], 1.0);
        assert_eq!(s.transform(&[5.0, 5.0]).unwrap(), vec![(5.0 - 3.0) / s.sd[0], 0.0]);
    }

    #[test]
    fn empty_fit_fails() {
        assert!(Standardizer::fit(&[]).is_err());
    }
}
