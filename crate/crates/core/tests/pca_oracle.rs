//! PCA against a full eigendecomposition from nalgebra.

#![allow(clippy::needless_range_loop)]

use mobility_unlearn::features::{covariance, fit_pca, project_2d, FeaturePipeline};
use mobility_unlearn::dataset::{generate_synthetic, SyntheticSpec};
use mobility_unlearn::rng::SeededRng;
use nalgebra::{DMatrix, SymmetricEigen};

fn random_rows(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = SeededRng::new(seed);
    // Correlated columns so the spectrum is far from flat.
    let mix: Vec<Vec<f64>> = (0..d).map(|_| (0..d).map(|_| rng.normal()).collect()).collect();
    (0..n)
        .map(|_| {
            let z: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
            (0..d).map(|j| (0..d).map(|k| mix[j][k] * z[k]).sum::<f64>() + 3.0).collect()
        })
        .collect()
}

fn oracle_eigenvalues(rows: &[Vec<f64>]) -> Vec<f64> {
    let d = rows[0].len();
    let n = rows.len() as f64;
    let mean: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    let cov = DMatrix::from_fn(d, d, |i, j| {
        rows.iter().map(|r| (r[i] - mean[i]) * (r[j] - mean[j])).sum::<f64>() / (n - 1.0)
    });
    let mut ev: Vec<f64> = SymmetricEigen::new(cov).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}

#[test]
fn reconstruction_error_equals_dropped_eigenvalues() {
    let rows = random_rows(100, 10, 3);
    let ev = oracle_eigenvalues(&rows);
    for k in [1, 3, 6, 10] {
        let pca = fit_pca(&rows, k).unwrap();
        for (a, b) in pca.explained_variance.iter().zip(&ev) {
            assert!((a - b).abs() < 1e-6, "eigenvalue {a} vs oracle {b}");
        }
        // Mean squared reconstruction error with the n-1 denominator.
        let mut err = 0.0;
        for r in &rows {
            let z = pca.project(r).unwrap();
            for j in 0..10 {
                let recon = pca.mean[j] + (0..k).map(|c| z[c] * pca.components[c][j]).sum::<f64>();
                err += (r[j] - recon).powi(2);
            }
        }
        err /= rows.len() as f64 - 1.0;
        let dropped: f64 = ev[k..].iter().sum();
        assert!((err - dropped).abs() < 1e-6, "k={k}: error {err} vs dropped {dropped}");
    }
}

#[test]
fn covariance_matches_oracle_trace() {
    let rows = random_rows(50, 6, 9);
    let (_, cov) = covariance(&rows).unwrap();
    let trace: f64 = (0..6).map(|i| cov[i * 6 + i]).sum();
    let oracle: f64 = oracle_eigenvalues(&rows).iter().sum();
    assert!((trace - oracle).abs() < 1e-9);
}

#[test]
fn synthetic_groups_separate_in_the_plane() {
    let trips = generate_synthetic(&SyntheticSpec {
        n_records: 400,
        n_latent_groups: 2,
        ..Default::default()
    })
    .unwrap();
    let pipeline = FeaturePipeline::default_fit(&trips).unwrap();
    let rows: Vec<Vec<f64>> = pipeline.transform(&trips).unwrap().into_iter().map(|f| f.values).collect();
    let points = project_2d(&rows).unwrap();
    let group: Vec<usize> = trips.iter().map(|t| (t.user_id / 10_000) as usize).collect();

    let centroid = |g: usize| {
        let members: Vec<&[f64; 2]> = points.iter().zip(&group).filter(|(_, &h)| h == g).map(|(p, _)| p).collect();
        let n = members.len() as f64;
        [members.iter().map(|p| p[0]).sum::<f64>() / n, members.iter().map(|p| p[1]).sum::<f64>() / n]
    };
    let c = [centroid(0), centroid(1)];
    let dist = |a: &[f64; 2], b: &[f64; 2]| ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt();
    let spread = points.iter().zip(&group).map(|(p, &g)| dist(p, &c[g])).sum::<f64>() / points.len() as f64;
    let between = dist(&c[0], &c[1]);
    assert!(between > 2.0 * spread, "between {between:.3}, within {spread:.3}");
}
