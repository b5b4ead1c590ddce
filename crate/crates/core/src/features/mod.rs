//! Fused numeric + text feature vectors and the 2-D clustering projection.

mod embed;
mod pca;
mod standardize;

pub use embed::{hash_embed, tokenize, EmbedderKind, TextEmbedder, DEFAULT_HASH_DIM};
pub use pca::{covariance, fit_pca, symmetric_eigen, PcaModel};
pub use standardize::Standardizer;

use serde::{Deserialize, Serialize};

use crate::dataset::{haversine_m, naive_travel_time, TripRecord, DEFAULT_SPEED_LIMIT_KMH};
use crate::error::{Error, Result};

pub const TEXT_DIM: usize = 32;
pub const NUMERIC_DIM: usize = 13;
pub const FEATURE_DIM: usize = NUMERIC_DIM + TEXT_DIM;

/// Names of the numeric block, in order.
pub const NUMERIC_FEATURES: [&str; NUMERIC_DIM] = [
    "age",
    "gender_0",
    "gender_1",
    "gender_unknown",
    "mobility_none",
    "mobility_cane",
    "mobility_wheelchair",
    "naive_travel_time_min",
    "hour_sin",
    "hour_cos",
    "delta_lat",
    "delta_lon",
    "great_circle_km",
];

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub record_id: u64,
    pub values: Vec<f64>,
}

/// Raw (unscaled) numeric block for one trip.
pub fn numeric_features(record: &TripRecord, speed_limit_kmh: f64) -> Result<Vec<f64>> {
    let mut v = Vec::with_capacity(NUMERIC_DIM);
    v.push(record.age);
    for g in 0..3u8 {
        v.push(if record.gender == g { 1.0 } else { 0.0 });
    }
    for m in crate::dataset::Mobility::ALL {
        v.push(if record.mobility == m { 1.0 } else { 0.0 });
    }
    v.push(naive_travel_time(record.route_length_or_fallback(), speed_limit_kmh)?);
    let secs_of_day = record.depart_ts.rem_euclid(86_400) as f64;
    let angle = 2.0 * std::f64::consts::PI * secs_of_day / 86_400.0;
    v.push(angle.sin());
    v.push(angle.cos());
    v.push(record.dest_lat - record.origin_lat);
    v.push(record.dest_lon - record.origin_lon);
    v.push(haversine_m((record.origin_lat, record.origin_lon), (record.dest_lat, record.dest_lon)) / 1000.0);
    Ok(v)
}

/// `[standardized numeric | PCA-compressed text]` for each record.
pub fn build_feature_matrix(
    records: &[TripRecord],
    embedder: &TextEmbedder,
    pca_text: &PcaModel,
    standardizer: &Standardizer,
    speed_limit_kmh: f64,
) -> Result<Vec<FeatureVector>> {
    if pca_text.out_dim() == 0 {
        return Err(Error::NotFitted("text PCA"));
    }
    if standardizer.dim() != NUMERIC_DIM {
        return Err(Error::NotFitted("numeric standardizer"));
    }
    if pca_text.in_dim() != embedder.dim {
        return Err(Error::DimensionMismatch {
            expected: embedder.dim,
            actual: pca_text.in_dim(),
        });
    }
    records
        .iter()
        .map(|r| {
            let mut values = standardizer.transform(&numeric_features(r, speed_limit_kmh)?)?;
            values.extend(pca_text.project(&embedder.embed(r)?)?);
            if values.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite("feature vector"));
            }
            Ok(FeatureVector {
                record_id: r.record_id,
                values,
            })
        })
        .collect()
}

/// Fitted feature pipeline: embedder, text PCA, and numeric scaler.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeaturePipeline {
    pub embedder: TextEmbedder,
    pub text_pca: PcaModel,
    pub standardizer: Standardizer,
    pub speed_limit_kmh: f64,
}

impl FeaturePipeline {
    /// Fits the text PCA and the scaler on `train` only.
    pub fn fit(train: &[TripRecord], embedder: TextEmbedder, speed_limit_kmh: f64) -> Result<Self> {
        Self::fit_with_text_dim(train, embedder, speed_limit_kmh, TEXT_DIM)
    }

    pub fn fit_with_text_dim(
        train: &[TripRecord],
        embedder: TextEmbedder,
        speed_limit_kmh: f64,
        text_dim: usize,
    ) -> Result<Self> {
        if !(speed_limit_kmh > 0.0) {
            return Err(Error::invalid("speed limit must be positive"));
        }
        let text: Vec<Vec<f64>> = train.iter().map(|r| embedder.embed(r)).collect::<Result<_>>()?;
        let text_pca = fit_pca(&text, text_dim)?;
        let numeric: Vec<Vec<f64>> = train
            .iter()
            .map(|r| numeric_features(r, speed_limit_kmh))
            .collect::<Result<_>>()?;
        let standardizer = Standardizer::fit(&numeric)?;
        Ok(Self {
            embedder,
            text_pca,
            standardizer,
            speed_limit_kmh,
        })
    }

    pub fn default_fit(train: &[TripRecord]) -> Result<Self> {
        Self::fit(train, TextEmbedder::default(), DEFAULT_SPEED_LIMIT_KMH)
    }

    pub fn dim(&self) -> usize {
        self.standardizer.dim() + self.text_pca.out_dim()
    }

    pub fn transform(&self, records: &[TripRecord]) -> Result<Vec<FeatureVector>> {
        build_feature_matrix(
            records,
            &self.embedder,
            &self.text_pca,
            &self.standardizer,
            self.speed_limit_kmh,
        )
    }
}

/// Reduction of feature vectors to the plane the mixture model clusters in.
pub trait Projector {
    fn fit_project(&self, features: &[Vec<f64>]) -> Result<Vec<[f64; 2]>>;
}

/// Linear 2-D projection onto the top two principal axes.
#[derive(Debug, Clone, Copy, Default)]
pub struct Pca2d;

impl Projector for Pca2d {
    fn fit_project(&self, features: &[Vec<f64>]) -> Result<Vec<[f64; 2]>> {
        project_2d(features)
    }
}

pub fn project_2d(features: &[Vec<f64>]) -> Result<Vec<[f64; 2]>> {
    if features.len() < 3 {
        return Err(Error::invalid("2-D projection needs at least 3 rows"));
    }
    let pca = fit_pca(features, 2)?;
    features
        .iter()
        .map(|f| pca.project(f).map(|p| [p[0], p[1]]))
        .collect()
}
