//! Anomaly detectors over per-session charging features.
//!
//! Every detector is trained once on attack-free sessions and then judges
//! per-port batches of recent sessions.

mod features;
pub mod gmm;
pub mod iforest;
pub mod kld;
pub mod kmeans;
mod metrics;
pub mod pcc;
pub mod stats;

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use features::{ChargingFeature, FeatureScaler};
pub use gmm::{GaussianMixture, GmmDetector};
pub use iforest::{anomaly_score, IsolationForest};
pub use kld::{kld, KldDetector};
pub use kmeans::KMeansDetector;
pub use metrics::{ConfusionTally, DetectionScores};
pub use pcc::PccDetector;

use crate::{Error, Result};

/// Smallest training set accepted by [`train`].
pub const MIN_TRAINING_SESSIONS: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DetectorKind {
    #[serde(rename = "IF")]
    IsolationForest,
    #[serde(rename = "KLD")]
    Kld,
    #[serde(rename = "KMeans")]
    KMeans,
    #[serde(rename = "GMM")]
    Gmm,
    #[serde(rename = "PCC")]
    Pcc,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 5] = [
        DetectorKind::IsolationForest,
        DetectorKind::Kld,
        DetectorKind::KMeans,
        DetectorKind::Gmm,
        DetectorKind::Pcc,
    ];

    pub fn label(self) -> &'static str {
        match self {
            DetectorKind::IsolationForest => "IF",
            DetectorKind::Kld => "KLD",
            DetectorKind::KMeans => "KMeans",
            DetectorKind::Gmm => "GMM",
            DetectorKind::Pcc => "PCC",
        }
    }

    /// Sensitivity sweep used in the scenario grid.
    pub fn alpha_grid(self) -> Vec<f64> {
        let (start, step, n) = match self {
            DetectorKind::IsolationForest => (0.05, 0.025, 5),
            DetectorKind::Kld => (1.0, 1.0, 5),
            DetectorKind::KMeans => (0.2, 0.1, 5),
            DetectorKind::Gmm => (0.05, 0.1, 6),
            DetectorKind::Pcc => (0.3, 0.1, 6),
        };
        (0..n).map(|i| round6(start + step * i as f64)).collect()
    }

    pub fn alpha_range(self) -> (f64, f64) {
        let g = self.alpha_grid();
        (g[0], g[g.len() - 1])
    }

    /// Midpoint of the sweep range.
    pub fn mid_alpha(self) -> f64 {
        let (lo, hi) = self.alpha_range();
        round6(0.5 * (lo + hi))
    }

    /// The least sensitive end of the sweep: the lowest contamination for
    /// IF, the largest fraction or divergence threshold for the others.
    pub fn default_alpha(self) -> f64 {
        let (lo, hi) = self.alpha_range();
        match self {
            DetectorKind::IsolationForest => lo,
            _ => hi,
        }
    }
}

fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for DetectorKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "if" | "iforest" | "isolation-forest" => Ok(DetectorKind::IsolationForest),
            "kld" => Ok(DetectorKind::Kld),
            "kmeans" | "k-means" => Ok(DetectorKind::KMeans),
            "gmm" => Ok(DetectorKind::Gmm),
            "pcc" => Ok(DetectorKind::Pcc),
            other => Err(format!("unknown detector `{other}` (expected IF, KLD, KMeans, GMM or PCC)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    pub kind: DetectorKind,
    pub alpha: f64,
    pub n_trees: usize,
    pub subsample: usize,
    pub bins_per_dim: usize,
    pub k_clusters: usize,
    pub distance_threshold: f64,
    pub n_components: usize,
    pub density_threshold: f64,
    pub pcc_significance: f64,
    /// Batch window in minutes.
    pub window_min: u64,
    pub min_batch: usize,
}

impl DetectorConfig {
    pub fn new(kind: DetectorKind) -> Self {
        Self {
            kind,
            alpha: kind.default_alpha(),
            n_trees: 100,
            subsample: 256,
            bins_per_dim: 10,
            k_clusters: 8,
            distance_threshold: 2.5,
            n_components: 3,
            density_threshold: 0.01,
            pcc_significance: 0.005,
            window_min: 1440,
            min_batch: 3,
        }
    }

    pub fn with_alpha(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub fn alpha_in_range(&self) -> bool {
        let (lo, hi) = self.kind.alpha_range();
        self.alpha >= lo - 1e-9 && self.alpha <= hi + 1e-9
    }
}

#[derive(Debug, Clone)]
pub enum Model {
    IsolationForest(IsolationForest),
    Kld(KldDetector),
    KMeans(KMeansDetector),
    Gmm(GmmDetector),
    Pcc(PccDetector),
}

/// A frozen detector. Decisions depend only on the model and the batch.
#[derive(Debug, Clone)]
pub struct Detector {
    pub config: DetectorConfig,
    pub model: Model,
    pub training_size: usize,
}

pub fn train<R: Rng + ?Sized>(training: &[ChargingFeature], config: &DetectorConfig, rng: &mut R) -> Result<Detector> {
    if training.len() < MIN_TRAINING_SESSIONS {
        return Err(Error::InsufficientTraining {
            required: MIN_TRAINING_SESSIONS,
            got: training.len(),
        });
    }
    let c = config;
    let model = match c.kind {
        DetectorKind::IsolationForest => {
            Model::IsolationForest(IsolationForest::fit(training, c.n_trees, c.subsample, c.alpha, rng))
        }
        DetectorKind::Kld => Model::Kld(KldDetector::fit(training, c.bins_per_dim, c.alpha)),
        DetectorKind::KMeans => Model::KMeans(KMeansDetector::fit(
            training,
            c.k_clusters,
            c.distance_threshold,
            c.alpha,
            rng,
        )),
        DetectorKind::Gmm => Model::Gmm(GmmDetector::fit(
            training,
            c.n_components,
            c.density_threshold,
            c.alpha,
            rng,
        )?),
        DetectorKind::Pcc => Model::Pcc(PccDetector::fit(training, c.pcc_significance, c.alpha)),
    };
    Ok(Detector {
        config: config.clone(),
        model,
        training_size: training.len(),
    })
}

impl Detector {
    pub fn kind(&self) -> DetectorKind {
        self.config.kind
    }

    /// Port-level flag. Batches smaller than the configured minimum never flag.
    pub fn detect_port(&self, batch: &[ChargingFeature]) -> bool {
        if batch.len() < self.config.min_batch {
            return false;
        }
        match &self.model {
            Model::IsolationForest(m) => m.detect(batch),
            Model::Kld(m) => m.detect(batch),
            Model::KMeans(m) => m.detect(batch),
            Model::Gmm(m) => m.detect(batch),
            Model::Pcc(m) => m.detect(batch),
        }
    }

    /// Audit summary of the trained model.
    pub fn summary(&self) -> serde_json::Value {
        let model = match &self.model {
            Model::IsolationForest(m) => serde_json::to_value(m.summary()),
            Model::Kld(m) => serde_json::to_value(m),
            Model::KMeans(m) => serde_json::to_value(m),
            Model::Gmm(m) => serde_json::to_value(m),
            Model::Pcc(m) => serde_json::to_value(m),
        }
        .unwrap_or(serde_json::Value::Null);
        serde_json::json!({
            "kind": self.kind().label(),
            "config": self.config,
            "training_size": self.training_size,
            "model": model,
        })
    }
}
