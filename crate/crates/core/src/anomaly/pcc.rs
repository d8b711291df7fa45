//! Principal component classifier on standardised features.

use nalgebra::{Matrix3, Vector3};
use serde::Serialize;

use super::stats::chi2_quantile;
use super::{ChargingFeature, FeatureScaler};

/// Fraction of training variance the major components must cover.
pub const MAJOR_VARIANCE_COVERAGE: f64 = 0.5;
/// Eigenvalue below which a component counts as minor.
pub const MINOR_EIGENVALUE: f64 = 0.2;

#[derive(Debug, Clone, Serialize)]
pub struct PccDetector {
    pub scaler: FeatureScaler,
    /// Eigenvalues in descending order.
    pub eigenvalues: [f64; 3],
    /// Unit eigenvectors, matching `eigenvalues`.
    pub eigenvectors: [[f64; 3]; 3],
    pub major: Vec<usize>,
    pub minor: Vec<usize>,
    pub major_threshold: f64,
    pub minor_threshold: f64,
    pub alpha: f64,
}

impl PccDetector {
    /// `c` is the per-sample false-alarm rate fixing the chi-square cuts.
    pub fn fit(data: &[ChargingFeature], c: f64, alpha: f64) -> Self {
        let scaler = FeatureScaler::fit(data);
        let z: Vec<Vector3<f64>> = scaler.transform_all(data).into_iter().map(Vector3::from).collect();
        let n = z.len() as f64;
        let cov = z.iter().map(|v| v * v.transpose()).sum::<Matrix3<f64>>() / n;
        let eig = cov.symmetric_eigen();
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        let eigenvalues = order.map(|i| eig.eigenvalues[i].max(1e-12));
        let eigenvectors = order.map(|i| {
            let col = eig.eigenvectors.column(i);
            [col[0], col[1], col[2]]
        });

        let total: f64 = eigenvalues.iter().sum();
        let mut major = Vec::new();
        let mut covered = 0.0;
        for (j, l) in eigenvalues.iter().enumerate() {
            if covered >= MAJOR_VARIANCE_COVERAGE * total {
                break;
            }
            major.push(j);
            covered += l;
        }
        let minor: Vec<usize> = (0..3).filter(|&j| eigenvalues[j] < MINOR_EIGENVALUE && !major.contains(&j)).collect();
        let cut = |dof: usize| if dof == 0 { f64::INFINITY } else { chi2_quantile(1.0 - c, dof) };
        Self {
            scaler,
            eigenvalues,
            eigenvectors,
            major_threshold: cut(major.len()),
            minor_threshold: cut(minor.len()),
            major,
            minor,
            alpha,
        }
    }

    fn partial_score(&self, y: &[f64; 3], set: &[usize]) -> f64 {
        set.iter().map(|&j| y[j] * y[j] / self.eigenvalues[j]).sum()
    }

    /// Principal-component coordinates of a standardised session.
    pub fn project(&self, x: &ChargingFeature) -> [f64; 3] {
        let z = self.scaler.transform(x);
        self.eigenvectors.map(|v| v[0] * z[0] + v[1] * z[1] + v[2] * z[2])
    }

    /// (major score, minor score).
    pub fn scores(&self, x: &ChargingFeature) -> (f64, f64) {
        let y = self.project(x);
        (self.partial_score(&y, &self.major), self.partial_score(&y, &self.minor))
    }

    pub fn is_anomalous(&self, x: &ChargingFeature) -> bool {
        let (ma, mi) = self.scores(x);
        ma > self.major_threshold || mi > self.minor_threshold
    }

    pub fn detect(&self, batch: &[ChargingFeature]) -> bool {
        let bad = batch.iter().filter(|x| self.is_anomalous(x)).count();
        bad as f64 > self.alpha * batch.len() as f64
    }
}
