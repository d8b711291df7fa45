//! Gaussian mixture with full covariances, fitted by EM on standardised
//! features.

use log::warn;
use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use serde::Serialize;

use super::kmeans::kmeans;
use super::{ChargingFeature, FeatureScaler};
use crate::{Error, Result};

/// Diagonal loading added to every covariance.
pub const COVARIANCE_REGULARISATION: f64 = 1e-6;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, Serialize)]
pub struct Component {
    pub weight: f64,
    pub mean: [f64; 3],
    pub covariance: [[f64; 3]; 3],
    #[serde(skip)]
    precision: Matrix3<f64>,
    #[serde(skip)]
    log_norm: f64,
}

impl Component {
    fn new(weight: f64, mean: Vector3<f64>, cov: Matrix3<f64>) -> Result<Self> {
        let reg = cov + Matrix3::identity() * COVARIANCE_REGULARISATION;
        let chol = reg.cholesky().ok_or(Error::SingularCovariance)?;
        let l = chol.l();
        let log_det = 2.0 * (0..3).map(|i| l[(i, i)].ln()).sum::<f64>();
        if !log_det.is_finite() {
            return Err(Error::SingularCovariance);
        }
        Ok(Self {
            weight,
            mean: [mean[0], mean[1], mean[2]],
            covariance: [0, 1, 2].map(|i| [0, 1, 2].map(|j| reg[(i, j)])),
            precision: chol.inverse(),
            log_norm: -0.5 * (3.0 * LN_2PI + log_det),
        })
    }

    fn log_pdf(&self, x: &Vector3<f64>) -> f64 {
        let d = x - Vector3::from(self.mean);
        self.log_norm - 0.5 * (d.transpose() * self.precision * d)[(0, 0)]
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GaussianMixture {
    pub components: Vec<Component>,
}

impl GaussianMixture {
    /// Builds a mixture from explicit parameters; weights are renormalised.
    pub fn new(params: &[(f64, [f64; 3], [[f64; 3]; 3])]) -> Result<Self> {
        let total: f64 = params.iter().map(|p| p.0).sum();
        let components = params
            .iter()
            .map(|(w, m, c)| Component::new(w / total, Vector3::from(*m), Matrix3::from_fn(|i, j| c[i][j])))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { components })
    }

    fn log_density_v(&self, x: &Vector3<f64>) -> f64 {
        log_sum_exp(self.components.iter().map(|c| c.weight.ln() + c.log_pdf(x)))
    }

    pub fn log_density(&self, x: &[f64; 3]) -> f64 {
        self.log_density_v(&Vector3::from(*x))
    }

    /// `sum_k pi_k N(x | mu_k, Sigma_k)`.
    pub fn density(&self, x: &[f64; 3]) -> f64 {
        self.log_density(x).exp()
    }

    pub fn mean_log_likelihood(&self, points: &[[f64; 3]]) -> f64 {
        points.iter().map(|p| self.log_density(p)).sum::<f64>() / points.len() as f64
    }
}

fn log_sum_exp(it: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = it.collect();
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

#[derive(Debug, Clone, Serialize)]
pub struct EmFit {
    pub mixture: GaussianMixture,
    /// Mean log-likelihood after initialisation and after every iteration.
    pub log_likelihood: Vec<f64>,
    pub converged: bool,
}

/// EM from k-means++ / Lloyd initial means. Stops when the mean
/// log-likelihood improves by less than `tol`; otherwise returns the best
/// iterate after `max_iter` with `converged = false`.
pub fn fit_em<R: Rng + ?Sized>(
    points: &[[f64; 3]],
    n_components: usize,
    max_iter: usize,
    tol: f64,
    rng: &mut R,
) -> Result<EmFit> {
    let n = points.len();
    let xs: Vec<Vector3<f64>> = points.iter().map(|p| Vector3::from(*p)).collect();
    let means = kmeans(points, n_components, 50, rng);
    let global_mean = xs.iter().sum::<Vector3<f64>>() / n as f64;
    let global_cov = xs
        .iter()
        .map(|x| (x - global_mean) * (x - global_mean).transpose())
        .sum::<Matrix3<f64>>()
        / n as f64;
    let k = means.len();
    let mut mix = GaussianMixture {
        components: means
            .iter()
            .map(|m| Component::new(1.0 / k as f64, Vector3::from(*m), global_cov))
            .collect::<Result<Vec<_>>>()?,
    };
    let mut history = vec![mix.mean_log_likelihood(points)];
    let mut best = (history[0], mix.clone());
    let mut converged = false;
    let mut resp = vec![0.0; n * k];

    for _ in 0..max_iter {
        for (i, x) in xs.iter().enumerate() {
            let logs: Vec<f64> = mix.components.iter().map(|c| c.weight.ln() + c.log_pdf(x)).collect();
            let lse = log_sum_exp(logs.iter().cloned());
            for j in 0..k {
                resp[i * k + j] = (logs[j] - lse).exp();
            }
        }
        let mut next = Vec::with_capacity(k);
        for j in 0..k {
            let nk: f64 = (0..n).map(|i| resp[i * k + j]).sum::<f64>().max(1e-300);
            let mu = (0..n).map(|i| xs[i] * resp[i * k + j]).sum::<Vector3<f64>>() / nk;
            let cov = (0..n)
                .map(|i| (xs[i] - mu) * (xs[i] - mu).transpose() * resp[i * k + j])
                .sum::<Matrix3<f64>>()
                / nk;
            next.push(Component::new(nk / n as f64, mu, cov)?);
        }
        mix = GaussianMixture { components: next };
        let ll = mix.mean_log_likelihood(points);
        let prev = *history.last().unwrap();
        history.push(ll);
        if ll > best.0 {
            best = (ll, mix.clone());
        }
        if (ll - prev).abs() < tol {
            converged = true;
            break;
        }
    }
    if !converged {
        warn!("EM did not converge after {max_iter} iterations");
    }
    Ok(EmFit {
        mixture: best.1,
        log_likelihood: history,
        converged,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct GmmDetector {
    pub scaler: FeatureScaler,
    pub mixture: GaussianMixture,
    pub converged: bool,
    /// Density below which a session is anomalous.
    pub density_threshold: f64,
    pub alpha: f64,
}

impl GmmDetector {
    pub fn fit<R: Rng + ?Sized>(
        data: &[ChargingFeature],
        n_components: usize,
        density_threshold: f64,
        alpha: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let scaler = FeatureScaler::fit(data);
        let fit = fit_em(&scaler.transform_all(data), n_components, 200, 1e-8, rng)?;
        Ok(Self {
            scaler,
            mixture: fit.mixture,
            converged: fit.converged,
            density_threshold,
            alpha,
        })
    }

    pub fn density(&self, x: &ChargingFeature) -> f64 {
        self.mixture.density(&self.scaler.transform(x))
    }

    pub fn detect(&self, batch: &[ChargingFeature]) -> bool {
        let low = batch.iter().filter(|x| self.density(x) < self.density_threshold).count();
        low as f64 > self.alpha * batch.len() as f64
    }
}
