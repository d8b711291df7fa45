//! Histogram Kullback-Leibler divergence detector.
//!
//! Each feature gets its own histogram: `bins` equal-width bins plus one
//! underflow and one overflow bin. Duration and SoC bins span the training
//! range; time of day always spans the whole day. The divergences of the
//! three marginals are summed.

use serde::Serialize;

use super::ChargingFeature;
use crate::MINUTES_PER_DAY;

/// Additive smoothing applied to both histograms before the divergence.
pub const KLD_SMOOTHING: f64 = 1e-6;

/// `D(p || q) = sum p ln(p / q)` in nats, after adding [`KLD_SMOOTHING`] to
/// every bin of both histograms and renormalising.
pub fn kld(p: &[f64], q: &[f64]) -> f64 {
    assert_eq!(p.len(), q.len(), "histograms must share a binning");
    let smooth = |h: &[f64]| -> Vec<f64> {
        let total: f64 = h.iter().map(|v| v + KLD_SMOOTHING).sum();
        h.iter().map(|v| (v + KLD_SMOOTHING) / total).collect()
    };
    let (p, q) = (smooth(p), smooth(q));
    p.iter()
        .zip(&q)
        .map(|(pi, qi)| pi * (pi / qi).ln())
        .sum::<f64>()
        .max(0.0)
}

/// Fixed binning of one feature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Binning {
    pub lo: f64,
    pub hi: f64,
    pub bins: usize,
}

impl Binning {
    /// Number of slots including underflow and overflow.
    pub fn slots(&self) -> usize {
        self.bins + 2
    }

    pub fn slot(&self, v: f64) -> usize {
        if v < self.lo {
            0
        } else if v > self.hi {
            self.bins + 1
        } else if self.hi <= self.lo {
            1
        } else {
            let k = ((v - self.lo) / (self.hi - self.lo) * self.bins as f64) as usize;
            1 + k.min(self.bins - 1)
        }
    }

    pub fn histogram(&self, values: impl Iterator<Item = f64>) -> Vec<f64> {
        let mut h = vec![0.0; self.slots()];
        let mut n = 0.0;
        for v in values {
            h[self.slot(v)] += 1.0;
            n += 1.0;
        }
        if n > 0.0 {
            h.iter_mut().for_each(|x| *x /= n);
        }
        h
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct KldDetector {
    pub binnings: [Binning; 3],
    /// Reference marginals pooled over all training sessions.
    pub reference: [Vec<f64>; 3],
    pub alpha: f64,
}

impl KldDetector {
    pub fn fit(data: &[ChargingFeature], bins: usize, alpha: f64) -> Self {
        let binnings = [0, 1, 2].map(|k| {
            if k == 1 {
                return Binning {
                    lo: 0.0,
                    hi: MINUTES_PER_DAY as f64,
                    bins,
                };
            }
            let (lo, hi) = data.iter().map(|x| x.to_array()[k]).fold(
                (f64::INFINITY, f64::NEG_INFINITY),
                |(lo, hi), v| (lo.min(v), hi.max(v)),
            );
            Binning { lo, hi, bins }
        });
        let reference = [0, 1, 2].map(|k| binnings[k].histogram(data.iter().map(|x| x.to_array()[k])));
        Self {
            binnings,
            reference,
            alpha,
        }
    }

    /// Divergence of the batch marginals from the training marginals.
    pub fn divergence(&self, batch: &[ChargingFeature]) -> f64 {
        (0..3)
            .map(|k| {
                let q = self.binnings[k].histogram(batch.iter().map(|x| x.to_array()[k]));
                kld(&q, &self.reference[k])
            })
            .sum()
    }

    pub fn detect(&self, batch: &[ChargingFeature]) -> bool {
        self.divergence(batch) > self.alpha
    }
}
