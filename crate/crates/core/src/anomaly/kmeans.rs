//! k-means on standardised features, k-means++ seeding.

use rand::Rng;
use serde::Serialize;

use super::{ChargingFeature, FeatureScaler};

fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (0..3).map(|k| (a[k] - b[k]).powi(2)).sum()
}

fn nearest(centroids: &[[f64; 3]], x: &[f64; 3]) -> (usize, f64) {
    centroids
        .iter()
        .enumerate()
        .map(|(j, c)| (j, dist2(c, x)))
        .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
}

/// Lloyd iterations from k-means++ seeds. Returns centroids.
pub fn kmeans<R: Rng + ?Sized>(points: &[[f64; 3]], k: usize, max_iter: usize, rng: &mut R) -> Vec<[f64; 3]> {
    assert!(!points.is_empty() && k > 0, "kmeans needs points and k > 0");
    let k = k.min(points.len());
    let mut centroids = vec![points[rng.random_range(0..points.len())]];
    let mut d2: Vec<f64> = points.iter().map(|p| dist2(p, &centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total <= 0.0 {
            rng.random_range(0..points.len())
        } else {
            let mut u = rng.random::<f64>() * total;
            let mut pick = points.len() - 1;
            for (i, w) in d2.iter().enumerate() {
                if u < *w {
                    pick = i;
                    break;
                }
                u -= w;
            }
            pick
        };
        centroids.push(points[next]);
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(dist2(p, &points[next]));
        }
    }

    let mut assign = vec![usize::MAX; points.len()];
    for _ in 0..max_iter {
        let mut changed = false;
        for (a, p) in assign.iter_mut().zip(points) {
            let j = nearest(&centroids, p).0;
            if *a != j {
                *a = j;
                changed = true;
            }
        }
        let mut sums = vec![[0.0; 3]; k];
        let mut counts = vec![0usize; k];
        for (a, p) in assign.iter().zip(points) {
            counts[*a] += 1;
            for d in 0..3 {
                sums[*a][d] += p[d];
            }
        }
        for j in 0..k {
            if counts[j] > 0 {
                centroids[j] = sums[j].map(|s| s / counts[j] as f64);
            } else {
                // empty cluster: re-seed at the point farthest from its centroid
                let (far, _) = points
                    .iter()
                    .enumerate()
                    .map(|(i, p)| (i, dist2(p, &centroids[assign[i]])))
                    .fold((0, -1.0), |b, c| if c.1 > b.1 { c } else { b });
                centroids[j] = points[far];
                assign[far] = j;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    centroids
}

#[derive(Debug, Clone, Serialize)]
pub struct KMeansDetector {
    pub scaler: FeatureScaler,
    pub centroids: Vec<[f64; 3]>,
    /// Standardised distance beyond which a session is anomalous.
    pub distance_threshold: f64,
    pub alpha: f64,
}

impl KMeansDetector {
    pub fn fit<R: Rng + ?Sized>(
        data: &[ChargingFeature],
        k: usize,
        distance_threshold: f64,
        alpha: f64,
        rng: &mut R,
    ) -> Self {
        let scaler = FeatureScaler::fit(data);
        let centroids = kmeans(&scaler.transform_all(data), k, 50, rng);
        Self {
            scaler,
            centroids,
            distance_threshold,
            alpha,
        }
    }

    pub fn distance(&self, x: &ChargingFeature) -> f64 {
        nearest(&self.centroids, &self.scaler.transform(x)).1.sqrt()
    }

    pub fn detect(&self, batch: &[ChargingFeature]) -> bool {
        let far = batch.iter().filter(|x| self.distance(x) > self.distance_threshold).count();
        far as f64 > self.alpha * batch.len() as f64
    }
}
