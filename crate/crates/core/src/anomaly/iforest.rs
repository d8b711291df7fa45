//! Isolation forest over raw charging features.
//!
//! Anomalies sit in sparse regions and are isolated by few random splits,
//! so their average path length is short and their score
//! `2^(-mean_path / c(subsample))` is close to 1.

use rand::seq::index::sample;
use rand::Rng;
use serde::Serialize;

use super::stats::{binomial_upper_tail, quantile, unsuccessful_search_length};
use super::ChargingFeature;

#[derive(Debug, Clone)]
enum Node {
    Leaf { size: usize },
    Split { feature: usize, value: f64, left: usize, right: usize },
}

/// One isolation tree stored as an arena of nodes; node 0 is the root.
#[derive(Debug, Clone)]
pub struct IsolationTree {
    nodes: Vec<Node>,
}

impl IsolationTree {
    pub fn fit<R: Rng + ?Sized>(points: &[[f64; 3]], height_limit: usize, rng: &mut R) -> Self {
        let mut tree = Self { nodes: Vec::new() };
        let mut pts = points.to_vec();
        tree.grow(&mut pts, 0, height_limit, rng);
        tree
    }

    fn grow<R: Rng + ?Sized>(
        &mut self,
        pts: &mut [[f64; 3]],
        depth: usize,
        limit: usize,
        rng: &mut R,
    ) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { size: pts.len() });
        if depth >= limit || pts.len() <= 1 {
            return id;
        }
        let mut ranges = Vec::with_capacity(3);
        for k in 0..3 {
            let (lo, hi) = pts
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p[k]), hi.max(p[k])));
            if hi > lo {
                ranges.push((k, lo, hi));
            }
        }
        if ranges.is_empty() {
            return id;
        }
        let (feature, lo, hi) = ranges[rng.random_range(0..ranges.len())];
        let value = rng.random_range(lo..hi);
        // in-place partition: points below the split value go left
        let mut split = 0;
        for i in 0..pts.len() {
            if pts[i][feature] < value {
                pts.swap(i, split);
                split += 1;
            }
        }
        let (l, r) = pts.split_at_mut(split);
        let left = self.grow(l, depth + 1, limit, rng);
        let right = self.grow(r, depth + 1, limit, rng);
        self.nodes[id] = Node::Split {
            feature,
            value,
            left,
            right,
        };
        id
    }

    /// Depth of the leaf reached by `x`, plus the unsuccessful-search
    /// correction for the points left unseparated in that leaf.
    pub fn path_length(&self, x: &[f64; 3]) -> f64 {
        let mut node = 0;
        let mut depth = 0usize;
        loop {
            match self.nodes[node] {
                Node::Leaf { size } => return depth as f64 + unsuccessful_search_length(size),
                Node::Split {
                    feature,
                    value,
                    left,
                    right,
                } => {
                    node = if x[feature] < value { left } else { right };
                    depth += 1;
                }
            }
        }
    }
}

/// `s = 2^(-mean_path / c(subsample))`.
pub fn anomaly_score(mean_path: f64, subsample: usize) -> f64 {
    let norm = unsuccessful_search_length(subsample);
    if norm <= 0.0 {
        return 0.5;
    }
    2f64.powf(-mean_path / norm)
}

#[derive(Debug, Clone)]
pub struct IsolationForest {
    trees: Vec<IsolationTree>,
    subsample: usize,
    /// Per-sample cut: the training (1 - alpha) quantile of scores.
    pub threshold: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct IsolationForestSummary {
    pub n_trees: usize,
    pub subsample: usize,
    pub score_threshold: f64,
    pub alpha: f64,
}

impl IsolationForest {
    pub fn fit<R: Rng + ?Sized>(
        data: &[ChargingFeature],
        n_trees: usize,
        subsample: usize,
        alpha: f64,
        rng: &mut R,
    ) -> Self {
        let points: Vec<[f64; 3]> = data.iter().map(|x| x.to_array()).collect();
        let psi = subsample.min(points.len()).max(1);
        let height_limit = (psi as f64).log2().ceil() as usize;
        let trees = (0..n_trees)
            .map(|_| {
                let chosen: Vec<[f64; 3]> = sample(rng, points.len(), psi)
                    .into_iter()
                    .map(|i| points[i])
                    .collect();
                IsolationTree::fit(&chosen, height_limit, rng)
            })
            .collect();
        let mut forest = Self {
            trees,
            subsample: psi,
            threshold: f64::INFINITY,
            alpha,
        };
        let scores: Vec<f64> = data.iter().map(|x| forest.score(x)).collect();
        forest.threshold = quantile(&scores, 1.0 - alpha);
        forest
    }

    pub fn mean_path_length(&self, x: &ChargingFeature) -> f64 {
        let a = x.to_array();
        self.trees.iter().map(|t| t.path_length(&a)).sum::<f64>() / self.trees.len() as f64
    }

    pub fn score(&self, x: &ChargingFeature) -> f64 {
        anomaly_score(self.mean_path_length(x), self.subsample)
    }

    pub fn is_outlier(&self, x: &ChargingFeature) -> bool {
        self.score(x) > self.threshold
    }

    /// Flags the batch when its count of outlying sessions would occur with
    /// probability below `alpha` if each clean session were an outlier with
    /// probability `alpha`.
    pub fn detect(&self, batch: &[ChargingFeature]) -> bool {
        let k = batch.iter().filter(|x| self.is_outlier(x)).count();
        k > 0 && binomial_upper_tail(batch.len(), k, self.alpha) < self.alpha
    }

    pub fn summary(&self) -> IsolationForestSummary {
        IsolationForestSummary {
            n_trees: self.trees.len(),
            subsample: self.subsample,
            score_threshold: self.threshold,
            alpha: self.alpha,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};
    use approx::assert_abs_diff_eq;

    #[test]
    fn score_is_half_at_normalising_length() {
        let c = unsuccessful_search_length(256);
        assert_abs_diff_eq!(anomaly_score(c, 256), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn score_tends_to_one_for_short_paths() {
        assert!(anomaly_score(1e-9, 256) > 0.999_999);
    }

    #[test]
    fn depth_two_path_over_256() {
        // c(256) = 10.2487 by exact harmonic sum
        assert_abs_diff_eq!(anomaly_score(2.0, 256), 0.873_483_954_371_953_9, epsilon = 1e-12);
    }

    #[test]
    fn outlier_has_shorter_paths() {
        let mut rng = stream(3, Stream::Detection);
        let data: Vec<_> = (0..500)
            .map(|i| {
                ChargingFeature::new(
                    25.0 + rng.random_range(-2.0..2.0),
                    (i * 37 % 1440) as f64,
                    0.15 + rng.random_range(-0.03..0.03),
                )
            })
            .collect();
        let f = IsolationForest::fit(&data, 100, 256, 0.1, &mut rng);
        let inlier = f.score(&ChargingFeature::new(25.0, 700.0, 0.15));
        // off-range in duration and SoC
        let far = ChargingFeature::new(45.0, 700.0, 0.4);
        let outlier = f.score(&far);
        assert!(outlier > inlier + 0.1, "{outlier} vs {inlier}");
        assert!(f.is_outlier(&far));
    }

    #[test]
    fn single_point_tree_is_a_leaf() {
        let t = IsolationTree::fit(&[[1.0, 2.0, 3.0]], 8, &mut stream(1, Stream::Detection));
        assert_eq!(t.path_length(&[0.0, 0.0, 0.0]), 0.0);
    }
}
