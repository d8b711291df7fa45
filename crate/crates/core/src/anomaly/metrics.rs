use serde::{Deserialize, Serialize};

/// Confusion counts over (port, detection run) pairs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionTally {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DetectionScores {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl ConfusionTally {
    pub fn new(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        Self { tp, fp, fn_, tn }
    }

    pub fn record(&mut self, flag: bool, truth: bool) {
        match (flag, truth) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
            (false, false) => self.tn += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn merge(&mut self, other: &ConfusionTally) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.tn += other.tn;
    }

    /// Ratios with an empty denominator evaluate to 0.
    pub fn evaluate(&self) -> DetectionScores {
        let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(self.tp, self.tp + self.fp);
        let recall = ratio(self.tp, self.tp + self.fn_);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        DetectionScores {
            accuracy: ratio(self.tp + self.tn, self.total()),
            precision,
            recall,
            f1,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn worked_example() {
        let s = ConfusionTally::new(8, 2, 1, 9).evaluate();
        assert_abs_diff_eq!(s.accuracy, 0.85, epsilon = 1e-12);
        assert_abs_diff_eq!(s.precision, 0.8, epsilon = 1e-12);
        assert_abs_diff_eq!(s.recall, 0.888_888_888_9, epsilon = 1e-4);
        assert_abs_diff_eq!(s.f1, 0.842_105_263_2, epsilon = 1e-4);
    }

    #[test]
    fn perfect_and_degenerate() {
        let s = ConfusionTally::new(3, 0, 0, 4).evaluate();
        assert_eq!((s.accuracy, s.precision, s.recall, s.f1), (1.0, 1.0, 1.0, 1.0));
        let s = ConfusionTally::new(0, 2, 5, 1).evaluate();
        assert_eq!((s.recall, s.f1), (0.0, 0.0));
    }
}
