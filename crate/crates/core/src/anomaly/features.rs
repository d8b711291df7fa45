use serde::{Deserialize, Serialize};

/// Detector input: (duration, time of day, initial SoC) of one session.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChargingFeature {
    /// Charging duration in minutes.
    pub d: f64,
    /// Minute of day the session started, in [0, 1440).
    pub t: f64,
    /// SoC when the session started.
    pub c: f64,
}

impl ChargingFeature {
    pub fn new(d: f64, t: f64, c: f64) -> Self {
        Self { d, t, c }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.d, self.t, self.c]
    }
}

/// Per-dimension standardisation fitted on the training logs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureScaler {
    pub mean: [f64; 3],
    pub std: [f64; 3],
}

impl FeatureScaler {
    pub fn fit(data: &[ChargingFeature]) -> Self {
        let n = data.len().max(1) as f64;
        let mut mean = [0.0; 3];
        for x in data {
            for (m, v) in mean.iter_mut().zip(x.to_array()) {
                *m += v / n;
            }
        }
        let mut var = [0.0; 3];
        for x in data {
            for k in 0..3 {
                var[k] += (x.to_array()[k] - mean[k]).powi(2) / n;
            }
        }
        // a degenerate dimension keeps its scale
        let std = var.map(|v| if v.sqrt() > 1e-12 { v.sqrt() } else { 1.0 });
        Self { mean, std }
    }

    pub fn transform(&self, x: &ChargingFeature) -> [f64; 3] {
        let a = x.to_array();
        [0, 1, 2].map(|k| (a[k] - self.mean[k]) / self.std[k])
    }

    pub fn transform_all(&self, data: &[ChargingFeature]) -> Vec<[f64; 3]> {
        data.iter().map(|x| self.transform(x)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standardised_data_has_zero_mean_unit_sd() {
        let data: Vec<_> = (0..100)
            .map(|i| ChargingFeature::new(20.0 + (i % 7) as f64, (i * 13 % 1440) as f64, 0.15))
            .collect();
        let s = FeatureScaler::fit(&data);
        assert_eq!(s.std[2], 1.0, "constant dimension keeps unit scale");
        let z = s.transform_all(&data);
        for k in 0..2 {
            let m: f64 = z.iter().map(|v| v[k]).sum::<f64>() / 100.0;
            let v: f64 = z.iter().map(|v| (v[k] - m).powi(2)).sum::<f64>() / 100.0;
            assert!(m.abs() < 1e-12);
            assert!((v - 1.0).abs() < 1e-9);
        }
    }
}
