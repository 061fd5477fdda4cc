//! Replication statistics.

/// 97.5% standard normal quantile.
const Z_975: f64 = 1.959_963_984_540_054;

/// Sample mean with a 95% normal-approximation interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanCi {
    pub mean: f64,
    pub low: f64,
    pub high: f64,
    /// Fewer than two samples: no variance estimate, interval is the mean.
    pub degenerate: bool,
}

impl MeanCi {
    pub fn half_width(&self) -> f64 {
        0.5 * (self.high - self.low)
    }
}

/// Mean and 95% CI using the sample standard deviation.
pub fn mean_ci(samples: &[f64]) -> MeanCi {
    let k = samples.len();
    if k == 0 {
        return MeanCi { mean: f64::NAN, low: f64::NAN, high: f64::NAN, degenerate: true };
    }
    let mean = samples.iter().sum::<f64>() / k as f64;
    if k == 1 {
        return MeanCi { mean, low: mean, high: mean, degenerate: true };
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
    let half = Z_975 * (var / k as f64).sqrt();
    MeanCi { mean, low: mean - half, high: mean + half, degenerate: false }
}
