use serde::{Deserialize, Serialize};

/// Buckets of the same size kept before the two oldest are merged.
const MAX_BUCKETS_PER_SIZE: usize = 5;

/// Detector verdict after one insertion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DriftStatus {
    Stable,
    Warning,
    Drift,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
struct Bucket {
    count: u64,
    total: f64,
    /// Sum of squared deviations from the bucket mean.
    m2: f64,
}

impl Bucket {
    fn merge(a: &Bucket, b: &Bucket) -> Bucket {
        let n = (a.count + b.count) as f64;
        let delta = a.total / a.count as f64 - b.total / b.count as f64;
        Bucket {
            count: a.count + b.count,
            total: a.total + b.total,
            m2: a.m2 + b.m2 + delta * delta * a.count as f64 * b.count as f64 / n,
        }
    }
}

/// Adaptive windowing drift detector over an exponential histogram.
///
/// Every insertion checks each bucket boundary as a cut point. A drift drops
/// the older side of the window; a warning uses the same test at ten times the
/// confidence parameter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdwinDetector {
    delta: f64,
    max_window: u64,
    min_sub_window: u64,
    /// Oldest first; sizes are non-increasing towards the newest.
    buckets: Vec<Bucket>,
    width: u64,
    total: f64,
    m2: f64,
    n_detections: u64,
    last_shift: f64,
}

/// Summary of the current window, for logging and dumps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSummary {
    pub width: u64,
    pub mean: f64,
    pub variance: f64,
    pub buckets: usize,
    pub detections: u64,
}

impl AdwinDetector {
    pub const DEFAULT_MAX_WINDOW: u64 = 4096;
    pub const DEFAULT_MIN_SUB_WINDOW: u64 = 5;

    pub fn new(delta: f64) -> Self {
        Self::with_limits(delta, Self::DEFAULT_MAX_WINDOW, Self::DEFAULT_MIN_SUB_WINDOW)
    }

    pub fn with_limits(delta: f64, max_window: u64, min_sub_window: u64) -> Self {
        assert!(delta > 0.0 && delta < 1.0, "ADWIN confidence must lie in (0, 1)");
        assert!(min_sub_window >= 1 && max_window >= 2 * min_sub_window);
        Self { delta, max_window, min_sub_window, buckets: Vec::new(), width: 0, total: 0.0, m2: 0.0, n_detections: 0, last_shift: 0.0 }
    }

    pub fn width(&self) -> u64 {
        self.width
    }

    pub fn mean(&self) -> f64 {
        if self.width == 0 {
            0.0
        } else {
            self.total / self.width as f64
        }
    }

    /// Population variance of the window.
    pub fn variance(&self) -> f64 {
        if self.width == 0 {
            0.0
        } else {
            self.m2 / self.width as f64
        }
    }

    /// Newer minus older sub-window mean at the cut behind the last warning or drift.
    pub fn last_shift(&self) -> f64 {
        self.last_shift
    }

    pub fn n_buckets(&self) -> usize {
        self.buckets.len()
    }

    pub fn summary(&self) -> WindowSummary {
        WindowSummary {
            width: self.width,
            mean: self.mean(),
            variance: self.variance(),
            buckets: self.buckets.len(),
            detections: self.n_detections,
        }
    }

    pub fn update(&mut self, value: f64) -> DriftStatus {
        assert!(value.is_finite(), "ADWIN input must be finite");
        self.push(Bucket { count: 1, total: value, m2: 0.0 });
        self.compress();
        while self.width > self.max_window {
            self.drop_oldest();
        }
        if let Some((_, shift)) = self.find_cut(self.delta) {
            self.last_shift = shift;
            while self.find_cut(self.delta).is_some() {
                self.drop_oldest();
            }
            self.n_detections += 1;
            return DriftStatus::Drift;
        }
        if let Some((_, shift)) = self.find_cut((10.0 * self.delta).min(0.999)) {
            self.last_shift = shift;
            return DriftStatus::Warning;
        }
        DriftStatus::Stable
    }

    fn push(&mut self, b: Bucket) {
        if self.width > 0 {
            let mean = self.mean();
            let delta = b.total / b.count as f64 - mean;
            self.m2 += b.m2 + delta * delta * (self.width * b.count) as f64 / (self.width + b.count) as f64;
        } else {
            self.m2 = b.m2;
        }
        self.width += b.count;
        self.total += b.total;
        self.buckets.push(b);
    }

    fn drop_oldest(&mut self) {
        let b = self.buckets.remove(0);
        let rest = self.width - b.count;
        if rest == 0 {
            self.width = 0;
            self.total = 0.0;
            self.m2 = 0.0;
            return;
        }
        let rest_mean = (self.total - b.total) / rest as f64;
        let delta = b.total / b.count as f64 - rest_mean;
        self.m2 -= b.m2 + delta * delta * (rest * b.count) as f64 / self.width as f64;
        self.m2 = self.m2.max(0.0);
        self.width = rest;
        self.total -= b.total;
    }

    fn compress(&mut self) {
        let mut size = 1;
        loop {
            let positions: Vec<usize> =
                self.buckets.iter().enumerate().filter(|(_, b)| b.count == size).map(|(i, _)| i).collect();
            if positions.len() <= MAX_BUCKETS_PER_SIZE {
                break;
            }
            let (i, j) = (positions[0], positions[1]);
            let merged = Bucket::merge(&self.buckets[i], &self.buckets[j]);
            self.buckets[i] = merged;
            self.buckets.remove(j);
            size *= 2;
        }
    }

    /// First significant cut: index of the first newer bucket and the newer
    /// mean minus the older mean.
    fn find_cut(&self, delta: f64) -> Option<(usize, f64)> {
        if self.width < 2 * self.min_sub_window {
            return None;
        }
        let variance = self.variance();
        let d = (2.0 * (self.width as f64).ln().max(1.0) / delta).ln();
        let mut n0 = 0u64;
        let mut s0 = 0.0;
        for (k, b) in self.buckets.iter().enumerate().take(self.buckets.len() - 1) {
            n0 += b.count;
            s0 += b.total;
            let n1 = self.width - n0;
            if n0 < self.min_sub_window {
                continue;
            }
            if n1 < self.min_sub_window {
                break;
            }
            let u0 = s0 / n0 as f64;
            let u1 = (self.total - s0) / n1 as f64;
            let m_recip =
                1.0 / (n0 - self.min_sub_window + 1) as f64 + 1.0 / (n1 - self.min_sub_window + 1) as f64;
            let epsilon = (2.0 * m_recip * variance * d).sqrt() + 2.0 / 3.0 * d * m_recip;
            if (u0 - u1).abs() > epsilon {
                return Some((k + 1, u1 - u0));
            }
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_stream_is_stable() {
        let mut d = AdwinDetector::new(0.002);
        for _ in 0..1000 {
            assert_eq!(d.update(0.5), DriftStatus::Stable);
        }
        assert!((d.mean() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn step_change_is_detected_quickly() {
        let mut d = AdwinDetector::new(0.002);
        for _ in 0..500 {
            assert_ne!(d.update(0.0), DriftStatus::Drift);
        }
        let delay = (1..=64).find(|_| d.update(1.0) == DriftStatus::Drift);
        assert!(delay.is_some());
        // the old regime has been discarded
        assert!(d.width() < 500);
    }

    #[test]
    fn alternating_stream_has_no_drift() {
        let mut d = AdwinDetector::new(0.002);
        for i in 0..1000 {
            assert_ne!(d.update((i % 2) as f64), DriftStatus::Drift);
        }
    }

    #[test]
    fn window_statistics_match_direct_computation() {
        let mut d = AdwinDetector::new(0.002);
        let values: Vec<f64> = (0..300).map(|i| ((i * 37) % 11) as f64 / 10.0).collect();
        for v in &values {
            d.update(*v);
        }
        let w = d.width() as usize;
        let tail = &values[values.len() - w..];
        let mean = tail.iter().sum::<f64>() / w as f64;
        let var = tail.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / w as f64;
        assert!((d.mean() - mean).abs() < 1e-9);
        assert!((d.variance() - var).abs() < 1e-9);
    }

    #[test]
    fn window_and_buckets_stay_bounded() {
        let mut d = AdwinDetector::new(0.002);
        for i in 0..20_000 {
            d.update((i % 7) as f64);
            assert!(d.width() <= AdwinDetector::DEFAULT_MAX_WINDOW);
        }
        // O(log cap) buckets
        assert!(d.n_buckets() <= MAX_BUCKETS_PER_SIZE * 13 + 1);
    }
}
