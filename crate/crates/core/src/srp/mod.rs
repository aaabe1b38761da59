//! Streaming random patches regression.
//!
//! An ensemble of Hoeffding tree regressors, each trained by online Poisson
//! bagging on its own random feature subspace and watched by its own ADWIN
//! detector on the absolute prediction error. A warning starts a background
//! learner; a confirmed drift swaps it in.

mod adwin;
mod tree;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use adwin::{AdwinDetector, DriftStatus, WindowSummary};
pub use tree::{HoeffdingTreeRegressor, LeafModel, LinearFit, NodeSummary, TreeConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SrpConfig {
    pub n_learners: usize,
    /// Features per learner; `None` uses every feature up to three and 60% beyond.
    pub max_features: Option<usize>,
    pub lambda: f64,
    pub adwin_delta: f64,
    /// Smallest sub-window ADWIN may cut off.
    pub adwin_min_window: u64,
    pub tree: TreeConfig,
}

impl Default for SrpConfig {
    fn default() -> Self {
        Self {
            n_learners: 10,
            max_features: None,
            lambda: 6.0,
            adwin_delta: 0.002,
            adwin_min_window: AdwinDetector::DEFAULT_MIN_SUB_WINDOW,
            tree: TreeConfig::default(),
        }
    }
}

impl SrpConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_learners == 0 {
            return Err(Error::Parameter("SRP needs at least one learner".into()));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::Parameter("Poisson rate must be finite and non-negative".into()));
        }
        if !(self.adwin_delta > 0.0 && self.adwin_delta < 1.0) {
            return Err(Error::Parameter("ADWIN confidence must lie in (0, 1)".into()));
        }
        if self.adwin_min_window == 0 || 2 * self.adwin_min_window > AdwinDetector::DEFAULT_MAX_WINDOW {
            return Err(Error::Parameter("ADWIN minimum sub-window must lie in 1..=2048".into()));
        }
        if self.max_features == Some(0) {
            return Err(Error::Parameter("max_features must be positive".into()));
        }
        let t = &self.tree;
        if !(t.grace_period > 0.0)
            || !(t.split_confidence > 0.0 && t.split_confidence < 1.0)
            || !(t.tie_threshold >= 0.0)
            || !(t.bin_width > 0.0)
            || !(t.ridge > 0.0)
            || t.max_thresholds == 0
        {
            return Err(Error::Parameter("invalid tree hyperparameters".into()));
        }
        Ok(())
    }

    fn detector(&self) -> AdwinDetector {
        AdwinDetector::with_limits(self.adwin_delta, AdwinDetector::DEFAULT_MAX_WINDOW, self.adwin_min_window)
    }

    fn subspace_size(&self, n_features: usize) -> usize {
        match self.max_features {
            Some(m) => m.min(n_features),
            None if n_features <= 3 => n_features,
            None => ((0.6 * n_features as f64).ceil() as usize).max(1),
        }
    }
}

/// One training example: firm quantities and the realized price.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub features: Vec<f64>,
    pub target: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Learner {
    mask: Vec<usize>,
    tree: HoeffdingTreeRegressor,
    detector: AdwinDetector,
    background: Option<HoeffdingTreeRegressor>,
}

impl Learner {
    fn new(mask: Vec<usize>, cfg: &SrpConfig) -> Self {
        Self {
            tree: HoeffdingTreeRegressor::new(mask.len(), cfg.tree.clone()),
            detector: cfg.detector(),
            background: None,
            mask,
        }
    }

    fn project(&self, x: &[f64]) -> Vec<f64> {
        self.mask.iter().map(|i| x[*i]).collect()
    }
}

/// Counts of detector events since construction.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DriftCounts {
    pub warnings: u64,
    pub drifts: u64,
}

#[derive(Debug, Clone)]
pub struct SrpEnsemble {
    cfg: SrpConfig,
    n_features: usize,
    learners: Vec<Learner>,
    rng: ChaCha8Rng,
    counts: DriftCounts,
    n_seen: u64,
}

/// Debug dump of the ensemble state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleDump {
    pub n_features: usize,
    pub instances_seen: u64,
    pub counts: DriftCounts,
    pub learners: Vec<LearnerDump>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerDump {
    pub mask: Vec<usize>,
    pub nodes: Vec<NodeSummary>,
    pub detector: WindowSummary,
    pub has_background: bool,
}

impl SrpEnsemble {
    pub fn new(cfg: SrpConfig, n_features: usize, seed: u64) -> Result<Self> {
        cfg.validate()?;
        if n_features == 0 {
            return Err(Error::Parameter("SRP needs at least one feature".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = cfg.subspace_size(n_features);
        let learners = (0..cfg.n_learners)
            .map(|_| {
                let mut mask = sample(&mut rng, n_features, m).into_vec();
                mask.sort_unstable();
                Learner::new(mask, &cfg)
            })
            .collect();
        Ok(Self { cfg, n_features, learners, rng, counts: DriftCounts::default(), n_seen: 0 })
    }

    pub fn config(&self) -> &SrpConfig {
        &self.cfg
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_learners(&self) -> usize {
        self.learners.len()
    }

    pub fn drift_counts(&self) -> DriftCounts {
        self.counts
    }

    pub fn masks(&self) -> Vec<Vec<usize>> {
        self.learners.iter().map(|l| l.mask.clone()).collect()
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_features {
            return Err(Error::Dimension { expected: self.n_features, got: x.len() });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Parameter("non-finite feature".into()));
        }
        Ok(())
    }

    /// Mean prediction of the learners that have seen data; 0 when none has.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        self.check_dim(x)?;
        let preds: Vec<f64> =
            self.learners.iter().filter(|l| l.tree.is_trained()).map(|l| l.tree.predict(&l.project(x))).collect();
        if preds.is_empty() {
            return Ok(0.0);
        }
        Ok(preds.iter().sum::<f64>() / preds.len() as f64)
    }

    /// Implied price at zero supply.
    pub fn estimate_intercept(&self) -> f64 {
        self.predict(&vec![0.0; self.n_features]).expect("zero vector has the right length")
    }

    /// Clears every detector window, e.g. after initialization on synthetic data.
    pub fn reset_detectors(&mut self) {
        for l in &mut self.learners {
            l.detector = self.cfg.detector();
        }
    }

    /// One streaming update; returns the strongest detector status raised.
    pub fn learn(&mut self, inst: &Instance) -> Result<DriftStatus> {
        self.check_dim(&inst.features)?;
        if !inst.target.is_finite() {
            return Err(Error::Parameter("non-finite target".into()));
        }
        self.n_seen += 1;
        let poisson = if self.cfg.lambda > 0.0 { Some(Poisson::new(self.cfg.lambda).expect("valid rate")) } else { None };
        let mut worst = DriftStatus::Stable;
        for l in &mut self.learners {
            let x = l.project(&inst.features);
            let err = (inst.target - l.tree.predict(&x)).abs();
            let status = match l.detector.update(err) {
                // a falling error is no reason to forget
                DriftStatus::Drift | DriftStatus::Warning if l.detector.last_shift() <= 0.0 => DriftStatus::Stable,
                s => s,
            };
            let k = poisson.as_ref().map_or(0.0, |p| p.sample(&mut self.rng));
            let was_trained = l.tree.is_trained();
            l.tree.learn(&x, inst.target, k);
            if !was_trained && l.tree.is_trained() {
                // cold-start errors say nothing about drift
                l.detector = self.cfg.detector();
            }
            if let Some(bg) = &mut l.background {
                bg.learn(&x, inst.target, 1.0);
            }
            match status {
                DriftStatus::Warning => {
                    self.counts.warnings += 1;
                    l.background = Some(HoeffdingTreeRegressor::new(l.mask.len(), self.cfg.tree.clone()));
                    if worst == DriftStatus::Stable {
                        worst = DriftStatus::Warning;
                    }
                }
                DriftStatus::Drift => {
                    self.counts.drifts += 1;
                    l.tree = l
                        .background
                        .take()
                        .unwrap_or_else(|| HoeffdingTreeRegressor::new(l.mask.len(), self.cfg.tree.clone()));
                    l.detector = self.cfg.detector();
                    worst = DriftStatus::Drift;
                }
                DriftStatus::Stable => {}
            }
        }
        log::trace!("srp instance {} status {:?}", self.n_seen, worst);
        Ok(worst)
    }

    pub fn dump(&self) -> EnsembleDump {
        EnsembleDump {
            n_features: self.n_features,
            instances_seen: self.n_seen,
            counts: self.counts,
            learners: self
                .learners
                .iter()
                .map(|l| LearnerDump {
                    mask: l.mask.clone(),
                    nodes: l.tree.node_summaries(),
                    detector: l.detector.summary(),
                    has_background: l.background.is_some(),
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn linear_stream(rng: &mut ChaCha8Rng, a: f64) -> Instance {
        let q = rng.random_range(0..=10) as f64;
        Instance { features: vec![q], target: a - q }
    }

    #[test]
    fn untrained_predicts_zero() {
        let e = SrpEnsemble::new(SrpConfig::default(), 2, 0).unwrap();
        assert_eq!(e.predict(&[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(e.estimate_intercept(), 0.0);
        assert!(matches!(e.predict(&[1.0]), Err(Error::Dimension { expected: 2, got: 1 })));
    }

    #[test]
    fn zero_rate_feeds_detectors_without_training() {
        let cfg = SrpConfig { lambda: 0.0, ..Default::default() };
        let mut e = SrpEnsemble::new(cfg, 1, 0).unwrap();
        for i in 0..50 {
            e.learn(&Instance { features: vec![i as f64], target: 1.0 }).unwrap();
        }
        assert_eq!(e.predict(&[3.0]).unwrap(), 0.0);
        assert!(e.dump().learners.iter().all(|l| l.detector.width > 0));
    }

    #[test]
    fn constant_target_is_recovered() {
        let mut e = SrpEnsemble::new(SrpConfig::default(), 2, 9).unwrap();
        for i in 0..100 {
            e.learn(&Instance { features: vec![(i % 3) as f64, 1.0], target: 4.25 }).unwrap();
        }
        assert!((e.predict(&[2.0, 1.0]).unwrap() - 4.25).abs() < 1e-9);
    }

    #[test]
    fn learns_linear_price_curve() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut e = SrpEnsemble::new(SrpConfig::default(), 1, 42).unwrap();
        for _ in 0..2000 {
            e.learn(&linear_stream(&mut rng, 30.0)).unwrap();
        }
        for q in 0..=10 {
            let p = e.predict(&[q as f64]).unwrap();
            assert!((p - (30.0 - q as f64)).abs() <= 1.0, "q={q} p={p}");
        }
        assert!((28.0..=32.0).contains(&e.estimate_intercept()));
        assert_eq!(e.n_learners(), 10);
    }

    #[test]
    fn regime_shift_is_tracked() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut e = SrpEnsemble::new(SrpConfig::default(), 2, 7).unwrap();
        let draw = |rng: &mut ChaCha8Rng, a: f64| {
            let q: Vec<f64> = (0..2).map(|_| rng.random_range(0..=6) as f64).collect();
            Instance { target: a - q.iter().sum::<f64>(), features: q }
        };
        for _ in 0..2000 {
            e.learn(&draw(&mut rng, 30.0)).unwrap();
        }
        assert!((28.0..=32.0).contains(&e.estimate_intercept()));
        let mut first_drift = None;
        for i in 0..500 {
            if e.learn(&draw(&mut rng, 45.0)).unwrap() == DriftStatus::Drift && first_drift.is_none() {
                first_drift = Some(i);
            }
        }
        assert!(first_drift.is_some_and(|i| i < 100));
        let a = e.estimate_intercept();
        assert!((42.0..=48.0).contains(&a), "{a}");
    }

    #[test]
    fn deterministic_under_seed() {
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            let mut e = SrpEnsemble::new(SrpConfig::default(), 1, 5).unwrap();
            (0..300).map(|_| {
                e.learn(&linear_stream(&mut rng, 30.0)).unwrap();
                e.predict(&[2.0]).unwrap().to_bits()
            }).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn size_is_invariant_under_drift() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut e = SrpEnsemble::new(SrpConfig::default(), 1, 2).unwrap();
        for i in 0..3000 {
            let a = if (i / 300) % 2 == 0 { 30.0 } else { 60.0 };
            e.learn(&linear_stream(&mut rng, a)).unwrap();
        }
        assert!(e.drift_counts().drifts > 0);
        assert_eq!(e.n_learners(), 10);
        assert_eq!(e.dump().learners.len(), 10);
    }

    #[test]
    fn stationary_error_does_not_grow() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut e = SrpEnsemble::new(SrpConfig::default(), 2, 8).unwrap();
        let mut blocks = Vec::new();
        for _ in 0..5 {
            let mut err = 0.0;
            for _ in 0..200 {
                let q1 = rng.random_range(0..=6) as f64;
                let q2 = rng.random_range(0..=6) as f64;
                let noise: f64 = rng.random_range(-0.5..0.5);
                let inst = Instance { features: vec![q1, q2], target: 30.0 - q1 - q2 + noise };
                err += (inst.target - e.predict(&inst.features).unwrap()).abs();
                e.learn(&inst).unwrap();
            }
            blocks.push(err / 200.0);
        }
        for w in blocks.windows(2) {
            assert!(w[1] <= w[0] * 1.1 + 1e-9, "{blocks:?}");
        }
    }
}
