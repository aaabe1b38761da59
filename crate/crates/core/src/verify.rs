//! Self-check suites run by `aifsim verify`.
//!
//! Each suite compares a production routine against a brute-force reference
//! on seeded inputs and reports one [`Check`] per property.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::categorical::{kl_divergence, Cpt};
use crate::error::{Error, Result};
use crate::genmodel::{
    enumerate_policies, random_categorical, random_model, ControlSpec, FactorSpec, GenerativeModel, ModalitySpec,
    ModelSpec, Policy,
};
use crate::inference::{exact_posterior, expected_free_energy, infer_states, Belief, InferenceConfig};
use crate::srp::{AdwinDetector, DriftStatus, Instance, SrpConfig, SrpEnsemble};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Oracle,
    Efe,
    Srp,
}

impl Suite {
    pub const ALL: [Suite; 3] = [Suite::Oracle, Suite::Efe, Suite::Srp];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Oracle => "oracle",
            Suite::Efe => "efe",
            Suite::Srp => "srp",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Suite::ALL.into_iter().find(|s| s.name() == name)
    }

    pub fn run(self) -> Vec<Check> {
        match self {
            Suite::Oracle => oracle_suite(),
            Suite::Efe => efe_suite(),
            Suite::Srp => srp_suite(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self { name: name.to_string(), passed, detail }
    }

    fn from_result(name: &str, r: Result<(bool, String)>) -> Self {
        match r {
            Ok((passed, detail)) => Self::new(name, passed, detail),
            Err(e) => Self::new(name, false, format!("error: {e}")),
        }
    }
}

fn tight() -> InferenceConfig {
    InferenceConfig { max_iterations: 200, convergence_tol: 1e-12, ..Default::default() }
}

/// Largest single-factor deviation from the exact posterior over 100 random models.
pub fn single_factor_error(seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let n = rng.random_range(2..=11);
        let m = rng.random_range(2..=11);
        let (gm, prior, action, obs) = random_model(&mut rng, &[n], &[m], 1.0);
        let post = infer_states(&gm, &prior, Some(&action), &obs, &tight())?;
        let exact = exact_posterior(&gm, &prior, Some(&action), &obs)?;
        for (x, y) in post.factors[0].probs().iter().zip(exact.marginals[0].probs()) {
            worst = worst.max((x - y).abs());
        }
    }
    Ok(worst)
}

/// Largest per-factor KL(exact ‖ mean field) over 50 random two-factor models,
/// and the largest free-energy rise seen between iterations.
///
/// Likelihood columns use a Dirichlet concentration of 10, i.e. moderately
/// informative observations.
pub fn two_factor_error(seed: u64) -> Result<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut worst_kl, mut worst_rise): (f64, f64) = (0.0, 0.0);
    for _ in 0..50 {
        let cards = [rng.random_range(2..=6), rng.random_range(2..=6)];
        let mods = [rng.random_range(2..=6), rng.random_range(2..=6)];
        let (gm, prior, action, obs) = random_model(&mut rng, &cards, &mods, 10.0);
        let post = infer_states(&gm, &prior, Some(&action), &obs, &tight())?;
        let exact = exact_posterior(&gm, &prior, Some(&action), &obs)?;
        for f in 0..2 {
            worst_kl = worst_kl.max(kl_divergence(&exact.marginals[f], &post.factors[f]));
        }
        for w in post.vfe_history.windows(2) {
            worst_rise = worst_rise.max(w[1] - w[0]);
        }
    }
    Ok((worst_kl, worst_rise))
}

pub fn oracle_suite() -> Vec<Check> {
    let mut out = vec![Check::from_result(
        "single-factor posterior equals exact Bayes (L-inf <= 1e-6)",
        single_factor_error(2024).map(|e| (e <= 1e-6, format!("max deviation {e:.3e}"))),
    )];
    match two_factor_error(2025) {
        Ok((kl, rise)) => {
            out.push(Check::new("two-factor mean field KL <= 0.05", kl <= 0.05, format!("max KL {kl:.3e}")));
            out.push(Check::new("free energy never rises", rise <= 1e-9, format!("max rise {rise:.3e}")));
        }
        Err(e) => out.push(Check::new("two-factor mean field", false, format!("error: {e}"))),
    }
    out
}

/// Toy model with two states, two outcomes, two actions and the given horizon.
pub fn random_toy<R: Rng + ?Sized>(rng: &mut R, horizon: usize) -> (GenerativeModel, Belief) {
    let spec = ModelSpec {
        hidden_factors: vec![FactorSpec::new("s", 2)],
        modalities: vec![ModalitySpec { name: "o".into(), card: 2, depends_on: vec![0] }],
        control_factors: vec![ControlSpec { name: "u".into(), card: 2, drives: vec![0] }],
        horizon,
    };
    let a = Cpt::from_fn(2, vec![2], |_| Ok(random_categorical(rng, 2, 1.0))).expect("valid");
    let b = Cpt::from_fn(2, vec![2, 2], |_| Ok(random_categorical(rng, 2, 1.0))).expect("valid");
    let c = vec![(0..2).map(|_| rng.random_range(-3.0..3.0)).collect()];
    let d = random_categorical(rng, 2, 1.0);
    let gm = GenerativeModel::new(spec, vec![a], vec![b], c, vec![d.clone()]).expect("toy is valid");
    (gm, Belief::new(vec![d]))
}

/// Expected free energy by enumerating every state and outcome trajectory of
/// a single-factor, single-modality model.
///
/// Per step, `−E[ln q(s|o) − ln q(s)] − E[C(o)]`, with `q(s)`, `q(o)` and
/// `q(s|o)` all read off the trajectory distribution.
pub fn efe_by_enumeration(gm: &GenerativeModel, belief: &Belief, policy: &Policy) -> Result<f64> {
    if gm.n_factors() != 1 || gm.n_modalities() != 1 {
        return Err(Error::InvalidModel("enumeration oracle handles one factor and one modality".into()));
    }
    let ns = gm.spec.hidden_factors[0].card;
    let no = gm.spec.modalities[0].card;
    let h = policy.actions.len();
    let (a, b, c) = (&gm.a[0], &gm.b[0], &gm.c[0]);
    let start = belief.factors[0].probs();
    // joint[τ][s][o] accumulated over full trajectories
    let mut joint = vec![vec![vec![0.0; no]; ns]; h];
    let mut states = vec![0usize; h];
    let mut outs = vec![0usize; h];
    let total = (ns * no).pow(h as u32);
    for k in 0..total {
        let mut rest = k;
        for t in 0..h {
            states[t] = rest % ns;
            rest /= ns;
            outs[t] = rest % no;
            rest /= no;
        }
        let mut p = 0.0;
        for (s0, p0) in start.iter().enumerate() {
            let mut path = *p0;
            let mut prev = s0;
            for t in 0..h {
                path *= b.prob(states[t], &[prev, policy.actions[t][0]]) * a.prob(outs[t], &[states[t]]);
                prev = states[t];
            }
            p += path;
        }
        for t in 0..h {
            joint[t][states[t]][outs[t]] += p;
        }
    }
    let mut g = 0.0;
    for step in &joint {
        let q_s: Vec<f64> = step.iter().map(|row| row.iter().sum()).collect();
        let q_o: Vec<f64> = (0..no).map(|o| step.iter().map(|row| row[o]).sum()).collect();
        for s in 0..ns {
            for o in 0..no {
                let p = step[s][o];
                if p > 0.0 {
                    let posterior = p / q_o[o];
                    g -= p * (posterior.ln() - q_s[s].ln());
                }
            }
        }
        g -= q_o.iter().zip(c).map(|(q, c)| q * c).sum::<f64>();
    }
    Ok(g)
}

/// Largest identity residual and largest deviation from enumeration over 20 toys.
pub fn efe_errors(seed: u64) -> Result<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut identity, mut deviation): (f64, f64) = (0.0, 0.0);
    for k in 0..20 {
        let (gm, belief) = random_toy(&mut rng, 1 + k % 2);
        for p in enumerate_policies(&gm.spec, 100)? {
            let g = expected_free_energy(&gm, &belief, &p)?;
            identity = identity.max((g.total + g.epistemic + g.pragmatic).abs());
            deviation = deviation.max((g.total - efe_by_enumeration(&gm, &belief, &p)?).abs());
        }
    }
    Ok((identity, deviation))
}

pub fn efe_suite() -> Vec<Check> {
    match efe_errors(77) {
        Ok((identity, deviation)) => vec![
            Check::new("total = -(epistemic + pragmatic) within 1e-9", identity <= 1e-9, format!("max residual {identity:.3e}")),
            Check::new("matches trajectory enumeration within 1e-6", deviation <= 1e-6, format!("max deviation {deviation:.3e}")),
        ],
        Err(e) => vec![Check::new("expected free energy", false, format!("error: {e}"))],
    }
}

/// Outcome of the linear-recovery and regime-shift simulation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShiftReport {
    pub intercept_before: f64,
    pub intercept_after: f64,
    /// Post-shift sample index of the first drift, if any.
    pub first_drift: Option<usize>,
}

/// Trains on 2000 samples of `P = 30 − q1 − q2`, then 500 with maximum price 45.
pub fn srp_shift_simulation(seed: u64) -> Result<ShiftReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut e = SrpEnsemble::new(SrpConfig::default(), 2, seed)?;
    let mut draw = |a: f64| {
        let q: Vec<f64> = (0..2).map(|_| rng.random_range(0..=6) as f64).collect();
        Instance { target: a - q.iter().sum::<f64>(), features: q }
    };
    for _ in 0..2000 {
        e.learn(&draw(30.0))?;
    }
    let intercept_before = e.estimate_intercept();
    let mut first_drift = None;
    for i in 0..500 {
        if e.learn(&draw(45.0))? == DriftStatus::Drift && first_drift.is_none() {
            first_drift = Some(i);
        }
    }
    Ok(ShiftReport { intercept_before, intercept_after: e.estimate_intercept(), first_drift })
}

pub fn srp_suite() -> Vec<Check> {
    let mut out = match srp_shift_simulation(7) {
        Ok(r) => vec![
            Check::new(
                "intercept recovered before the shift",
                (28.0..=32.0).contains(&r.intercept_before),
                format!("{:.3}", r.intercept_before),
            ),
            Check::new(
                "intercept recovered after the shift",
                (42.0..=48.0).contains(&r.intercept_after),
                format!("{:.3}", r.intercept_after),
            ),
            Check::new(
                "drift within 100 post-shift samples",
                r.first_drift.is_some_and(|i| i < 100),
                format!("first drift at {:?}", r.first_drift),
            ),
        ],
        Err(e) => vec![Check::new("srp shift simulation", false, format!("error: {e}"))],
    };
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut det = AdwinDetector::new(0.002);
    let false_alarms = (0..2000).filter(|_| det.update(rng.random_range(0.0..1.0)) == DriftStatus::Drift).count();
    out.push(Check::new("no drift on a stationary uniform stream", false_alarms == 0, format!("{false_alarms} drifts")));
    let delay = (0..200).find(|_| det.update(rng.random_range(2.0..3.0)) == DriftStatus::Drift);
    out.push(Check::new("mean jump detected within 200 samples", delay.is_some(), format!("delay {delay:?}")));
    out
}
