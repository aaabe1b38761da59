use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::states::predictive_prior;
use super::{Belief, InferenceConfig, SelectionMode};
use crate::categorical::{argmax, softmax, Categorical};
use crate::error::{Error, Result};
use crate::genmodel::{GenerativeModel, JointAction, Policy};

/// Cap on joint observation combinations enumerated per future step.
const JOINT_OBS_CAP: usize = 4_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepEfe {
    /// Expected information gain about hidden states (nats, ≥ 0).
    pub epistemic: f64,
    /// Expected log-preference of predicted observations.
    pub pragmatic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EfeBreakdown {
    pub total: f64,
    pub epistemic: f64,
    pub pragmatic: f64,
    pub per_step: Vec<StepEfe>,
}

/// Expected free energy of `policy` from the current belief.
///
/// The factorized belief is rolled forward through the transitions; at each
/// future step the epistemic term is the mutual information between the joint
/// hidden state and the joint observation (one exact Bayes step on the rolled
/// belief), and the pragmatic term is the expected preference summed over
/// modalities. `total = −(epistemic + pragmatic)`.
pub fn expected_free_energy(gm: &GenerativeModel, belief: &Belief, policy: &Policy) -> Result<EfeBreakdown> {
    if policy.actions.len() != gm.spec.horizon {
        return Err(Error::Dimension { expected: gm.spec.horizon, got: policy.actions.len() });
    }
    let mut q = belief.factors.clone();
    let mut per_step = Vec::with_capacity(policy.actions.len());
    for action in &policy.actions {
        q = predictive_prior(gm, &q, Some(action));
        per_step.push(step_terms(gm, &q)?);
    }
    let epistemic: f64 = per_step.iter().map(|s| s.epistemic).sum();
    let pragmatic: f64 = per_step.iter().map(|s| s.pragmatic).sum();
    Ok(EfeBreakdown { total: -(epistemic + pragmatic), epistemic, pragmatic, per_step })
}

fn step_terms(gm: &GenerativeModel, q: &[Categorical]) -> Result<StepEfe> {
    // joint states with non-zero predicted mass
    let supports: Vec<Vec<usize>> =
        q.iter().map(|qf| qf.probs().iter().enumerate().filter(|(_, p)| **p > 0.0).map(|(i, _)| i).collect()).collect();
    let mut states: Vec<Vec<usize>> = vec![Vec::new()];
    for sup in &supports {
        states = states
            .into_iter()
            .flat_map(|prefix| {
                sup.iter().map(move |i| {
                    let mut s = prefix.clone();
                    s.push(*i);
                    s
                })
            })
            .collect();
    }
    let state_probs: Vec<f64> =
        states.iter().map(|s| s.iter().enumerate().map(|(f, i)| q[f].probs()[*i]).product()).collect();

    let mut pragmatic = 0.0;
    // per modality: (outcome, likelihood over states) for outcomes with predicted mass
    let mut channels: Vec<Vec<Vec<f64>>> = Vec::with_capacity(gm.n_modalities());
    for ((m, a), c) in gm.spec.modalities.iter().zip(&gm.a).zip(&gm.c) {
        let cols: Vec<&[f64]> = states
            .iter()
            .map(|s| {
                let conds: Vec<usize> = m.depends_on.iter().map(|f| s[*f]).collect();
                a.column(&conds)
            })
            .collect();
        let mut rows = Vec::new();
        for o in 0..m.card {
            let lik: Vec<f64> = cols.iter().map(|col| col[o]).collect();
            let predicted: f64 = lik.iter().zip(&state_probs).map(|(l, p)| l * p).sum();
            if predicted > 0.0 {
                pragmatic += predicted * c[o];
                rows.push(lik);
            }
        }
        channels.push(rows);
    }
    let combos = channels.iter().try_fold(1usize, |acc, r| acc.checked_mul(r.len())).unwrap_or(usize::MAX);
    if combos > JOINT_OBS_CAP {
        return Err(Error::InvalidModel(format!("{combos} joint observations exceed enumeration cap")));
    }
    let mut epistemic = 0.0;
    let ones = vec![1.0; states.len()];
    mutual_information(&channels, 0, &ones, &state_probs, &mut epistemic);
    Ok(StepEfe { epistemic, pragmatic })
}

/// Accumulates `Σ_o Σ_s q(s) p(o|s) ln(p(o|s) / p(o))` over joint outcomes.
fn mutual_information(channels: &[Vec<Vec<f64>>], m: usize, partial: &[f64], q: &[f64], acc: &mut f64) {
    if m == channels.len() {
        let p_o: f64 = partial.iter().zip(q).map(|(l, p)| l * p).sum();
        if p_o <= 0.0 {
            return;
        }
        for (l, p) in partial.iter().zip(q) {
            if *l > 0.0 && *p > 0.0 {
                *acc += p * l * (l / p_o).ln();
            }
        }
        return;
    }
    let mut next = vec![0.0; partial.len()];
    for row in &channels[m] {
        let mut any = false;
        for ((n, a), b) in next.iter_mut().zip(partial).zip(row) {
            *n = a * b;
            any |= *n > 0.0;
        }
        if any {
            mutual_information(channels, m + 1, &next, q, acc);
        }
    }
}

/// `q(π) = softmax(−γ·G(π))` over the given policies.
pub fn infer_policies(
    gm: &GenerativeModel,
    belief: &Belief,
    policies: &[Policy],
    cfg: &InferenceConfig,
) -> Result<(Categorical, Vec<EfeBreakdown>)> {
    if policies.is_empty() {
        return Err(Error::InvalidModel("no policies to evaluate".into()));
    }
    let breakdowns = policies.iter().map(|p| expected_free_energy(gm, belief, p)).collect::<Result<Vec<_>>>()?;
    let neg_g: Vec<f64> = breakdowns.iter().map(|b| -b.total).collect();
    Ok((softmax(&neg_g, cfg.policy_precision), breakdowns))
}

/// First action of the chosen policy.
///
/// `Argmin` takes the most probable policy (lowest index on ties). `Sample`
/// marginalizes `q(π)` onto first actions and draws one with a generator
/// seeded from `seed`.
pub fn select_action(q_pi: &Categorical, policies: &[Policy], cfg: &InferenceConfig, seed: u64) -> JointAction {
    assert_eq!(q_pi.len(), policies.len(), "policy posterior and policy list differ in length");
    match cfg.selection_mode {
        SelectionMode::Argmin => policies[argmax(q_pi.probs())].first().clone(),
        SelectionMode::Sample => {
            let mut firsts: Vec<(JointAction, f64)> = Vec::new();
            for (p, w) in policies.iter().zip(q_pi.probs()) {
                match firsts.iter_mut().find(|(a, _)| a == p.first()) {
                    Some((_, acc)) => *acc += w,
                    None => firsts.push((p.first().clone(), *w)),
                }
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let draw: f64 = rng.random::<f64>() * firsts.iter().map(|(_, w)| w).sum::<f64>();
            let mut cum = 0.0;
            for (a, w) in &firsts {
                cum += w;
                if draw < cum {
                    return a.clone();
                }
            }
            firsts.iter().rev().find(|(_, w)| *w > 0.0).map(|(a, _)| a.clone()).expect("non-empty posterior")
        }
    }
}
