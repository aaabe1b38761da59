//! The multi-agent loop: each firm infers, plans and acts through its own
//! generative model, the market resolves the joint action, and every firm then
//! updates its price model and, when the implied maximum price moves enough,
//! its best-response target.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{AgentConfig, ExperimentConfig, FirmConfig};
use crate::error::{Error, Result};
use crate::genmodel::firm::{
    self, build_firm_model, build_warehouse_transition, factor, FirmModelParams, MAX_PRODUCTION, MAX_WAREHOUSE,
    PRODUCTION_LEVELS, SALES_LEVELS,
};
use crate::genmodel::{enumerate_policies, GenerativeModel, JointAction, Policy};
use crate::inference::{infer_policies, infer_states, select_action, Belief};
use crate::market::{best_response_target, nash_quantities, step_market, FirmGroundTruth, StepOutcome};
use crate::srp::{DriftStatus, Instance, SrpEnsemble};

/// Floor substituted for a non-positive previous price estimate.
const MIN_A_HAT: f64 = 1e-9;

/// Independent 64-bit seed for `(stream, index)` under a run seed.
pub fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.set_word_pos(2 * index as u128);
    rng.next_u64()
}

/// Rounds to nine significant digits, the precision kept in traces.
pub fn sig9(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.8e}").parse().expect("formatted float parses")
}

/// Linear least-squares line through `(i, values[i])`, evaluated at `0..n`.
pub fn linear_bridge(values: &[f64], n: usize) -> Vec<f64> {
    let m = values.len() as f64;
    let xm = (m - 1.0) / 2.0;
    let ym = values.iter().sum::<f64>() / m;
    let sxx: f64 = (0..values.len()).map(|i| (i as f64 - xm).powi(2)).sum();
    let sxy: f64 = values.iter().enumerate().map(|(i, y)| (i as f64 - xm) * (y - ym)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    (0..n).map(|s| ym + slope * (s as f64 - xm)).collect()
}

/// Sales utilities `κ·P̂(s)·s` from price estimates at the production levels.
///
/// The estimates are extended to every sales level by a least-squares line and
/// floored at zero, as market prices are.
pub fn sales_preferences(price_at_production: &[f64], kappa: f64) -> Vec<f64> {
    linear_bridge(price_at_production, SALES_LEVELS)
        .into_iter()
        .enumerate()
        .map(|(s, p)| kappa * p.max(0.0) * s as f64)
        .collect()
}

/// One firm's agent state.
#[derive(Debug, Clone)]
pub struct AgentRuntime {
    pub id: usize,
    pub gm: GenerativeModel,
    pub params: FirmModelParams,
    pub belief: Belief,
    pub ensemble: SrpEnsemble,
    pub a_hat_old: f64,
    pub br_current: usize,
    pub unit_cost: f64,
    /// Price sensitivity assumed by the firm.
    pub b_hat: f64,
    pub br_threshold: f64,
    pub last_action: Option<JointAction>,
    pub last_obs: Vec<usize>,
    policies: Vec<Policy>,
}

/// What one agent did and believed at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub production: usize,
    pub analysis: bool,
    pub price_estimates: Vec<f64>,
    pub predicted_price: f64,
}

impl AgentRuntime {
    pub fn new(
        id: usize,
        firm: &FirmConfig,
        initial_br: usize,
        b_hat: f64,
        n_firms: usize,
        agent: &AgentConfig,
        srp_seed: u64,
    ) -> Result<Self> {
        let gm = build_firm_model(&firm.model, initial_br, firm.unit_cost)?;
        let policies = enumerate_policies(&gm.spec, agent.policy_cap)?;
        Ok(Self {
            id,
            belief: Belief::new(gm.d.clone()),
            gm,
            params: firm.model.clone(),
            ensemble: SrpEnsemble::new(agent.srp.clone(), n_firms, srp_seed)?,
            a_hat_old: 0.0,
            br_current: initial_br.min(MAX_WAREHOUSE),
            unit_cost: firm.unit_cost,
            b_hat,
            br_threshold: agent.br_threshold,
            last_action: None,
            last_obs: vec![0; 4],
            policies,
        })
    }

    /// Trains on `copies` zero-supply instances priced at `a0` and records the
    /// resulting intercept estimate.
    pub fn pretrain(&mut self, a0: f64, copies: usize) -> Result<()> {
        let zeros = vec![0.0; self.ensemble.n_features()];
        for _ in 0..copies {
            self.ensemble.learn(&Instance { features: zeros.clone(), target: a0 })?;
        }
        self.ensemble.reset_detectors();
        self.a_hat_old = self.ensemble.estimate_intercept();
        Ok(())
    }

    pub fn infer(&mut self, obs: &[usize], cfg: &AgentConfig) -> Result<()> {
        self.belief = infer_states(&self.gm, &self.belief, self.last_action.as_deref(), obs, &cfg.inference)?;
        self.last_obs = obs.to_vec();
        Ok(())
    }

    /// Price estimates for each production level given the others' last sales.
    pub fn price_estimates(&self, last_sales: &[f64]) -> Result<Vec<f64>> {
        let mut x = last_sales.to_vec();
        (0..PRODUCTION_LEVELS)
            .map(|p| {
                x[self.id] = p as f64;
                self.ensemble.predict(&x)
            })
            .collect()
    }

    /// Rebuilds the sales and production-cost preferences.
    pub fn update_preferences(&mut self, last_sales: &[f64]) -> Result<Vec<f64>> {
        let estimates = self.price_estimates(last_sales)?;
        let mut c = self.gm.c.clone();
        c[firm::modality::SALES] = sales_preferences(&estimates, self.params.kappa);
        c[firm::modality::PRODUCTION] = firm::production_preferences(self.params.kappa, self.unit_cost);
        self.gm.replace_preferences(c)?;
        Ok(estimates)
    }

    pub fn decide(&mut self, last_sales: &[f64], cfg: &AgentConfig, seed: u64) -> Result<Decision> {
        let price_estimates = self.update_preferences(last_sales)?;
        let (q_pi, _) = infer_policies(&self.gm, &self.belief, &self.policies, &cfg.inference)?;
        let action = select_action(&q_pi, &self.policies, &cfg.inference, seed);
        let production = action[firm::control::PRODUCTION];
        let analysis = action[firm::control::ANALYSIS] == 1;
        self.last_action = Some(action);
        Ok(Decision { production, analysis, predicted_price: price_estimates[production], price_estimates })
    }

    pub fn learn(&mut self, sold: &[usize], price: f64) -> Result<DriftStatus> {
        let features = sold.iter().map(|s| *s as f64).collect();
        self.ensemble.learn(&Instance { features, target: price })
    }

    /// Recomputes the best-response target when the intercept estimate moved by
    /// more than the threshold; always adopts `a_new` as the reference.
    pub fn maybe_recompute_br(&mut self, a_new: f64, opponents_total: f64) -> Result<bool> {
        let a_old = if self.a_hat_old > 0.0 {
            self.a_hat_old
        } else {
            log::warn!("firm {}: non-positive previous price estimate {}", self.id, self.a_hat_old);
            MIN_A_HAT
        };
        let changed = ((a_new - a_old) / a_old).abs() > self.br_threshold;
        if changed {
            self.br_current = best_response_target(a_new, self.b_hat, self.unit_cost, opponents_total, MAX_WAREHOUSE);
            let b = build_warehouse_transition(self.br_current, self.params.sigma_transition)?;
            self.gm.replace_transition(factor::WAREHOUSE, b)?;
            log::debug!("firm {}: a_hat {a_old:.3} -> {a_new:.3}, best response {}", self.id, self.br_current);
        }
        self.a_hat_old = a_new;
        Ok(changed)
    }
}

/// Observation vector for a firm after a market step (all zeros before the first).
pub fn observation(outcome: Option<&StepOutcome>, firm: usize) -> Vec<usize> {
    match outcome {
        None => vec![0; 4],
        Some(o) => {
            let f = &o.firms[firm];
            vec![f.sold.min(SALES_LEVELS - 1), f.produced.min(MAX_PRODUCTION), f.signal_level, f.analysis_performed as usize]
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirmRecord {
    pub unit_cost: f64,
    pub production: usize,
    pub analysis: bool,
    pub sold: usize,
    pub warehouse_before: usize,
    pub warehouse_after: usize,
    pub signal: usize,
    /// Posterior mean of the warehouse level at decision time.
    pub inferred_warehouse: f64,
    pub inferred_context: usize,
    pub p_reduce: f64,
    pub epistemic: usize,
    pub predicted_price: f64,
    pub a_hat: f64,
    pub br: usize,
    pub br_recomputed: bool,
    pub vfe: f64,
    /// Largest increase between consecutive free-energy values in the step's inference.
    pub vfe_max_rise: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    pub customers: u32,
    pub a: f64,
    pub price: f64,
    pub firms: Vec<FirmRecord>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub records: Vec<StepRecord>,
    pub agents: Vec<AgentRuntime>,
}

/// A failed run with everything recorded before the failure.
#[derive(Debug, Clone)]
pub struct RunFailure {
    pub error: Error,
    pub partial: Vec<StepRecord>,
}

impl std::fmt::Display for RunFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} (after {} steps)", self.error, self.partial.len())
    }
}

impl std::error::Error for RunFailure {}

fn max_rise(history: &[f64]) -> f64 {
    history.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max).max(0.0)
}

/// Initial best-response targets from the equilibrium at the first maximum price.
pub fn initial_best_responses(cfg: &ExperimentConfig) -> Result<Vec<usize>> {
    let q = nash_quantities(cfg.market.a_at(0), cfg.market.b, &cfg.unit_costs())?;
    Ok(q.iter().map(|x| (x.round().max(0.0) as usize).min(MAX_WAREHOUSE)).collect())
}

pub fn build_agents(cfg: &ExperimentConfig) -> Result<Vec<AgentRuntime>> {
    let brs = initial_best_responses(cfg)?;
    let n = cfg.n_firms();
    let mut agents = cfg
        .firms
        .iter()
        .enumerate()
        .map(|(i, f)| AgentRuntime::new(i, f, brs[i], cfg.market.b, n, &cfg.agent, derive_seed(cfg.seed, 100 + i as u64, 0)))
        .collect::<Result<Vec<_>>>()?;
    for a in &mut agents {
        a.pretrain(cfg.market.a_at(0), cfg.agent.pretrain_copies)?;
    }
    Ok(agents)
}

/// Runs the full experiment.
pub fn run_experiment(cfg: &ExperimentConfig) -> std::result::Result<RunOutput, RunFailure> {
    let mut records = Vec::with_capacity(cfg.market.horizon);
    match run_inner(cfg, &mut records) {
        Ok(agents) => Ok(RunOutput { records, agents }),
        Err(error) => Err(RunFailure { error, partial: records }),
    }
}

fn run_inner(cfg: &ExperimentConfig, records: &mut Vec<StepRecord>) -> Result<Vec<AgentRuntime>> {
    cfg.validate()?;
    let n = cfg.n_firms();
    let mut agents = build_agents(cfg)?;
    let mut truth: Vec<FirmGroundTruth> =
        cfg.firms.iter().map(|f| FirmGroundTruth { warehouse: 0, unit_cost: f.unit_cost }).collect();
    let mut last: Option<StepOutcome> = None;

    for t in 0..cfg.market.horizon {
        let last_sales: Vec<f64> = match &last {
            Some(o) => o.sold().iter().map(|s| *s as f64).collect(),
            None => vec![0.0; n],
        };
        let mut decisions = Vec::with_capacity(n);
        let mut snapshots = Vec::with_capacity(n);
        for (i, agent) in agents.iter_mut().enumerate() {
            agent.infer(&observation(last.as_ref(), i), &cfg.agent)?;
            let b = &agent.belief;
            snapshots.push((
                b.factor(factor::WAREHOUSE).mean(),
                b.factor(factor::CONTEXT).argmax(),
                b.factor(factor::CONTEXT).probs()[1],
                b.factor(factor::EPISTEMIC).argmax(),
                b.vfe(),
                max_rise(&b.vfe_history),
                b.iterations,
                b.converged,
            ));
            decisions.push(agent.decide(&last_sales, &cfg.agent, derive_seed(cfg.seed, 10 + i as u64, t as u64))?);
        }
        let productions: Vec<usize> = decisions.iter().map(|d| d.production).collect();
        let analyses: Vec<bool> = decisions.iter().map(|d| d.analysis).collect();
        let outcome = step_market(&cfg.market, &mut truth, &productions, &analyses, t, derive_seed(cfg.seed, 1, t as u64))?;

        let sold = outcome.sold();
        let total_sold: usize = sold.iter().sum();
        let mut firms = Vec::with_capacity(n);
        for (i, agent) in agents.iter_mut().enumerate() {
            agent.learn(&sold, outcome.price)?;
            let a_new = agent.ensemble.estimate_intercept();
            let recomputed = agent.maybe_recompute_br(a_new, (total_sold - sold[i]) as f64)?;
            let (inferred_warehouse, ctx, p_reduce, epi, vfe, rise, iterations, converged) = snapshots[i];
            let f = &outcome.firms[i];
            firms.push(FirmRecord {
                unit_cost: sig9(agent.unit_cost),
                production: f.produced,
                analysis: f.analysis_performed,
                sold: f.sold,
                warehouse_before: f.warehouse_before,
                warehouse_after: f.warehouse_after,
                signal: f.signal_level,
                inferred_warehouse: sig9(inferred_warehouse),
                inferred_context: ctx,
                p_reduce: sig9(p_reduce),
                epistemic: epi,
                predicted_price: sig9(decisions[i].predicted_price),
                a_hat: sig9(a_new),
                br: agent.br_current,
                br_recomputed: recomputed,
                vfe: sig9(vfe),
                vfe_max_rise: sig9(rise),
                iterations,
                converged,
            });
        }
        records.push(StepRecord { t, customers: outcome.customers, a: sig9(cfg.market.a_at(t)), price: sig9(outcome.price), firms });
        last = Some(outcome);
    }
    Ok(agents)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ScenarioId;
    use crate::srp::SrpConfig;

    #[test]
    fn seeds_are_stable_and_distinct() {
        assert_eq!(derive_seed(1, 2, 3), derive_seed(1, 2, 3));
        assert_ne!(derive_seed(1, 2, 3), derive_seed(1, 2, 4));
        assert_ne!(derive_seed(1, 2, 3), derive_seed(1, 3, 3));
    }

    #[test]
    fn sig9_is_idempotent() {
        for x in [21.0, 0.1, 1.0 / 3.0, -2.5e-7, 123456789.123] {
            assert_eq!(sig9(sig9(x)), sig9(x));
        }
        assert_eq!(sig9(21.0), 21.0);
    }

    #[test]
    fn bridge_recovers_a_line() {
        let est: Vec<f64> = (0..7).map(|p| 26.0 - p as f64).collect();
        let line = linear_bridge(&est, 11);
        for (s, v) in line.iter().enumerate() {
            assert!((v - (26.0 - s as f64)).abs() < 1e-12);
        }
    }

    #[test]
    fn preference_examples() {
        assert!(sales_preferences(&[0.0; 7], 0.1).iter().all(|c| *c == 0.0));
        // a = 30, b = 1, opponents sold 4
        let est: Vec<f64> = (0..7).map(|p| 30.0 - p as f64 - 4.0).collect();
        let c = sales_preferences(&est, 0.1);
        assert!((est[5] - 21.0).abs() < 1e-12);
        assert!((c[5] - 0.1 * 105.0).abs() < 1e-12);
        for cost in [0.0, 6.2, 17.0] {
            assert_eq!(firm::production_preferences(0.1, cost)[0], 0.0);
        }
    }

    fn agent(cost: f64) -> AgentRuntime {
        let cfg = AgentConfig { srp: SrpConfig { n_learners: 2, ..Default::default() }, ..Default::default() };
        let firm = FirmConfig { unit_cost: cost, model: FirmModelParams::default() };
        let mut a = AgentRuntime::new(0, &firm, 5, 1.0, 2, &cfg, 0).unwrap();
        a.a_hat_old = 30.0;
        a
    }

    #[test]
    fn br_recompute_examples() {
        let mut a = agent(16.0);
        assert!(!a.maybe_recompute_br(31.0, 4.0).unwrap());
        assert_eq!(a.a_hat_old, 31.0);
        a.a_hat_old = 30.0;
        assert!(a.maybe_recompute_br(45.0, 4.0).unwrap());
        assert_eq!(a.br_current, 10);
        assert_eq!(a.a_hat_old, 45.0);
        a.a_hat_old = 30.0;
        assert!(!a.maybe_recompute_br(30.0, 4.0).unwrap());
        // the rebuilt transition is normalized and targets the new best response
        assert!(a.gm.b[factor::WAREHOUSE].max_column_error() < 1e-9);
    }

    #[test]
    fn non_positive_previous_estimate_is_guarded() {
        let mut a = agent(16.0);
        a.a_hat_old = 0.0;
        assert!(a.maybe_recompute_br(30.0, 4.0).unwrap());
        assert_eq!(a.br_current, 5);
    }

    #[test]
    fn pretraining_sets_the_intercept() {
        let cfg = ExperimentConfig::preset(ScenarioId::DuopolyReference, 0).unwrap();
        let agents = build_agents(&cfg).unwrap();
        for a in &agents {
            assert!((a.a_hat_old - 30.0).abs() < 1e-9);
        }
        assert_eq!(agents[0].br_current, 5);
        assert_eq!(agents[1].br_current, 4);
    }

    #[test]
    fn duopoly_run_is_complete() {
        let cfg = ExperimentConfig::preset(ScenarioId::DuopolyReference, 3).unwrap();
        let out = run_experiment(&cfg).unwrap();
        assert_eq!(out.records.len(), 25);
        for r in &out.records {
            assert_eq!(r.firms.len(), 2);
            for f in &r.firms {
                assert!((0.0..=10.0).contains(&f.inferred_warehouse));
                assert!(f.br <= 10);
                assert!(f.sold <= f.warehouse_before + f.production);
                assert_eq!(f.warehouse_after, (f.warehouse_before + f.production - f.sold).min(10));
            }
        }
    }
}
