use super::{Belief, InferenceConfig};
use crate::categorical::{increment, ln_floor, normalize, softmax, Categorical, Cpt};
use crate::error::{Error, Result};
use crate::genmodel::GenerativeModel;

/// Largest joint state space the exact oracle will enumerate.
pub const ORACLE_CAP: usize = 1_000_000;

/// Pushes each factor marginal through its transition under `action`.
///
/// With no previous action (first step) the marginals are returned unchanged.
pub fn predictive_prior(gm: &GenerativeModel, factors: &[Categorical], action: Option<&[usize]>) -> Vec<Categorical> {
    let Some(action) = action else {
        return factors.to_vec();
    };
    factors
        .iter()
        .enumerate()
        .map(|(f, q)| {
            let u = gm.spec.controller_of(f).map_or(0, |c| action[c]);
            propagate(&gm.b[f], q.probs(), u)
        })
        .collect()
}

pub(crate) fn propagate(b: &Cpt, q: &[f64], u: usize) -> Categorical {
    let n = b.outcome_card();
    let mut next = vec![0.0; n];
    for (s, p) in q.iter().enumerate() {
        if *p == 0.0 {
            continue;
        }
        for (s2, t) in b.column(&[s, u]).iter().enumerate() {
            next[s2] += p * t;
        }
    }
    normalize(&next).expect("transition of a valid belief has mass")
}

struct LogLik<'a> {
    deps: &'a [usize],
    cards: Vec<usize>,
    values: Vec<f64>,
}

fn log_likelihoods<'a>(gm: &'a GenerativeModel, obs: &[usize]) -> Result<Vec<LogLik<'a>>> {
    if obs.len() != gm.n_modalities() {
        return Err(Error::Dimension { expected: gm.n_modalities(), got: obs.len() });
    }
    gm.spec
        .modalities
        .iter()
        .zip(&gm.a)
        .zip(obs)
        .map(|((m, a), o)| {
            if *o >= m.card {
                return Err(Error::Parameter(format!("observation {o} out of range for {}", m.name)));
            }
            let values = (0..a.n_columns()).map(|j| ln_floor(a.column_at(j)[*o])).collect();
            Ok(LogLik { deps: &m.depends_on, cards: a.condition_cards().to_vec(), values })
        })
        .collect()
}

/// Expected log-likelihood of factor `f` (at position `k` in the deps) under the other marginals.
fn message(ll: &LogLik, k: usize, q: &[Categorical], out: &mut [f64]) {
    let mut idx = vec![0usize; ll.cards.len()];
    for value in &ll.values {
        let mut w = 1.0;
        for (pos, (dep, i)) in ll.deps.iter().zip(&idx).enumerate() {
            if pos != k {
                w *= q[*dep].probs()[*i];
            }
        }
        if w != 0.0 {
            out[idx[k]] += w * value;
        }
        increment(&mut idx, &ll.cards);
    }
}

fn expected_loglik(ll: &LogLik, q: &[Categorical]) -> f64 {
    let mut idx = vec![0usize; ll.cards.len()];
    let mut total = 0.0;
    for value in &ll.values {
        let w: f64 = ll.deps.iter().zip(&idx).map(|(dep, i)| q[*dep].probs()[*i]).product();
        if w != 0.0 {
            total += w * value;
        }
        increment(&mut idx, &ll.cards);
    }
    total
}

fn free_energy(q: &[Categorical], log_prior: &[Vec<f64>], lls: &[LogLik]) -> f64 {
    let mut f = 0.0;
    for (qf, lp) in q.iter().zip(log_prior) {
        for (p, l) in qf.probs().iter().zip(lp) {
            if *p > 0.0 {
                f += p * (p.ln() - l);
            }
        }
    }
    f - lls.iter().map(|ll| expected_loglik(ll, q)).sum::<f64>()
}

/// Mean-field posterior over hidden factors given one joint observation.
///
/// Factors are updated one at a time (coordinate descent on the free energy),
/// each update being exact given the others, so the free energy is
/// non-increasing across sweeps. Hitting `max_iterations` is reported through
/// `converged = false`, not as an error.
pub fn infer_states(
    gm: &GenerativeModel,
    prior: &Belief,
    prev_action: Option<&[usize]>,
    obs: &[usize],
    cfg: &InferenceConfig,
) -> Result<Belief> {
    if prior.factors.len() != gm.n_factors() {
        return Err(Error::Dimension { expected: gm.n_factors(), got: prior.factors.len() });
    }
    let predicted = predictive_prior(gm, &prior.factors, prev_action);
    let log_prior: Vec<Vec<f64>> = predicted.iter().map(|q| q.probs().iter().map(|p| ln_floor(*p)).collect()).collect();
    let lls = log_likelihoods(gm, obs)?;

    // modalities touching each factor, with the factor's position in their deps
    let touching: Vec<Vec<(usize, usize)>> = (0..gm.n_factors())
        .map(|f| {
            lls.iter()
                .enumerate()
                .filter_map(|(m, ll)| ll.deps.iter().position(|d| *d == f).map(|k| (m, k)))
                .collect()
        })
        .collect();

    let mut q = predicted;
    let mut history = vec![free_energy(&q, &log_prior, &lls)];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iterations {
        iterations += 1;
        let mut delta: f64 = 0.0;
        for f in 0..gm.n_factors() {
            let mut msg = log_prior[f].clone();
            for (m, k) in &touching[f] {
                message(&lls[*m], *k, &q, &mut msg);
            }
            let updated = softmax(&msg, 1.0);
            for (a, b) in updated.probs().iter().zip(q[f].probs()) {
                delta = delta.max((a - b).abs());
            }
            q[f] = updated;
        }
        history.push(free_energy(&q, &log_prior, &lls));
        if delta < cfg.convergence_tol {
            converged = true;
            break;
        }
    }
    Ok(Belief { factors: q, iterations, converged, vfe_history: history })
}

/// Exact joint posterior and its factor marginals.
#[derive(Debug, Clone)]
pub struct ExactPosterior {
    /// Row-major over hidden factors (first factor slowest).
    pub joint: Vec<f64>,
    pub marginals: Vec<Categorical>,
}

/// Brute-force Bayes over the full joint state space.
pub fn exact_posterior(
    gm: &GenerativeModel,
    prior: &Belief,
    prev_action: Option<&[usize]>,
    obs: &[usize],
) -> Result<ExactPosterior> {
    let cards = gm.spec.factor_cards();
    let size = cards.iter().try_fold(1usize, |acc, c| acc.checked_mul(*c)).unwrap_or(usize::MAX);
    if size > ORACLE_CAP {
        return Err(Error::OracleCapacity { size, cap: ORACLE_CAP });
    }
    if obs.len() != gm.n_modalities() {
        return Err(Error::Dimension { expected: gm.n_modalities(), got: obs.len() });
    }
    let predicted = predictive_prior(gm, &prior.factors, prev_action);
    let mut joint = Vec::with_capacity(size);
    let mut idx = vec![0usize; cards.len()];
    for _ in 0..size {
        let mut p: f64 = idx.iter().zip(&predicted).map(|(i, q)| q.probs()[*i]).product();
        for ((m, a), o) in gm.spec.modalities.iter().zip(&gm.a).zip(obs) {
            let conds: Vec<usize> = m.depends_on.iter().map(|f| idx[*f]).collect();
            p *= a.prob(*o, &conds);
        }
        joint.push(p);
        increment(&mut idx, &cards);
    }
    let total: f64 = joint.iter().sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateLikelihood("observation has zero probability under the model".into()));
    }
    joint.iter_mut().for_each(|p| *p /= total);

    let mut marginals: Vec<Vec<f64>> = cards.iter().map(|c| vec![0.0; *c]).collect();
    let mut idx = vec![0usize; cards.len()];
    for p in &joint {
        for (f, i) in idx.iter().enumerate() {
            marginals[f][*i] += p;
        }
        increment(&mut idx, &cards);
    }
    let marginals = marginals.iter().map(|m| normalize(m)).collect::<Result<Vec<_>>>()?;
    Ok(ExactPosterior { joint, marginals })
}

/// Posterior over a context factor from one context-bearing observation.
///
/// The modality's likelihood is averaged over its other dependencies under
/// `belief`, then combined with the belief's context marginal as the prior.
pub fn infer_context(
    gm: &GenerativeModel,
    belief: &Belief,
    context_factor: usize,
    modality: usize,
    obs_level: usize,
) -> Result<Categorical> {
    let m = &gm.spec.modalities[modality];
    if obs_level >= m.card {
        return Err(Error::Parameter(format!("observation {obs_level} out of range for {}", m.name)));
    }
    let a = &gm.a[modality];
    let prior = belief.factor(context_factor).probs();
    let mut lik = vec![0.0; prior.len()];
    match m.depends_on.iter().position(|f| *f == context_factor) {
        None => lik.iter_mut().for_each(|l| *l = 1.0),
        Some(k) => {
            let cards = a.condition_cards().to_vec();
            let mut idx = vec![0usize; cards.len()];
            for j in 0..a.n_columns() {
                let w: f64 = m
                    .depends_on
                    .iter()
                    .zip(&idx)
                    .enumerate()
                    .filter(|(pos, _)| *pos != k)
                    .map(|(_, (dep, i))| belief.factor(*dep).probs()[*i])
                    .product();
                lik[idx[k]] += w * a.column_at(j)[obs_level];
                increment(&mut idx, &cards);
            }
        }
    }
    let post: Vec<f64> = lik.iter().zip(prior).map(|(l, p)| l * p).collect();
    normalize(&post).map_err(|_| Error::DegenerateLikelihood("context evidence has zero mass".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::categorical::kl_divergence;
    use crate::genmodel::{ControlSpec, FactorSpec, ModalitySpec, ModelSpec};
    use crate::genmodel::random_model;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn single_factor_model(a: Cpt, n: usize) -> GenerativeModel {
        let spec = ModelSpec {
            hidden_factors: vec![FactorSpec::new("s", n)],
            modalities: vec![ModalitySpec { name: "o".into(), card: a.outcome_card(), depends_on: vec![0] }],
            control_factors: vec![ControlSpec { name: "u".into(), card: 1, drives: vec![0] }],
            horizon: 1,
        };
        let b = Cpt::from_fn(n, vec![n, 1], |c| Ok(Categorical::delta(n, c[0]))).unwrap();
        let c = vec![vec![0.0; a.outcome_card()]];
        GenerativeModel::new(spec, vec![a], vec![b], c, vec![Categorical::uniform(n)]).unwrap()
    }

    #[test]
    fn identity_likelihood_gives_delta() {
        let n = 5;
        let a = Cpt::from_fn(n, vec![n], |c| Ok(Categorical::delta(n, c[0]))).unwrap();
        let gm = single_factor_model(a, n);
        let prior = Belief::new(vec![normalize(&[0.1, 0.2, 0.3, 0.2, 0.2]).unwrap()]);
        let post = infer_states(&gm, &prior, None, &[3], &InferenceConfig::default()).unwrap();
        assert!(post.factors[0].probs()[3] > 1.0 - 1e-12);
    }

    #[test]
    fn uniform_likelihood_keeps_prior() {
        let n = 4;
        let a = Cpt::from_fn(3, vec![n], |_| Ok(Categorical::uniform(3))).unwrap();
        let gm = single_factor_model(a, n);
        let prior = Belief::new(vec![normalize(&[0.4, 0.3, 0.2, 0.1]).unwrap()]);
        let post = infer_states(&gm, &prior, Some(&[0]), &[1], &InferenceConfig::default()).unwrap();
        for (x, y) in post.factors[0].probs().iter().zip(prior.factors[0].probs()) {
            assert!((x - y).abs() < 1e-12);
        }
        let exact = exact_posterior(&gm, &prior, Some(&[0]), &[1]).unwrap();
        for (x, y) in exact.joint.iter().zip(prior.factors[0].probs()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn delta_prior_with_matching_identity_observation() {
        let n = 3;
        let a = Cpt::from_fn(n, vec![n], |c| Ok(Categorical::delta(n, c[0]))).unwrap();
        let gm = single_factor_model(a, n);
        let prior = Belief::new(vec![Categorical::delta(n, 2)]);
        let exact = exact_posterior(&gm, &prior, None, &[2]).unwrap();
        assert_eq!(exact.marginals[0].probs(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn matches_oracle_on_random_models() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cfg = InferenceConfig { max_iterations: 64, convergence_tol: 1e-10, ..Default::default() };
        for _ in 0..50 {
            let (gm, prior, action, obs) = random_model(&mut rng, &[3, 4], &[3, 5], 10.0);
            let post = infer_states(&gm, &prior, Some(&action), &obs, &cfg).unwrap();
            let exact = exact_posterior(&gm, &prior, Some(&action), &obs).unwrap();
            for f in 0..2 {
                assert!(kl_divergence(&exact.marginals[f], &post.factors[f]) <= 0.05);
            }
            for w in post.vfe_history.windows(2) {
                assert!(w[1] <= w[0] + 1e-9, "{:?}", post.vfe_history);
            }
        }
    }

    #[test]
    fn single_factor_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let (gm, prior, action, obs) = random_model(&mut rng, &[7], &[5, 3], 1.0);
            let post = infer_states(&gm, &prior, Some(&action), &obs, &InferenceConfig::default()).unwrap();
            let exact = exact_posterior(&gm, &prior, Some(&action), &obs).unwrap();
            for (x, y) in post.factors[0].probs().iter().zip(exact.marginals[0].probs()) {
                assert!((x - y).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn oracle_capacity() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (gm, prior, _, obs) = random_model(&mut rng, &[1001, 1001], &[2], 1.0);
        assert!(matches!(exact_posterior(&gm, &prior, None, &obs), Err(Error::OracleCapacity { .. })));
    }

    #[test]
    fn context_inference_cases() {
        // modality depends on (w, ctx); context 1 alone can emit observation 2
        let spec = ModelSpec {
            hidden_factors: vec![FactorSpec::new("w", 2), FactorSpec::new("ctx", 2)],
            modalities: vec![ModalitySpec { name: "sig".into(), card: 3, depends_on: vec![0, 1] }],
            control_factors: vec![],
            horizon: 1,
        };
        let a = Cpt::from_fn(3, vec![2, 2], |c| {
            if c[1] == 1 {
                Ok(Categorical::delta(3, 2))
            } else {
                normalize(&[1.0, 1.0, 0.0])
            }
        })
        .unwrap();
        let b = vec![
            Cpt::from_fn(2, vec![2, 1], |c| Ok(Categorical::delta(2, c[0]))).unwrap(),
            Cpt::from_fn(2, vec![2, 1], |c| Ok(Categorical::delta(2, c[0]))).unwrap(),
        ];
        let gm = GenerativeModel::new(
            spec.clone(),
            vec![a],
            b.clone(),
            vec![vec![0.0; 3]],
            vec![Categorical::uniform(2), Categorical::uniform(2)],
        )
        .unwrap();
        let belief = Belief::new(vec![Categorical::uniform(2), Categorical::uniform(2)]);
        let post = infer_context(&gm, &belief, 1, 0, 2).unwrap();
        assert_eq!(post.probs(), &[0.0, 1.0]);

        let flat = Cpt::from_fn(3, vec![2, 2], |_| Ok(Categorical::uniform(3))).unwrap();
        let gm = GenerativeModel::new(spec, vec![flat], b, vec![vec![0.0; 3]], gm.d.clone()).unwrap();
        let belief = Belief::new(vec![Categorical::uniform(2), normalize(&[0.7, 0.3]).unwrap()]);
        let post = infer_context(&gm, &belief, 1, 0, 0).unwrap();
        assert!((post.probs()[0] - 0.7).abs() < 1e-12);
    }
}
