use rand::Rng;
use rand_distr::{Distribution, Gamma};

use super::{ControlSpec, FactorSpec, GenerativeModel, JointAction, ModalitySpec, ModelSpec};
use crate::categorical::{normalize, Categorical, Cpt};
use crate::inference::{predictive_prior, Belief};

/// Symmetric Dirichlet draw via normalized gamma variates.
pub fn random_categorical<R: Rng + ?Sized>(rng: &mut R, n: usize, concentration: f64) -> Categorical {
    let gamma = Gamma::new(concentration, 1.0).expect("positive concentration");
    let draws: Vec<f64> = (0..n).map(|_| gamma.sample(rng) + 1e-300).collect();
    normalize(&draws).expect("positive draws")
}

/// A random model with dense tables, plus a prior, an action and an observation.
///
/// Every modality depends on all hidden factors. Likelihood columns are drawn
/// from a symmetric Dirichlet with the given concentration; transitions and
/// priors from a flat one. The first factor is driven by
/// a binary control, the rest are passive. The observation is sampled from the
/// model after one transition under the returned action.
pub fn random_model<R: Rng + ?Sized>(
    rng: &mut R,
    factor_cards: &[usize],
    modality_cards: &[usize],
    concentration: f64,
) -> (GenerativeModel, Belief, JointAction, Vec<usize>) {
    let all: Vec<usize> = (0..factor_cards.len()).collect();
    let spec = ModelSpec {
        hidden_factors: factor_cards.iter().enumerate().map(|(i, c)| FactorSpec::new(format!("s{i}"), *c)).collect(),
        modalities: modality_cards
            .iter()
            .enumerate()
            .map(|(i, c)| ModalitySpec { name: format!("o{i}"), card: *c, depends_on: all.clone() })
            .collect(),
        control_factors: vec![ControlSpec { name: "u".into(), card: 2, drives: vec![0] }],
        horizon: 1,
    };
    let a = modality_cards
        .iter()
        .map(|n| Cpt::from_fn(*n, factor_cards.to_vec(), |_| Ok(random_categorical(rng, *n, concentration))).expect("valid"))
        .collect();
    let b = factor_cards
        .iter()
        .enumerate()
        .map(|(f, n)| {
            Cpt::from_fn(*n, vec![*n, spec.action_card(f)], |_| Ok(random_categorical(rng, *n, 1.0))).expect("valid")
        })
        .collect();
    let c = modality_cards.iter().map(|n| (0..*n).map(|_| rng.random_range(-2.0..2.0)).collect()).collect();
    let d: Vec<Categorical> = factor_cards.iter().map(|n| random_categorical(rng, *n, 1.0)).collect();
    let gm = GenerativeModel::new(spec, a, b, c, d.clone()).expect("random model is valid");

    let prior = Belief::new(d);
    let action = vec![rng.random_range(0..2)];
    let predicted = predictive_prior(&gm, &prior.factors, Some(&action));
    let state: Vec<usize> = predicted.iter().map(|q| q.sample(rng)).collect();
    let obs = gm.a.iter().map(|a| normalize(a.column(&state)).expect("column").sample(rng)).collect();
    (gm, prior, action, obs)
}
