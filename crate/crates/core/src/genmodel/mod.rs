//! Factored discrete generative models: structure, arrays and policies.
//!
//! A [`GenerativeModel`] holds one likelihood table per observation modality
//! (`A`), one transition table per hidden factor (`B`), log-preference vectors
//! over observations (`C`) and initial priors over hidden factors (`D`).
//! The firm-specific builders live in [`firm`].

pub mod firm;
mod policy;
mod random;

use serde::{Deserialize, Serialize};

use crate::categorical::{Categorical, Cpt};
use crate::error::{Error, Result};

pub use policy::{enumerate_policies, JointAction, Policy, DEFAULT_POLICY_CAP};
pub use random::{random_categorical, random_model};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorSpec {
    pub name: String,
    pub card: usize,
}

impl FactorSpec {
    pub fn new(name: impl Into<String>, card: usize) -> Self {
        Self { name: name.into(), card }
    }
}

/// An observation channel and the hidden factors its likelihood conditions on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModalitySpec {
    pub name: String,
    pub card: usize,
    pub depends_on: Vec<usize>,
}

/// A control factor and the hidden factors whose transitions it indexes.
///
/// A control may drive several hidden factors (a shared control group); every
/// hidden factor is driven by at most one control. Undriven factors are passive
/// and their transitions carry a single dummy action column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlSpec {
    pub name: String,
    pub card: usize,
    pub drives: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub hidden_factors: Vec<FactorSpec>,
    pub modalities: Vec<ModalitySpec>,
    pub control_factors: Vec<ControlSpec>,
    pub horizon: usize,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidModel(msg));
        if self.horizon == 0 {
            return bad("horizon must be at least 1".into());
        }
        let n_factors = self.hidden_factors.len();
        if n_factors == 0 {
            return bad("model needs at least one hidden factor".into());
        }
        check_unique(self.hidden_factors.iter().map(|f| f.name.as_str()), "hidden factor")?;
        check_unique(self.modalities.iter().map(|m| m.name.as_str()), "modality")?;
        check_unique(self.control_factors.iter().map(|c| c.name.as_str()), "control factor")?;
        for f in &self.hidden_factors {
            if f.card == 0 {
                return bad(format!("hidden factor {} has zero cardinality", f.name));
            }
        }
        for m in &self.modalities {
            if m.card == 0 {
                return bad(format!("modality {} has zero cardinality", m.name));
            }
            if m.depends_on.is_empty() || m.depends_on.iter().any(|f| *f >= n_factors) {
                return bad(format!("modality {} has invalid dependencies", m.name));
            }
            check_unique(m.depends_on.iter().map(|f| f.to_string()), "modality dependency")?;
        }
        let mut driven = vec![false; n_factors];
        for c in &self.control_factors {
            if c.card == 0 {
                return bad(format!("control {} has zero cardinality", c.name));
            }
            for f in &c.drives {
                if *f >= n_factors {
                    return bad(format!("control {} drives unknown factor {f}", c.name));
                }
                if driven[*f] {
                    return bad(format!("factor {} is driven by two controls", self.hidden_factors[*f].name));
                }
                driven[*f] = true;
            }
        }
        Ok(())
    }

    /// Index of the control factor that drives hidden factor `f`, if any.
    pub fn controller_of(&self, f: usize) -> Option<usize> {
        self.control_factors.iter().position(|c| c.drives.contains(&f))
    }

    /// Number of action columns in the transition table of factor `f`.
    pub fn action_card(&self, f: usize) -> usize {
        self.controller_of(f).map_or(1, |c| self.control_factors[c].card)
    }

    pub fn factor_cards(&self) -> Vec<usize> {
        self.hidden_factors.iter().map(|f| f.card).collect()
    }

    pub fn control_cards(&self) -> Vec<usize> {
        self.control_factors.iter().map(|c| c.card).collect()
    }

    pub fn factor_index(&self, name: &str) -> Option<usize> {
        self.hidden_factors.iter().position(|f| f.name == name)
    }

    pub fn modality_index(&self, name: &str) -> Option<usize> {
        self.modalities.iter().position(|m| m.name == name)
    }
}

fn check_unique<I, S>(names: I, what: &str) -> Result<()>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut seen = std::collections::BTreeSet::new();
    for n in names {
        if !seen.insert(n.as_ref().to_owned()) {
            return Err(Error::InvalidModel(format!("duplicate {what} '{}'", n.as_ref())));
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerativeModel {
    pub spec: ModelSpec,
    /// `p(o_m | deps_m)` per modality.
    pub a: Vec<Cpt>,
    /// `p(s_f' | s_f, u)` per hidden factor, conditions `[s_f, u]`.
    pub b: Vec<Cpt>,
    /// Log-preferences over each modality's outcomes.
    pub c: Vec<Vec<f64>>,
    pub d: Vec<Categorical>,
}

impl GenerativeModel {
    pub fn new(spec: ModelSpec, a: Vec<Cpt>, b: Vec<Cpt>, c: Vec<Vec<f64>>, d: Vec<Categorical>) -> Result<Self> {
        let gm = Self { spec, a, b, c, d };
        validate_model(&gm)?;
        Ok(gm)
    }

    pub fn n_factors(&self) -> usize {
        self.spec.hidden_factors.len()
    }

    pub fn n_modalities(&self) -> usize {
        self.spec.modalities.len()
    }

    /// Swaps in a whole new set of preference vectors.
    pub fn replace_preferences(&mut self, c: Vec<Vec<f64>>) -> Result<()> {
        check_preferences(&self.spec, &c)?;
        self.c = c;
        Ok(())
    }

    pub fn replace_transition(&mut self, factor: usize, cpt: Cpt) -> Result<()> {
        check_transition(&self.spec, factor, &cpt)?;
        self.b[factor] = cpt;
        Ok(())
    }

    pub fn replace_likelihood(&mut self, modality: usize, cpt: Cpt) -> Result<()> {
        check_likelihood(&self.spec, modality, &cpt)?;
        self.a[modality] = cpt;
        Ok(())
    }
}

/// Checks shapes against the spec and that every column is normalized.
pub fn validate_model(gm: &GenerativeModel) -> Result<()> {
    let spec = &gm.spec;
    spec.validate()?;
    if gm.a.len() != spec.modalities.len() {
        return Err(Error::InvalidModel(format!("{} likelihoods for {} modalities", gm.a.len(), spec.modalities.len())));
    }
    if gm.b.len() != spec.hidden_factors.len() || gm.d.len() != spec.hidden_factors.len() {
        return Err(Error::InvalidModel("transition/prior count differs from hidden factor count".into()));
    }
    for (m, cpt) in gm.a.iter().enumerate() {
        check_likelihood(spec, m, cpt)?;
    }
    for (f, cpt) in gm.b.iter().enumerate() {
        check_transition(spec, f, cpt)?;
    }
    for (f, d) in gm.d.iter().enumerate() {
        if d.len() != spec.hidden_factors[f].card {
            return Err(Error::InvalidModel(format!("prior for factor {f} has wrong length")));
        }
    }
    check_preferences(spec, &gm.c)
}

fn check_likelihood(spec: &ModelSpec, m: usize, cpt: &Cpt) -> Result<()> {
    let modality = &spec.modalities[m];
    let cards: Vec<usize> = modality.depends_on.iter().map(|f| spec.hidden_factors[*f].card).collect();
    if cpt.outcome_card() != modality.card || cpt.condition_cards() != cards.as_slice() {
        return Err(Error::InvalidModel(format!("likelihood for {} has wrong shape", modality.name)));
    }
    cpt.validate()
}

fn check_transition(spec: &ModelSpec, f: usize, cpt: &Cpt) -> Result<()> {
    let card = spec.hidden_factors[f].card;
    let expected = [card, spec.action_card(f)];
    if cpt.outcome_card() != card || cpt.condition_cards() != expected {
        return Err(Error::InvalidModel(format!(
            "transition for {} has wrong shape",
            spec.hidden_factors[f].name
        )));
    }
    cpt.validate()
}

fn check_preferences(spec: &ModelSpec, c: &[Vec<f64>]) -> Result<()> {
    if c.len() != spec.modalities.len() {
        return Err(Error::InvalidModel("one preference vector per modality required".into()));
    }
    for (m, v) in c.iter().enumerate() {
        if v.len() != spec.modalities[m].card || v.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidModel(format!("bad preference vector for {}", spec.modalities[m].name)));
        }
    }
    Ok(())
}
