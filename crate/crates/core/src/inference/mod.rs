//! State inference, contextual inference and policy selection.

mod efe;
mod states;

use serde::{Deserialize, Serialize};

use crate::categorical::Categorical;
use crate::error::{Error, Result};

pub use efe::{expected_free_energy, infer_policies, select_action, EfeBreakdown, StepEfe};
pub use states::{exact_posterior, infer_context, infer_states, predictive_prior, ExactPosterior, ORACLE_CAP};

/// Mean-field posterior, one marginal per hidden factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Belief {
    pub factors: Vec<Categorical>,
    pub iterations: usize,
    pub converged: bool,
    /// Free energy after each sweep; the first entry is at the predictive prior.
    pub vfe_history: Vec<f64>,
}

impl Belief {
    pub fn new(factors: Vec<Categorical>) -> Self {
        Self { factors, iterations: 0, converged: true, vfe_history: Vec::new() }
    }

    /// Free energy at the returned belief.
    pub fn vfe(&self) -> f64 {
        self.vfe_history.last().copied().unwrap_or(f64::NAN)
    }

    pub fn factor(&self, f: usize) -> &Categorical {
        &self.factors[f]
    }

    pub fn with_factor(mut self, f: usize, marginal: Categorical) -> Self {
        self.factors[f] = marginal;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionMode {
    Argmin,
    Sample,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InferenceConfig {
    pub max_iterations: usize,
    pub convergence_tol: f64,
    pub policy_precision: f64,
    pub selection_mode: SelectionMode,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self { max_iterations: 16, convergence_tol: 1e-6, policy_precision: 16.0, selection_mode: SelectionMode::Argmin }
    }
}

impl InferenceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::Parameter("max_iterations must be positive".into()));
        }
        if !(self.convergence_tol > 0.0) || !(self.policy_precision > 0.0) || !self.policy_precision.is_finite() {
            return Err(Error::Parameter("convergence_tol and policy_precision must be positive".into()));
        }
        Ok(())
    }
}
