use serde::{Deserialize, Serialize};

use super::ModelSpec;
use crate::categorical::increment;
use crate::error::{Error, Result};

pub const DEFAULT_POLICY_CAP: usize = 10_000;

/// One level per control factor.
pub type JointAction = Vec<usize>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Policy {
    pub actions: Vec<JointAction>,
}

impl Policy {
    pub fn first(&self) -> &JointAction {
        &self.actions[0]
    }
}

/// All action sequences over the horizon, in mixed-radix order.
///
/// The first step is the most significant digit and, within a step, the first
/// control factor is; policy 0 is "all controls at level 0 throughout".
pub fn enumerate_policies(spec: &ModelSpec, cap: usize) -> Result<Vec<Policy>> {
    if spec.horizon == 0 {
        return Err(Error::InvalidModel("horizon must be at least 1".into()));
    }
    let cards = spec.control_cards();
    let per_step: u128 = cards.iter().map(|c| *c as u128).product();
    let count = (0..spec.horizon).try_fold(1u128, |acc, _| acc.checked_mul(per_step)).unwrap_or(u128::MAX);
    if count > cap as u128 {
        return Err(Error::PolicyExplosion { count, cap });
    }
    let digits: Vec<usize> = (0..spec.horizon).flat_map(|_| cards.iter().copied()).collect();
    let mut idx = vec![0usize; digits.len()];
    let n_controls = cards.len();
    let mut out = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let actions = if n_controls == 0 {
            vec![Vec::new(); spec.horizon]
        } else {
            idx.chunks(n_controls).map(|c| c.to_vec()).collect()
        };
        out.push(Policy { actions });
        increment(&mut idx, &digits);
    }
    Ok(out)
}
