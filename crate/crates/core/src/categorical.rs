//! Dense categorical distributions and conditional probability tables.
//!
//! Everything downstream (likelihoods, transitions, priors, beliefs) is built
//! from these two types. Public values are linear-space probabilities; log-space
//! is used only inside inference loops via [`ln_floor`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floor added before taking the logarithm of a model probability.
pub const LOG_FLOOR: f64 = 1e-16;

/// Tolerance for "sums to one".
pub const NORM_TOL: f64 = 1e-9;

/// `ln(p + LOG_FLOOR)`.
#[inline]
pub fn ln_floor(p: f64) -> f64 {
    (p + LOG_FLOOR).ln()
}

/// A normalized probability vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Categorical {
    probs: Vec<f64>,
}

impl Categorical {
    /// Wraps `probs` after checking it is non-negative and sums to one.
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Normalization("empty vector".into()));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::Normalization(format!("negative or non-finite entry in {probs:?}")));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > NORM_TOL {
            return Err(Error::Normalization(format!("entries sum to {total}, not 1")));
        }
        Ok(Self { probs })
    }

    pub fn uniform(n: usize) -> Self {
        assert!(n > 0, "uniform over zero outcomes");
        Self { probs: vec![1.0 / n as f64; n] }
    }

    pub fn delta(n: usize, at: usize) -> Self {
        assert!(at < n, "delta index {at} out of range {n}");
        let mut probs = vec![0.0; n];
        probs[at] = 1.0;
        Self { probs }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Index of the largest entry; lowest index wins ties.
    pub fn argmax(&self) -> usize {
        argmax(&self.probs)
    }

    /// Expected index, `Σ i·p_i`.
    pub fn mean(&self) -> f64 {
        self.probs.iter().enumerate().map(|(i, p)| i as f64 * p).sum()
    }

    /// Draws one index by inverse CDF.
    pub fn sample<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut cum = 0.0;
        for (i, p) in self.probs.iter().enumerate() {
            cum += p;
            if u < cum {
                return i;
            }
        }
        self.probs.iter().rposition(|p| *p > 0.0).unwrap_or(0)
    }
}

/// Index of the largest value, lowest index on ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Rescales a non-negative vector to sum to one.
pub fn normalize(v: &[f64]) -> Result<Categorical> {
    if v.is_empty() {
        return Err(Error::Normalization("empty vector".into()));
    }
    if v.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::Normalization(format!("negative or non-finite entry in {v:?}")));
    }
    let total: f64 = v.iter().sum();
    if total <= 0.0 {
        return Err(Error::Normalization("all-zero vector".into()));
    }
    Ok(Categorical { probs: v.iter().map(|x| x / total).collect() })
}

/// `KL(p ‖ q) = Σ p_i ln(p_i / q_i)` with `0·ln(0/x) = 0`.
///
/// Returns `f64::INFINITY` when `p` puts mass where `q` has none.
pub fn kl_divergence(p: &Categorical, q: &Categorical) -> f64 {
    assert_eq!(p.len(), q.len(), "KL between distributions of different lengths");
    let mut total = 0.0;
    for (pi, qi) in p.probs.iter().zip(&q.probs) {
        if *pi == 0.0 {
            continue;
        }
        if *qi == 0.0 {
            return f64::INFINITY;
        }
        total += pi * (pi / qi).ln();
    }
    total.max(0.0)
}

/// Shannon entropy in nats.
pub fn entropy(p: &Categorical) -> f64 {
    -p.probs.iter().filter(|x| **x > 0.0).map(|x| x * x.ln()).sum::<f64>()
}

/// `p_i ∝ exp(precision · values_i)`, stabilized by subtracting the max.
pub fn softmax(values: &[f64], precision: f64) -> Categorical {
    assert!(!values.is_empty(), "softmax of empty vector");
    let max = values.iter().map(|v| precision * v).fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = values.iter().map(|v| (precision * v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Categorical { probs: exps.into_iter().map(|e| e / total).collect() }
}

/// Gaussian bump over the integer support `0..n`, truncated and renormalized.
///
/// If the center lies so far outside the support that every entry underflows,
/// all mass goes to the nearest support point.
pub fn discretized_gaussian(center: f64, sigma: f64, n: usize) -> Result<Categorical> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::Parameter(format!("sigma must be positive, got {sigma}")));
    }
    if n == 0 {
        return Err(Error::Parameter("support size must be at least 1".into()));
    }
    if !center.is_finite() {
        return Err(Error::Parameter(format!("non-finite center {center}")));
    }
    let weights: Vec<f64> = (0..n)
        .map(|i| {
            let d = i as f64 - center;
            (-d * d / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    match normalize(&weights) {
        Ok(c) => Ok(c),
        Err(_) => {
            let nearest = center.round().clamp(0.0, (n - 1) as f64) as usize;
            Ok(Categorical::delta(n, nearest))
        }
    }
}

/// Truncated discretized gaussian whose mean, rather than its location, is `mean`.
///
/// The location is solved by bisection. A mean at or beyond either end of the
/// support gives a delta there.
pub fn mean_matched_gaussian(mean: f64, sigma: f64, n: usize) -> Result<Categorical> {
    let top = n.saturating_sub(1) as f64;
    if mean.is_finite() && n > 0 {
        if mean <= 0.0 {
            return Ok(Categorical::delta(n, 0));
        }
        if mean >= top {
            return Ok(Categorical::delta(n, n - 1));
        }
    }
    let (mut lo, mut hi) = (-top - 20.0 * sigma, 2.0 * top + 20.0 * sigma);
    let mut best = discretized_gaussian(mean, sigma, n)?;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        best = discretized_gaussian(mid, sigma, n)?;
        let m = best.mean();
        if (m - mean).abs() < 1e-12 {
            break;
        }
        if m < mean {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(best)
}

/// A conditional probability table `p(outcome | conditions)`.
///
/// Stored column-major in the sense that each joint condition index owns a
/// contiguous block of `outcome_card` entries. Joint condition indices are
/// row-major over `condition_cards` (the first condition varies slowest).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cpt {
    outcome_card: usize,
    condition_cards: Vec<usize>,
    table: Vec<f64>,
}

impl Cpt {
    /// Builds a table from one column per joint condition index.
    pub fn from_columns(
        outcome_card: usize,
        condition_cards: Vec<usize>,
        columns: Vec<Categorical>,
    ) -> Result<Self> {
        let n_cols: usize = condition_cards.iter().product();
        if outcome_card == 0 || condition_cards.iter().any(|c| *c == 0) {
            return Err(Error::InvalidModel("zero cardinality in CPT".into()));
        }
        if columns.len() != n_cols {
            return Err(Error::Dimension { expected: n_cols, got: columns.len() });
        }
        let mut table = Vec::with_capacity(n_cols * outcome_card);
        for col in columns {
            if col.len() != outcome_card {
                return Err(Error::Dimension { expected: outcome_card, got: col.len() });
            }
            table.extend(col.into_vec());
        }
        Ok(Self { outcome_card, condition_cards, table })
    }

    /// Builds a table from a generator `f(condition indices) -> column`.
    pub fn from_fn<F>(outcome_card: usize, condition_cards: Vec<usize>, mut f: F) -> Result<Self>
    where
        F: FnMut(&[usize]) -> Result<Categorical>,
    {
        let n_cols: usize = condition_cards.iter().product();
        let mut columns = Vec::with_capacity(n_cols);
        let mut idx = vec![0usize; condition_cards.len()];
        for _ in 0..n_cols {
            columns.push(f(&idx)?);
            increment(&mut idx, &condition_cards);
        }
        Self::from_columns(outcome_card, condition_cards, columns)
    }

    pub fn outcome_card(&self) -> usize {
        self.outcome_card
    }

    pub fn condition_cards(&self) -> &[usize] {
        &self.condition_cards
    }

    pub fn n_columns(&self) -> usize {
        self.table.len() / self.outcome_card
    }

    /// Joint column index for per-condition indices.
    pub fn column_index(&self, conds: &[usize]) -> usize {
        debug_assert_eq!(conds.len(), self.condition_cards.len());
        conds.iter().zip(&self.condition_cards).fold(0, |acc, (i, c)| acc * c + i)
    }

    pub fn column(&self, conds: &[usize]) -> &[f64] {
        self.column_at(self.column_index(conds))
    }

    pub fn column_at(&self, joint: usize) -> &[f64] {
        let start = joint * self.outcome_card;
        &self.table[start..start + self.outcome_card]
    }

    /// `p(outcome | conds)`.
    pub fn prob(&self, outcome: usize, conds: &[usize]) -> f64 {
        self.column(conds)[outcome]
    }

    /// Largest deviation of any column sum from one.
    pub fn max_column_error(&self) -> f64 {
        self.table
            .chunks(self.outcome_card)
            .map(|c| (c.iter().sum::<f64>() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Checks every column is a valid categorical within [`NORM_TOL`].
    pub fn validate(&self) -> Result<()> {
        let n_cols: usize = self.condition_cards.iter().product();
        if self.outcome_card == 0 || self.table.len() != n_cols * self.outcome_card {
            return Err(Error::InvalidModel("CPT table does not match its cardinalities".into()));
        }
        if self.table.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidModel("negative or non-finite CPT entry".into()));
        }
        let err = self.max_column_error();
        if err > NORM_TOL {
            return Err(Error::InvalidModel(format!("CPT column off by {err}")));
        }
        Ok(())
    }
}

/// Advances a mixed-radix counter (last digit fastest). Wraps to zero.
pub(crate) fn increment(idx: &mut [usize], cards: &[usize]) {
    for k in (0..idx.len()).rev() {
        idx[k] += 1;
        if idx[k] < cards[k] {
            return;
        }
        idx[k] = 0;
    }
}
