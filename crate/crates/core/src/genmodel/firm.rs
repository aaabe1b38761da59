//! Builders for the firm agent's generative model.
//!
//! Hidden factors: warehouse stock (0..=10), production context (acceptable /
//! reduce), epistemic state (not analyzed / analyzed) and last production
//! (0..=6). Observations: units sold, previous production, a four-level stock
//! occupancy signal and an analysis flag. Controls: production quantity, which
//! drives both the warehouse and the last-production factor, and the analysis
//! action, which drives the epistemic factor.

use serde::{Deserialize, Serialize};

use super::{ControlSpec, FactorSpec, GenerativeModel, ModalitySpec, ModelSpec};
use crate::categorical::{discretized_gaussian, mean_matched_gaussian, normalize, Categorical, Cpt};
use crate::error::{Error, Result};

pub const WAREHOUSE_LEVELS: usize = 11;
pub const MAX_WAREHOUSE: usize = WAREHOUSE_LEVELS - 1;
pub const SALES_LEVELS: usize = 11;
pub const PRODUCTION_LEVELS: usize = 7;
pub const MAX_PRODUCTION: usize = PRODUCTION_LEVELS - 1;
pub const SIGNAL_LEVELS: usize = 4;

/// Spread used for the noiseless (analyzed) signal channel.
pub const NOISELESS_SIGMA: f64 = 0.01;

/// Stand-in for the "≃ 0" entries of the context map.
pub const NEAR_ZERO: f64 = 1e-12;

pub mod factor {
    pub const WAREHOUSE: usize = 0;
    pub const CONTEXT: usize = 1;
    pub const EPISTEMIC: usize = 2;
    pub const LAST_PRODUCTION: usize = 3;
}

pub mod modality {
    pub const SALES: usize = 0;
    pub const PRODUCTION: usize = 1;
    pub const SIGNAL: usize = 2;
    pub const ANALYSIS: usize = 3;
}

pub mod control {
    pub const PRODUCTION: usize = 0;
    pub const ANALYSIS: usize = 1;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Context {
    Acceptable = 0,
    Reduce = 1,
}

impl Context {
    pub const ALL: [Context; 2] = [Context::Acceptable, Context::Reduce];

    pub fn from_index(i: usize) -> Self {
        if i == 0 {
            Context::Acceptable
        } else {
            Context::Reduce
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Epistemic {
    NotAnalyzed = 0,
    Analyzed = 1,
}

impl Epistemic {
    pub fn from_index(i: usize) -> Self {
        if i == 0 {
            Epistemic::NotAnalyzed
        } else {
            Epistemic::Analyzed
        }
    }
}

/// Occupancy band of a warehouse level: 0–30 %, 31–50 %, 51–80 %, above 80 %.
pub fn signal_band(warehouse: usize) -> usize {
    match warehouse {
        0..=3 => 0,
        4..=5 => 1,
        6..=8 => 2,
        _ => 3,
    }
}

/// Prior mapping from signal level to `p(acceptable production | o)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextMap {
    pub p_acceptable: Vec<f64>,
}

impl Default for ContextMap {
    fn default() -> Self {
        Self { p_acceptable: vec![1.0 - NEAR_ZERO, 0.8, 0.2, NEAR_ZERO] }
    }
}

impl ContextMap {
    pub fn uniform(levels: usize) -> Self {
        Self { p_acceptable: vec![0.5; levels] }
    }

    /// `p(context | o)`.
    pub fn weight(&self, context: Context, o: usize) -> f64 {
        match context {
            Context::Acceptable => self.p_acceptable[o],
            Context::Reduce => 1.0 - self.p_acceptable[o],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p_acceptable.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Parameter("context map entries must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

fn check_sigma(sigma: f64, what: &str) -> Result<()> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::Parameter(format!("sigma_{what} must be positive, got {sigma}")));
    }
    Ok(())
}

fn context_offset(context: Context, shift: f64) -> f64 {
    match context {
        Context::Acceptable => 0.0,
        Context::Reduce => shift,
    }
}

/// `p(sales | warehouse)` for one context: sales center on `target + shift − w`.
///
/// `shift` is zero under acceptable production and `reduce_shift` under reduce
/// production, so more sales are needed before an empty warehouse is inferred.
pub fn build_sales_likelihood(context: Context, sigma: f64, target: usize, reduce_shift: f64) -> Result<Cpt> {
    check_sigma(sigma, "sales")?;
    if target > MAX_WAREHOUSE {
        return Err(Error::Parameter(format!("sales target {target} outside 0..=10")));
    }
    let offset = context_offset(context, reduce_shift);
    Cpt::from_fn(SALES_LEVELS, vec![WAREHOUSE_LEVELS], |c| {
        discretized_gaussian(target as f64 + offset - c[0] as f64, sigma, SALES_LEVELS)
    })
}

/// `p(previous production | warehouse)`: more production inferred when stock is low.
pub fn build_production_likelihood(context: Context, sigma: f64, reduce_shift: f64) -> Result<Cpt> {
    check_sigma(sigma, "production")?;
    let offset = context_offset(context, reduce_shift);
    let q_max = MAX_PRODUCTION as f64;
    let w_max = MAX_WAREHOUSE as f64;
    Cpt::from_fn(PRODUCTION_LEVELS, vec![WAREHOUSE_LEVELS], |c| {
        let center = q_max * (1.0 - c[0] as f64 / w_max) - offset;
        discretized_gaussian(center, sigma, PRODUCTION_LEVELS)
    })
}

/// Reweights each column of `p(o | w)` by `p(context | o)` and renormalizes over `o`.
pub fn fuse_context_likelihood(p_o_given_w: &Cpt, ctx_map: &ContextMap, context: Context) -> Result<Cpt> {
    let n_obs = p_o_given_w.outcome_card();
    if ctx_map.p_acceptable.len() != n_obs {
        return Err(Error::Dimension { expected: n_obs, got: ctx_map.p_acceptable.len() });
    }
    ctx_map.validate()?;
    let columns = (0..p_o_given_w.n_columns())
        .map(|j| {
            let weighted: Vec<f64> = p_o_given_w
                .column_at(j)
                .iter()
                .enumerate()
                .map(|(o, p)| ctx_map.weight(context, o) * p)
                .collect();
            normalize(&weighted).map_err(|_| {
                Error::DegenerateLikelihood(format!("column {j} has no mass under context {context:?}"))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Cpt::from_columns(n_obs, p_o_given_w.condition_cards().to_vec(), columns)
}

/// Band-mapped signal before context fusion.
pub fn build_signal_base(epistemic: Epistemic, sigma: f64) -> Result<Cpt> {
    check_sigma(sigma, "signal")?;
    let sigma = match epistemic {
        Epistemic::Analyzed => NOISELESS_SIGMA,
        Epistemic::NotAnalyzed => sigma,
    };
    Cpt::from_fn(SIGNAL_LEVELS, vec![WAREHOUSE_LEVELS], |c| {
        discretized_gaussian(signal_band(c[0]) as f64, sigma, SIGNAL_LEVELS)
    })
}

/// Context-fused `p(signal | warehouse)` for one epistemic state and context.
pub fn build_signal_likelihood(epistemic: Epistemic, context: Context, sigma: f64, ctx_map: &ContextMap) -> Result<Cpt> {
    fuse_context_likelihood(&build_signal_base(epistemic, sigma)?, ctx_map, context)
}

/// `p(w' | w, u)`: the firm expects to sell `min(br, w + u)` and stocks the rest.
pub fn build_warehouse_transition(br: usize, sigma_b: f64) -> Result<Cpt> {
    check_sigma(sigma_b, "transition")?;
    Cpt::from_fn(WAREHOUSE_LEVELS, vec![WAREHOUSE_LEVELS, PRODUCTION_LEVELS], |c| {
        let available = c[0] + c[1];
        let left = available - br.min(available);
        discretized_gaussian(left.min(MAX_WAREHOUSE) as f64, sigma_b, WAREHOUSE_LEVELS)
    })
}

/// Passive context dynamics: stay or switch with probability 1/2.
pub fn build_context_transition() -> Cpt {
    Cpt::from_fn(2, vec![2, 1], |_| Ok(Categorical::uniform(2))).expect("static shape")
}

/// Analysis puts the agent in the analyzed state for the next step; doing nothing clears it.
pub fn build_epistemic_transition() -> Cpt {
    Cpt::from_fn(2, vec![2, 2], |c| Ok(Categorical::delta(2, c[1]))).expect("static shape")
}

/// The last-production factor records the production action just taken.
pub fn build_production_memory_transition() -> Cpt {
    Cpt::from_fn(PRODUCTION_LEVELS, vec![PRODUCTION_LEVELS, PRODUCTION_LEVELS], |c| {
        Ok(Categorical::delta(PRODUCTION_LEVELS, c[1]))
    })
    .expect("static shape")
}

/// Empty warehouse, acceptable production, not analyzed, nothing produced yet.
pub fn build_initial_prior() -> Vec<Categorical> {
    vec![
        Categorical::delta(WAREHOUSE_LEVELS, 0),
        Categorical::delta(2, Context::Acceptable as usize),
        Categorical::delta(2, Epistemic::NotAnalyzed as usize),
        Categorical::delta(PRODUCTION_LEVELS, 0),
    ]
}

/// Hyperparameters of one firm's generative model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FirmModelParams {
    pub sigma_sales: f64,
    pub sigma_signal: f64,
    pub sigma_transition: f64,
    pub sales_reduce_shift: f64,
    pub context_map: Vec<f64>,
    /// Log-preference units per euro.
    pub kappa: f64,
    /// Euro cost per occupancy band.
    pub occupancy_cost: Vec<f64>,
    /// Euro cost of one analysis.
    pub analysis_cost: f64,
    pub horizon: usize,
}

impl Default for FirmModelParams {
    fn default() -> Self {
        Self {
            sigma_sales: 2.0,
            sigma_signal: 1.0,
            sigma_transition: 0.5,
            sales_reduce_shift: 2.0,
            context_map: ContextMap::default().p_acceptable,
            kappa: 0.1,
            occupancy_cost: vec![0.0, -2.0, -6.0, -12.0],
            analysis_cost: -4.0,
            horizon: 2,
        }
    }
}

impl FirmModelParams {
    pub fn validate(&self) -> Result<()> {
        check_sigma(self.sigma_sales, "sales")?;
        check_sigma(self.sigma_signal, "signal")?;
        check_sigma(self.sigma_transition, "transition")?;
        if !self.sales_reduce_shift.is_finite() {
            return Err(Error::Parameter("sales_reduce_shift must be finite".into()));
        }
        if !(self.kappa > 0.0) || !self.kappa.is_finite() {
            return Err(Error::Parameter(format!("kappa must be positive, got {}", self.kappa)));
        }
        if self.occupancy_cost.len() != SIGNAL_LEVELS || self.occupancy_cost.iter().any(|c| !c.is_finite()) {
            return Err(Error::Parameter("occupancy_cost needs four finite entries".into()));
        }
        if !self.analysis_cost.is_finite() {
            return Err(Error::Parameter("analysis_cost must be finite".into()));
        }
        if self.horizon == 0 {
            return Err(Error::Parameter("horizon must be at least 1".into()));
        }
        if self.context_map.len() != SIGNAL_LEVELS {
            return Err(Error::Parameter("context_map needs four entries".into()));
        }
        self.context_map().validate()
    }

    pub fn context_map(&self) -> ContextMap {
        ContextMap { p_acceptable: self.context_map.clone() }
    }
}

pub fn firm_model_spec(horizon: usize) -> ModelSpec {
    use factor::*;
    let factor = |name: &str, card| FactorSpec::new(name, card);
    let modality = |name: &str, card, depends_on: Vec<usize>| ModalitySpec { name: name.into(), card, depends_on };
    ModelSpec {
        hidden_factors: vec![
            factor("warehouse", WAREHOUSE_LEVELS),
            factor("context", 2),
            factor("epistemic", 2),
            factor("last_production", PRODUCTION_LEVELS),
        ],
        modalities: vec![
            modality("sales", SALES_LEVELS, vec![WAREHOUSE, CONTEXT, LAST_PRODUCTION]),
            modality("production", PRODUCTION_LEVELS, vec![LAST_PRODUCTION]),
            modality("signal", SIGNAL_LEVELS, vec![WAREHOUSE, CONTEXT, EPISTEMIC]),
            modality("analysis_flag", 2, vec![EPISTEMIC]),
        ],
        control_factors: vec![
            ControlSpec { name: "production".into(), card: PRODUCTION_LEVELS, drives: vec![WAREHOUSE, LAST_PRODUCTION] },
            ControlSpec { name: "analysis".into(), card: 2, drives: vec![EPISTEMIC] },
        ],
        horizon,
    }
}

/// `p(sales | warehouse, context, last production)`.
///
/// Under acceptable production sales center on `q − w` for last production
/// `q`: what was produced minus what was stocked. Under reduce production the
/// first `reduce_shift` stocked units do not show in sales, so the center is
/// `q − max(0, w − shift)` and more sales are needed before an empty
/// warehouse is inferred. The noise is mean-matched so the expected sales equal
/// the center even at the edges of the support.
pub fn build_sales_array(sigma: f64, reduce_shift: f64) -> Result<Cpt> {
    check_sigma(sigma, "sales")?;
    Cpt::from_fn(SALES_LEVELS, vec![WAREHOUSE_LEVELS, 2, PRODUCTION_LEVELS], |c| {
        let hidden = context_offset(Context::from_index(c[1]), reduce_shift);
        let center = c[2] as f64 - (c[0] as f64 - hidden).max(0.0);
        mean_matched_gaussian(center, sigma, SALES_LEVELS)
    })
}

/// The sales array at one last-production level, conditioned on `[context, warehouse]`.
pub fn sales_slice(sales: &Cpt, last_production: usize) -> Result<Cpt> {
    if sales.condition_cards() != [WAREHOUSE_LEVELS, 2, PRODUCTION_LEVELS] {
        return Err(Error::InvalidModel("not a firm sales array".into()));
    }
    if last_production > MAX_PRODUCTION {
        return Err(Error::Parameter(format!("last production {last_production} outside 0..=6")));
    }
    Cpt::from_fn(SALES_LEVELS, vec![2, WAREHOUSE_LEVELS], |c| {
        Categorical::new(sales.column(&[c[1], c[0], last_production]).to_vec())
    })
}

/// `p(signal | warehouse, context, epistemic)`.
pub fn build_signal_array(sigma: f64, ctx_map: &ContextMap) -> Result<Cpt> {
    let mut slices = Vec::new();
    for ctx in Context::ALL {
        let per_epi = [Epistemic::NotAnalyzed, Epistemic::Analyzed]
            .iter()
            .map(|e| build_signal_likelihood(*e, ctx, sigma, ctx_map))
            .collect::<Result<Vec<_>>>()?;
        slices.push(per_epi);
    }
    Cpt::from_fn(SIGNAL_LEVELS, vec![WAREHOUSE_LEVELS, 2, 2], |c| {
        Categorical::new(slices[c[1]][c[2]].column(&[c[0]]).to_vec())
    })
}

fn identity_likelihood(n: usize) -> Cpt {
    Cpt::from_fn(n, vec![n], |c| Ok(Categorical::delta(n, c[0]))).expect("static shape")
}

/// Production-cost preferences: `−κ·c·q` for each previous production level.
pub fn production_preferences(kappa: f64, unit_cost: f64) -> Vec<f64> {
    (0..PRODUCTION_LEVELS).map(|q| -kappa * unit_cost * q as f64).collect()
}

/// Preferences before any price estimate exists: zero sales utility.
pub fn initial_preferences(params: &FirmModelParams, unit_cost: f64) -> Vec<Vec<f64>> {
    vec![
        vec![0.0; SALES_LEVELS],
        production_preferences(params.kappa, unit_cost),
        params.occupancy_cost.iter().map(|c| params.kappa * c).collect(),
        vec![0.0, params.kappa * params.analysis_cost],
    ]
}

/// Assembles a firm's full generative model around best-response target `br`.
pub fn build_firm_model(params: &FirmModelParams, br: usize, unit_cost: f64) -> Result<GenerativeModel> {
    params.validate()?;
    let spec = firm_model_spec(params.horizon);
    let a = vec![
        build_sales_array(params.sigma_sales, params.sales_reduce_shift)?,
        identity_likelihood(PRODUCTION_LEVELS),
        build_signal_array(params.sigma_signal, &params.context_map())?,
        identity_likelihood(2),
    ];
    let b = vec![
        build_warehouse_transition(br.min(MAX_WAREHOUSE), params.sigma_transition)?,
        build_context_transition(),
        build_epistemic_transition(),
        build_production_memory_transition(),
    ];
    GenerativeModel::new(spec, a, b, initial_preferences(params, unit_cost), build_initial_prior())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::categorical::{argmax, NORM_TOL};
    use crate::genmodel::validate_model;
    use approx::assert_abs_diff_eq;

    fn argmax_of(cpt: &Cpt, cond: usize) -> usize {
        argmax(cpt.column(&[cond]))
    }

    #[test]
    fn sales_likelihood_examples() {
        let acc = build_sales_likelihood(Context::Acceptable, 0.01, 5, 2.0).unwrap();
        assert_eq!(argmax_of(&acc, 0), 5);
        let red = build_sales_likelihood(Context::Reduce, 0.01, 5, 2.0).unwrap();
        assert_eq!(argmax_of(&red, 0), 7);
        for sigma in [0.3, 1.5, 2.0, 6.0] {
            for ctx in Context::ALL {
                let cpt = build_sales_likelihood(ctx, sigma, 4, 2.0).unwrap();
                assert!(cpt.max_column_error() < NORM_TOL);
            }
        }
        assert!(matches!(build_sales_likelihood(Context::Acceptable, 0.0, 5, 2.0), Err(Error::Parameter(_))));
    }

    #[test]
    fn sales_contexts_differ_by_shift_on_interior() {
        // Unnormalized columns are exact shifts; compare where neither truncation bites.
        let sigma = 0.3;
        let acc = build_sales_likelihood(Context::Acceptable, sigma, 5, 2.0).unwrap();
        let red = build_sales_likelihood(Context::Reduce, sigma, 5, 2.0).unwrap();
        for w in 1..=3 {
            for s in 0..=8 {
                assert_abs_diff_eq!(acc.prob(s, &[w]), red.prob(s + 2, &[w]), epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn production_likelihood_examples() {
        let acc = build_production_likelihood(Context::Acceptable, 0.01, 2.0).unwrap();
        assert_eq!(argmax_of(&acc, 0), 6);
        assert_eq!(argmax_of(&acc, 10), 0);
        for sigma in [0.01, 0.5, 1.0, 3.0] {
            for ctx in Context::ALL {
                let cpt = build_production_likelihood(ctx, sigma, 2.0).unwrap();
                let modes: Vec<usize> = (0..WAREHOUSE_LEVELS).map(|w| argmax_of(&cpt, w)).collect();
                assert!(modes.windows(2).all(|p| p[1] <= p[0]), "{modes:?}");
            }
        }
    }

    #[test]
    fn fusion_uniform_map_is_identity() {
        let base = build_signal_base(Epistemic::NotAnalyzed, 1.0).unwrap();
        let fused = fuse_context_likelihood(&base, &ContextMap::uniform(4), Context::Reduce).unwrap();
        for j in 0..base.n_columns() {
            for (x, y) in base.column_at(j).iter().zip(fused.column_at(j)) {
                assert_abs_diff_eq!(x, y, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn fusion_suppresses_inconsistent_signal() {
        let map = ContextMap::default();
        let acc = build_signal_likelihood(Epistemic::NotAnalyzed, Context::Acceptable, 1.0, &map).unwrap();
        let red = build_signal_likelihood(Epistemic::NotAnalyzed, Context::Reduce, 1.0, &map).unwrap();
        for w in 0..WAREHOUSE_LEVELS {
            assert!(acc.prob(3, &[w]) <= 1e-10);
            assert!(red.prob(0, &[w]) <= 1e-10);
        }
        assert_abs_diff_eq!(map.weight(Context::Reduce, 1), 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(map.weight(Context::Reduce, 2), 0.8, epsilon = 1e-15);
    }

    #[test]
    fn fusion_rejects_zero_mass() {
        let base = build_signal_base(Epistemic::Analyzed, 1.0).unwrap();
        let map = ContextMap { p_acceptable: vec![1.0, 0.8, 0.2, 0.0] };
        let err = fuse_context_likelihood(&base, &map, Context::Acceptable).unwrap_err();
        assert!(matches!(err, Error::DegenerateLikelihood(_)));
    }

    #[test]
    fn signal_examples() {
        let analyzed = build_signal_base(Epistemic::Analyzed, 1.0).unwrap();
        assert!(analyzed.prob(0, &[0]) >= 0.99);
        assert!(analyzed.prob(3, &[10]) > 1.0 - 1e-12);
        let noisy = build_signal_base(Epistemic::NotAnalyzed, 1.0).unwrap();
        assert_eq!(argmax_of(&noisy, 7), 2);
    }

    #[test]
    fn warehouse_transition_examples() {
        let b = build_warehouse_transition(5, 0.01).unwrap();
        assert!(b.prob(0, &[0, 5]) > 1.0 - 1e-12);
        assert!(b.prob(1, &[0, 6]) > 1.0 - 1e-12);
        assert!(b.prob(10, &[10, 6]) > 1.0 - 1e-12);
        for j in 0..b.n_columns() {
            let col = b.column_at(j);
            assert_eq!(col.iter().filter(|p| **p >= 1.0 - 1e-6).count(), 1);
        }
    }

    #[test]
    fn static_transitions() {
        let ctx = build_context_transition();
        assert_eq!(ctx.prob(0, &[0, 0]), 0.5);
        assert_eq!(ctx.prob(1, &[0, 0]), 0.5);
        assert!(ctx.max_column_error() < NORM_TOL);
        let epi = build_epistemic_transition();
        for e in 0..2 {
            assert_eq!(epi.prob(1, &[e, 1]), 1.0);
            assert_eq!(epi.prob(0, &[e, 0]), 1.0);
        }
        assert!(epi.max_column_error() < NORM_TOL);
    }

    #[test]
    fn initial_prior() {
        let d = build_initial_prior();
        assert_eq!(d[0].probs()[0], 1.0);
        assert_eq!(d[1].probs(), &[1.0, 0.0]);
        assert_eq!(d[2].probs(), &[1.0, 0.0]);
    }

    #[test]
    fn firm_model_validates() {
        for br in [0, 4, 5, 10] {
            let gm = build_firm_model(&FirmModelParams::default(), br, 16.0).unwrap();
            validate_model(&gm).unwrap();
        }
        let bad = FirmModelParams { sigma_sales: -1.0, ..Default::default() };
        assert!(build_firm_model(&bad, 5, 16.0).is_err());
    }

    #[test]
    fn sales_slice_reads_the_array() {
        let full = build_sales_array(1.0, 2.0).unwrap();
        let view = sales_slice(&full, 4).unwrap();
        assert_eq!(view.condition_cards(), &[2, WAREHOUSE_LEVELS]);
        assert_eq!(view.column(&[1, 3]), full.column(&[3, 1, 4]));
        assert!(sales_slice(&full, 7).is_err());
        assert!(sales_slice(&identity_likelihood(3), 0).is_err());
    }

}
