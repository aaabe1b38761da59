//! The Cournot market the agents act in: pricing, equilibrium quantities,
//! demand schedules and the per-step allocation of customers to firms.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::categorical::discretized_gaussian;
use crate::error::{Error, Result};
use crate::genmodel::firm::{signal_band, SIGNAL_LEVELS};

/// Piecewise-constant schedule: each entry is `(first step, value)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Schedule<T> {
    pub segments: Vec<(usize, T)>,
}

impl<T: Copy> Schedule<T> {
    pub fn new(segments: Vec<(usize, T)>) -> Result<Self> {
        let s = Self { segments };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        match self.segments.first() {
            Some((0, _)) => {}
            _ => return Err(Error::Config("schedule must start at step 0".into())),
        }
        if self.segments.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(Error::Config("schedule steps must be strictly increasing".into()));
        }
        Ok(())
    }

    pub fn at(&self, t: usize) -> T {
        self.segments.iter().rev().find(|(start, _)| *start <= t).map(|(_, v)| *v).expect("schedule starts at 0")
    }
}

/// Maximum price: 30 before step 15, 45 from step 15 on.
pub fn a_of_t(t: usize) -> f64 {
    if t < 15 {
        30.0
    } else {
        45.0
    }
}

pub fn default_price_schedule() -> Schedule<f64> {
    Schedule { segments: vec![(0, 30.0), (15, 45.0)] }
}

/// Customer-count schedule for a named demand profile.
pub fn customer_schedule(name: &str) -> Result<Schedule<u32>> {
    let segments = match name {
        "duopoly-reference" => vec![(0, 10), (6, 6), (11, 4), (15, 15)],
        "duopoly-simplified" => vec![(0, 10), (11, 6), (15, 15)],
        "three-firm" => vec![(0, 15), (6, 12), (11, 9), (15, 20)],
        other => return Err(Error::Config(format!("unknown demand profile '{other}'"))),
    };
    Ok(Schedule { segments })
}

pub fn customers(t: usize, profile: &str) -> Result<u32> {
    Ok(customer_schedule(profile)?.at(t))
}

/// `max(0, a − b·Σ offered)`.
pub fn market_price(a: f64, b: f64, offered: &[f64]) -> f64 {
    (a - b * offered.iter().sum::<f64>()).max(0.0)
}

/// One-step best response to the opponents' total quantity.
pub fn best_response(a: f64, b: f64, cost: f64, opponents_total: f64) -> f64 {
    (a - b * opponents_total - cost) / (2.0 * b)
}

/// Best response rounded half away from zero and clamped to `[0, cap]`.
pub fn best_response_target(a: f64, b: f64, cost: f64, opponents_total: f64, cap: usize) -> usize {
    let br = best_response(a, b, cost, opponents_total);
    if !br.is_finite() || br <= 0.0 {
        return 0;
    }
    (br.round() as usize).min(cap)
}

/// Simultaneous best-response fixed point (Cournot-Nash quantities).
pub fn nash_quantities(a: f64, b: f64, costs: &[f64]) -> Result<Vec<f64>> {
    if costs.is_empty() {
        return Err(Error::Parameter("at least one firm required".into()));
    }
    if !(b > 0.0) || !(a > 0.0) {
        return Err(Error::Parameter("a and b must be positive".into()));
    }
    if let Some(c) = costs.iter().find(|c| **c >= a) {
        return Err(Error::Parameter(format!("unit cost {c} is not below the maximum price {a}")));
    }
    let n = costs.len() as f64;
    let total: f64 = costs.iter().sum();
    let q: Vec<f64> = costs.iter().map(|c| (a - (n + 1.0) * c + total) / ((n + 1.0) * b)).collect();
    if let Some((firm, quantity)) = q.iter().enumerate().find(|(_, q)| **q < 0.0) {
        return Err(Error::CornerSolution { firm, quantity: *quantity });
    }
    Ok(q)
}

/// Quantity entering the pricing function.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PriceBasis {
    /// Production plus stock put on the market.
    Offered,
    Sold,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketParams {
    pub a_schedule: Schedule<f64>,
    pub customers: Schedule<u32>,
    pub b: f64,
    pub capacity: usize,
    pub max_production: usize,
    pub horizon: usize,
    /// Noise of the warehouse signal when no analysis is performed, in bands.
    pub sigma_signal: f64,
    pub price_basis: PriceBasis,
}

impl MarketParams {
    pub fn with_profile(profile: &str) -> Result<Self> {
        Ok(Self {
            a_schedule: default_price_schedule(),
            customers: customer_schedule(profile)?,
            b: 1.0,
            capacity: 10,
            max_production: 6,
            horizon: 25,
            sigma_signal: 1.0,
            price_basis: PriceBasis::Offered,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.a_schedule.validate()?;
        self.customers.validate()?;
        if self.a_schedule.segments.iter().any(|(_, a)| !(*a > 0.0) || !a.is_finite()) {
            return Err(Error::Config("maximum price must be positive".into()));
        }
        if !(self.b > 0.0) || !self.b.is_finite() {
            return Err(Error::Config("price sensitivity b must be positive".into()));
        }
        if !(self.sigma_signal > 0.0) || !self.sigma_signal.is_finite() {
            return Err(Error::Config("market sigma_signal must be positive".into()));
        }
        if self.capacity != 10 || self.max_production != 6 {
            return Err(Error::Config("the firm model is built for capacity 10 and production 0..=6".into()));
        }
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be positive".into()));
        }
        Ok(())
    }

    pub fn a_at(&self, t: usize) -> f64 {
        self.a_schedule.at(t)
    }

    pub fn customers_at(&self, t: usize) -> u32 {
        self.customers.at(t)
    }
}

/// True state of one firm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirmGroundTruth {
    pub warehouse: usize,
    pub unit_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FirmOutcome {
    pub produced: usize,
    pub sold: usize,
    pub warehouse_before: usize,
    pub warehouse_after: usize,
    /// Units lost to the capacity limit.
    pub discarded: usize,
    pub signal_level: usize,
    pub analysis_performed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepOutcome {
    pub t: usize,
    pub price: f64,
    pub customers: u32,
    pub firms: Vec<FirmOutcome>,
}

impl StepOutcome {
    pub fn sold(&self) -> Vec<usize> {
        self.firms.iter().map(|f| f.sold).collect()
    }
}

/// Units sold per firm by unit-demand customers.
///
/// Customers are split equally; the remainder goes round-robin starting at
/// firm `t mod n`. A customer whose assigned firm is out of stock buys from the
/// firm with the most stock left (lowest index on ties), or leaves.
pub fn allocate(customers: u32, available: &[usize], t: usize) -> Vec<usize> {
    let n = available.len();
    let c = customers as usize;
    let mut assigned = vec![c / n; n];
    for k in 0..c % n {
        assigned[(k + t) % n] += 1;
    }
    let mut left = available.to_vec();
    let mut sold = vec![0; n];
    let mut unserved = 0;
    for i in 0..n {
        let direct = assigned[i].min(left[i]);
        sold[i] += direct;
        left[i] -= direct;
        unserved += assigned[i] - direct;
    }
    for _ in 0..unserved {
        let mut best = 0;
        for i in 1..n {
            if left[i] > left[best] {
                best = i;
            }
        }
        if left[best] == 0 {
            break;
        }
        left[best] -= 1;
        sold[best] += 1;
    }
    sold
}

/// Warehouse signal band seen by a firm: exact after analysis, noisy otherwise.
pub fn observe_signal(warehouse: usize, analysis: bool, sigma: f64, rng: &mut ChaCha8Rng) -> Result<usize> {
    let band = signal_band(warehouse);
    if analysis {
        return Ok(band);
    }
    Ok(discretized_gaussian(band as f64, sigma, SIGNAL_LEVELS)?.sample(rng))
}

/// Applies one round of production decisions to the market.
pub fn step_market(
    params: &MarketParams,
    state: &mut [FirmGroundTruth],
    productions: &[usize],
    analyses: &[bool],
    t: usize,
    noise_seed: u64,
) -> Result<StepOutcome> {
    if productions.len() != state.len() || analyses.len() != state.len() {
        return Err(Error::Dimension { expected: state.len(), got: productions.len().min(analyses.len()) });
    }
    if let Some(q) = productions.iter().find(|q| **q > params.max_production) {
        return Err(Error::Parameter(format!("production {q} exceeds {}", params.max_production)));
    }
    let available: Vec<usize> = state.iter().zip(productions).map(|(s, q)| s.warehouse + q).collect();
    let customers = params.customers_at(t);
    let sold = allocate(customers, &available, t);
    let supplied: Vec<f64> = match params.price_basis {
        PriceBasis::Offered => available.iter().map(|v| *v as f64).collect(),
        PriceBasis::Sold => sold.iter().map(|v| *v as f64).collect(),
    };
    let price = market_price(params.a_at(t), params.b, &supplied);
    let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
    let mut firms = Vec::with_capacity(state.len());
    for (i, firm) in state.iter_mut().enumerate() {
        let left = available[i] - sold[i];
        let after = left.min(params.capacity);
        if left > after {
            log::warn!("t={t}: firm {i} discards {} units above warehouse capacity", left - after);
        }
        let signal_level = observe_signal(after, analyses[i], params.sigma_signal, &mut rng)?;
        firms.push(FirmOutcome {
            produced: productions[i],
            sold: sold[i],
            warehouse_before: firm.warehouse,
            warehouse_after: after,
            discarded: left - after,
            signal_level,
            analysis_performed: analyses[i],
        });
        firm.warehouse = after;
    }
    Ok(StepOutcome { t, price, customers, firms })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pricing_examples() {
        assert_eq!(market_price(30.0, 1.0, &[5.0, 4.0]), 21.0);
        assert_eq!(market_price(30.0, 1.0, &[0.0, 0.0]), 30.0);
        assert_eq!(market_price(30.0, 1.0, &[20.0, 20.0]), 0.0);
    }

    #[test]
    fn nash_examples() {
        let q = nash_quantities(30.0, 1.0, &[16.0, 17.0]).unwrap();
        assert!((q[0] - 5.0).abs() < 1e-12 && (q[1] - 4.0).abs() < 1e-12);
        let q = nash_quantities(45.0, 1.0, &[16.0, 17.0]).unwrap();
        assert!((q[0] - 10.0).abs() < 1e-12 && (q[1] - 9.0).abs() < 1e-12);
        let q = nash_quantities(30.0, 1.0, &[3.0; 4]).unwrap();
        assert!(q.iter().all(|x| (x - q[0]).abs() < 1e-12));
        let q = nash_quantities(30.0, 1.0, &[6.2, 7.0, 7.8]).unwrap();
        for (x, y) in q.iter().zip([6.55, 5.75, 4.95]) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!(matches!(nash_quantities(30.0, 1.0, &[1.0, 29.0]), Err(Error::CornerSolution { firm: 1, .. })));
    }

    proptest! {
        #[test]
        fn nash_is_a_best_response_fixed_point(
            a in 20.0f64..60.0, b in 0.5f64..3.0, costs in prop::collection::vec(0.0f64..5.0, 1..6)
        ) {
            let q = nash_quantities(a, b, &costs).unwrap();
            let total: f64 = q.iter().sum();
            for (i, c) in costs.iter().enumerate() {
                prop_assert!((best_response(a, b, *c, total - q[i]) - q[i]).abs() < 1e-12);
            }
        }

        #[test]
        fn allocation_conserves(
            customers in 0u32..30, available in prop::collection::vec(0usize..17, 1..5), t in 0usize..25
        ) {
            let sold = allocate(customers, &available, t);
            prop_assert!(sold.iter().sum::<usize>() <= customers as usize);
            for (s, a) in sold.iter().zip(&available) {
                prop_assert!(s <= a);
            }
            // nobody leaves while stock remains
            let served: usize = sold.iter().sum();
            let stock: usize = available.iter().sum();
            prop_assert_eq!(served, (customers as usize).min(stock));
        }
    }

    #[test]
    fn best_response_target_rounding() {
        assert_eq!(best_response_target(45.0, 1.0, 16.0, 4.0, 10), 10);
        assert_eq!(best_response_target(30.0, 1.0, 16.0, 4.0, 10), 5);
        assert_eq!(best_response_target(30.0, 1.0, 17.0, 4.0, 10), 5);
        assert_eq!(best_response_target(10.0, 1.0, 17.0, 4.0, 10), 0);
    }

    #[test]
    fn schedules() {
        assert_eq!(customers(3, "duopoly-reference").unwrap(), 10);
        assert_eq!(customers(20, "three-firm").unwrap(), 20);
        assert_eq!(customers(12, "duopoly-simplified").unwrap(), 6);
        assert!(matches!(customers(0, "monopoly"), Err(Error::Config(_))));
        assert_eq!(a_of_t(14), 30.0);
        assert_eq!(a_of_t(15), 45.0);
        assert_eq!(a_of_t(0), 30.0);
        let s = default_price_schedule();
        assert!((0..25).all(|t| s.at(t) == a_of_t(t)));
    }

    fn firms(w: &[usize]) -> Vec<FirmGroundTruth> {
        w.iter().map(|w| FirmGroundTruth { warehouse: *w, unit_cost: 16.0 }).collect()
    }

    #[test]
    fn step_examples() {
        let mut p = MarketParams::with_profile("duopoly-reference").unwrap();
        let mut state = firms(&[0, 0]);
        let out = step_market(&p, &mut state, &[5, 4], &[false, false], 0, 1).unwrap();
        assert_eq!(out.sold(), vec![5, 4]);
        assert_eq!(out.price, 21.0);
        assert_eq!((state[0].warehouse, state[1].warehouse), (0, 0));

        p.customers = Schedule::new(vec![(0, 4)]).unwrap();
        let mut state = firms(&[0, 0]);
        let out = step_market(&p, &mut state, &[5, 4], &[false, false], 0, 1).unwrap();
        assert_eq!(out.sold(), vec![2, 2]);
        assert_eq!((state[0].warehouse, state[1].warehouse), (3, 2));

        p.customers = Schedule::new(vec![(0, 0)]).unwrap();
        for seed in 0..20 {
            let mut state = firms(&[4, 0]);
            let out = step_market(&p, &mut state, &[6, 0], &[true, false], 0, seed).unwrap();
            assert_eq!(out.firms[0].warehouse_after, 10);
            assert_eq!(out.firms[0].signal_level, 3);
        }
    }

    #[test]
    fn overflow_is_discarded() {
        let mut p = MarketParams::with_profile("duopoly-reference").unwrap();
        p.customers = Schedule::new(vec![(0, 0)]).unwrap();
        let mut state = firms(&[8, 0]);
        let out = step_market(&p, &mut state, &[6, 0], &[false, false], 0, 0).unwrap();
        assert_eq!(out.firms[0].warehouse_after, 10);
        assert_eq!(out.firms[0].discarded, 4);
    }

    #[test]
    fn odd_remainder_alternates() {
        assert_eq!(allocate(3, &[5, 5], 0), vec![2, 1]);
        assert_eq!(allocate(3, &[5, 5], 1), vec![1, 2]);
        // unserved customers fall back to the firm with more stock
        assert_eq!(allocate(10, &[2, 9], 0), vec![2, 8]);
    }

    #[test]
    fn seeded_step_is_reproducible() {
        let p = MarketParams::with_profile("three-firm").unwrap();
        let run = || {
            let mut state = firms(&[3, 6, 9]);
            step_market(&p, &mut state, &[2, 3, 4], &[false, false, false], 4, 99).unwrap()
        };
        assert_eq!(run(), run());
    }
}
