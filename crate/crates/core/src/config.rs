//! Experiment configuration: scenario presets, file parsing and resolution.
//!
//! A config file names a scenario and may override any part of it. Resolution
//! materializes every default, and the resolved form parses back to itself, so
//! a run can be reproduced from its `resolved-config.json` alone.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::genmodel::firm::FirmModelParams;
use crate::genmodel::DEFAULT_POLICY_CAP;
use crate::inference::InferenceConfig;
use crate::market::{customer_schedule, default_price_schedule, MarketParams, PriceBasis, Schedule};
use crate::srp::SrpConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScenarioId {
    #[serde(rename = "duopoly-reference")]
    DuopolyReference,
    #[serde(rename = "duopoly-precision-1.5")]
    DuopolyPrecision15,
    #[serde(rename = "duopoly-simplified-precision-0.6")]
    DuopolySimplifiedPrecision06,
    #[serde(rename = "three-firm-reference")]
    ThreeFirmReference,
    #[serde(rename = "three-firm-precision-0.6")]
    ThreeFirmPrecision06,
    #[serde(rename = "custom")]
    Custom,
}

impl ScenarioId {
    pub const SHIPPED: [ScenarioId; 5] = [
        ScenarioId::DuopolyReference,
        ScenarioId::DuopolyPrecision15,
        ScenarioId::DuopolySimplifiedPrecision06,
        ScenarioId::ThreeFirmReference,
        ScenarioId::ThreeFirmPrecision06,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioId::DuopolyReference => "duopoly-reference",
            ScenarioId::DuopolyPrecision15 => "duopoly-precision-1.5",
            ScenarioId::DuopolySimplifiedPrecision06 => "duopoly-simplified-precision-0.6",
            ScenarioId::ThreeFirmReference => "three-firm-reference",
            ScenarioId::ThreeFirmPrecision06 => "three-firm-precision-0.6",
            ScenarioId::Custom => "custom",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        ScenarioId::SHIPPED
            .into_iter()
            .chain([ScenarioId::Custom])
            .find(|s| s.name() == name)
            .ok_or_else(|| Error::Config(format!("unknown scenario '{name}'")))
    }

    fn demand_profile(self) -> Option<&'static str> {
        match self {
            ScenarioId::DuopolyReference | ScenarioId::DuopolyPrecision15 => Some("duopoly-reference"),
            ScenarioId::DuopolySimplifiedPrecision06 => Some("duopoly-simplified"),
            ScenarioId::ThreeFirmReference | ScenarioId::ThreeFirmPrecision06 => Some("three-firm"),
            ScenarioId::Custom => None,
        }
    }

    fn firms(self) -> Option<Vec<FirmConfig>> {
        let firm = |unit_cost: f64, sigma_sales: f64| FirmConfig {
            unit_cost,
            model: FirmModelParams { sigma_sales, ..FirmModelParams::default() },
        };
        Some(match self {
            ScenarioId::DuopolyReference => vec![firm(16.0, 2.0), firm(17.0, 2.0)],
            ScenarioId::DuopolyPrecision15 => vec![firm(16.0, 2.0), firm(17.0, 1.5)],
            ScenarioId::DuopolySimplifiedPrecision06 => vec![firm(16.0, 2.0), firm(17.0, 0.6)],
            ScenarioId::ThreeFirmReference => vec![firm(6.2, 2.0), firm(7.0, 2.0), firm(7.8, 2.0)],
            ScenarioId::ThreeFirmPrecision06 => vec![firm(6.2, 2.0), firm(7.0, 0.6), firm(7.8, 2.0)],
            ScenarioId::Custom => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FirmConfig {
    pub unit_cost: f64,
    #[serde(default)]
    pub model: FirmModelParams,
}

/// Agent-side settings shared by every firm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AgentConfig {
    pub inference: InferenceConfig,
    pub srp: SrpConfig,
    /// Copies of the zero-supply instance used to initialize each ensemble.
    pub pretrain_copies: usize,
    /// Relative change of the estimated maximum price that triggers a new best response.
    pub br_threshold: f64,
    pub policy_cap: usize,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            inference: InferenceConfig::default(),
            srp: SrpConfig::default(),
            pretrain_copies: 50,
            br_threshold: 0.1,
            policy_cap: DEFAULT_POLICY_CAP,
        }
    }
}

/// Fully resolved experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub scenario: ScenarioId,
    pub seed: u64,
    pub market: MarketParams,
    pub firms: Vec<FirmConfig>,
    pub agent: AgentConfig,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMarket {
    demand_profile: Option<String>,
    a_schedule: Option<Schedule<f64>>,
    customers: Option<Schedule<u32>>,
    b: Option<f64>,
    capacity: Option<usize>,
    max_production: Option<usize>,
    horizon: Option<usize>,
    sigma_signal: Option<f64>,
    price_basis: Option<PriceBasis>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    scenario: ScenarioId,
    seed: Option<u64>,
    market: Option<RawMarket>,
    firms: Option<Vec<FirmConfig>>,
    #[serde(default)]
    agent: AgentConfig,
}

impl ExperimentConfig {
    /// Preset for a shipped scenario with every default filled in.
    pub fn preset(scenario: ScenarioId, seed: u64) -> Result<Self> {
        RawConfig { scenario, seed: Some(seed), market: None, firms: None, agent: AgentConfig::default() }.resolve()
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        raw.resolve().map_err(|e| anchor(e, text))
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let raw: RawConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        raw.resolve().map_err(|e| anchor(e, text))
    }

    /// Reads a `.toml` or `.json` config.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let parsed = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => Self::from_json_str(&text),
            _ => Self::from_toml_str(&text),
        };
        parsed.map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn n_firms(&self) -> usize {
        self.firms.len()
    }

    pub fn unit_costs(&self) -> Vec<f64> {
        self.firms.iter().map(|f| f.unit_cost).collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.market.validate()?;
        if self.firms.is_empty() {
            return Err(Error::Config("at least one firm required".into()));
        }
        for (i, f) in self.firms.iter().enumerate() {
            if !f.unit_cost.is_finite() || f.unit_cost < 0.0 {
                return Err(Error::Config(format!("unit_cost of firm {i} must be non-negative")));
            }
            f.model.validate().map_err(|e| Error::Config(format!("firm {i}: {}", plain(&e))))?;
        }
        self.agent.inference.validate().map_err(|e| Error::Config(plain(&e)))?;
        self.agent.srp.validate().map_err(|e| Error::Config(plain(&e)))?;
        if !(self.agent.br_threshold >= 0.0) {
            return Err(Error::Config("br_threshold must be non-negative".into()));
        }
        Ok(())
    }
}

fn plain(e: &Error) -> String {
    match e {
        Error::Parameter(m) | Error::Config(m) | Error::InvalidModel(m) => m.clone(),
        other => other.to_string(),
    }
}

impl RawConfig {
    fn resolve(self) -> Result<ExperimentConfig> {
        let raw = self.market.unwrap_or_default();
        let customers = match (raw.customers, raw.demand_profile.as_deref(), self.scenario.demand_profile()) {
            (Some(c), _, _) => c,
            (None, Some(p), _) | (None, None, Some(p)) => customer_schedule(p)?,
            (None, None, None) => {
                return Err(Error::Config("custom scenario needs market.customers or market.demand_profile".into()))
            }
        };
        let market = MarketParams {
            a_schedule: raw.a_schedule.unwrap_or_else(default_price_schedule),
            customers,
            b: raw.b.unwrap_or(1.0),
            capacity: raw.capacity.unwrap_or(10),
            max_production: raw.max_production.unwrap_or(6),
            horizon: raw.horizon.unwrap_or(25),
            sigma_signal: raw.sigma_signal.unwrap_or(1.0),
            price_basis: raw.price_basis.unwrap_or(PriceBasis::Offered),
        };
        let firms = match self.firms.or_else(|| self.scenario.firms()) {
            Some(f) => f,
            None => return Err(Error::Config("custom scenario needs a [[firms]] table".into())),
        };
        let cfg = ExperimentConfig { scenario: self.scenario, seed: self.seed.unwrap_or(0), market, firms, agent: self.agent };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Adds the line of the first offending key mentioned in a validation message.
fn anchor(e: Error, text: &str) -> Error {
    let Error::Config(msg) = e else { return e };
    let key = msg
        .split(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
        .filter(|w| w.contains('_') || w.starts_with("sigma"))
        .find_map(|w| text.lines().position(|l| l.trim_start().trim_start_matches('"').starts_with(w)).map(|n| (w, n)));
    match key {
        Some((_, line)) => Error::Config(format!("line {}: {msg}", line + 1)),
        None => Error::Config(msg),
    }
}
