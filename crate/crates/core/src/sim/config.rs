use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mdp::MdpParams;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    Zi,
    Zip,
    Tactex,
    FixedScale,
    Mdplcpbs,
}

impl StrategyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::Zi => "zi",
            StrategyKind::Zip => "zip",
            StrategyKind::Tactex => "tactex",
            StrategyKind::FixedScale => "fixed_scale",
            StrategyKind::Mdplcpbs => "mdplcpbs",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BrokerRole {
    #[default]
    Buyer,
    Seller,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BrokerConfig {
    pub name: String,
    pub strategy: StrategyKind,
    #[serde(default)]
    pub role: BrokerRole,
    /// Scale factor of a fixed-scale broker.
    #[serde(default)]
    pub alpha: Option<f64>,
    /// Valuation of a fixed-scale broker when none is drawn per slot.
    #[serde(default)]
    pub theta: Option<f64>,
}

impl BrokerConfig {
    pub fn new(name: &str, strategy: StrategyKind) -> Self {
        Self {
            name: name.to_string(),
            strategy,
            role: BrokerRole::Buyer,
            alpha: None,
            theta: None,
        }
    }
}

/// How GenCo asks change with the number of auctions left before delivery.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarkupShape {
    /// `1 + markup * s`: asks are dearest in the first auction.
    Distance,
    /// `1 + markup * (24 - s)`: asks rise as delivery approaches.
    Proximity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GencoConfig {
    pub enabled: bool,
    /// Total MWh each delivery slot can be supplied with, split evenly across units.
    pub capacity: f64,
    pub base_cost: f64,
    pub noise_std: f64,
    pub markup: f64,
    pub markup_shape: MarkupShape,
    /// Number of generating units, each offering its own ask.
    pub units: usize,
    /// Cost step between consecutive units, as a fraction of `base_cost`.
    pub unit_spread: f64,
    /// Upper bound on any ask price.
    pub price_ceiling: f64,
}

impl Default for GencoConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            capacity: 6000.0,
            base_cost: 50.0,
            noise_std: 2.0,
            markup: 0.005,
            markup_shape: MarkupShape::Distance,
            units: 1,
            unit_spread: 0.0,
            price_ceiling: 60.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MisoConfig {
    pub enabled: bool,
    pub price_floor: f64,
    pub quantity: f64,
}

impl Default for MisoConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            price_floor: 1.0,
            quantity: 50.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DemandModel {
    Sinusoidal {
        mean: f64,
        amplitude: f64,
        noise: f64,
        #[serde(default = "default_period")]
        period: f64,
    },
    /// One market demand value (MWh) per line for delivery slots 1, 2, ...
    File { path: PathBuf },
}

fn default_period() -> f64 {
    24.0
}

impl Default for DemandModel {
    fn default() -> Self {
        DemandModel::Sinusoidal {
            mean: 800.0,
            amplitude: 200.0,
            noise: 40.0,
            period: 24.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BalancingMode {
    Dynamic,
}

/// A fixed per-unit price, or `"dynamic"`: 1.5 times the volume-weighted
/// clearing price of the slot's auctions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BalancingPrice {
    Fixed(f64),
    Mode(BalancingMode),
}

impl Default for BalancingPrice {
    fn default() -> Self {
        BalancingPrice::Fixed(90.0)
    }
}

/// Per-slot private valuations drawn uniformly for every broker.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValuationConfig {
    pub low: f64,
    pub high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    /// Number of delivery slots; slots 1..=24 only bootstrap the market.
    pub horizon: usize,
    pub seed: u64,
    pub demand_fraction: f64,
    pub balancing_price: BalancingPrice,
    /// Balancing estimate before the first settlement; defaults to 1.5 times the GenCo ceiling.
    pub balancing_prior: Option<f64>,
    /// Observations a state needs before the MDP strategies price it.
    pub min_points: usize,
    pub genco: GencoConfig,
    pub miso: MisoConfig,
    pub demand: DemandModel,
    pub mdp: MdpParams,
    pub valuations: Option<ValuationConfig>,
    pub brokers: Vec<BrokerConfig>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            horizon: 168,
            seed: 1,
            demand_fraction: 1.0,
            balancing_price: BalancingPrice::default(),
            balancing_prior: None,
            min_points: 24,
            genco: GencoConfig::default(),
            miso: MisoConfig::default(),
            demand: DemandModel::default(),
            mdp: MdpParams::default(),
            valuations: None,
            brokers: vec![
                BrokerConfig::new("mdplcpbs", StrategyKind::Mdplcpbs),
                BrokerConfig::new("tactex", StrategyKind::Tactex),
                BrokerConfig::new("zi", StrategyKind::Zi),
                BrokerConfig::new("zip", StrategyKind::Zip),
            ],
        }
    }
}

impl SimConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: SimConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn balancing_prior(&self) -> f64 {
        self.balancing_prior.unwrap_or(1.5 * self.genco.price_ceiling)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.horizon < 25 {
            return Err(invalid(format!("horizon must be at least 25, got {}", self.horizon)));
        }
        if !(self.demand_fraction > 0.0 && self.demand_fraction <= 1.0) {
            return Err(invalid(format!("demand_fraction must lie in (0, 1], got {}", self.demand_fraction)));
        }
        if let BalancingPrice::Fixed(p) = self.balancing_price {
            if !(p.is_finite() && p > 0.0) {
                return Err(invalid("balancing_price must be positive"));
            }
        }
        if let Some(p) = self.balancing_prior {
            if !(p.is_finite() && p > 0.0) {
                return Err(invalid("balancing_prior must be positive"));
            }
        }
        let g = &self.genco;
        if g.enabled {
            if !(g.capacity > 0.0 && g.capacity.is_finite()) {
                return Err(invalid("genco.capacity must be positive when enabled"));
            }
            if g.units == 0 {
                return Err(invalid("genco.units must be at least 1"));
            }
            let finite = [g.base_cost, g.noise_std, g.markup, g.unit_spread, g.price_ceiling];
            if finite.iter().any(|v| !v.is_finite()) || g.noise_std < 0.0 || g.base_cost <= 0.0 {
                return Err(invalid("genco prices must be finite with positive base_cost"));
            }
        }
        if self.miso.enabled && !(self.miso.quantity > 0.0 && self.miso.price_floor.is_finite()) {
            return Err(invalid("miso.quantity must be positive when enabled"));
        }
        match &self.demand {
            DemandModel::Sinusoidal { mean, amplitude, noise, period } => {
                if ![mean, amplitude, noise, period].iter().all(|v| v.is_finite()) || *noise < 0.0 || *period <= 0.0 {
                    return Err(invalid("sinusoidal demand needs finite parameters, noise >= 0, period > 0"));
                }
            }
            DemandModel::File { .. } => {}
        }
        let m = &self.mdp;
        if m.n_dummy < 2 || m.tick.is_nan() || m.tick <= 0.0 || !(0.0..=1.0).contains(&m.beta) || m.beta == 0.0 {
            return Err(invalid("mdp needs n_dummy >= 2, tick > 0, beta in (0, 1]"));
        }
        if let Some(v) = self.valuations {
            if !(v.low > 0.0 && v.low < v.high && v.high.is_finite()) {
                return Err(invalid("valuations need 0 < low < high"));
            }
        }
        if self.brokers.is_empty() {
            return Err(invalid("at least one broker is required"));
        }
        for b in &self.brokers {
            if b.strategy == StrategyKind::FixedScale {
                let alpha_ok = b.alpha.is_some_and(|a| a > 0.0 && a.is_finite());
                let theta_ok = self.valuations.is_some() || b.theta.is_some_and(|t| t > 0.0 && t.is_finite());
                if !(alpha_ok && theta_ok) {
                    return Err(invalid(format!(
                        "broker {} (fixed_scale) needs alpha > 0 and theta > 0 or drawn valuations",
                        b.name
                    )));
                }
            }
        }
        Ok(())
    }
}
