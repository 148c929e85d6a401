use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{BrokerConfig, BrokerRole, ConfigError, SimConfig, StrategyKind, ValuationConfig};
use super::market::{derive_seed, run_game, GameResult, FIRST_ACTIVE_SLOT};
use crate::equilibrium::{obos_closed_form, UniformBounds};
use crate::mdp::N_STATES;

/// Offsets around the theoretical factor used for the fixed agent.
pub const SWEEP_OFFSETS: [f64; 5] = [-0.1, -0.05, 0.0, 0.05, 0.1];
pub const DEFAULT_VALUATIONS: ValuationConfig = ValuationConfig { low: 40.0, high: 80.0 };

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleReport {
    /// Role of the adaptive agent whose scale is measured.
    pub batch: BrokerRole,
    pub fixed_alpha: f64,
    pub mean_scale: f64,
    pub std_scale: f64,
    pub n_cleared_bids: usize,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// Two-broker isolated market: a fixed-scale agent in `fixed_role` against
/// an adaptive MDPLCPBS agent that uses each slot's valuation as its
/// terminal value. Reports the adaptive agent's limit price over valuation
/// for its cleared orders, pooled across `n_games`.
///
/// Game `g` uses the same seed for every `fixed_alpha`, so points of a sweep
/// differ only in the fixed factor.
pub fn obos_validation(
    base: &SimConfig,
    fixed_role: BrokerRole,
    fixed_alpha: f64,
    n_games: usize,
) -> Result<ScaleReport, ConfigError> {
    let adaptive_role = match fixed_role {
        BrokerRole::Buyer => BrokerRole::Seller,
        BrokerRole::Seller => BrokerRole::Buyer,
    };
    let mut cfg = base.clone();
    cfg.genco.enabled = false;
    cfg.miso.enabled = false;
    cfg.valuations = Some(cfg.valuations.unwrap_or(DEFAULT_VALUATIONS));
    cfg.brokers = vec![
        BrokerConfig {
            role: fixed_role,
            alpha: Some(fixed_alpha),
            ..BrokerConfig::new("fixed", StrategyKind::FixedScale)
        },
        BrokerConfig {
            role: adaptive_role,
            ..BrokerConfig::new("adaptive", StrategyKind::Mdplcpbs)
        },
    ];
    cfg.validate()?;
    let cell = match fixed_role {
        BrokerRole::Seller => 1,
        BrokerRole::Buyer => 2,
    };
    let scales: Vec<Vec<f64>> = (0..n_games)
        .into_par_iter()
        .map(|g| {
            let mut c = cfg.clone();
            c.seed = derive_seed(base.seed, cell, g as u64);
            run_game(&c).map(|r| r.brokers[1].cleared_scales.clone())
        })
        .collect::<Result<_, _>>()?;
    let all: Vec<f64> = scales.concat();
    let (mean_scale, std_scale) = mean_std(&all);
    Ok(ScaleReport {
        batch: adaptive_role,
        fixed_alpha,
        mean_scale,
        std_scale,
        n_cleared_bids: all.len(),
    })
}

/// Theoretical OBOS factors for the configured valuation range.
pub fn obos_theory(base: &SimConfig) -> Result<crate::equilibrium::ScaleProfile, ConfigError> {
    let v = base.valuations.unwrap_or(DEFAULT_VALUATIONS);
    let bounds = UniformBounds::new(v.low, v.high, v.low, v.high).map_err(|e| ConfigError::Invalid(e.to_string()))?;
    obos_closed_form(&bounds).map_err(|e| ConfigError::Invalid(e.to_string()))
}

/// Both batches: seller fixed across the sweep (buyer measured), then buyer
/// fixed (seller measured).
pub fn obos_sweep(base: &SimConfig, n_games: usize) -> Result<Vec<ScaleReport>, ConfigError> {
    let theory = obos_theory(base)?;
    let mut out = Vec::with_capacity(2 * SWEEP_OFFSETS.len());
    for (role, center) in [(BrokerRole::Seller, theory.seller), (BrokerRole::Buyer, theory.buyer)] {
        for off in SWEEP_OFFSETS {
            out.push(obos_validation(base, role, center + off, n_games)?);
        }
    }
    Ok(out)
}

pub const BENCHMARK_FRACTIONS: [f64; 4] = [0.25, 0.5, 0.75, 1.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostRow {
    pub fraction: f64,
    pub game: usize,
    pub seed: u64,
    pub broker: String,
    pub strategy: StrategyKind,
    pub net_cost: f64,
    pub requirement: f64,
    pub cost_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub rows: Vec<CostRow>,
}

impl CostReport {
    /// Mean net cost of `strategy` at `fraction` over games and brokers.
    pub fn mean_cost(&self, fraction: f64, strategy: StrategyKind) -> Option<f64> {
        let xs: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.fraction == fraction && r.strategy == strategy)
            .map(|r| r.net_cost)
            .collect();
        (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
    }
}

/// Every configured broker in one shared market per game, for each fraction.
pub fn benchmark(base: &SimConfig, fractions: &[f64], n_games: usize) -> Result<(CostReport, Vec<GameResult>), ConfigError> {
    base.validate()?;
    let jobs: Vec<(usize, f64, usize)> = fractions
        .iter()
        .enumerate()
        .flat_map(|(i, &f)| (0..n_games).map(move |g| (i, f, g)))
        .collect();
    let games: Vec<(f64, usize, GameResult)> = jobs
        .into_par_iter()
        .map(|(i, f, g)| {
            let mut c = base.clone();
            c.demand_fraction = f;
            c.seed = derive_seed(base.seed, 10 + i as u64, g as u64);
            run_game(&c).map(|r| (f, g, r))
        })
        .collect::<Result<_, _>>()?;
    let rows = games
        .iter()
        .flat_map(|(f, g, r)| {
            r.brokers.iter().map(move |b| CostRow {
                fraction: *f,
                game: *g,
                seed: r.seed,
                broker: b.name.clone(),
                strategy: b.strategy,
                net_cost: b.net_cost,
                requirement: b.requirement,
                cost_bound: b.requirement_cost_bound,
            })
        })
        .collect();
    Ok((CostReport { rows }, games.into_iter().map(|(_, _, r)| r).collect()))
}

/// One estimate with its ground truth and weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub state: usize,
    pub estimate: f64,
    pub truth: f64,
    pub volume: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRow {
    pub state: usize,
    pub weighted_error_pct: f64,
    pub std_error_pct: f64,
    pub mean_cleared: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorTable {
    pub rows: Vec<ErrorRow>,
    /// Share of cleared volume traded in the first auction of each slot.
    pub first_auction_share: f64,
}

impl ErrorTable {
    pub fn row(&self, state: usize) -> Option<&ErrorRow> {
        self.rows.iter().find(|r| r.state == state)
    }
}

pub const REPORTED_STATES: [usize; 5] = [24, 23, 22, 21, 20];

/// Volume-weighted relative error per state, and the first-auction share
/// of the supplied `(state, volume)` pairs.
pub fn error_table(records: &[ErrorRecord], volumes: impl IntoIterator<Item = (usize, f64)>) -> ErrorTable {
    let rows = REPORTED_STATES
        .iter()
        .map(|&s| {
            let rs: Vec<&ErrorRecord> = records.iter().filter(|r| r.state == s && r.truth != 0.0).collect();
            let w: f64 = rs.iter().map(|r| r.volume).sum();
            let pct = |r: &ErrorRecord| 100.0 * (r.estimate - r.truth).abs() / r.truth.abs();
            let (mean, sd) = if w > 0.0 {
                let m = rs.iter().map(|r| r.volume * pct(r)).sum::<f64>() / w;
                let v = rs.iter().map(|r| r.volume * (pct(r) - m).powi(2)).sum::<f64>() / w;
                (m, v.sqrt())
            } else {
                (f64::NAN, f64::NAN)
            };
            let mean_cleared = if rs.is_empty() { f64::NAN } else { w / rs.len() as f64 };
            ErrorRow {
                state: s,
                weighted_error_pct: mean,
                std_error_pct: sd,
                mean_cleared,
                n: rs.len(),
            }
        })
        .collect();
    let (mut first, mut total) = (0.0, 0.0);
    for (s, v) in volumes {
        total += v;
        if s == N_STATES {
            first += v;
        }
    }
    ErrorTable {
        rows,
        first_auction_share: if total > 0.0 { first / total } else { f64::NAN },
    }
}

/// Error table over the estimates logged in `results`, with first-auction
/// share over all auctions of fully traded delivery slots.
pub fn lcp_error_report(results: &[GameResult]) -> ErrorTable {
    let records: Vec<ErrorRecord> = results
        .iter()
        .flat_map(|g| g.estimates.iter())
        .filter(|e| e.delivery >= FIRST_ACTIVE_SLOT)
        .map(|e| ErrorRecord {
            state: e.state,
            estimate: e.estimate,
            truth: e.truth,
            volume: e.volume,
        })
        .collect();
    let volumes = results
        .iter()
        .flat_map(|g| g.auctions.iter())
        .filter(|a| a.delivery >= FIRST_ACTIVE_SLOT)
        .map(|a| (a.state, a.volume));
    error_table(&records, volumes)
}
