//! Rolling-horizon wholesale market with 24 simultaneous auctions per
//! timeslot, simulator-side suppliers and buyers, balancing settlement and
//! the experiment protocols built on top of it.

pub mod config;
pub mod market;
pub mod protocols;

pub use config::{
    BalancingMode, BalancingPrice, BrokerConfig, BrokerRole, ConfigError, DemandModel, GencoConfig, MarkupShape,
    MisoConfig, SimConfig, StrategyKind, ValuationConfig,
};
pub use market::{run_game, AuctionLog, BrokerResult, EstimateLog, GameResult, SlotRecord, FIRST_ACTIVE_SLOT};
pub use protocols::{
    benchmark, error_table, lcp_error_report, obos_sweep, obos_theory, obos_validation, CostReport, CostRow,
    ErrorRecord, ErrorRow, ErrorTable, ScaleReport, BENCHMARK_FRACTIONS, SWEEP_OFFSETS,
};
