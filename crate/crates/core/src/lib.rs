//! Periodic double auctions with average clearing price: clearing engine,
//! scale-based equilibria, LCP-aware MDP bidding, baseline strategies and a
//! rolling-horizon wholesale market simulator.

pub mod auction;
pub mod equilibrium;
pub mod mdp;
pub mod strategies;
pub mod sim;
pub mod report;
