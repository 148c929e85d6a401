use std::f64::consts::PI;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::config::{BalancingPrice, BrokerRole, ConfigError, DemandModel, MarkupShape, SimConfig, StrategyKind};
use crate::auction::{clear_acpr, OrderBook, OrderId, Side, QTY_EPS};
use crate::mdp::N_STATES;
use crate::strategies::{
    BrokerView, CpPredictor, FixedScaleAgent, MdplcpbsAgent, OwnAuctionResult, OwnFill, PublicAuctionRecord,
    Strategy, StrategyContext, TacTexAgent, ZiAgent, ZipAgent,
};

/// First delivery slot with a full set of 24 auctions.
pub const FIRST_ACTIVE_SLOT: usize = N_STATES + 1;

const STREAM_DEMAND: u64 = 0;
const STREAM_GENCO: u64 = 1;
const STREAM_VALUATIONS: u64 = 2;
const STREAM_BROKER: u64 = 100;

/// One delivery slot of one broker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotRecord {
    pub delivery: usize,
    /// Signed demand: positive consumes, negative supplies.
    pub demand: f64,
    /// Net wholesale position: bought minus sold.
    pub position: f64,
    pub imbalance: f64,
    pub balancing_price: f64,
    pub charge: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BrokerResult {
    pub name: String,
    pub strategy: StrategyKind,
    /// Wholesale payments plus balancing charges minus sales revenue.
    pub net_cost: f64,
    pub wholesale_cost: f64,
    pub sales_revenue: f64,
    pub balancing_charges: f64,
    pub probe_cost: f64,
    /// Total absolute demand over the active slots.
    pub requirement: f64,
    /// Requirement priced at each slot's balancing price.
    pub requirement_cost_bound: f64,
    pub slots: Vec<SlotRecord>,
    /// Energy cleared by real orders, indexed by state - 1.
    pub per_state_volume: Vec<f64>,
    /// Limit price over valuation for every cleared real order, when valuations are drawn.
    pub cleared_scales: Vec<f64>,
}

/// Ground-truth log of one auction; never shown to strategies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuctionLog {
    pub timeslot: usize,
    pub delivery: usize,
    pub state: usize,
    pub cp: Option<f64>,
    pub volume: f64,
    pub lcb_price: Option<f64>,
    pub lca_price: Option<f64>,
}

/// A strategy's LCP estimate paired with the true marginal price.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimateLog {
    pub broker: usize,
    pub delivery: usize,
    pub state: usize,
    pub side: Side,
    pub estimate: f64,
    pub truth: f64,
    pub volume: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameResult {
    pub seed: u64,
    pub brokers: Vec<BrokerResult>,
    pub auctions: Vec<AuctionLog>,
    pub estimates: Vec<EstimateLog>,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Deterministic seed for game `index` of experiment cell `cell`.
pub fn derive_seed(base: u64, cell: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(base);
    rng.set_stream(1 << 32 | cell << 16 | index);
    rng.next_u64()
}

/// Market demand per delivery slot, index 0 unused.
pub fn market_demand(cfg: &SimConfig) -> Result<Vec<f64>, ConfigError> {
    let h = cfg.horizon;
    let mut out = vec![0.0; h + 1];
    match &cfg.demand {
        DemandModel::Sinusoidal { mean, amplitude, noise, period } => {
            let mut rng = stream(cfg.seed, STREAM_DEMAND);
            let normal = Normal::new(0.0, *noise).map_err(|e| ConfigError::Invalid(e.to_string()))?;
            for (d, v) in out.iter_mut().enumerate().skip(1) {
                let base = mean + amplitude * (2.0 * PI * d as f64 / period).sin();
                *v = (base + normal.sample(&mut rng)).max(0.0);
            }
        }
        DemandModel::File { path } => {
            let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
                path: path.clone(),
                source,
            })?;
            let values: Vec<f64> = text
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(|l| l.parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| ConfigError::Invalid(format!("demand file {}: {e}", path.display())))?;
            if values.len() < h {
                return Err(ConfigError::Invalid(format!(
                    "demand file {} has {} values, horizon needs {h}",
                    path.display(),
                    values.len()
                )));
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(ConfigError::Invalid("demand file values must be finite".into()));
            }
            out[1..].copy_from_slice(&values[..h]);
        }
    }
    Ok(out)
}

fn build_strategy(cfg: &SimConfig, index: usize) -> Box<dyn Strategy> {
    let b = &cfg.brokers[index];
    let prior = cfg.balancing_prior();
    let predictor = || CpPredictor::new(cfg.mdp, cfg.min_points, prior);
    match b.strategy {
        StrategyKind::Zi => Box::new(ZiAgent { predictor: predictor() }),
        StrategyKind::Zip => Box::new(ZipAgent::new(predictor())),
        StrategyKind::Tactex => Box::new(TacTexAgent { predictor: predictor() }),
        StrategyKind::FixedScale => Box::new(FixedScaleAgent {
            alpha: b.alpha.unwrap_or(1.0),
            theta: b.theta.unwrap_or(1.0),
        }),
        StrategyKind::Mdplcpbs => Box::new(MdplcpbsAgent::new(cfg.mdp, cfg.min_points, prior)),
    }
}

#[derive(Clone, Copy)]
enum OrderKind {
    Real,
    Probe,
}

struct Tagged {
    id: OrderId,
    broker: usize,
    kind: OrderKind,
    side: Side,
    price: f64,
}

struct Auction {
    delivery: usize,
    state: usize,
    book: OrderBook,
    tags: Vec<Tagged>,
    genco: Vec<(usize, OrderId)>,
}

/// Plays one game and returns its full ground-truth record.
pub fn run_game(cfg: &SimConfig) -> Result<GameResult, ConfigError> {
    cfg.validate()?;
    let h = cfg.horizon;
    let n = cfg.brokers.len();
    let market = market_demand(cfg)?;

    let demand: Vec<Vec<f64>> = cfg
        .brokers
        .iter()
        .map(|b| {
            let sign = match b.role {
                BrokerRole::Buyer => 1.0,
                BrokerRole::Seller => -1.0,
            };
            (0..=h)
                .map(|d| if d >= FIRST_ACTIVE_SLOT { sign * cfg.demand_fraction * market[d] } else { 0.0 })
                .collect()
        })
        .collect();

    let valuations: Option<Vec<Vec<f64>>> = cfg.valuations.map(|v| {
        let mut rng = stream(cfg.seed, STREAM_VALUATIONS);
        (0..n)
            .map(|_| {
                (0..=h)
                    .map(|_| v.low + (v.high - v.low) * rand::Rng::random::<f64>(&mut rng))
                    .collect()
            })
            .collect()
    });

    let mut strategies: Vec<Box<dyn Strategy>> = (0..n).map(|i| build_strategy(cfg, i)).collect();
    let mut rngs: Vec<ChaCha8Rng> = (0..n).map(|i| stream(cfg.seed, STREAM_BROKER + i as u64)).collect();
    let mut genco_rng = stream(cfg.seed, STREAM_GENCO);
    let genco_noise = Normal::new(0.0, cfg.genco.noise_std).map_err(|e| ConfigError::Invalid(e.to_string()))?;

    let units = if cfg.genco.enabled { cfg.genco.units } else { 0 };
    let mut capacity = vec![vec![cfg.genco.capacity / units.max(1) as f64; h + 1]; units];
    let mut position = vec![vec![0.0; h + 1]; n];
    let mut results: Vec<BrokerResult> = cfg
        .brokers
        .iter()
        .map(|b| BrokerResult {
            name: b.name.clone(),
            strategy: b.strategy,
            net_cost: 0.0,
            wholesale_cost: 0.0,
            sales_revenue: 0.0,
            balancing_charges: 0.0,
            probe_cost: 0.0,
            requirement: 0.0,
            requirement_cost_bound: 0.0,
            slots: Vec::new(),
            per_state_volume: vec![0.0; N_STATES],
            cleared_scales: Vec::new(),
        })
        .collect();
    let mut views: Vec<BrokerView> = vec![BrokerView::default(); n];
    let mut auctions: Vec<AuctionLog> = Vec::new();
    let mut estimates: Vec<EstimateLog> = Vec::new();
    // Volume-weighted clearing-price sums per delivery slot for dynamic balancing.
    let mut slot_cp = vec![(0.0f64, 0.0f64); h + 1];

    for t in 0..=h {
        if t >= 1 {
            let d = t;
            let price = match cfg.balancing_price {
                BalancingPrice::Fixed(p) => p,
                BalancingPrice::Mode(_) => {
                    let (pv, v) = slot_cp[d];
                    1.5 * if v > 0.0 { pv / v } else { cfg.genco.base_cost }
                }
            };
            for b in 0..n {
                let imbalance = position[b][d] - demand[b][d];
                let charge = imbalance.abs() * price;
                let r = &mut results[b];
                r.balancing_charges += charge;
                if d >= FIRST_ACTIVE_SLOT {
                    r.requirement += demand[b][d].abs();
                    r.requirement_cost_bound += demand[b][d].abs() * price;
                }
                r.slots.push(SlotRecord {
                    delivery: d,
                    demand: demand[b][d],
                    position: position[b][d],
                    imbalance,
                    balancing_price: price,
                    charge,
                });
                views[b].balancing_charges = r.balancing_charges;
                strategies[b].settle(d, price);
            }
        }
        if t == h {
            break;
        }

        let open: Vec<usize> = (t + 1..=(t + N_STATES).min(h)).collect();
        let mut books: Vec<Auction> = open
            .iter()
            .map(|&d| Auction {
                delivery: d,
                state: d - t,
                book: OrderBook::new(),
                tags: Vec::new(),
                genco: Vec::new(),
            })
            .collect();

        for a in books.iter_mut() {
            for (u, cap) in capacity.iter().enumerate() {
                let left = cap[a.delivery];
                if left <= QTY_EPS {
                    continue;
                }
                let g = &cfg.genco;
                let cost = g.base_cost * (1.0 + g.unit_spread * u as f64);
                let markup = match g.markup_shape {
                    MarkupShape::Distance => g.markup * a.state as f64,
                    MarkupShape::Proximity => g.markup * (N_STATES - a.state) as f64,
                };
                let price = (cost * (1.0 + markup) + genco_noise.sample(&mut genco_rng))
                    .min(g.price_ceiling)
                    .max(cfg.mdp.tick);
                let id = a.book.submit(u32::MAX - u as u32, Side::Sell, left, price).expect("valid genco ask");
                a.genco.push((u, id));
            }
            if cfg.miso.enabled {
                a.book
                    .submit(u32::MAX - 1000, Side::Buy, cfg.miso.quantity, cfg.miso.price_floor)
                    .expect("valid miso bid");
            }
        }

        for k in 0..n {
            // Rotate submission order so no broker always wins time priority.
            let b = (k + t) % n;
            let mut req = [0.0; N_STATES];
            let mut vals = [0.0; N_STATES];
            for s in 1..=N_STATES {
                let d = t + s;
                if d <= h {
                    let e = position[b][d] - demand[b][d];
                    req[s - 1] = if e.abs() > 1e-9 { e } else { 0.0 };
                    if let Some(v) = &valuations {
                        vals[s - 1] = v[b][d];
                    }
                }
            }
            let ctx = StrategyContext {
                timeslot: t,
                requirements: req,
                valuations: valuations.as_ref().map(|_| vals),
                view: &views[b],
            };
            let decision = strategies[b].decide(&ctx, &mut rngs[b]);
            for o in &decision.orders {
                let e = req.get(o.state.wrapping_sub(1)).copied().unwrap_or(0.0);
                let valid = (1..=N_STATES).contains(&o.state)
                    && t + o.state <= h
                    && o.quantity.abs() > QTY_EPS
                    && o.quantity.signum() == e.signum()
                    && o.limit_price.is_finite();
                if !valid {
                    continue;
                }
                let a = &mut books[o.state - 1];
                let side = if o.quantity < 0.0 { Side::Buy } else { Side::Sell };
                let qty = o.quantity.abs().min(e.abs());
                let id = a.book.submit(b as u32, side, qty, o.limit_price).expect("validated order");
                a.tags.push(Tagged { id, broker: b, kind: OrderKind::Real, side, price: o.limit_price });
            }
            for p in &decision.probes {
                let valid = (1..=N_STATES).contains(&p.state)
                    && t + p.state <= h
                    && p.quantity > QTY_EPS
                    && p.price.is_finite();
                if !valid {
                    continue;
                }
                let a = &mut books[p.state - 1];
                let id = a.book.submit(b as u32, p.side, p.quantity, p.price).expect("validated probe");
                a.tags.push(Tagged { id, broker: b, kind: OrderKind::Probe, side: p.side, price: p.price });
            }
        }

        let mut public = Vec::with_capacity(books.len());
        let mut own: Vec<Vec<OwnAuctionResult>> = vec![Vec::new(); n];
        for a in &books {
            let res = clear_acpr(&a.book);
            let cp = res.clearing_price;
            auctions.push(AuctionLog {
                timeslot: t,
                delivery: a.delivery,
                state: a.state,
                cp,
                volume: res.total_cleared,
                lcb_price: res.lcb_price,
                lca_price: res.lca_price,
            });
            if let Some(p) = cp {
                slot_cp[a.delivery].0 += p * res.total_cleared;
                slot_cp[a.delivery].1 += res.total_cleared;
            }
            for &(u, id) in &a.genco {
                capacity[u][a.delivery] -= res.filled(id);
            }

            let residual = |side: Side| -> Vec<(f64, f64)> {
                let orders = match side {
                    Side::Buy => a.book.bids(),
                    Side::Sell => a.book.asks(),
                };
                orders
                    .iter()
                    .filter_map(|o| {
                        let left = o.quantity - res.filled(o.id);
                        (left > QTY_EPS).then_some((o.price, left))
                    })
                    .collect()
            };
            public.push(PublicAuctionRecord {
                timeslot: t,
                delivery: a.delivery,
                state: a.state,
                cp,
                volume: res.total_cleared,
                residual_bids: residual(Side::Buy),
                residual_asks: residual(Side::Sell),
            });

            let mut per_broker: Vec<Option<OwnAuctionResult>> = vec![None; n];
            for tag in &a.tags {
                let filled = res.filled(tag.id);
                let qty = a.book.get(tag.id).map_or(0.0, |o| o.quantity);
                let sign = match tag.side {
                    Side::Buy => -1.0,
                    Side::Sell => 1.0,
                };
                let fill = OwnFill {
                    limit_price: tag.price,
                    quantity: sign * qty,
                    filled: sign * filled,
                    clearing_price: cp,
                };
                let r = &mut results[tag.broker];
                if filled > 0.0 {
                    let price = cp.expect("fills imply a clearing price");
                    let money = filled * price;
                    match tag.side {
                        Side::Buy => r.wholesale_cost += money,
                        Side::Sell => r.sales_revenue += money,
                    }
                    match tag.kind {
                        OrderKind::Real => {
                            position[tag.broker][a.delivery] -= sign * filled;
                            r.per_state_volume[a.state - 1] += filled;
                            if let Some(v) = &valuations {
                                r.cleared_scales.push(tag.price / v[tag.broker][a.delivery]);
                            }
                        }
                        OrderKind::Probe => {
                            r.probe_cost += match tag.side {
                                Side::Buy => money,
                                Side::Sell => -money,
                            };
                        }
                    }
                }
                let entry = per_broker[tag.broker].get_or_insert_with(|| OwnAuctionResult {
                    delivery: a.delivery,
                    state: a.state,
                    order: None,
                    probes: Vec::new(),
                    public_cp: cp,
                    public_volume: res.total_cleared,
                });
                match tag.kind {
                    OrderKind::Real => entry.order = Some(fill),
                    OrderKind::Probe => entry.probes.push(fill),
                }
            }
            for (b, r) in per_broker.into_iter().enumerate() {
                if let Some(r) = r {
                    own[b].push(r);
                }
            }
        }

        for b in 0..n {
            views[b].timeslot = t;
            views[b].public = public.clone();
            views[b].own = std::mem::take(&mut own[b]);
            for est in strategies[b].observe(&views[b]) {
                let log = auctions
                    .iter()
                    .rev()
                    .take(open.len())
                    .find(|l| l.delivery == est.delivery && l.state == est.state);
                let Some(log) = log else { continue };
                let truth = match est.side {
                    Side::Buy => log.lcb_price,
                    Side::Sell => log.lca_price,
                };
                if let Some(truth) = truth {
                    estimates.push(EstimateLog {
                        broker: b,
                        delivery: est.delivery,
                        state: est.state,
                        side: est.side,
                        estimate: est.estimate,
                        truth,
                        volume: log.volume,
                    });
                }
            }
        }
    }

    for r in results.iter_mut() {
        r.net_cost = r.wholesale_cost + r.balancing_charges - r.sales_revenue;
    }
    Ok(GameResult {
        seed: cfg.seed,
        brokers: results,
        auctions,
        estimates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::config::{BrokerConfig, ValuationConfig};

    fn small() -> SimConfig {
        SimConfig {
            horizon: 60,
            ..SimConfig::default()
        }
    }

    #[test]
    fn deterministic_replay() {
        let a = run_game(&small()).unwrap();
        let b = run_game(&small()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn energy_conservation_and_truth_ordering() {
        let g = run_game(&small()).unwrap();
        for r in &g.brokers {
            for s in &r.slots {
                assert!((s.demand - (s.position - s.imbalance)).abs() < 1e-6);
            }
            // Buyers never overbuy.
            assert!(r.slots.iter().all(|s| s.position <= s.demand + 1e-6));
        }
        for l in &g.auctions {
            if let (Some(cp), Some(b), Some(a)) = (l.cp, l.lcb_price, l.lca_price) {
                assert!(b >= cp && cp >= a);
            }
        }
    }

    #[test]
    fn idle_broker_pays_full_imbalance() {
        let mut cfg = small();
        cfg.brokers = vec![BrokerConfig {
            alpha: Some(0.001),
            theta: Some(1.0),
            ..BrokerConfig::new("idle", StrategyKind::FixedScale)
        }];
        let g = run_game(&cfg).unwrap();
        let r = &g.brokers[0];
        assert!(r.requirement > 0.0);
        assert!((r.net_cost - r.requirement * 90.0).abs() < 1e-6 * r.net_cost);
        assert_eq!(r.net_cost, r.requirement_cost_bound);
    }

    #[test]
    fn isolated_pair_sees_only_broker_orders() {
        let mut cfg = small();
        cfg.genco.enabled = false;
        cfg.miso.enabled = false;
        cfg.valuations = Some(ValuationConfig { low: 40.0, high: 80.0 });
        cfg.brokers = vec![
            BrokerConfig { alpha: Some(1.048689), role: BrokerRole::Seller, ..BrokerConfig::new("s", StrategyKind::FixedScale) },
            BrokerConfig::new("b", StrategyKind::Mdplcpbs),
        ];
        let g = run_game(&cfg).unwrap();
        let traded: f64 = g.auctions.iter().map(|a| a.volume).sum();
        let broker_volume: f64 = g.brokers.iter().map(|b| b.per_state_volume.iter().sum::<f64>()).sum();
        assert!(traded > 0.0);
        // Every unit traded has a broker on both sides, up to probe volume.
        assert!(broker_volume <= 2.0 * traded + 1e-6);
        assert!(!g.brokers[1].cleared_scales.is_empty());
    }

    #[test]
    fn miso_alone_never_lifts_price_above_genco_cost() {
        let mut cfg = small();
        cfg.genco.noise_std = 0.0;
        cfg.brokers = vec![BrokerConfig::new("m", StrategyKind::Mdplcpbs)];
        let g = run_game(&cfg).unwrap();
        for l in g.auctions.iter().filter(|l| l.delivery < FIRST_ACTIVE_SLOT) {
            assert!(l.cp.is_none(), "bootstrap slot traded: {l:?}");
        }
    }

    #[test]
    fn demand_file_model() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("demand.txt");
        let body: String = (0..60).map(|i| format!("{}\n", 100 + i)).collect();
        std::fs::write(&path, body).unwrap();
        let mut cfg = small();
        cfg.demand = DemandModel::File { path: path.clone() };
        let d = market_demand(&cfg).unwrap();
        assert_eq!(d[1], 100.0);
        assert_eq!(d[60], 159.0);
        std::fs::write(&path, "1\n2\n").unwrap();
        assert!(market_demand(&cfg).is_err());
    }
}
