//! Bidding strategies for the rolling 24-auction wholesale market.
//!
//! Quantities follow the broker sign convention: negative buys, positive
//! sells. A requirement `e` for a delivery slot is the signed amount the
//! broker still has to trade for it.

use std::collections::HashMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::auction::Side;
use crate::mdp::{
    self, estimate_balancing_price, fallback_price, AuctionObservation, DummyOrder, MarketStats,
    MdpParams, N_STATES,
};

/// Half-width of the ZI price distribution, giving a standard deviation of 10.
pub const ZI_HALF_WIDTH: f64 = 17.320_508_075_688_775;

/// Public outcome of one auction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PublicAuctionRecord {
    pub timeslot: usize,
    pub delivery: usize,
    pub state: usize,
    pub cp: Option<f64>,
    pub volume: f64,
    /// Unexecuted orders as `(price, quantity)`, without owners.
    pub residual_bids: Vec<(f64, f64)>,
    pub residual_asks: Vec<(f64, f64)>,
}

/// A broker's own order in one auction and what it filled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OwnFill {
    pub limit_price: f64,
    /// Signed requested quantity.
    pub quantity: f64,
    /// Signed executed quantity.
    pub filled: f64,
    pub clearing_price: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OwnAuctionResult {
    pub delivery: usize,
    pub state: usize,
    pub order: Option<OwnFill>,
    pub probes: Vec<OwnFill>,
    pub public_cp: Option<f64>,
    pub public_volume: f64,
}

/// Everything a broker may see after a round of auctions.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BrokerView {
    pub timeslot: usize,
    pub public: Vec<PublicAuctionRecord>,
    pub own: Vec<OwnAuctionResult>,
    pub balancing_charges: f64,
}

/// Input to one decision: `requirements[s - 1]` belongs to the slot `s`
/// auctions ahead.
#[derive(Debug, Clone, Copy)]
pub struct StrategyContext<'a> {
    pub timeslot: usize,
    pub requirements: [f64; N_STATES],
    /// Private per-unit valuation of each target slot, when the protocol draws one.
    pub valuations: Option<[f64; N_STATES]>,
    pub view: &'a BrokerView,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionOrder {
    pub state: usize,
    pub quantity: f64,
    pub limit_price: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct StrategyDecision {
    pub orders: Vec<DecisionOrder>,
    pub probes: Vec<DummyOrder>,
}

/// LCP estimate a strategy derived from one auction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LcpEstimate {
    pub delivery: usize,
    pub state: usize,
    pub side: Side,
    pub estimate: f64,
}

pub trait Strategy: Send {
    fn name(&self) -> &str;
    fn decide(&mut self, ctx: &StrategyContext<'_>, rng: &mut ChaCha8Rng) -> StrategyDecision;
    /// Called after every round of auctions with the broker's filtered view.
    fn observe(&mut self, _view: &BrokerView) -> Vec<LcpEstimate> {
        Vec::new()
    }
    /// Called when a delivery slot settles.
    fn settle(&mut self, _delivery: usize, _balancing_price: f64) {}
}

fn side_of(e: f64) -> Side {
    if e < 0.0 {
        Side::Buy
    } else {
        Side::Sell
    }
}

fn open_requirements<'c>(ctx: &'c StrategyContext<'_>) -> impl Iterator<Item = (usize, f64)> + 'c {
    (1..=N_STATES)
        .rev()
        .map(|s| (s, ctx.requirements[s - 1]))
        .filter(|&(_, e)| e != 0.0 && e.is_finite())
}

/// Uniform price with mean `mu` and standard deviation 10.
pub fn zi_price<R: Rng + ?Sized>(mu: f64, rng: &mut R) -> f64 {
    rng.random_range(mu - ZI_HALF_WIDTH..=mu + ZI_HALF_WIDTH)
}

/// One ZI order per open requirement, centred on `mu_source(state, side)`.
pub fn zi_decide<R: Rng + ?Sized>(
    ctx: &StrategyContext<'_>,
    mut mu_source: impl FnMut(usize, Side) -> f64,
    rng: &mut R,
) -> StrategyDecision {
    let orders = open_requirements(ctx)
        .map(|(s, e)| DecisionOrder {
            state: s,
            quantity: e,
            limit_price: zi_price(mu_source(s, side_of(e)), rng),
        })
        .collect();
    StrategyDecision {
        orders,
        probes: Vec::new(),
    }
}

/// ZIP price after `fail_count` unfilled attempts: bids climb from `1.01 mu`
/// by `0.1 mu` per failure, asks descend from `0.99 mu` and stop at `floor`.
pub fn zip_price(mu: f64, fail_count: u32, side: Side, floor: f64) -> f64 {
    let f = fail_count as f64;
    match side {
        Side::Buy => mu * (1.01 + 0.10 * f),
        Side::Sell => (mu * (0.99 - 0.10 * f)).max(floor),
    }
}

/// One ZIP order per open requirement; `fail_count(state)` reads the
/// failure count of the slot reached in `state` auctions.
pub fn zip_decide(
    ctx: &StrategyContext<'_>,
    mut mu_source: impl FnMut(usize, Side) -> f64,
    mut fail_count: impl FnMut(usize) -> u32,
    floor: f64,
) -> StrategyDecision {
    let orders = open_requirements(ctx)
        .map(|(s, e)| {
            let side = side_of(e);
            DecisionOrder {
                state: s,
                quantity: e,
                limit_price: zip_price(mu_source(s, side), fail_count(s), side, floor),
            }
        })
        .collect();
    StrategyDecision {
        orders,
        probes: Vec::new(),
    }
}

/// Same price at every open auction: `alpha * theta`, full requirement.
pub fn fixed_scale_decide(ctx: &StrategyContext<'_>, theta: &[f64; N_STATES], alpha: f64) -> StrategyDecision {
    let orders = open_requirements(ctx)
        .map(|(s, e)| DecisionOrder {
            state: s,
            quantity: e,
            limit_price: alpha * theta[s - 1],
        })
        .collect();
    StrategyDecision {
        orders,
        probes: Vec::new(),
    }
}

fn plan_to_decision(plan: mdp::BidPlan) -> StrategyDecision {
    StrategyDecision {
        orders: plan
            .orders
            .iter()
            .map(|o| DecisionOrder {
                state: o.state,
                quantity: o.quantity,
                limit_price: o.limit_price,
            })
            .collect(),
        probes: plan.dummy_orders,
    }
}

/// Terminal value per state: the slot valuation when one is given, else the
/// balancing estimate of the side the requirement trades on.
fn terminals(ctx: &StrategyContext<'_>, bid_balancing: f64, ask_balancing: f64) -> [f64; N_STATES] {
    let mut out = [0.0; N_STATES];
    for s in 1..=N_STATES {
        out[s - 1] = match ctx.valuations {
            Some(v) => v[s - 1],
            None if ctx.requirements[s - 1] > 0.0 => ask_balancing,
            None => bid_balancing,
        };
    }
    out
}

/// MDP driven by public clearing prices, without spreading or probes.
pub fn tactex_mdp_decide<R: Rng + ?Sized>(
    ctx: &StrategyContext<'_>,
    bid_stats: &MarketStats,
    ask_stats: &MarketStats,
    params: &MdpParams,
    balancing_prior: f64,
    rng: &mut R,
) -> StrategyDecision {
    let p = MdpParams {
        probes: false,
        spread: false,
        ..*params
    };
    let t = terminals(
        ctx,
        estimate_balancing_price(bid_stats, balancing_prior),
        estimate_balancing_price(ask_stats, balancing_prior),
    );
    plan_to_decision(mdp::mdplcpbs_step_with_terminals(
        &ctx.requirements,
        bid_stats,
        ask_stats,
        &t,
        &p,
        rng,
    ))
}

/// MDP driven by probed LCP estimates, with quantity spreading and probes.
pub fn mdplcpbs_decide<R: Rng + ?Sized>(
    ctx: &StrategyContext<'_>,
    bid_stats: &MarketStats,
    ask_stats: &MarketStats,
    params: &MdpParams,
    balancing_prior: f64,
    rng: &mut R,
) -> StrategyDecision {
    let t = terminals(
        ctx,
        estimate_balancing_price(bid_stats, balancing_prior),
        estimate_balancing_price(ask_stats, balancing_prior),
    );
    plan_to_decision(mdp::mdplcpbs_step_with_terminals(
        &ctx.requirements,
        bid_stats,
        ask_stats,
        &t,
        params,
        rng,
    ))
}

/// Limit-price predictor fed by public clearing prices of every auction.
#[derive(Debug, Clone)]
pub struct CpPredictor {
    pub bid_stats: MarketStats,
    pub ask_stats: MarketStats,
    pub params: MdpParams,
    pub balancing_prior: f64,
}

impl CpPredictor {
    pub fn new(params: MdpParams, min_points: usize, balancing_prior: f64) -> Self {
        Self {
            bid_stats: MarketStats::new(Side::Buy, min_points),
            ask_stats: MarketStats::new(Side::Sell, min_points),
            params,
            balancing_prior,
        }
    }

    pub fn observe_public(&mut self, public: &[PublicAuctionRecord]) {
        for r in public {
            if let Some(cp) = r.cp {
                // Public volumes are positive whenever a price exists.
                let _ = self.bid_stats.record(r.state, cp, r.volume);
                let _ = self.ask_stats.record(r.state, cp, r.volume);
            }
        }
    }

    pub fn settle(&mut self, balancing_price: f64) {
        self.bid_stats.record_balancing(balancing_price);
        self.ask_stats.record_balancing(balancing_price);
    }

    fn stats(&self, side: Side) -> &MarketStats {
        match side {
            Side::Buy => &self.bid_stats,
            Side::Sell => &self.ask_stats,
        }
    }

    /// Per-state limit prices for both sides at the current statistics, or
    /// `None` for a side/state without enough history.
    pub fn limit_prices(&self) -> PredictedPrices {
        let table = |side: Side| {
            let st = self.stats(side);
            let b = estimate_balancing_price(st, self.balancing_prior);
            let t = mdp::value_table(st, b, &self.params);
            let mut out = [None; N_STATES];
            if let Some(t) = t {
                for s in 1..=N_STATES {
                    if st.is_ready(s) {
                        out[s - 1] = Some(t.limit_price[s]);
                    }
                }
            }
            (out, b)
        };
        let (bid, bid_balancing) = table(Side::Buy);
        let (ask, ask_balancing) = table(Side::Sell);
        PredictedPrices {
            bid,
            ask,
            bid_balancing,
            ask_balancing,
            floor: self.params.price_floor,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PredictedPrices {
    bid: [Option<f64>; N_STATES],
    ask: [Option<f64>; N_STATES],
    bid_balancing: f64,
    ask_balancing: f64,
    floor: f64,
}

impl PredictedPrices {
    /// Predicted limit price, or a fallback draw where history is too thin.
    pub fn mu<R: Rng + ?Sized>(&self, state: usize, side: Side, rng: &mut R) -> f64 {
        let (p, b) = match side {
            Side::Buy => (self.bid[state - 1], self.bid_balancing),
            Side::Sell => (self.ask[state - 1], self.ask_balancing),
        };
        p.unwrap_or_else(|| fallback_price(side, b, self.floor, rng))
    }
}

#[derive(Debug, Clone)]
pub struct ZiAgent {
    pub predictor: CpPredictor,
}

impl Strategy for ZiAgent {
    fn name(&self) -> &str {
        "zi"
    }

    fn decide(&mut self, ctx: &StrategyContext<'_>, rng: &mut ChaCha8Rng) -> StrategyDecision {
        let prices = self.predictor.limit_prices();
        let mus: Vec<(usize, Side, f64)> = open_requirements(ctx)
            .map(|(s, e)| (s, side_of(e), prices.mu(s, side_of(e), rng)))
            .collect();
        zi_decide(
            ctx,
            |s, side| mus.iter().find(|m| m.0 == s && m.1 == side).map_or(f64::NAN, |m| m.2),
            rng,
        )
    }

    fn observe(&mut self, view: &BrokerView) -> Vec<LcpEstimate> {
        self.predictor.observe_public(&view.public);
        Vec::new()
    }

    fn settle(&mut self, _delivery: usize, balancing_price: f64) {
        self.predictor.settle(balancing_price);
    }
}

#[derive(Debug, Clone)]
pub struct ZipAgent {
    pub predictor: CpPredictor,
    fails: HashMap<usize, u32>,
}

impl ZipAgent {
    pub fn new(predictor: CpPredictor) -> Self {
        Self {
            predictor,
            fails: HashMap::new(),
        }
    }

    pub fn fail_count(&self, delivery: usize) -> u32 {
        self.fails.get(&delivery).copied().unwrap_or(0)
    }
}

impl Strategy for ZipAgent {
    fn name(&self) -> &str {
        "zip"
    }

    fn decide(&mut self, ctx: &StrategyContext<'_>, rng: &mut ChaCha8Rng) -> StrategyDecision {
        let prices = self.predictor.limit_prices();
        let mus: Vec<(usize, f64)> = open_requirements(ctx)
            .map(|(s, e)| (s, prices.mu(s, side_of(e), rng)))
            .collect();
        let t = ctx.timeslot;
        zip_decide(
            ctx,
            |s, _| mus.iter().find(|m| m.0 == s).map_or(f64::NAN, |m| m.1),
            |s| self.fail_count(t + s),
            self.predictor.params.tick,
        )
    }

    fn observe(&mut self, view: &BrokerView) -> Vec<LcpEstimate> {
        self.predictor.observe_public(&view.public);
        for r in &view.own {
            if let Some(o) = r.order {
                if o.filled == 0.0 {
                    *self.fails.entry(r.delivery).or_insert(0) += 1;
                } else {
                    self.fails.remove(&r.delivery);
                }
            }
        }
        Vec::new()
    }

    fn settle(&mut self, delivery: usize, balancing_price: f64) {
        self.fails.remove(&delivery);
        self.predictor.settle(balancing_price);
    }
}

#[derive(Debug, Clone)]
pub struct TacTexAgent {
    pub predictor: CpPredictor,
}

impl Strategy for TacTexAgent {
    fn name(&self) -> &str {
        "tactex"
    }

    fn decide(&mut self, ctx: &StrategyContext<'_>, rng: &mut ChaCha8Rng) -> StrategyDecision {
        let p = &self.predictor;
        tactex_mdp_decide(ctx, &p.bid_stats, &p.ask_stats, &p.params, p.balancing_prior, rng)
    }

    fn observe(&mut self, view: &BrokerView) -> Vec<LcpEstimate> {
        self.predictor.observe_public(&view.public);
        Vec::new()
    }

    fn settle(&mut self, _delivery: usize, balancing_price: f64) {
        self.predictor.settle(balancing_price);
    }
}

/// Bids `alpha` times its valuation, or times `theta` when no valuation is drawn.
#[derive(Debug, Clone)]
pub struct FixedScaleAgent {
    pub alpha: f64,
    pub theta: f64,
}

impl Strategy for FixedScaleAgent {
    fn name(&self) -> &str {
        "fixed_scale"
    }

    fn decide(&mut self, ctx: &StrategyContext<'_>, _rng: &mut ChaCha8Rng) -> StrategyDecision {
        let theta = ctx.valuations.unwrap_or([self.theta; N_STATES]);
        fixed_scale_decide(ctx, &theta, self.alpha)
    }
}

#[derive(Debug, Clone)]
pub struct MdplcpbsAgent {
    pub bid_stats: MarketStats,
    pub ask_stats: MarketStats,
    pub params: MdpParams,
    pub balancing_prior: f64,
}

impl MdplcpbsAgent {
    pub fn new(params: MdpParams, min_points: usize, balancing_prior: f64) -> Self {
        Self {
            bid_stats: MarketStats::new(Side::Buy, min_points),
            ask_stats: MarketStats::new(Side::Sell, min_points),
            params,
            balancing_prior,
        }
    }
}

impl Strategy for MdplcpbsAgent {
    fn name(&self) -> &str {
        "mdplcpbs"
    }

    fn decide(&mut self, ctx: &StrategyContext<'_>, rng: &mut ChaCha8Rng) -> StrategyDecision {
        mdplcpbs_decide(ctx, &self.bid_stats, &self.ask_stats, &self.params, self.balancing_prior, rng)
    }

    fn observe(&mut self, view: &BrokerView) -> Vec<LcpEstimate> {
        let mut out = Vec::new();
        for r in &view.own {
            let Some(order) = r.order else { continue };
            let side = side_of(order.quantity);
            let obs = AuctionObservation {
                state: r.state,
                own_final_limit_price: Some(order.limit_price),
                own_final_cleared: order.filled != 0.0,
                cleared_dummy_prices: r
                    .probes
                    .iter()
                    .filter(|p| p.filled != 0.0)
                    .map(|p| p.limit_price)
                    .collect(),
                public_cp: r.public_cp,
                public_volume: r.public_volume,
            };
            let stats = match side {
                Side::Buy => &mut self.bid_stats,
                Side::Sell => &mut self.ask_stats,
            };
            if let Ok(Some(estimate)) = mdp::update_lcp_estimates(stats, &obs) {
                out.push(LcpEstimate {
                    delivery: r.delivery,
                    state: r.state,
                    side,
                    estimate,
                });
            }
        }
        out
    }

    fn settle(&mut self, _delivery: usize, balancing_price: f64) {
        self.bid_stats.record_balancing(balancing_price);
        self.ask_stats.record_balancing(balancing_price);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn ctx_with(view: &BrokerView, req: [f64; N_STATES]) -> StrategyContext<'_> {
        StrategyContext {
            timeslot: 10,
            requirements: req,
            valuations: None,
            view,
        }
    }

    #[test]
    fn zi_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 100_000;
        let xs: Vec<f64> = (0..n).map(|_| zi_price(50.0, &mut rng)).collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        assert!(xs.iter().all(|&x| (32.679..=67.321).contains(&x)));
        assert!((mean - 50.0).abs() < 0.2, "{mean}");
        assert!((sd - 10.0).abs() < 0.2, "{sd}");
    }

    #[test]
    fn zi_skips_zero_requirement_and_replays() {
        let view = BrokerView::default();
        let mut req = [0.0; N_STATES];
        assert!(zi_decide(&ctx_with(&view, req), |_, _| 50.0, &mut ChaCha8Rng::seed_from_u64(1))
            .orders
            .is_empty());
        req[23] = -30.0;
        let a = zi_decide(&ctx_with(&view, req), |_, _| 50.0, &mut ChaCha8Rng::seed_from_u64(9));
        let b = zi_decide(&ctx_with(&view, req), |_, _| 50.0, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
        assert_eq!(a.orders[0].quantity, -30.0);
    }

    #[test]
    fn zip_examples() {
        assert!((zip_price(50.0, 0, Side::Buy, 0.01) - 50.5).abs() < 1e-12);
        assert!((zip_price(50.0, 1, Side::Buy, 0.01) - 55.5).abs() < 1e-12);
        assert!((zip_price(50.0, 3, Side::Buy, 0.01) - 65.5).abs() < 1e-12);
        assert!((zip_price(50.0, 0, Side::Sell, 0.01) - 49.5).abs() < 1e-12);
        assert_eq!(zip_price(50.0, 20, Side::Sell, 0.01), 0.01);
    }

    #[test]
    fn zip_fail_counting_is_per_slot() {
        let mut agent = ZipAgent::new(CpPredictor::new(MdpParams::default(), 24, 90.0));
        let fill = |filled| OwnFill {
            limit_price: 50.0,
            quantity: -10.0,
            filled,
            clearing_price: None,
        };
        let result = |delivery, filled| OwnAuctionResult {
            delivery,
            state: 3,
            order: Some(fill(filled)),
            probes: vec![],
            public_cp: None,
            public_volume: 0.0,
        };
        let view = BrokerView {
            own: vec![result(40, 0.0), result(41, 0.0)],
            ..Default::default()
        };
        agent.observe(&view);
        agent.observe(&BrokerView { own: vec![result(40, 0.0), result(41, -2.0)], ..Default::default() });
        assert_eq!(agent.fail_count(40), 2);
        assert_eq!(agent.fail_count(41), 0);
    }

    #[test]
    fn fixed_scale_examples() {
        let view = BrokerView::default();
        let mut req = [0.0; N_STATES];
        req[0] = 5.0;
        let d = fixed_scale_decide(&ctx_with(&view, req), &[60.0; N_STATES], 1.048689);
        assert!((d.orders[0].limit_price - 62.92134).abs() < 1e-9);
        let d = fixed_scale_decide(&ctx_with(&view, req), &[60.0; N_STATES], 1.0);
        assert_eq!(d.orders[0].limit_price, 60.0);
        let d = fixed_scale_decide(&ctx_with(&view, req), &[60.0; N_STATES], 0.891386);
        assert!((d.orders[0].limit_price - 53.48316).abs() < 1e-9);
    }

    fn warm(side: Side, lcps: &[f64]) -> MarketStats {
        let mut st = MarketStats::new(side, 3);
        for s in 1..=N_STATES {
            for &l in lcps {
                st.record(s, l, 10.0).unwrap();
            }
        }
        st
    }

    #[test]
    fn tactex_matches_mdplcpbs_solver_on_same_history() {
        let bid = warm(Side::Buy, &[50.0, 52.0, 55.0]);
        let ask = MarketStats::new(Side::Sell, 3);
        let view = BrokerView::default();
        let mut req = [0.0; N_STATES];
        req[23] = -100.0;
        req[10] = -20.0;
        let ctx = ctx_with(&view, req);
        let params = MdpParams::default();
        let tt = tactex_mdp_decide(&ctx, &bid, &ask, &params, 90.0, &mut ChaCha8Rng::seed_from_u64(1));
        let md = mdplcpbs_decide(&ctx, &bid, &ask, &params, 90.0, &mut ChaCha8Rng::seed_from_u64(1));
        for (a, b) in tt.orders.iter().zip(&md.orders) {
            assert_eq!(a.limit_price, b.limit_price);
        }
        assert!(tt.probes.is_empty());
        assert!(!md.probes.is_empty());
        // No spreading: every order asks for the whole remaining requirement.
        assert_eq!(tt.orders.iter().find(|o| o.state == 11).unwrap().quantity, -20.0);
    }

    #[test]
    fn lower_price_history_gives_lower_prices() {
        let high = warm(Side::Buy, &[50.0, 52.0, 55.0]);
        let low = warm(Side::Buy, &[45.0, 47.0, 50.0]);
        let ask = MarketStats::new(Side::Sell, 3);
        let view = BrokerView::default();
        let req = [-10.0; N_STATES];
        let ctx = ctx_with(&view, req);
        let p = MdpParams::default();
        let a = tactex_mdp_decide(&ctx, &low, &ask, &p, 90.0, &mut ChaCha8Rng::seed_from_u64(1));
        let b = mdplcpbs_decide(&ctx, &high, &ask, &p, 90.0, &mut ChaCha8Rng::seed_from_u64(1));
        for (x, y) in a.orders.iter().zip(&b.orders) {
            assert!(x.limit_price <= y.limit_price, "state {}", x.state);
        }
    }

    #[test]
    fn cold_mdplcpbs_falls_back_with_probes() {
        let mut agent = MdplcpbsAgent::new(MdpParams::default(), 24, 90.0);
        let view = BrokerView::default();
        let mut req = [0.0; N_STATES];
        req[23] = -100.0;
        let d = agent.decide(&ctx_with(&view, req), &mut ChaCha8Rng::seed_from_u64(3));
        assert_eq!(d.orders.len(), 1);
        assert_eq!(d.orders[0].quantity, -100.0);
        assert!(d.orders[0].limit_price < 90.0);
        assert_eq!(d.probes.len(), 10);
    }

    #[test]
    fn valuation_becomes_terminal_value() {
        let bid = warm(Side::Buy, &[50.0, 52.0, 55.0]);
        let view = BrokerView::default();
        let mut req = [0.0; N_STATES];
        req[5] = -1.0;
        let ctx = StrategyContext {
            valuations: Some([60.0; N_STATES]),
            ..ctx_with(&view, req)
        };
        let ask = MarketStats::new(Side::Sell, 3);
        let t = terminals(&ctx, 90.0, 90.0);
        assert_eq!(t, [60.0; N_STATES]);
        let table = mdp::value_table(&bid, t[5], &MdpParams::default()).unwrap();
        assert_eq!(table.v[0], 60.0);
        let d = mdplcpbs_decide(&ctx, &bid, &ask, &MdpParams::default(), 90.0, &mut ChaCha8Rng::seed_from_u64(1));
        assert!(d.orders[0].limit_price <= 60.0);
    }

    #[test]
    fn mdplcpbs_observe_records_bracketing_estimate() {
        let mut agent = MdplcpbsAgent::new(MdpParams::default(), 24, 90.0);
        let probe = |price, filled| OwnFill {
            limit_price: price,
            quantity: -0.01,
            filled,
            clearing_price: Some(47.0),
        };
        let view = BrokerView {
            own: vec![OwnAuctionResult {
                delivery: 30,
                state: 24,
                order: Some(OwnFill {
                    limit_price: 52.0,
                    quantity: -100.0,
                    filled: -100.0,
                    clearing_price: Some(47.0),
                }),
                probes: vec![probe(40.0, 0.0), probe(49.0, -0.01), probe(58.0, -0.01)],
                public_cp: Some(47.0),
                public_volume: 300.0,
            }],
            ..Default::default()
        };
        let est = agent.observe(&view);
        assert_eq!(est.len(), 1);
        assert_eq!(est[0].estimate, 49.0);
        assert_eq!(agent.bid_stats.observations(24)[0].cleared_amount, 300.0);
    }
}
