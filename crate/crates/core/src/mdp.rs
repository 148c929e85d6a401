//! LCP-aware MDP bidding: market statistics, clearing-probability estimates,
//! the dynamic-programming limit-price solver, quantity spreading and
//! dummy-order probes.
//!
//! State `s` counts the auctions left before delivery, from 24 down to 1;
//! state 0 is delivery itself, where any shortfall is settled at the
//! balancing price. Buy-side and sell-side statistics are kept apart. The
//! sell side is solved in cost space, where an ask at price `p` is a cost of
//! `-p`, so both sides share one minimisation.

use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::auction::Side;

/// Number of auctions open for one delivery slot.
pub const N_STATES: usize = 24;
/// Probe order size in MWh.
pub const DUMMY_QUANTITY: f64 = 0.01;

#[derive(Debug, Error, PartialEq)]
pub enum MdpError {
    #[error("state {0} is outside 1..=24")]
    InvalidState(usize),
    #[error("state {0} has no observations with positive cleared amount")]
    NoData(usize),
    #[error("state {0} has no candidate prices")]
    NoCandidates(usize),
    #[error("limit price for state {0} is zero or not finite")]
    DegeneratePrices(usize),
    #[error("probe range [{lo}, {hi}] is empty")]
    EmptyRange { lo: f64, hi: f64 },
    #[error("need at least 2 dummy orders, got {0}")]
    TooFewDummies(usize),
    #[error("invalid observation: {0}")]
    InvalidObservation(&'static str),
    #[error("bad stats snapshot at line {line}: {reason}")]
    Snapshot { line: usize, reason: String },
}

/// Maps a price into cost space, where lower is always better for the trader.
#[inline]
fn to_cost(side: Side, price: f64) -> f64 {
    match side {
        Side::Buy => price,
        Side::Sell => -price,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub lcp: f64,
    pub cleared_amount: f64,
}

/// Per-state LCP history and balancing prices for one side of one broker.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketStats {
    side: Side,
    per_state: Vec<Vec<Observation>>,
    balancing_prices: Vec<f64>,
    pub min_points: usize,
}

impl MarketStats {
    pub fn new(side: Side, min_points: usize) -> Self {
        Self {
            side,
            per_state: vec![Vec::new(); N_STATES],
            balancing_prices: Vec::new(),
            min_points,
        }
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn record(&mut self, state: usize, lcp: f64, cleared_amount: f64) -> Result<(), MdpError> {
        check_state(state)?;
        if !lcp.is_finite() {
            return Err(MdpError::InvalidObservation("lcp must be finite"));
        }
        if !(cleared_amount >= 0.0 && cleared_amount.is_finite()) {
            return Err(MdpError::InvalidObservation("cleared amount must be finite and non-negative"));
        }
        self.per_state[state - 1].push(Observation { lcp, cleared_amount });
        Ok(())
    }

    pub fn record_balancing(&mut self, price: f64) {
        if price.is_finite() {
            self.balancing_prices.push(price);
        }
    }

    pub fn observations(&self, state: usize) -> &[Observation] {
        &self.per_state[state - 1]
    }

    pub fn balancing_prices(&self) -> &[f64] {
        &self.balancing_prices
    }

    pub fn count(&self, state: usize) -> usize {
        self.per_state.get(state.wrapping_sub(1)).map_or(0, Vec::len)
    }

    pub fn is_ready(&self, state: usize) -> bool {
        self.count(state) >= self.min_points.max(1) && self.curve(state).is_some()
    }

    /// Clearing-probability curve for `state`, or `None` without positive volume.
    pub fn curve(&self, state: usize) -> Option<ClearingCurve> {
        ClearingCurve::new(self.side, self.per_state.get(state.wrapping_sub(1))?)
    }

    /// Line-oriented text form: `side`, `min_points`, one `state lcp cleared_amount`
    /// row per observation and one `balancing price` row per recorded price.
    pub fn to_snapshot(&self) -> String {
        let mut out = String::new();
        let side = match self.side {
            Side::Buy => "buy",
            Side::Sell => "sell",
        };
        writeln!(out, "side {side}").unwrap();
        writeln!(out, "min_points {}", self.min_points).unwrap();
        writeln!(out, "# state lcp cleared_amount").unwrap();
        for (i, obs) in self.per_state.iter().enumerate() {
            for o in obs {
                writeln!(out, "{} {} {}", i + 1, o.lcp, o.cleared_amount).unwrap();
            }
        }
        for b in &self.balancing_prices {
            writeln!(out, "balancing {b}").unwrap();
        }
        out
    }

    pub fn from_snapshot(text: &str) -> Result<Self, MdpError> {
        let mut stats = MarketStats::new(Side::Buy, 24);
        for (k, raw) in text.lines().enumerate() {
            let bad = |reason: &str| MdpError::Snapshot {
                line: k + 1,
                reason: reason.to_string(),
            };
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            match fields.as_slice() {
                ["side", "buy"] => stats.side = Side::Buy,
                ["side", "sell"] => stats.side = Side::Sell,
                ["min_points", n] => stats.min_points = n.parse().map_err(|_| bad("min_points"))?,
                ["balancing", p] => {
                    let p: f64 = p.parse().map_err(|_| bad("balancing price"))?;
                    stats.record_balancing(p);
                }
                [s, lcp, amt] => {
                    let s: usize = s.parse().map_err(|_| bad("state"))?;
                    let lcp: f64 = lcp.parse().map_err(|_| bad("lcp"))?;
                    let amt: f64 = amt.parse().map_err(|_| bad("cleared_amount"))?;
                    stats.record(s, lcp, amt).map_err(|e| bad(&e.to_string()))?;
                }
                _ => return Err(bad("unrecognised line")),
            }
        }
        Ok(stats)
    }
}

fn check_state(state: usize) -> Result<(), MdpError> {
    if (1..=N_STATES).contains(&state) {
        Ok(())
    } else {
        Err(MdpError::InvalidState(state))
    }
}

/// Volume-weighted empirical distribution of recorded LCPs in cost space.
#[derive(Debug, Clone)]
pub struct ClearingCurve {
    side: Side,
    keys: Vec<f64>,
    cumulative: Vec<f64>,
    total: f64,
}

impl ClearingCurve {
    fn new(side: Side, obs: &[Observation]) -> Option<Self> {
        let mut pairs: Vec<(f64, f64)> = obs
            .iter()
            .map(|o| (to_cost(side, o.lcp), o.cleared_amount))
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut cumulative = Vec::with_capacity(pairs.len() + 1);
        let mut acc = 0.0;
        cumulative.push(0.0);
        for &(_, a) in &pairs {
            acc += a;
            cumulative.push(acc);
        }
        if acc <= 0.0 {
            return None;
        }
        Some(Self {
            side,
            keys: pairs.into_iter().map(|p| p.0).collect(),
            cumulative,
            total: acc,
        })
    }

    /// Share of recorded volume whose LCP would have been beaten by `price`.
    pub fn p_cleared(&self, price: f64) -> f64 {
        self.p_cleared_cost(to_cost(self.side, price))
    }

    #[inline]
    fn p_cleared_cost(&self, cost: f64) -> f64 {
        let idx = self.keys.partition_point(|&k| k < cost);
        self.cumulative[idx] / self.total
    }

    fn min_cost(&self) -> f64 {
        self.keys[0]
    }

    fn distinct_costs(&self) -> impl Iterator<Item = f64> + '_ {
        self.keys
            .iter()
            .enumerate()
            .filter(|&(i, k)| i == 0 || *k != self.keys[i - 1])
            .map(|(_, &k)| k)
    }
}

/// Probability that an order at `limit_price` clears in `state`.
///
/// Buy side: volume share of observations with LCP below the price. Sell
/// side: volume share with LCP above it.
pub fn p_cleared(stats: &MarketStats, state: usize, limit_price: f64) -> Result<f64, MdpError> {
    check_state(state)?;
    stats
        .curve(state)
        .map(|c| c.p_cleared(limit_price))
        .ok_or(MdpError::NoData(state))
}

/// Solved values and limit prices for states 0..=24 in raw price units.
///
/// For the buy side `v[s]` is the expected cost per unit; for the sell side
/// it is the expected revenue per unit. `limit_price[0]` is unused.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueTable {
    pub side: Side,
    pub v: Vec<f64>,
    pub limit_price: Vec<f64>,
}

/// Minimises `p * price + (1 - p) * v[s-1]` per state over the candidate prices.
///
/// `candidates[s - 1]` lists the prices tried in state `s`. Ties go to the
/// cheapest price in cost space: the lowest bid or the highest ask.
pub fn solve_value_function(
    stats: &MarketStats,
    balancing_price: f64,
    candidates: &[Vec<f64>],
) -> Result<ValueTable, MdpError> {
    let curves: Vec<ClearingCurve> = (1..=N_STATES)
        .map(|s| stats.curve(s).ok_or(MdpError::NoData(s)))
        .collect::<Result<_, _>>()?;
    let curves: Vec<Option<&ClearingCurve>> = curves.iter().map(Some).collect();
    solve_with_curves(stats.side, balancing_price, &curves, candidates, N_STATES)
}

/// DP over states 1..=`upto`. States without a curve cannot clear and carry
/// the previous value forward, bidding that value as their limit price.
fn solve_with_curves(
    side: Side,
    terminal: f64,
    curves: &[Option<&ClearingCurve>],
    candidates: &[Vec<f64>],
    upto: usize,
) -> Result<ValueTable, MdpError> {
    let mut vc = [to_cost(side, terminal); N_STATES + 1];
    let mut lc = [f64::NAN; N_STATES + 1];
    for s in 1..=upto {
        let prev = vc[s - 1];
        let Some(curve) = curves[s - 1] else {
            vc[s] = prev;
            lc[s] = prev;
            continue;
        };
        let cands = &candidates[s - 1];
        if cands.is_empty() {
            return Err(MdpError::NoCandidates(s));
        }
        let mut costs: Vec<f64> = cands.iter().map(|&p| to_cost(side, p)).collect();
        costs.sort_by(f64::total_cmp);
        let mut best = (f64::INFINITY, f64::NAN);
        for c in costs {
            let p = curve.p_cleared_cost(c);
            let val = p * c + (1.0 - p) * prev;
            if val < best.0 {
                best = (val, c);
            }
        }
        vc[s] = best.0;
        lc[s] = best.1;
    }
    for s in upto + 1..=N_STATES {
        vc[s] = vc[upto];
        lc[s] = vc[upto];
    }
    Ok(ValueTable {
        side,
        v: vc.iter().map(|&c| to_cost(side, c)).collect(),
        limit_price: lc.iter().map(|&c| to_cost(side, c)).collect(),
    })
}

/// Candidate prices for one state: every distinct recorded LCP, an even grid
/// from the most favourable LCP to the balancing price, each moved one tick
/// past the LCP, plus a price at the most favourable LCP that never clears.
pub fn candidate_prices(curve: &ClearingCurve, balancing_price: f64, tick: f64, grid_points: usize) -> Vec<f64> {
    let side = curve.side;
    let term = to_cost(side, balancing_price);
    let lo = curve.min_cost();
    let mut out: Vec<f64> = curve.distinct_costs().map(|c| c + tick).collect();
    if grid_points >= 2 {
        let step = (term - lo) / (grid_points - 1) as f64;
        out.extend((0..grid_points).map(|k| lo + k as f64 * step + tick));
    }
    out.push(lo);
    out.iter().map(|&c| to_cost(side, c)).collect()
}

/// Order quantity for state `s` from the remaining requirement `e` of its slot.
///
/// `e > 0` sells, `e < 0` buys. `limit_prices` is indexed by state and must
/// cover `s..=24`; their magnitudes weight the split so that more is bought
/// (less sold) where the price is cheaper.
pub fn spread_quantity(e: f64, limit_prices: &[f64], s: usize) -> Result<f64, MdpError> {
    check_state(s)?;
    if e == 0.0 {
        return Ok(0.0);
    }
    let lp = |j: usize| -> Result<f64, MdpError> {
        let v = limit_prices.get(j).copied().unwrap_or(f64::NAN).abs();
        if v == 0.0 || !v.is_finite() {
            Err(MdpError::DegeneratePrices(j))
        } else {
            Ok(v)
        }
    };
    let here = lp(s)?;
    let mut denom = 0.0;
    for j in s..=N_STATES {
        let other = lp(j)?;
        denom += if e > 0.0 { other / here } else { here / other };
    }
    Ok(e / denom)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DummyOrder {
    pub state: usize,
    pub side: Side,
    pub quantity: f64,
    pub price: f64,
}

/// `n_dummy` probe prices spaced evenly over the probe range, endpoints included.
///
/// Bids span `[beta * limit, balancing]`; asks mirror this as
/// `[balancing, (2 - beta) * limit]`.
pub fn generate_dummy_orders(
    side: Side,
    limit_price: f64,
    balancing_price: f64,
    n_dummy: usize,
    beta: f64,
) -> Result<Vec<DummyOrder>, MdpError> {
    if n_dummy < 2 {
        return Err(MdpError::TooFewDummies(n_dummy));
    }
    let (lo, hi) = match side {
        Side::Buy => (beta * limit_price, balancing_price),
        Side::Sell => (balancing_price, (2.0 - beta) * limit_price),
    };
    if lo.is_nan() || hi.is_nan() || lo >= hi {
        return Err(MdpError::EmptyRange { lo, hi });
    }
    let step = (hi - lo) / (n_dummy - 1) as f64;
    Ok((0..n_dummy)
        .map(|k| DummyOrder {
            state: 0,
            side,
            quantity: DUMMY_QUANTITY,
            price: if k + 1 == n_dummy { hi } else { lo + k as f64 * step },
        })
        .collect())
}

/// What one broker saw of one auction it took part in.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct AuctionObservation {
    pub state: usize,
    pub own_final_limit_price: Option<f64>,
    pub own_final_cleared: bool,
    pub cleared_dummy_prices: Vec<f64>,
    pub public_cp: Option<f64>,
    pub public_volume: f64,
}

/// Records the bracketing LCP estimate of one auction.
///
/// The estimate is the marginal cleared price among the broker's own orders:
/// the lowest cleared bid or the highest cleared ask. Nothing is
/// recorded when none of them cleared. Returns the recorded estimate.
pub fn update_lcp_estimates(stats: &mut MarketStats, obs: &AuctionObservation) -> Result<Option<f64>, MdpError> {
    check_state(obs.state)?;
    let side = stats.side;
    let own = obs
        .own_final_limit_price
        .filter(|_| obs.own_final_cleared);
    let estimate = obs
        .cleared_dummy_prices
        .iter()
        .copied()
        .chain(own)
        .map(|p| to_cost(side, p))
        .reduce(f64::min)
        .map(|c| to_cost(side, c));
    if let Some(lcp) = estimate {
        stats.record(obs.state, lcp, obs.public_volume.max(0.0))?;
    }
    Ok(estimate)
}

/// Mean recorded balancing price, or `prior` before any delivery.
pub fn estimate_balancing_price(stats: &MarketStats, prior: f64) -> f64 {
    let b = stats.balancing_prices();
    if b.is_empty() {
        prior
    } else {
        b.iter().sum::<f64>() / b.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MdpParams {
    pub beta: f64,
    pub n_dummy: usize,
    pub tick: f64,
    pub grid_points: usize,
    /// Lowest fallback bid price.
    pub price_floor: f64,
    /// Probe orders are sent only when true.
    pub probes: bool,
    /// Quantities are split across auctions when true, else each order asks
    /// for the whole remaining requirement.
    pub spread: bool,
}

impl Default for MdpParams {
    fn default() -> Self {
        Self {
            beta: 0.5,
            n_dummy: 10,
            tick: 0.01,
            grid_points: 50,
            price_floor: 1.0,
            probes: true,
            spread: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlannedOrder {
    pub state: usize,
    /// Signed quantity: negative buys, positive sells.
    pub quantity: f64,
    pub limit_price: f64,
    /// Expected unit cost (or revenue) of the state under the solved values.
    pub value: f64,
    /// Terminal value the state was solved against.
    pub terminal: f64,
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BidPlan {
    pub orders: Vec<PlannedOrder>,
    pub dummy_orders: Vec<DummyOrder>,
}

impl BidPlan {
    pub fn order_for(&self, state: usize) -> Option<&PlannedOrder> {
        self.orders.iter().find(|o| o.state == state)
    }
}

/// One planning pass over the 24 open auctions with a shared balancing estimate.
///
/// `requirements[s - 1]` is the signed remaining requirement of the slot
/// reached in `s` auctions.
pub fn mdplcpbs_step<R: Rng + ?Sized>(
    requirements: &[f64; N_STATES],
    bid_stats: &MarketStats,
    ask_stats: &MarketStats,
    balancing_estimate: f64,
    params: &MdpParams,
    rng: &mut R,
) -> BidPlan {
    mdplcpbs_step_with_terminals(
        requirements,
        bid_stats,
        ask_stats,
        &[balancing_estimate; N_STATES],
        params,
        rng,
    )
}

/// As [`mdplcpbs_step`], with a separate terminal value for each state's slot.
///
/// States whose side has at least `min_points` observations are priced by the
/// DP and sized by [`spread_quantity`]; other states with a requirement fall
/// back to a random price for the full amount, which also seeds their
/// statistics. Probes accompany every real order when enabled.
pub fn mdplcpbs_step_with_terminals<R: Rng + ?Sized>(
    requirements: &[f64; N_STATES],
    bid_stats: &MarketStats,
    ask_stats: &MarketStats,
    terminals: &[f64; N_STATES],
    params: &MdpParams,
    rng: &mut R,
) -> BidPlan {
    let mut plan = BidPlan::default();
    let mut solver_bid = SideSolver::new(bid_stats, params);
    let mut solver_ask = SideSolver::new(ask_stats, params);

    for s in (1..=N_STATES).rev() {
        let e = requirements[s - 1];
        if e == 0.0 || !e.is_finite() {
            continue;
        }
        let side = if e < 0.0 { Side::Buy } else { Side::Sell };
        let solver = match side {
            Side::Buy => &mut solver_bid,
            Side::Sell => &mut solver_ask,
        };
        let terminal = terminals[s - 1];
        let ready = solver.curves[s - 1].is_some();
        let order = match solver.table(terminal) {
            Some(table) if ready => {
                let quantity = if params.spread {
                    spread_quantity(e, &table.limit_price, s).unwrap_or(e)
                } else {
                    e
                };
                PlannedOrder {
                    state: s,
                    quantity,
                    limit_price: table.limit_price[s],
                    value: table.v[s],
                    terminal,
                    fallback: false,
                }
            }
            _ => PlannedOrder {
                state: s,
                quantity: e,
                limit_price: fallback_price(side, terminal, params.price_floor, rng),
                value: terminal,
                terminal,
                fallback: true,
            },
        };
        if params.probes {
            if let Ok(dummies) =
                generate_dummy_orders(side, order.limit_price, terminal, params.n_dummy, params.beta)
            {
                plan.dummy_orders
                    .extend(dummies.into_iter().map(|d| DummyOrder { state: s, ..d }));
            }
        }
        plan.orders.push(order);
    }
    plan
}

/// Random price for states without enough history: bids between the floor
/// and the terminal value, asks between the terminal value and twice it.
pub fn fallback_price<R: Rng + ?Sized>(side: Side, terminal: f64, floor: f64, rng: &mut R) -> f64 {
    let (lo, hi) = match side {
        Side::Buy => (floor.min(terminal), terminal),
        Side::Sell => (terminal, 2.0 * terminal.abs().max(floor)),
    };
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}

/// Value table for one side, solved once per distinct terminal value.
pub fn value_table(stats: &MarketStats, terminal: f64, params: &MdpParams) -> Option<ValueTable> {
    SideSolver::new(stats, params).table(terminal).cloned()
}

struct SideSolver<'a> {
    stats: &'a MarketStats,
    params: &'a MdpParams,
    curves: Vec<Option<ClearingCurve>>,
    cache: Vec<(f64, ValueTable)>,
}

impl<'a> SideSolver<'a> {
    fn new(stats: &'a MarketStats, params: &'a MdpParams) -> Self {
        let curves = (1..=N_STATES)
            .map(|s| stats.is_ready(s).then(|| stats.curve(s)).flatten())
            .collect();
        Self {
            stats,
            params,
            curves,
            cache: Vec::new(),
        }
    }

    fn table(&mut self, terminal: f64) -> Option<&ValueTable> {
        if self.curves.iter().all(Option::is_none) {
            return None;
        }
        let pos = match self.cache.iter().position(|(t, _)| *t == terminal) {
            Some(pos) => pos,
            None => {
                let candidates: Vec<Vec<f64>> = self
                    .curves
                    .iter()
                    .map(|c| {
                        c.as_ref().map_or_else(Vec::new, |c| {
                            candidate_prices(c, terminal, self.params.tick, self.params.grid_points)
                        })
                    })
                    .collect();
                let refs: Vec<Option<&ClearingCurve>> = self.curves.iter().map(Option::as_ref).collect();
                let table = solve_with_curves(self.stats.side, terminal, &refs, &candidates, N_STATES).ok()?;
                self.cache.push((terminal, table));
                self.cache.len() - 1
            }
        };
        Some(&self.cache[pos].1)
    }
}
