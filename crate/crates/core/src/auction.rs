//! Sealed-bid multi-unit double auction with average clearing price rule.
//!
//! Bids are ranked by price descending and asks by price ascending, ties
//! broken by submission sequence. Marginal units are matched greedily while
//! the marginal bid price is at least the marginal ask price, and every
//! executed unit trades at `(price(LCB) + price(LCA)) / 2` where LCB/LCA are
//! the last bid and ask that executed (partially or fully).

use std::cmp::Ordering;
use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Quantities below this are treated as zero when deciding "fully executed".
pub const QTY_EPS: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum AuctionError {
    #[error("order quantity must be strictly positive and finite, got {0}")]
    InvalidQuantity(f64),
    #[error("order price must be finite, got {0}")]
    InvalidPrice(f64),
    #[error("tick must be strictly positive, got {0}")]
    InvalidTick(f64),
    #[error("duplicate order id {0:?}")]
    DuplicateId(OrderId),
    #[error("duplicate sequence number {0}")]
    DuplicateSeq(u64),
    #[error("no grid price fills {quantity} MWh against the opposite side")]
    Infeasible { quantity: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Buy,
    Sell,
}

impl Side {
    pub fn opposite(self) -> Side {
        match self {
            Side::Buy => Side::Sell,
            Side::Sell => Side::Buy,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct OrderId(pub u64);

/// Participant identifier. Opaque to the clearing engine.
pub type ParticipantId = u32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Order {
    pub id: OrderId,
    pub owner: ParticipantId,
    pub side: Side,
    pub quantity: f64,
    pub price: f64,
    pub seq: u64,
}

impl Order {
    pub fn new(
        id: OrderId,
        owner: ParticipantId,
        side: Side,
        quantity: f64,
        price: f64,
        seq: u64,
    ) -> Result<Self, AuctionError> {
        if !(quantity.is_finite() && quantity > 0.0) {
            return Err(AuctionError::InvalidQuantity(quantity));
        }
        if !price.is_finite() {
            return Err(AuctionError::InvalidPrice(price));
        }
        Ok(Self {
            id,
            owner,
            side,
            quantity,
            price,
            seq,
        })
    }
}

/// Uncleared bids and asks for a single auction.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OrderBook {
    bids: Vec<Order>,
    asks: Vec<Order>,
    next_id: u64,
    next_seq: u64,
}

impl OrderBook {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn bids(&self) -> &[Order] {
        &self.bids
    }

    pub fn asks(&self) -> &[Order] {
        &self.asks
    }

    pub fn len(&self) -> usize {
        self.bids.len() + self.asks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bids.is_empty() && self.asks.is_empty()
    }

    pub fn orders(&self) -> impl Iterator<Item = &Order> {
        self.bids.iter().chain(self.asks.iter())
    }

    pub fn get(&self, id: OrderId) -> Option<&Order> {
        self.orders().find(|o| o.id == id)
    }

    /// Adds a fully specified order, rejecting duplicate ids or sequence numbers.
    pub fn insert(&mut self, order: Order) -> Result<(), AuctionError> {
        if self.orders().any(|o| o.id == order.id) {
            return Err(AuctionError::DuplicateId(order.id));
        }
        if self.orders().any(|o| o.seq == order.seq) {
            return Err(AuctionError::DuplicateSeq(order.seq));
        }
        self.next_id = self.next_id.max(order.id.0 + 1);
        self.next_seq = self.next_seq.max(order.seq + 1);
        match order.side {
            Side::Buy => self.bids.push(order),
            Side::Sell => self.asks.push(order),
        }
        Ok(())
    }

    /// Submits a new order with the next free id and sequence number.
    pub fn submit(
        &mut self,
        owner: ParticipantId,
        side: Side,
        quantity: f64,
        price: f64,
    ) -> Result<OrderId, AuctionError> {
        let id = OrderId(self.next_id);
        let order = Order::new(id, owner, side, quantity, price, self.next_seq)?;
        self.insert(order)?;
        Ok(id)
    }

    /// Builds the order that [`OrderBook::submit`] would create, without inserting it.
    pub fn prepare(
        &self,
        owner: ParticipantId,
        side: Side,
        quantity: f64,
        price: f64,
    ) -> Result<Order, AuctionError> {
        Order::new(
            OrderId(self.next_id),
            owner,
            side,
            quantity,
            price,
            self.next_seq,
        )
    }

    fn check_unique(&self) -> bool {
        let mut ids = HashSet::new();
        let mut seqs = HashSet::new();
        self.orders().all(|o| ids.insert(o.id) && seqs.insert(o.seq))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trade {
    pub bid_id: OrderId,
    pub ask_id: OrderId,
    pub quantity: f64,
    pub price: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ClearingResult {
    pub clearing_price: Option<f64>,
    pub trades: Vec<Trade>,
    /// Last clearing bid.
    pub lcb: Option<OrderId>,
    /// Last clearing ask.
    pub lca: Option<OrderId>,
    pub lcb_price: Option<f64>,
    pub lca_price: Option<f64>,
    /// Unexecuted residual of the LCB.
    pub q_b: f64,
    /// Unexecuted residual of the LCA.
    pub q_a: f64,
    pub total_cleared: f64,
}

impl ClearingResult {
    pub fn is_cleared(&self) -> bool {
        self.clearing_price.is_some()
    }

    /// Quantity executed for the given order.
    pub fn filled(&self, id: OrderId) -> f64 {
        self.trades
            .iter()
            .filter(|t| t.bid_id == id || t.ask_id == id)
            .map(|t| t.quantity)
            .sum()
    }
}

fn bid_priority(a: &Order, b: &Order) -> Ordering {
    b.price.total_cmp(&a.price).then(a.seq.cmp(&b.seq))
}

fn ask_priority(a: &Order, b: &Order) -> Ordering {
    a.price.total_cmp(&b.price).then(a.seq.cmp(&b.seq))
}

pub(crate) fn sorted_sides(book: &OrderBook) -> (Vec<&Order>, Vec<&Order>) {
    let mut bids: Vec<&Order> = book.bids.iter().collect();
    let mut asks: Vec<&Order> = book.asks.iter().collect();
    bids.sort_by(|a, b| bid_priority(a, b));
    asks.sort_by(|a, b| ask_priority(a, b));
    (bids, asks)
}

/// Clears the book under the average clearing price rule.
pub fn clear_acpr(book: &OrderBook) -> ClearingResult {
    debug_assert!(book.check_unique());
    let (bids, asks) = sorted_sides(book);

    let mut i = 0;
    let mut j = 0;
    let mut bid_left = bids.first().map_or(0.0, |o| o.quantity);
    let mut ask_left = asks.first().map_or(0.0, |o| o.quantity);
    let mut last_bid: Option<usize> = None;
    let mut last_ask: Option<usize> = None;
    // (bid index, ask index, quantity); prices are filled in once CP is known.
    let mut fills: Vec<(usize, usize, f64)> = Vec::new();

    while i < bids.len() && j < asks.len() && bids[i].price >= asks[j].price {
        let qty = bid_left.min(ask_left);
        fills.push((i, j, qty));
        last_bid = Some(i);
        last_ask = Some(j);
        if bid_left <= ask_left {
            ask_left -= bid_left;
            bid_left = 0.0;
        } else {
            bid_left -= ask_left;
            ask_left = 0.0;
        }
        if bid_left <= QTY_EPS {
            i += 1;
            bid_left = bids.get(i).map_or(0.0, |o| o.quantity);
        }
        if ask_left <= QTY_EPS {
            j += 1;
            ask_left = asks.get(j).map_or(0.0, |o| o.quantity);
        }
    }

    let (Some(lb), Some(la)) = (last_bid, last_ask) else {
        return ClearingResult::default();
    };

    let lcb = bids[lb];
    let lca = asks[la];
    let cp = (lcb.price + lca.price) / 2.0;
    // Residual of the marginal order is whatever the loop left on it.
    let q_b = if i == lb { bid_left } else { 0.0 };
    let q_a = if j == la { ask_left } else { 0.0 };

    let trades: Vec<Trade> = fills
        .into_iter()
        .map(|(bi, ai, quantity)| Trade {
            bid_id: bids[bi].id,
            ask_id: asks[ai].id,
            quantity,
            price: cp,
        })
        .collect();
    let total_cleared = trades.iter().map(|t| t.quantity).sum();

    ClearingResult {
        clearing_price: Some(cp),
        trades,
        lcb: Some(lcb.id),
        lca: Some(lca.id),
        lcb_price: Some(lcb.price),
        lca_price: Some(lca.price),
        q_b,
        q_a,
        total_cleared,
    }
}

/// Clears `book ∪ {order}` without touching `book`.
pub fn insert_and_clear(book: &OrderBook, order: Order) -> ClearingResult {
    let mut what_if = book.clone();
    match what_if.insert(order.clone()) {
        Ok(()) => clear_acpr(&what_if),
        Err(_) => {
            // Id or seq collided with an existing order; re-key it as the newest submission.
            let fresh = what_if
                .prepare(order.owner, order.side, order.quantity, order.price)
                .expect("order was already validated");
            what_if.insert(fresh).expect("fresh keys never collide");
            clear_acpr(&what_if)
        }
    }
}

/// Single-unit ACPR clearing: several unit bids against one unit ask.
///
/// Returns the index of the executing bid and the clearing price. Equal bids
/// resolve to the lower index, matching seq-ordered submission. This is the
/// inner loop of the Monte-Carlo equilibrium checks and must agree with
/// [`clear_acpr`] on single-unit books.
#[inline]
pub fn clear_single_unit(bids: &[f64], ask: f64) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (k, &b) in bids.iter().enumerate() {
        if best.is_none_or(|(_, p)| b > p) {
            best = Some((k, b));
        }
    }
    match best {
        Some((k, b)) if b >= ask => Some((k, (b + ask) / 2.0)),
        _ => None,
    }
}

const TIE_TOLERANCE: f64 = 1e-9;

/// Lowest (Buy) or highest (Sell) grid price at which an order for `quantity`
/// executes in full against `others`.
///
/// Grid prices that coincide with a limit price already in the book are
/// skipped: an exact tie with the marginal order is decided by the tie-break
/// rule, so the response prices strictly through it. Among full-fill prices
/// this also minimises (Buy) or maximises (Sell) the resulting clearing price.
pub fn best_response_price(
    others: &OrderBook,
    side: Side,
    quantity: f64,
    tick: f64,
) -> Result<f64, AuctionError> {
    if !(quantity.is_finite() && quantity > 0.0) {
        return Err(AuctionError::InvalidQuantity(quantity));
    }
    if !(tick.is_finite() && tick > 0.0) {
        return Err(AuctionError::InvalidTick(tick));
    }
    let opposite: f64 = match side {
        Side::Buy => others.asks.iter().map(|o| o.quantity).sum(),
        Side::Sell => others.bids.iter().map(|o| o.quantity).sum(),
    };
    if opposite + QTY_EPS < quantity {
        return Err(AuctionError::Infeasible { quantity });
    }

    // Fill is monotone in price and only changes when crossing a book price,
    // so the answer sits on the first tie-free grid point past some book price.
    let mut levels: Vec<f64> = others.orders().map(|o| o.price).collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup();

    let mut candidates: Vec<f64> = Vec::with_capacity(levels.len());
    for &level in &levels {
        let k = match side {
            Side::Buy => (level / tick).floor() + 1.0,
            Side::Sell => (level / tick).ceil() - 1.0,
        };
        let mut p = k * tick;
        while is_tie(others, p, tick) {
            p = match side {
                Side::Buy => p + tick,
                Side::Sell => p - tick,
            };
        }
        candidates.push(p);
    }
    match side {
        Side::Buy => candidates.sort_by(f64::total_cmp),
        Side::Sell => candidates.sort_by(|a, b| b.total_cmp(a)),
    }

    for p in candidates {
        if fills_fully(others, side, quantity, p) {
            return Ok(p);
        }
    }
    Err(AuctionError::Infeasible { quantity })
}

pub(crate) fn is_tie(book: &OrderBook, price: f64, tick: f64) -> bool {
    book.orders()
        .any(|o| (o.price - price).abs() <= tick * TIE_TOLERANCE)
}

pub(crate) fn fills_fully(book: &OrderBook, side: Side, quantity: f64, price: f64) -> bool {
    let order = book
        .prepare(ParticipantId::MAX, side, quantity, price)
        .expect("validated inputs");
    let id = order.id;
    let result = insert_and_clear(book, order);
    result.filled(id) >= quantity - QTY_EPS
}
