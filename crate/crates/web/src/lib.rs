//! Browser bindings: order-book clearing, best-response utility curves and
//! MDP value tables, each returning a JSON string.

use pda_core::auction::{clear_acpr, OrderBook, Side};
use pda_core::equilibrium::{
    best_response_scale, obos_closed_form, tbos_general_solve, tbos_unit_closed_form, Role, ScaleGrid, ScaleProfile,
    Setting, UniformBounds,
};
use pda_core::mdp::{value_table, MarketStats, MdpParams, N_STATES};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use wasm_bindgen::prelude::*;

#[derive(Deserialize)]
struct OrderInput {
    side: Side,
    price: f64,
    quantity: f64,
}

#[derive(Serialize)]
struct OrderRow {
    side: Side,
    price: f64,
    quantity: f64,
    filled: f64,
    marginal: bool,
}

#[derive(Serialize)]
struct BookOutput {
    clearing_price: Option<f64>,
    lcb_price: Option<f64>,
    lca_price: Option<f64>,
    q_b: f64,
    q_a: f64,
    total_cleared: f64,
    orders: Vec<OrderRow>,
}

fn error_json(msg: impl std::fmt::Display) -> String {
    serde_json::json!({ "error": msg.to_string() }).to_string()
}

fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string(value).unwrap_or_else(error_json)
}

/// Clears `[{side: "buy"|"sell", price, quantity}, ...]` in submission order.
#[wasm_bindgen]
pub fn clear_book(orders_json: &str) -> String {
    let inputs: Vec<OrderInput> = match serde_json::from_str(orders_json) {
        Ok(v) => v,
        Err(e) => return error_json(e),
    };
    let mut book = OrderBook::new();
    let mut ids = Vec::with_capacity(inputs.len());
    for o in &inputs {
        match book.submit(0, o.side, o.quantity, o.price) {
            Ok(id) => ids.push(id),
            Err(e) => return error_json(e),
        }
    }
    let r = clear_acpr(&book);
    let orders = inputs
        .iter()
        .zip(&ids)
        .map(|(o, &id)| OrderRow {
            side: o.side,
            price: o.price,
            quantity: o.quantity,
            filled: r.filled(id),
            marginal: r.lcb == Some(id) || r.lca == Some(id),
        })
        .collect();
    to_json(&BookOutput {
        clearing_price: r.clearing_price,
        lcb_price: r.lcb_price,
        lca_price: r.lca_price,
        q_b: r.q_b,
        q_a: r.q_a,
        total_cleared: r.total_cleared,
        orders,
    })
}

#[derive(Serialize)]
struct CurveOutput {
    equilibrium: ScaleProfile,
    best_alpha: f64,
    curve: Vec<(f64, f64)>,
}

/// Monte-Carlo expected utility of one `role` over a grid of scale factors,
/// with the opponents at the equilibrium for the given bounds.
#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn utility_curve(
    setting: &str,
    role: &str,
    buyer_low: f64,
    buyer_high: f64,
    seller_low: f64,
    seller_high: f64,
    n_samples: u32,
    seed: u32,
) -> String {
    let run = || -> Result<CurveOutput, String> {
        let bounds =
            UniformBounds::new(buyer_low, buyer_high, seller_low, seller_high).map_err(|e| e.to_string())?;
        let setting = match setting {
            "obos" => Setting::Obos,
            "tbos" => Setting::Tbos,
            other => return Err(format!("unknown setting {other:?}")),
        };
        let role = match role {
            "buyer" => Role::Buyer,
            "seller" => Role::Seller,
            other => return Err(format!("unknown role {other:?}")),
        };
        let eq = match setting {
            Setting::Obos => obos_closed_form(&bounds).map_err(|e| e.to_string())?,
            Setting::Tbos if bounds == UniformBounds::unit() => tbos_unit_closed_form(),
            Setting::Tbos => {
                tbos_general_solve(&bounds, tbos_unit_closed_form())
                    .map_err(|e| e.to_string())?
                    .profile
            }
        };
        let grid = ScaleGrid {
            lo: 0.05,
            hi: 2.0,
            step: 0.025,
        };
        let br = best_response_scale(&bounds, &eq, role, setting, &grid, n_samples.max(1) as usize, seed as u64)
            .map_err(|e| e.to_string())?;
        Ok(CurveOutput {
            equilibrium: eq,
            best_alpha: br.alpha,
            curve: br.curve,
        })
    };
    match run() {
        Ok(out) => to_json(&out),
        Err(e) => error_json(e),
    }
}

#[derive(Serialize)]
struct TableOutput {
    balancing_price: f64,
    value: Vec<f64>,
    limit_price: Vec<f64>,
}

/// Buy-side value table from synthetic LCP histories: state `s` draws
/// `lcp_mean + drift * (s - 12) / 12` plus uniform noise of half-width `spread`.
#[wasm_bindgen]
pub fn mdp_table(lcp_mean: f64, drift: f64, spread: f64, balancing_price: f64, seed: u32) -> String {
    if !(lcp_mean.is_finite() && drift.is_finite() && spread.is_finite() && spread >= 0.0 && balancing_price > 0.0) {
        return error_json("parameters must be finite, spread non-negative and balancing price positive");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed as u64);
    let mut stats = MarketStats::new(Side::Buy, 1);
    for s in 1..=N_STATES {
        let centre = lcp_mean + drift * (s as f64 - 12.0) / 12.0;
        for _ in 0..60 {
            let lcp = centre + spread * (2.0 * rng.random::<f64>() - 1.0);
            let volume = 1.0 + 9.0 * rng.random::<f64>();
            if let Err(e) = stats.record(s, lcp, volume) {
                return error_json(e);
            }
        }
    }
    match value_table(&stats, balancing_price, &MdpParams::default()) {
        Some(t) => to_json(&TableOutput {
            balancing_price,
            value: t.v,
            limit_price: t.limit_price,
        }),
        None => error_json("no value table"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    #[test]
    fn clears_a_crossing_book() {
        let out: Value = serde_json::from_str(&clear_book(
            r#"[{"side":"buy","price":10,"quantity":2},{"side":"sell","price":6,"quantity":1},{"side":"sell","price":8,"quantity":3}]"#,
        ))
        .unwrap();
        assert_eq!(out["clearing_price"], 9.0);
        assert_eq!(out["total_cleared"], 2.0);
        assert_eq!(out["q_a"], 2.0);
        assert_eq!(out["orders"][2]["marginal"], true);
    }

    #[test]
    fn reports_bad_input() {
        let out: Value = serde_json::from_str(&clear_book("[{\"side\":\"buy\",\"price\":1,\"quantity\":0}]")).unwrap();
        assert!(out["error"].is_string());
        let out: Value = serde_json::from_str(&utility_curve("obos", "buyer", 1.0, 1.0, 0.0, 1.0, 10, 1)).unwrap();
        assert!(out["error"].is_string());
    }

    #[test]
    fn utility_curve_peaks_near_equilibrium() {
        let out: Value = serde_json::from_str(&utility_curve("obos", "buyer", 0.0, 1.0, 0.0, 1.0, 50_000, 3)).unwrap();
        let best = out["best_alpha"].as_f64().unwrap();
        assert!((best - 2.0 / 3.0).abs() < 0.1, "{best}");
        assert_eq!(out["curve"].as_array().unwrap().len(), 79);
    }

    #[test]
    fn value_table_is_monotone() {
        let out: Value = serde_json::from_str(&mdp_table(50.0, 5.0, 8.0, 90.0, 1)).unwrap();
        let v: Vec<f64> = out["value"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
        assert_eq!(v.len(), N_STATES + 1);
        assert_eq!(v[0], 90.0);
        assert!(v.windows(2).all(|w| w[1] <= w[0] + 1e-9));
    }
}
