//! CSV rendering of experiment reports with fixed headers and six
//! significant digits.

use std::fmt::Write as _;

use crate::equilibrium::{EquilibriumResult, Method, Setting, UniformBounds};
use crate::sim::{AuctionLog, BrokerRole, CostReport, ErrorTable, ScaleReport};

/// `%g`-style formatting with six significant digits.
pub fn fmt_g6(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (5 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt_g6).unwrap_or_default()
}

pub fn setting_name(s: Setting) -> &'static str {
    match s {
        Setting::Obos => "obos",
        Setting::Tbos => "tbos",
    }
}

pub fn role_name(r: BrokerRole) -> &'static str {
    match r {
        BrokerRole::Buyer => "buyer",
        BrokerRole::Seller => "seller",
    }
}

pub const EQUILIBRIUM_HEADER: &str = "setting,l_b,h_b,l_s,h_s,alpha_b,alpha_s,method,feasible,residual_b,residual_s";

pub fn equilibrium_csv(setting: Setting, bounds: &UniformBounds, r: &EquilibriumResult) -> String {
    let method = match r.method {
        Method::ClosedForm => "closed_form",
        Method::RootFind => "root_find",
    };
    format!(
        "{EQUILIBRIUM_HEADER}\n{},{},{},{},{},{},{},{},{},{},{}\n",
        setting_name(setting),
        fmt_g6(bounds.buyer_low),
        fmt_g6(bounds.buyer_high),
        fmt_g6(bounds.seller_low),
        fmt_g6(bounds.seller_high),
        fmt_g6(r.profile.buyer),
        fmt_g6(r.profile.seller),
        method,
        r.feasible,
        fmt_g6(r.residuals.0),
        fmt_g6(r.residuals.1),
    )
}

pub const SCALE_HEADER: &str = "batch,fixed_alpha,mean_scale,std_scale,n_cleared_bids";

pub fn scale_csv(reports: &[ScaleReport]) -> String {
    let mut out = format!("{SCALE_HEADER}\n");
    for r in reports {
        writeln!(
            out,
            "{},{},{},{},{}",
            role_name(r.batch),
            fmt_g6(r.fixed_alpha),
            fmt_g6(r.mean_scale),
            fmt_g6(r.std_scale),
            r.n_cleared_bids
        )
        .unwrap();
    }
    out
}

pub const COST_HEADER: &str = "fraction,game,seed,broker,strategy,net_cost,requirement,cost_bound";

pub fn cost_csv(report: &CostReport) -> String {
    let mut out = format!("{COST_HEADER}\n");
    for r in &report.rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            fmt_g6(r.fraction),
            r.game,
            r.seed,
            r.broker,
            r.strategy.as_str(),
            fmt_g6(r.net_cost),
            fmt_g6(r.requirement),
            fmt_g6(r.cost_bound)
        )
        .unwrap();
    }
    out
}

pub const ERROR_HEADER: &str = "state,weighted_error_pct,std_error_pct,mean_cleared,n,first_auction_share";

pub fn error_csv(table: &ErrorTable) -> String {
    let mut out = format!("{ERROR_HEADER}\n");
    for r in &table.rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.state,
            fmt_g6(r.weighted_error_pct),
            fmt_g6(r.std_error_pct),
            fmt_g6(r.mean_cleared),
            r.n,
            fmt_g6(table.first_auction_share)
        )
        .unwrap();
    }
    out
}

pub const AUCTION_LOG_HEADER: &str = "game,timeslot,delivery,state,cp,volume,lcb_price,lca_price";

pub fn auction_log_csv<'a>(games: impl IntoIterator<Item = &'a [AuctionLog]>) -> String {
    let mut out = format!("{AUCTION_LOG_HEADER}\n");
    for (g, logs) in games.into_iter().enumerate() {
        for l in logs {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                g,
                l.timeslot,
                l.delivery,
                l.state,
                opt(l.cp),
                fmt_g6(l.volume),
                opt(l.lcb_price),
                opt(l.lca_price)
            )
            .unwrap();
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn g6_formatting() {
        assert_eq!(fmt_g6(2.0 / 3.0), "0.666667");
        assert_eq!(fmt_g6(1.0), "1");
        assert_eq!(fmt_g6(1.040_569_415), "1.04057");
        assert_eq!(fmt_g6(0.891386), "0.891386");
        assert_eq!(fmt_g6(6_555_391.0), "6.55539e+06");
        assert_eq!(fmt_g6(123_456.4), "123456");
        assert_eq!(fmt_g6(999_999.7), "1e+06");
        assert_eq!(fmt_g6(0.0001), "0.0001");
        assert_eq!(fmt_g6(0.000_012_345_67), "1.23457e-05");
        assert_eq!(fmt_g6(-45.5), "-45.5");
        assert_eq!(fmt_g6(0.0), "0");
        assert_eq!(fmt_g6(f64::NAN), "nan");
        assert_eq!(fmt_g6(100.0), "100");
    }
}
