use pda_core::sim::{run_game, SimConfig, FIRST_ACTIVE_SLOT};
use proptest::prelude::*;

fn short(seed: u64, fraction: f64) -> SimConfig {
    SimConfig {
        horizon: 56,
        seed,
        demand_fraction: fraction,
        ..SimConfig::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn accounting_identities(seed in 0u64..10_000, fraction in 0.1f64..1.0) {
        let cfg = short(seed, fraction);
        let g = run_game(&cfg).unwrap();
        prop_assert_eq!(g.brokers.len(), cfg.brokers.len());
        for b in &g.brokers {
            prop_assert!(b.net_cost.is_finite());
            let identity = b.wholesale_cost + b.balancing_charges - b.sales_revenue;
            prop_assert!((b.net_cost - identity).abs() <= 1e-9 * identity.abs().max(1.0));
            prop_assert!(b.net_cost <= b.requirement_cost_bound + 1e-6);
            let req: f64 = b.slots.iter().map(|s| s.demand.abs()).sum();
            prop_assert!((req - b.requirement).abs() <= 1e-9 * req.max(1.0));
            let charges: f64 = b.slots.iter().map(|s| s.charge).sum();
            prop_assert!((charges - b.balancing_charges).abs() <= 1e-6 * charges.max(1.0));
            for s in &b.slots {
                if s.delivery < FIRST_ACTIVE_SLOT {
                    prop_assert_eq!(s.demand, 0.0);
                }
                prop_assert!((s.imbalance - (s.position - s.demand)).abs() < 1e-9);
                prop_assert!((s.charge - s.imbalance.abs() * s.balancing_price).abs() < 1e-9 * s.charge.max(1.0));
            }
        }
        for a in &g.auctions {
            prop_assert!((1..=24).contains(&a.state));
            prop_assert_eq!(a.delivery, a.timeslot + a.state);
            if let Some(cp) = a.cp {
                prop_assert!(a.lcb_price.unwrap() >= cp && cp >= a.lca_price.unwrap());
                prop_assert!(a.volume > 0.0);
            } else {
                prop_assert_eq!(a.volume, 0.0);
            }
        }
    }

    #[test]
    fn reruns_are_identical(seed in 0u64..10_000) {
        let cfg = short(seed, 0.5);
        prop_assert_eq!(run_game(&cfg).unwrap(), run_game(&cfg).unwrap());
    }
}

#[test]
fn toml_config_round_trip() {
    let text = r#"
        horizon = 40
        seed = 9
        demand_fraction = 0.5
        balancing_price = "dynamic"

        [genco]
        capacity = 3000.0

        [[brokers]]
        name = "a"
        strategy = "mdplcpbs"

        [[brokers]]
        name = "b"
        strategy = "zip"
    "#;
    let cfg = SimConfig::from_toml_str(text).unwrap();
    assert_eq!(cfg.horizon, 40);
    assert_eq!(cfg.brokers.len(), 2);
    let g = run_game(&cfg).unwrap();
    assert_eq!(g.brokers[0].name, "a");
    assert!(g.brokers.iter().all(|b| b.net_cost.is_finite()));
}

#[test]
fn unknown_keys_are_rejected() {
    assert!(SimConfig::from_toml_str("horizon = 40\nwat = 1\n").is_err());
}

#[test]
fn shipped_config_matches_defaults() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/desk.toml");
    let cfg = SimConfig::from_path(std::path::Path::new(path)).unwrap();
    assert_eq!(cfg, SimConfig::default());
}
