use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn pda(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pda"))
        .args(args)
        .env("PDA_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn small_config(dir: &Path) -> String {
    let path = dir.join("small.toml");
    fs::write(&path, "horizon = 52\nseed = 3\n").unwrap();
    path.display().to_string()
}

#[test]
fn equilibrium_examples() {
    let o = pda(&["equilibrium", "--setting", "obos", "--bounds", "0,1,0,1"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("alpha_b   0.666667"));
    assert!(stdout(&o).contains("alpha_s   1.000000"));

    let o = pda(&["equilibrium", "--setting", "obos", "--bounds", "40,80,40,80"]);
    assert!(stdout(&o).contains("0.891386") && stdout(&o).contains("1.048689"));

    let o = pda(&["equilibrium", "--setting", "tbos", "--bounds", "0,1,0,1"]);
    assert!(stdout(&o).contains("0.750000") && stdout(&o).contains("1.040569"));

    let o = pda(&["equilibrium", "--setting", "tbos", "--bounds", "0,1,0.1,1.1"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("root_find"));
    assert!(stdout(&o).contains("0.788123"));
}

#[test]
fn exit_codes() {
    let degenerate = pda(&["equilibrium", "--setting", "obos", "--bounds", "1,1,0,1"]);
    assert_eq!(degenerate.status.code(), Some(2));
    let unparsable = pda(&["equilibrium", "--setting", "obos", "--bounds", "0,1,0"]);
    assert_eq!(unparsable.status.code(), Some(2));
    let stalled = pda(&["equilibrium", "--setting", "tbos", "--bounds", "0,1,0.1,1.1", "--init", "0.5,0.5"]);
    assert_eq!(stalled.status.code(), Some(3));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "horizon = 10\n").unwrap();
    let out = dir.path().join("out");
    let o = pda(&["benchmark", "--config", bad.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let missing = pda(&["benchmark", "--config", "/nonexistent.toml"]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn equilibrium_csv_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("eq");
    let o = pda(&[
        "equilibrium", "--setting", "obos", "--bounds", "0,1,0,1", "--out", out.to_str().unwrap(), "--json",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let csv = fs::read_to_string(out.join("equilibrium.csv")).unwrap();
    assert_eq!(
        csv,
        "setting,l_b,h_b,l_s,h_s,alpha_b,alpha_s,method,feasible,residual_b,residual_s\n\
         obos,0,1,0,1,0.666667,1,closed_form,true,0,0\n"
    );
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("equilibrium.json")).unwrap()).unwrap();
    assert!((json["profile"]["buyer"].as_f64().unwrap() - 2.0 / 3.0).abs() < 1e-12);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "equilibrium");
    assert!(manifest["timestamp"].as_u64().is_some());
}

#[test]
fn benchmark_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let run = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        let o = pda(&[
            "benchmark", "--config", &cfg, "--seed", seed, "--games", "2", "--fractions", "0.5,1", "--out",
            out.to_str().unwrap(), "--json",
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        (
            fs::read(out.join("benchmark.csv")).unwrap(),
            fs::read(out.join("auctions.csv")).unwrap(),
            out,
        )
    };
    let (a, la, out) = run("a", "5");
    let (b, lb, _) = run("b", "5");
    let (c, _, _) = run("c", "6");
    assert_eq!(a, b);
    assert_eq!(la, lb);
    assert_ne!(a, c);

    let text = String::from_utf8(a).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "fraction,game,seed,broker,strategy,net_cost,requirement,cost_bound");
    assert_eq!(lines.count(), 2 * 2 * 4);
    assert!(String::from_utf8(la)
        .unwrap()
        .starts_with("game,timeslot,delivery,state,cp,volume,lcb_price,lca_price\n"));
    assert!(out.join("benchmark.json").exists());
    let manifests = fs::read_dir(&out)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().starts_with("manifest"))
        .count();
    assert_eq!(manifests, 1);
}

#[test]
fn obos_validate_writes_ten_rows() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("obos");
    let o = pda(&["obos-validate", "--config", &cfg, "--games", "1", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("obos_validate.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "batch,fixed_alpha,mean_scale,std_scale,n_cleared_bids");
    assert_eq!(lines.len(), 11);
    assert!(lines[1].starts_with("buyer,"));
    assert!(lines[6].starts_with("seller,"));
}

#[test]
fn lcp_error_from_fixture_logs() {
    let dir = tempfile::tempdir().unwrap();
    let zero = dir.path().join("zero.csv");
    fs::write(&zero, "state,estimate,truth,volume\n24,50,50,3\n23,40,40,1\n22,45,45,2\n").unwrap();
    let out = dir.path().join("zero_out");
    let o = pda(&["lcp-error", "--from-log", zero.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("lcp_error.csv")).unwrap();
    assert!(csv.starts_with("state,weighted_error_pct,std_error_pct,mean_cleared,n,first_auction_share\n"));
    assert!(csv.contains("\n24,0,0,3,1,"));
    assert!(csv.contains("\n23,0,0,1,1,"));

    let single = dir.path().join("single.csv");
    fs::write(&single, "state,estimate,truth,volume\n24,110,100,5\n").unwrap();
    let auctions = dir.path().join("auctions.csv");
    fs::write(
        &auctions,
        "game,timeslot,delivery,state,cp,volume,lcb_price,lca_price\n0,1,25,24,50,30,51,49\n0,5,25,20,50,10,51,49\n",
    )
    .unwrap();
    let out = dir.path().join("single_out");
    let o = pda(&[
        "lcp-error", "--from-log", single.to_str().unwrap(), "--auctions", auctions.to_str().unwrap(), "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let csv = fs::read_to_string(out.join("lcp_error.csv")).unwrap();
    assert!(csv.contains("\n24,10,0,5,1,0.75\n"), "{csv}");
}

#[test]
fn lcp_error_simulated_run_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let run = |name: &str| {
        let out = dir.path().join(name);
        let o = pda(&["lcp-error", "--config", &cfg, "--games", "2", "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        (
            fs::read(out.join("lcp_error.csv")).unwrap(),
            fs::read(out.join("estimates.csv")).unwrap(),
            out,
        )
    };
    let (a, ea, out) = run("a");
    let (b, eb, _) = run("b");
    assert_eq!(a, b);
    assert_eq!(ea, eb);

    // The estimate log it writes can be fed back in.
    let again = dir.path().join("again");
    let o = pda(&[
        "lcp-error", "--from-log", out.join("estimates.csv").to_str().unwrap(), "--auctions",
        out.join("auctions.csv").to_str().unwrap(), "--out", again.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(fs::read_to_string(again.join("lcp_error.csv")).unwrap().lines().count() == 6);
}
