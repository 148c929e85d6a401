//! `pda`: equilibrium queries and the three experiment families.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use pda_core::equilibrium::{
    feasibility_check, obos_closed_form, obos_reaction_residuals, tbos_general_solve, tbos_unit_closed_form,
    EquilibriumError, EquilibriumResult, Method, ScaleProfile, Setting, UniformBounds,
};
use pda_core::report::{
    auction_log_csv, cost_csv, equilibrium_csv, error_csv, fmt_g6, scale_csv, setting_name,
};
use pda_core::sim::{
    benchmark, error_table, lcp_error_report, obos_sweep, ConfigError, ErrorRecord, GameResult, SimConfig,
    BENCHMARK_FRACTIONS, FIRST_ACTIVE_SLOT,
};
use serde::{Deserialize, Serialize};

#[derive(Parser)]
#[command(name = "pda", version, about = "Periodic double auction laboratory")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// TOML simulation config; defaults apply to missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory for CSV reports and the run manifest.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Also write a JSON mirror of every CSV.
    #[arg(long, global = true)]
    json: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum SettingArg {
    Obos,
    Tbos,
}

#[derive(Subcommand)]
enum Command {
    /// Equilibrium scale factors for uniform type bounds.
    Equilibrium {
        #[arg(long, value_enum)]
        setting: SettingArg,
        /// Type bounds as l_b,h_b,l_s,h_s.
        #[arg(long, value_parser = parse_bounds)]
        bounds: [f64; 4],
        /// Root-finder starting point as alpha_b,alpha_s.
        #[arg(long, value_parser = parse_pair, default_value = "0.75,1.0")]
        init: [f64; 2],
    },
    /// Scale measurement of an adaptive agent against a fixed-scale one.
    ObosValidate {
        #[arg(long, default_value_t = 30)]
        games: usize,
    },
    /// Net cost of every configured broker across demand fractions.
    Benchmark {
        #[arg(long, default_value_t = 10)]
        games: usize,
        /// Comma-separated demand fractions.
        #[arg(long, value_delimiter = ',', default_values_t = BENCHMARK_FRACTIONS.to_vec())]
        fractions: Vec<f64>,
    },
    /// Weighted relative error of LCP estimates per state.
    LcpError {
        #[arg(long, default_value_t = 10)]
        games: usize,
        /// Estimate log CSV with state, estimate, truth and volume columns.
        #[arg(long)]
        from_log: Option<PathBuf>,
        /// Auction log CSV used for the first-auction share with --from-log.
        #[arg(long, requires = "from_log")]
        auctions: Option<PathBuf>,
    },
}

fn parse_floats<const N: usize>(s: &str) -> Result<[f64; N], String> {
    let xs: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}")))
        .collect::<Result<_, _>>()?;
    xs.try_into().map_err(|_| format!("expected {N} comma-separated numbers"))
}

fn parse_bounds(s: &str) -> Result<[f64; 4], String> {
    parse_floats(s)
}

fn parse_pair(s: &str) -> Result<[f64; 2], String> {
    parse_floats(s)
}

enum Failure {
    Usage(String),
    Numerical(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<EquilibriumError> for Failure {
    fn from(e: EquilibriumError) -> Self {
        match e {
            EquilibriumError::NoConvergence { .. } => Failure::Numerical(e.to_string()),
            other => Failure::Usage(other.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

#[derive(Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    config: Option<String>,
    seed: u64,
    out_dir: String,
    version: &'static str,
    timestamp: u64,
}

struct Output<'a> {
    dir: Option<&'a Path>,
    json: bool,
}

impl Output<'_> {
    fn write<T: Serialize + ?Sized>(&self, stem: &str, csv: &str, data: &T) -> Result<(), Failure> {
        let Some(dir) = self.dir else {
            print!("{csv}");
            return Ok(());
        };
        fs::write(dir.join(format!("{stem}.csv")), csv)?;
        if self.json {
            let text = serde_json::to_string_pretty(data).map_err(|e| Failure::Usage(e.to_string()))?;
            fs::write(dir.join(format!("{stem}.json")), text + "\n")?;
        }
        Ok(())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = std::env::var("PDA_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("warning: PDA_THREADS ignored: {e}");
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}

fn load_config(g: &Global) -> Result<SimConfig, Failure> {
    let mut cfg = match &g.config {
        Some(path) => SimConfig::from_path(path)?,
        None => SimConfig::default(),
    };
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Equilibrium { .. } => "equilibrium",
        Command::ObosValidate { .. } => "obos-validate",
        Command::Benchmark { .. } => "benchmark",
        Command::LcpError { .. } => "lcp-error",
    }
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let g = &cli.global;
    let name = command_name(&cli.command);
    let cfg = load_config(g)?;
    let default_out = PathBuf::from("results").join(name);
    let dir = match (&cli.command, &g.out) {
        (_, Some(d)) => Some(d.clone()),
        (Command::Equilibrium { .. }, None) => None,
        (_, None) => Some(default_out),
    };
    if let Some(d) = &dir {
        fs::create_dir_all(d)?;
    }
    let out = Output {
        dir: dir.as_deref(),
        json: g.json,
    };

    match &cli.command {
        Command::Equilibrium { setting, bounds, init } => cmd_equilibrium(&out, *setting, bounds, init)?,
        Command::ObosValidate { games } => {
            let reports = obos_sweep(&cfg, *games)?;
            out.write("obos_validate", &scale_csv(&reports), &reports)?;
        }
        Command::Benchmark { games, fractions } => {
            let (report, results) = benchmark(&cfg, fractions, *games)?;
            out.write("benchmark", &cost_csv(&report), &report.rows)?;
            write_auctions(&out, &results)?;
        }
        Command::LcpError {
            games,
            from_log,
            auctions,
        } => match from_log {
            Some(path) => {
                let records = read_estimates(path)?;
                let volumes = match auctions {
                    Some(a) => read_auction_volumes(a)?,
                    None => Vec::new(),
                };
                let table = error_table(&records, volumes);
                out.write("lcp_error", &error_csv(&table), &table)?;
            }
            None => {
                let (_, results) = benchmark(&cfg, &[cfg.demand_fraction], *games)?;
                let table = lcp_error_report(&results);
                out.write("lcp_error", &error_csv(&table), &table)?;
                write_estimates(&out, &results)?;
                write_auctions(&out, &results)?;
            }
        },
    }

    if let Some(d) = &dir {
        let manifest = RunManifest {
            command: name,
            config: g.config.as_ref().map(|p| p.display().to_string()),
            seed: cfg.seed,
            out_dir: d.display().to_string(),
            version: env!("CARGO_PKG_VERSION"),
            timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |t| t.as_secs()),
        };
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| Failure::Usage(e.to_string()))?;
        fs::write(d.join("manifest.json"), text + "\n")?;
    }
    Ok(())
}

fn cmd_equilibrium(out: &Output, setting: SettingArg, b: &[f64; 4], init: &[f64; 2]) -> Result<(), Failure> {
    let bounds = UniformBounds::new(b[0], b[1], b[2], b[3])?;
    let (setting, result) = match setting {
        SettingArg::Obos => {
            let profile = obos_closed_form(&bounds)?;
            let result = EquilibriumResult {
                profile,
                feasible: feasibility_check(&bounds, &profile, Setting::Obos),
                method: Method::ClosedForm,
                iterations: 0,
                residuals: obos_reaction_residuals(&bounds, &profile),
            };
            (Setting::Obos, result)
        }
        SettingArg::Tbos if bounds == UniformBounds::unit() => {
            let profile = tbos_unit_closed_form();
            let result = EquilibriumResult {
                profile,
                feasible: feasibility_check(&bounds, &profile, Setting::Tbos),
                method: Method::ClosedForm,
                iterations: 0,
                residuals: pda_core::equilibrium::tbos_foc_residuals(&bounds, &profile),
            };
            (Setting::Tbos, result)
        }
        SettingArg::Tbos => {
            let start = ScaleProfile::new(init[0], init[1])?;
            (Setting::Tbos, tbos_general_solve(&bounds, start)?)
        }
    };
    let csv = equilibrium_csv(setting, &bounds, &result);
    let method = match result.method {
        Method::ClosedForm => "closed_form",
        Method::RootFind => "root_find",
    };
    println!("setting   {}", setting_name(setting));
    println!("alpha_b   {:.6}", result.profile.buyer);
    println!("alpha_s   {:.6}", result.profile.seller);
    println!("method    {method} ({} iterations)", result.iterations);
    println!("residuals {:.3e} {:.3e}", result.residuals.0, result.residuals.1);
    println!("feasible  {}", result.feasible);
    if out.dir.is_some() {
        out.write("equilibrium", &csv, &result)?;
    }
    Ok(())
}

fn write_auctions(out: &Output, results: &[GameResult]) -> Result<(), Failure> {
    let logs: Vec<_> = results.iter().map(|r| r.auctions.as_slice()).collect();
    out.write("auctions", &auction_log_csv(logs.iter().copied()), &logs)
}

const ESTIMATE_HEADER: &str = "game,broker,delivery,state,side,estimate,truth,volume";

fn write_estimates(out: &Output, results: &[GameResult]) -> Result<(), Failure> {
    let mut csv = format!("{ESTIMATE_HEADER}\n");
    for (g, r) in results.iter().enumerate() {
        for e in r.estimates.iter().filter(|e| e.delivery >= FIRST_ACTIVE_SLOT) {
            csv.push_str(&format!(
                "{g},{},{},{},{},{},{},{}\n",
                e.broker,
                e.delivery,
                e.state,
                match e.side {
                    pda_core::auction::Side::Buy => "buy",
                    pda_core::auction::Side::Sell => "sell",
                },
                fmt_g6(e.estimate),
                fmt_g6(e.truth),
                fmt_g6(e.volume)
            ));
        }
    }
    let all: Vec<_> = results.iter().map(|r| &r.estimates).collect();
    out.write("estimates", &csv, &all)
}

fn read_estimates(path: &Path) -> Result<Vec<ErrorRecord>, Failure> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    reader
        .deserialize::<ErrorRecord>()
        .map(|r| r.map_err(|e| Failure::Usage(format!("{}: {e}", path.display()))))
        .collect()
}

#[derive(Deserialize)]
struct AuctionVolume {
    delivery: usize,
    state: usize,
    volume: f64,
}

fn read_auction_volumes(path: &Path) -> Result<Vec<(usize, f64)>, Failure> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    let rows: Vec<AuctionVolume> = reader
        .deserialize()
        .collect::<Result<_, _>>()
        .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    Ok(rows
        .into_iter()
        .filter(|a| a.delivery >= FIRST_ACTIVE_SLOT)
        .map(|a| (a.state, a.volume))
        .collect())
}
