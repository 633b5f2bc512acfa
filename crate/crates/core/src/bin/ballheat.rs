use std::path::PathBuf;
use std::process::ExitCode;

use ballheat::campaign::{self, Campaign};
use ballheat::config::{ConfigError, RunConfig};
use clap::{Parser, Subcommand};

/// Verification campaigns for the heat semigroup on the weighted unit ball.
///
/// Exit status: 0 when every check passes, 1 on a numerical failure,
/// 2 on a usage or configuration error.
#[derive(Debug, Parser)]
#[command(name = "ballheat", version)]
struct Cli {
    /// `key = value` configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory for CSV tables and summaries.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Master seed; campaign seeds are derived from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    d: Option<usize>,
    #[arg(long, global = true)]
    mu: Option<f64>,
    /// Kernel truncation degree.
    #[arg(long, global = true)]
    nmax: Option<usize>,
    /// Override any configuration key, e.g. `--set gaussian.pairs=200`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Gram matrix, basis growth envelope, Stirling inequalities.
    Basis,
    /// Eigen-action, kernel mass and semigroup property.
    Kernel,
    /// Two-sided Gaussian envelope scan.
    Gaussian,
    /// Dirichlet form, hemisphere transfer, Poincare scans.
    Poincare,
    /// Intrinsic distance test functions.
    Intrinsic,
    /// Maximal operator ratios and Hardy-Littlewood comparison.
    Maximal,
    /// A_p estimates, product weights, containment, Ciaurri, mixed norms.
    Weights,
    /// Every campaign in turn.
    All,
    /// Print the resolved configuration.
    Config,
}

fn resolve(cli: &Cli) -> Result<RunConfig, String> {
    let mut cfg = match &cli.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
            RunConfig::parse(&text).map_err(|e| format!("{}: {e}", p.display()))?
        }
        None => RunConfig::default(),
    };
    let flag = |e: ConfigError| e.to_string();
    if let Some(v) = &cli.out {
        cfg.set("run.out", &v.to_string_lossy()).map_err(flag)?;
    }
    if let Some(v) = cli.seed {
        cfg.set("run.seed", &v.to_string()).map_err(flag)?;
    }
    if let Some(v) = cli.d {
        cfg.set("model.d", &v.to_string()).map_err(flag)?;
    }
    if let Some(v) = cli.mu {
        cfg.set("model.mu", &v.to_string()).map_err(flag)?;
    }
    if let Some(v) = cli.nmax {
        cfg.set("truncation.n_max", &v.to_string()).map_err(flag)?;
    }
    for kv in &cli.set {
        let (k, v) = kv.split_once('=').ok_or_else(|| format!("--set expects KEY=VALUE, got `{kv}`"))?;
        cfg.set(k.trim(), v.trim()).map_err(flag)?;
    }
    campaign::validate(&cfg).map_err(|e| e.to_string())?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match resolve(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let list: Vec<Campaign> = match cli.cmd {
        Cmd::Basis => vec![Campaign::Basis],
        Cmd::Kernel => vec![Campaign::Kernel],
        Cmd::Gaussian => vec![Campaign::Gaussian],
        Cmd::Poincare => vec![Campaign::Poincare],
        Cmd::Intrinsic => vec![Campaign::Intrinsic],
        Cmd::Maximal => vec![Campaign::Maximal],
        Cmd::Weights => vec![Campaign::Weights],
        Cmd::All => Campaign::ALL.to_vec(),
        Cmd::Config => {
            print!("{}", cfg.render());
            return ExitCode::SUCCESS;
        }
    };
    let mut code = 0u8;
    for c in list {
        let rep = match campaign::run_and_write(c, &cfg) {
            Ok(r) => r,
            Err(e) => {
                eprintln!("error: cannot write to {}: {e}", cfg.out_dir().display());
                return ExitCode::from(2);
            }
        };
        println!("{} {}", c, if rep.passed() { "pass" } else { "fail" });
        for k in rep.checks.iter().filter(|k| !k.passed) {
            eprintln!("failure {c}.{} value={:e} limit={:e}", k.name, k.value, k.limit);
        }
        if let Some(e) = &rep.error {
            eprintln!("failure {c}.error {e}");
        }
        code = code.max(rep.exit_code() as u8);
    }
    ExitCode::from(code)
}
