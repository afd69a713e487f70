use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gci_ukf::filter::FilterKind;
use gci_ukf::harness::{emit_report, run_with, ExperimentConfig, RunOptions};
use gci_ukf::Error;

const EXIT_RUNTIME: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_DIVERGENCE: u8 = 3;

#[derive(Parser)]
#[command(name = "gci-bench", version, about = "Monte-Carlo benchmarks for robust unscented filters")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write reports.
    Run {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trials: Option<usize>,
        /// Output directory (default: the config's `output`, else `./out`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated filter names to keep.
        #[arg(long, value_delimiter = ',')]
        filters: Option<Vec<String>>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Print the filter kinds a config may use.
    ListFilters,
    /// Parse and check a config, including any network file.
    ValidateConfig { config: PathBuf },
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(if e.is_config_error() { EXIT_CONFIG } else { EXIT_RUNTIME })
}

fn main() -> ExitCode {
    match Cli::parse().command {
        Command::ListFilters => {
            for k in FilterKind::ALL {
                let kernel = if k.is_robust() { "kernel required" } else { "no kernel" };
                println!("{:<18} {:<16} {}", k.name(), kernel, k.description());
            }
            ExitCode::SUCCESS
        }
        Command::ValidateConfig { config } => match ExperimentConfig::load(&config).and_then(|c| c.validate()) {
            Ok(()) => {
                println!("{}: ok", config.display());
                ExitCode::SUCCESS
            }
            Err(e) => fail(&e),
        },
        Command::Run { config, seed, trials, out, filters, workers } => {
            let mut cfg = match ExperimentConfig::load(&config) {
                Ok(c) => c,
                Err(e) => return fail(&e),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(t) = trials {
                cfg.trials = t;
            }
            if let Some(keep) = filters {
                if let Some(missing) = keep.iter().find(|n| !cfg.filters.iter().any(|f| &f.name == *n)) {
                    return fail(&Error::Config(format!("no filter named {missing:?} in {}", config.display())));
                }
                cfg.filters.retain(|f| keep.contains(&f.name));
            }
            let out = out.or_else(|| cfg.output.clone()).unwrap_or_else(|| PathBuf::from("out"));
            let result = match run_with(&cfg, RunOptions { workers }) {
                Ok(r) => r,
                Err(e) => return fail(&e),
            };
            if let Err(e) = emit_report(&result, &out) {
                return fail(&e);
            }
            for r in &result.reports {
                let armse: Vec<String> = r.groups.iter().map(|g| format!("{}={:.4}", g.group, g.armse)).collect();
                println!("{:<16} {}  divergence={:.4}", r.name, armse.join(" "), r.divergence_rate);
            }
            println!("reports written to {}", out.display());
            let breaches = result.divergence_breaches();
            if breaches.is_empty() {
                ExitCode::SUCCESS
            } else {
                eprintln!(
                    "divergence rate above {} for: {}",
                    cfg.divergence_threshold,
                    breaches.join(", ")
                );
                ExitCode::from(EXIT_DIVERGENCE)
            }
        }
    }
}
