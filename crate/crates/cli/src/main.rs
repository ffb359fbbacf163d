//! `sgp`: batch runs of the pressure, dimension and Lyapunov estimators.
//!
//! Exit status: 0 success, 1 failed acceptance criteria, 2 configuration
//! errors, 3 diagnostics (outputs still written), 4 numerical aborts.

mod commands;
mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::Parser;
use serde_json::json;

use commands::{Command, Failure, Outcome};
use config::ExperimentConfig;

#[derive(Parser, Debug)]
#[command(name = "sgp", version, about = "Pressure, entropy and dimension estimates for free semigroup actions")]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// JSON experiment configuration (optional for `acceptance`).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for the manifest, CSVs and summary.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads; `RAYON_NUM_THREADS` is used when absent.
    #[arg(long)]
    threads: Option<usize>,
    /// Overrides the seed in the configuration.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    verbose: bool,
}

const EXIT_FAILED: u8 = 1;
const EXIT_SCHEMA: u8 = 2;
const EXIT_DIAGNOSTIC: u8 = 3;
const EXIT_NUMERICAL: u8 = 4;

fn write(dir: &Path, name: &str, bytes: &[u8]) -> std::io::Result<()> {
    std::fs::write(dir.join(name), bytes)
}

fn manifest(cli: &Cli, cfg: Option<&ExperimentConfig>) -> serde_json::Value {
    json!({
        "command": format!("{:?}", cli.command),
        "versions": { "sgp": env!("CARGO_PKG_VERSION"), "sgp_core": sgp_core::VERSION },
        "seed": cfg.and_then(|c| c.seed),
        "threads": rayon::current_num_threads(),
        "config": cfg,
    })
}

fn report(cli: &Cli, outcome: &Outcome, error: Option<&str>) -> std::io::Result<()> {
    let mut lines = outcome.summary.clone();
    if !outcome.flags.is_empty() {
        let flags: Vec<String> = outcome.flags.iter().map(|f| f.to_string()).collect();
        lines.push(format!("diagnostics: {}", flags.join(", ")));
    }
    if let Some(e) = error {
        lines.push(format!("aborted: {e}"));
    }
    for l in &lines {
        println!("{l}");
    }
    if cli.verbose {
        for d in &outcome.details {
            eprintln!("{d}");
        }
    }
    for (name, bytes) in &outcome.files {
        write(&cli.out, name, bytes)?;
    }
    let mut text = lines.join("\n");
    text.push('\n');
    write(&cli.out, "summary.txt", text.as_bytes())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot start {n} threads: {e}");
            return ExitCode::from(EXIT_SCHEMA);
        }
    }
    let cfg = match &cli.config {
        Some(path) => match config::load(path) {
            Ok(mut c) => {
                if let Some(seed) = cli.seed {
                    c.seed = Some(seed);
                }
                Some(c)
            }
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(EXIT_SCHEMA);
            }
        },
        None => None,
    };
    if let Err(e) = std::fs::create_dir_all(&cli.out) {
        eprintln!("error: cannot create {}: {e}", cli.out.display());
        return ExitCode::from(EXIT_NUMERICAL);
    }
    let manifest = serde_json::to_vec_pretty(&manifest(&cli, cfg.as_ref())).expect("manifest serializes");
    if let Err(e) = write(&cli.out, "manifest.json", &manifest) {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_NUMERICAL);
    }
    let (outcome, error, code) = match commands::run(cli.command, cfg.as_ref()) {
        Ok(o) => {
            let code = if !o.failed.is_empty() {
                EXIT_FAILED
            } else if !o.flags.is_empty() {
                EXIT_DIAGNOSTIC
            } else {
                0
            };
            (o, None, code)
        }
        Err(Failure::Schema(e)) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_SCHEMA);
        }
        Err(Failure::Core(e)) => {
            let mut o = Outcome::default();
            let code = match (&e, e.diagnostic()) {
                (_, Some(d)) => {
                    o.flags.push(d);
                    EXIT_DIAGNOSTIC
                }
                (sgp_core::Error::InvalidInput(_), None) => EXIT_SCHEMA,
                _ => EXIT_NUMERICAL,
            };
            eprintln!("error: {e}");
            (o, Some(e.to_string()), code)
        }
    };
    if let Err(e) = report(&cli, &outcome, error.as_deref()) {
        eprintln!("error: cannot write outputs: {e}");
        return ExitCode::from(EXIT_NUMERICAL);
    }
    ExitCode::from(code)
}
