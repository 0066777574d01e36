use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dissipham_cli::config::{self, parse_check, ConfigError};
use dissipham_cli::output::write_atomic;
use dissipham_cli::run::{apply_overrides, run, Overrides, Stage};

const EXIT_CONFIG: u8 = 2;
const EXIT_INTEGRATION: u8 = 3;

#[derive(Parser)]
#[command(
    name = "dissipham",
    version,
    about = "Substituting conservative systems for damped linear oscillators"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the damped system; writes the trajectory CSV.
    Simulate(Common),
    /// Build the substituting system; writes segment and work CSVs.
    Substitute(Common),
    /// Run the selected checks; writes report.json and report.txt.
    Verify(Common),
    /// Evolve the ensemble over the domain; writes K̂ and residual series.
    Ensemble(Common),
    /// Everything above.
    All(Common),
}

#[derive(Args)]
struct Common {
    /// Scenario file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides the scenario's `output.dir`; default `out`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated check ids to run instead of the scenario's selection.
    #[arg(long, value_delimiter = ',')]
    checks: Option<Vec<String>>,
    /// Replace one tolerance, e.g. `hat_h_constancy=1e-9`. Repeatable.
    #[arg(long = "tol-override", value_name = "NAME=VALUE")]
    tol_override: Vec<String>,
    /// Seed for the random functionals of the bracket checks.
    #[arg(long)]
    seed: Option<u64>,
}

fn overrides(c: &Common) -> Result<Overrides, ConfigError> {
    let checks = c
        .checks
        .as_ref()
        .map(|ids| {
            ids.iter()
                .map(|id| parse_check("--checks", id))
                .collect::<Result<Vec<_>, _>>()
        })
        .transpose()?;
    let tolerances = c
        .tol_override
        .iter()
        .map(|arg| {
            let bad = || ConfigError {
                path: "--tol-override".into(),
                message: format!("expected NAME=VALUE with a non-negative VALUE, got '{arg}'"),
            };
            let (name, value) = arg.split_once('=').ok_or_else(bad)?;
            let check = parse_check("--tol-override", name)?;
            let value: f64 = value.trim().parse().map_err(|_| bad())?;
            if !(value >= 0.0 && value.is_finite()) {
                return Err(bad());
            }
            Ok((check, value))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Overrides {
        checks,
        tolerances,
        seed: c.seed,
    })
}

fn configure_threads() -> Result<(), ConfigError> {
    let Ok(value) = std::env::var("DISSIPHAM_THREADS") else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| ConfigError {
            path: "DISSIPHAM_THREADS".into(),
            message: format!("expected a positive integer, got '{value}'"),
        })?;
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| ConfigError {
            path: "DISSIPHAM_THREADS".into(),
            message: e.to_string(),
        })?;
    #[cfg(not(feature = "parallel"))]
    let _ = threads;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (stage, common) = match &cli.command {
        Command::Simulate(c) => (Stage::Simulate, c),
        Command::Substitute(c) => (Stage::Substitute, c),
        Command::Verify(c) => (Stage::Verify, c),
        Command::Ensemble(c) => (Stage::Ensemble, c),
        Command::All(c) => (Stage::All, c),
    };

    let prepared = configure_threads().and_then(|()| {
        let mut cfg = config::load(&common.config)?;
        apply_overrides(&mut cfg, &overrides(common)?);
        if cfg.domain.is_none() {
            if let Some(c) = cfg.checks.iter().find(|c| c.is_ensemble()) {
                return Err(ConfigError {
                    path: "--checks".into(),
                    message: format!("check '{c}' needs a [domain] section"),
                });
            }
        }
        if stage == Stage::Ensemble && cfg.domain.is_none() {
            return Err(ConfigError {
                path: "domain".into(),
                message: "the ensemble subcommand needs a [domain] section".into(),
            });
        }
        Ok(cfg)
    });
    let cfg = match prepared {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {}: {e}", common.config.display());
            return ExitCode::from(EXIT_CONFIG);
        }
    };

    let out_dir = common
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let result = run(&cfg, stage);

    for (name, contents) in &result.files {
        let path = out_dir.join(name);
        if let Err(e) = write_atomic(&path, contents.as_bytes()) {
            eprintln!("error: cannot write {}: {e}", path.display());
            return ExitCode::from(EXIT_INTEGRATION);
        }
        if name.extension().is_some_and(|e| e == "csv") {
            println!("wrote {}", path.display());
        }
    }
    if let Some(report) = &result.report {
        print!("{}", report.to_text());
    }
    for f in &result.failures {
        eprintln!("error: {f}");
    }
    ExitCode::from(result.exit_code() as u8)
}
