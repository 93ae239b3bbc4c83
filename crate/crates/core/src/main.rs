use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser};

use inescapable::cli::{emit, run};
use inescapable::config::{load_config, AlphaSpec, Mode, RunConfig};
use inescapable::Error;

/// Minimal periodic inescapable ellipsoids and gain schedules.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[arg(value_enum)]
    command: Mode,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Args)]
struct Flags {
    /// TOML configuration (optional for `example`).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory [default: run.out from the config, else ./out].
    #[arg(long)]
    out: Option<PathBuf>,
    /// Grid nodes per period.
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Constant starting α, or a TOML file holding one Fourier entry.
    #[arg(long)]
    alpha0: Option<String>,
}

fn configure(cli: &Cli) -> Result<RunConfig, Error> {
    let f = &cli.flags;
    let mut config = match &f.config {
        Some(path) => load_config(path)?,
        None if cli.command == Mode::Example => RunConfig::example(),
        None => {
            return Err(Error::Config(
                "--config is required for this command".into(),
            ))
        }
    };
    config.mode = cli.command;
    if let Some(v) = f.grid {
        config.solver.grid = v;
    }
    if let Some(v) = f.tol {
        config.solver.tol = v;
    }
    if let Some(v) = f.max_iter {
        config.solver.max_iter = v;
    }
    if let Some(v) = f.seed {
        config.run.seed = v;
    }
    if let Some(v) = &f.alpha0 {
        config.run.alpha0 = AlphaSpec::parse(v)?;
    }
    config.validate()?;
    Ok(config)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = configure(&cli).and_then(|config| {
        let bundle = run(&config)?;
        let out = cli
            .flags
            .out
            .clone()
            .or_else(|| config.run.out.clone())
            .unwrap_or_else(|| PathBuf::from("out"));
        emit(&bundle, &out)?;
        Ok((bundle.summary, out))
    });
    match outcome {
        Ok((summary, out)) => {
            println!(
                "{}: size {:.10} after {} iterations, converged {}, stationarity {:.3e} -> {}",
                summary.mode,
                summary.size,
                summary.iterations,
                summary.converged,
                summary.stationarity,
                out.display()
            );
            if summary.converged {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(3)
            }
        }
        Err(e) => {
            let record = serde_json::json!({
                "error": e.to_string(),
                "exit_code": e.exit_code(),
            });
            eprintln!("{record}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
