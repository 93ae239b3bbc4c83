//! Config-driven pipeline: load a TOML file, run it, write the result files.
//!
//! `cargo run --release --example run_config [config] [out]`, defaulting to
//! the shipped scalar configuration.

use std::path::PathBuf;

use inescapable::cli::{emit, run};
use inescapable::config::load_config;

fn main() -> inescapable::Result<()> {
    let mut args = std::env::args().skip(1);
    let config = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs/scalar.toml"));
    let out = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("inescapable-run"));
    let config = load_config(&config)?;
    let bundle = run(&config)?;
    for file in emit(&bundle, &out)? {
        println!("wrote {}", file.display());
    }
    let s = &bundle.summary;
    println!(
        "{}: size {:.10}, converged {}, {} iterations, stationarity {:.2e}",
        s.mode, s.size, s.converged, s.iterations, s.stationarity
    );
    Ok(())
}
