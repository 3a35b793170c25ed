//! Runs a TOML or JSON config and writes `results.csv` and `summary.json`.
//!
//! `cargo run --release --example run_config -- [config] [out_dir]`
//!
//! Without arguments a small built-in config is used.

use std::path::PathBuf;

use railcf::montecarlo::run_plan;
use railcf::runconfig::{write_outputs, RunConfig};

const BUILTIN: &str = r#"
[scenario]
num_aps = 6

[experiment]
positions = 5
speeds_kmh = [100.0, 500.0]
architectures = ["local-mmse-lsfd", "local-mr-lsfd", "smallcell-mmse"]
trials = 20
seed = 8
"#;

fn main() -> railcf::Result<()> {
    let mut args = std::env::args().skip(1);
    let cfg = match args.next() {
        Some(path) => RunConfig::load(path.as_ref())?,
        None => RunConfig::from_toml_str(BUILTIN)?,
    };
    let out = args.next().map(PathBuf::from).unwrap_or_else(|| cfg.output_dir());
    let table = run_plan(&cfg.plan()?)?;
    for e in table.summary()? {
        println!(
            "{:<16} v={:<5} avg {:.3}  5% {:.3}  worst TA {:.3}",
            e.architecture.as_str(),
            e.speed_kmh,
            e.average_se,
            e.cdf.p5,
            e.worst_ta_average_se
        );
    }
    for p in write_outputs(&out, &cfg, &table)? {
        println!("wrote {}", p.display());
    }
    Ok(())
}
