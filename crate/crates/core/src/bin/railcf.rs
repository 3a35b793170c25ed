use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use railcf::figures::{generate, Figure, Scale};
use railcf::oracle::run_oracle_suite;
use railcf::runconfig::{write_outputs, RunConfig, OUTPUT_DIR_ENV};
use railcf::{Error, Result};

#[derive(Parser)]
#[command(version, about = "Uplink SE of cell-free massive MIMO-OFDM for high-speed trains")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML or JSON config.
    Run { config: PathBuf },
    /// Check a config and print the resolved parameters.
    Validate { config: PathBuf },
    /// Run the DFT, Parseval, moment and closed-form oracle suites.
    Oracle {
        #[arg(long, default_value = "desk")]
        scale: Scale,
    },
    /// Write fig<N>.csv for one figure.
    Figures {
        figure: Figure,
        #[arg(long, default_value = "desk")]
        scale: Scale,
        /// Output directory (default: $RAILCF_OUTPUT_DIR or ./out).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn figures_dir(out: Option<PathBuf>) -> PathBuf {
    out.or_else(|| std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn execute(cli: Cli) -> Result<bool> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config {
                key: "threads".into(),
                reason: e.to_string(),
            })?;
    }
    match cli.command {
        Command::Run { config } => {
            let cfg = RunConfig::load(&config)?;
            let plan = cfg.plan()?;
            log::info!(
                "{} positions x {} speeds x {} architectures, {} trials",
                plan.positions.len(),
                plan.speeds().len(),
                plan.architectures.len(),
                plan.trials
            );
            let table = railcf::montecarlo::run_plan(&plan)?;
            for entry in table.summary()? {
                println!(
                    "{:<18} v={:<6} avg SE {:.4}  95%-likely {:.4}",
                    entry.architecture.as_str(),
                    entry.speed_kmh,
                    entry.average_se,
                    entry.cdf.p5
                );
            }
            for path in write_outputs(&cfg.output_dir(), &cfg, &table)? {
                println!("wrote {}", path.display());
            }
            Ok(true)
        }
        Command::Validate { config } => {
            let cfg = RunConfig::load(&config)?;
            print!("{}", cfg.to_toml());
            Ok(true)
        }
        Command::Oracle { scale } => {
            let checks = run_oracle_suite(scale)?;
            for c in &checks {
                println!("{} {:<28} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            Ok(checks.iter().all(|c| c.passed))
        }
        Command::Figures { figure, scale, out } => {
            let data = generate(figure, scale)?;
            let dir = figures_dir(out);
            std::fs::create_dir_all(&dir)?;
            let path = dir.join(figure.file_name());
            data.write_csv(std::fs::File::create(&path)?)?;
            println!("wrote {} ({} rows)", path.display(), data.rows.len());
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
