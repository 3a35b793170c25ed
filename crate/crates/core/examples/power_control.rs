//! Power allocations at one position, with the max-min and max-sum traces.
//!
//! `cargo run --release --example power_control -- [d_tr] [trace_dir]`

use std::fs::File;
use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use railcf::channel::build_statistics;
use railcf::clustering::{extract_generic_coeffs, form_clusters, masked_closed_form_stats};
use railcf::figures::clustered_scenario;
use railcf::geometry::build_snapshot;
use railcf::ici::IciProfile;
use railcf::lsfd::{lsfd_optimal_weights, DRange};
use railcf::power::{fractional_power, full_power, maxmin_power, maxsum_power};

fn main() -> railcf::Result<()> {
    let mut args = std::env::args().skip(1);
    let d_tr: f64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(300.0);
    let trace_dir = args.next().map(PathBuf::from).unwrap_or_else(std::env::temp_dir);

    let cfg = clustered_scenario();
    let p_max = cfg.max_power;
    let snap = build_snapshot(&cfg, d_tr)?;
    let clusters = form_clusters(&snap, 10.0)?;
    let full = vec![p_max; cfg.num_tas];
    let stats = build_statistics(&cfg, &snap, &full, &mut ChaCha8Rng::seed_from_u64(3))?;
    let ici = IciProfile::new(&cfg, &snap);
    let cf = masked_closed_form_stats(&stats, &ici, &clusters, cfg.subcarriers / 2)?;
    let weights = lsfd_optimal_weights(&cf, &full, DRange::AllSubcarriers)?;
    let coeffs = extract_generic_coeffs(&cf, &weights)?;

    let maxmin = maxmin_power(&coeffs, p_max, 1e-4, 10_000)?;
    let maxsum = maxsum_power(&coeffs, p_max, 1e-6, 10_000)?;
    let allocations = [
        ("full", full_power(cfg.num_tas, p_max)),
        ("fractional", fractional_power(&clusters, &snap, p_max)?),
        ("maxmin", maxmin.clone()),
        ("maxsum", maxsum.clone()),
    ];
    println!("{:<11} {:>9} {:>9} {:>6}  powers (W)", "scheme", "sum SE", "min SE", "iters");
    for (name, a) in &allocations {
        let se: Vec<f64> = coeffs.sinrs(&a.powers).iter().map(|s| (1.0 + s).log2()).collect();
        let min = se.iter().cloned().fold(f64::INFINITY, f64::min);
        let powers: Vec<String> = a.powers.iter().map(|p| format!("{p:.3}")).collect();
        println!(
            "{name:<11} {:>9.3} {:>9.3} {:>6}  [{}]",
            se.iter().sum::<f64>(),
            min,
            a.iterations,
            powers.join(", ")
        );
    }

    for (name, a) in [("maxmin", &maxmin), ("maxsum", &maxsum)] {
        let path = trace_dir.join(format!("{name}_trace.csv"));
        a.write_trace_csv(File::create(&path)?)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
