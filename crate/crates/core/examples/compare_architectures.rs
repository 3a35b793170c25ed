//! Average SE of every receiver architecture along the default track.
//!
//! `cargo run --release --example compare_architectures -- [positions] [trials]`

use railcf::geometry::ScenarioConfig;
use railcf::montecarlo::{run_plan, Arch, ExperimentPlan};

fn main() -> railcf::Result<()> {
    let mut args = std::env::args().skip(1);
    let positions = args.next().and_then(|a| a.parse().ok()).unwrap_or(10);
    let trials = args.next().and_then(|a| a.parse().ok()).unwrap_or(50);
    let mut plan = ExperimentPlan::new(ScenarioConfig::default(), Arch::ALL.to_vec(), positions, trials, 7);
    plan.check_dominance = true;
    let start = std::time::Instant::now();
    let table = run_plan(&plan)?;
    let v = plan.scenario.velocity_kmh;
    println!("{:<18} {:>8} {:>8} {:>8} {:>8}", "architecture", "avg SE", "5%", "median", "max-min");
    for arch in Arch::ALL {
        let cdf = table.cdf(arch, v)?;
        println!(
            "{:<18} {:>8.3} {:>8.3} {:>8.3} {:>8.3}",
            arch.as_str(),
            table.average_se(arch, v),
            cdf.p5,
            cdf.p50,
            cdf.max - cdf.min
        );
    }
    println!(
        "MMSE below MR in {} of {} realization checks; {:.1} s",
        table.dominance_violations,
        table.dominance_checks,
        start.elapsed().as_secs_f64()
    );
    Ok(())
}
