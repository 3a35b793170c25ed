//! Average SE against train speed for LSFD and MF cooperation.
//!
//! `cargo run --release --example speed_sweep -- [positions] [rician_db]`

use railcf::geometry::ScenarioConfig;
use railcf::montecarlo::{run_plan, Arch, ExperimentPlan};

fn main() -> railcf::Result<()> {
    let mut args = std::env::args().skip(1);
    let positions: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(20);
    let kbar: f64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(30.0);
    let cfg = ScenarioConfig {
        rician_factor_db: kbar,
        ..ScenarioConfig::default()
    };
    let archs = vec![Arch::LocalMrLsfd, Arch::LocalMrMf];
    let mut plan = ExperimentPlan::new(cfg, archs.clone(), positions, 1, 11);
    plan.speeds_kmh = vec![0.0, 100.0, 200.0, 300.0, 400.0, 500.0, 600.0];
    let table = run_plan(&plan)?;
    print!("{:>8}", "v (km/h)");
    for a in &archs {
        print!(" {:>15}", a.as_str());
    }
    println!();
    for v in plan.speeds() {
        print!("{v:>8}");
        for &a in &archs {
            print!(" {:>15.4}", table.average_se(a, v));
        }
        println!();
    }
    Ok(())
}
