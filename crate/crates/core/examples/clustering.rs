//! TA-centric AP clusters at one train position for several thresholds.
//!
//! `cargo run --release --example clustering -- [d_tr] [theta_db]`

use railcf::clustering::form_clusters;
use railcf::geometry::{build_snapshot, ScenarioConfig};

fn main() -> railcf::Result<()> {
    let mut args = std::env::args().skip(1);
    let d_tr: f64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(400.0);
    let cfg = ScenarioConfig {
        num_aps: 20,
        track_distance: 20.0,
        ..ScenarioConfig::default()
    };
    let snap = build_snapshot(&cfg, d_tr)?;
    for theta in [0.0, 5.0, 10.0, 20.0] {
        let c = form_clusters(&snap, theta)?;
        let sizes: Vec<usize> = (0..cfg.num_tas).map(|i| c.aps_of(i).len()).collect();
        println!("theta = {theta:>4} dB  cluster sizes {sizes:?}");
    }
    let theta: f64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(10.0);
    println!("\n{}", form_clusters(&snap, theta)?.to_json()?);
    Ok(())
}
