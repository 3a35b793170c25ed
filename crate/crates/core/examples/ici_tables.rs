//! LoS and NLoS inter-carrier interference coefficients for one block.
//!
//! `cargo run --release --example ici_tables -- [speed_kmh] [M]`

use railcf::geometry::ScenarioConfig;
use railcf::ici::{dft_oracle_los, ici_los, ici_nlos};

fn main() {
    let mut args = std::env::args().skip(1);
    let speed: f64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(300.0);
    let m: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(8);
    let cfg = ScenarioConfig {
        velocity_kmh: speed,
        subcarriers: m,
        ..ScenarioConfig::default()
    };
    let omega = cfg.max_normalized_doppler();
    println!("v = {speed} km/h, M = {m}, omega = {omega:.5}");

    // A pair straight along the track sees the full offset; broadside sees none.
    for sin_phi in [1.0, 0.5, 0.0] {
        let eps = omega * sin_phi;
        let oracle = dft_oracle_los(eps, m);
        let worst = (0..m as i64)
            .map(|d| (ici_los(d, eps, m) - oracle[d as usize]).norm())
            .fold(0.0, f64::max);
        println!("\nLoS, eps = {eps:.5} (|I - DFT| <= {worst:.1e})");
        println!("{:>6} {:>12} {:>12}", "delta", "|I|", "arg I");
        for d in 0..m as i64 {
            let c = ici_los(d, eps, m);
            println!("{d:>6} {:>12.6} {:>12.6}", c.norm(), c.arg());
        }
    }

    println!("\nNLoS (statistical)");
    println!("{:>6} {:>12}", "delta", "I_D");
    for d in -3..=3 {
        println!("{d:>6} {:>12.6}", ici_nlos(d, omega));
    }
}
