//! MMSE estimation of one Rician TA-AP channel: statistics against samples.
//!
//! `cargo run --release --example channel_estimation -- [draws]`

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use railcf::channel::{build_statistics, ChannelRealization};
use railcf::geometry::{build_snapshot, ScenarioConfig};

fn main() -> railcf::Result<()> {
    let draws: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(5000);
    let cfg = ScenarioConfig::default();
    let snap = build_snapshot(&cfg, 300.0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let stats = build_statistics(&cfg, &snap, &vec![cfg.max_power; cfg.num_tas], &mut rng)?;

    println!("{:>3} {:>3} {:>9} {:>11} {:>11} {:>11} {:>11}", "k", "l", "d (m)", "tr R", "tr Q", "tr C", "MSE");
    for (k, l) in [(0, 0), (0, 4), (3, 2), (7, 9)] {
        let pair = stats.pair(k, l);
        let mut mse = 0.0;
        for _ in 0..draws {
            let real = ChannelRealization::draw(&stats, &mut rng);
            mse += real.gtilde(k, l).norm_squared();
        }
        println!(
            "{k:>3} {l:>3} {:>9.1} {:>11.3e} {:>11.3e} {:>11.3e} {:>11.3e}",
            snap.distances[(k, l)],
            pair.corr.trace().re,
            pair.q.trace().re,
            pair.c.trace().re,
            mse / draws as f64
        );
    }
    println!("\ntr C is the expected squared error; MSE is its sample estimate over {draws} draws.");
    Ok(())
}
