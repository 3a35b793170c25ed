//! Closed-form local-MR SE with LSFD and MF weights, checked by Monte Carlo.
//!
//! `cargo run --release --example closed_form_lsfd -- [d_tr] [trials]`

use railcf::oracle::{closed_form_fidelity, fidelity_scenario};

fn main() -> railcf::Result<()> {
    let mut args = std::env::args().skip(1);
    let d_tr: f64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(150.0);
    let trials: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(20_000);
    let points = closed_form_fidelity(&fidelity_scenario(), d_tr, trials, 1)?;
    println!("{:>2} {:>2} {:>5} {:>12} {:>12} {:>9}", "k", "s", "LSFD", "closed form", "Monte Carlo", "rel err");
    for p in &points {
        println!(
            "{:>2} {:>2} {:>5} {:>12.5} {:>12.5} {:>9.2e}",
            p.k,
            p.s,
            p.optimal,
            p.closed_form,
            p.monte_carlo,
            p.relative_error()
        );
    }
    let worst = points.iter().map(|p| p.relative_error()).fold(0.0, f64::max);
    println!("max relative error {worst:.2e} over {trials} realizations");
    Ok(())
}
