//! Self-check suites: DFT and Parseval checks of the ICI tables, NLoS ICI
//! moments, channel sample moments and closed form against Monte Carlo.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::channel::{build_statistics, ChannelRealization, ChannelStatistics};
use crate::combining::mr_local;
use crate::error::Result;
use crate::figures::Scale;
use crate::geometry::{build_snapshot, ScenarioConfig};
use crate::ici::{dft_oracle_los_at, dft_oracle_nlos, ici_los, ici_nlos, IciProfile};
use crate::linalg::{add_outer, CMatrix, CVector};
use crate::lsfd::{mf_weights, ClosedFormStats, DRange, LsfdEstimate, LsfdMoments};

#[derive(Debug, Clone, Serialize)]
pub struct OracleCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl OracleCheck {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        OracleCheck {
            name: name.to_string(),
            passed,
            detail,
        }
    }
}

/// Worst absolute deviation from the DFT oracle and from Parseval over
/// `cases` random `(eps, M)` draws.
pub fn los_ici_errors(cases: usize, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut dft, mut parseval) = (0.0f64, 0.0f64);
    for _ in 0..cases {
        let eps = rng.random_range(-0.5..=0.5);
        let m = [8usize, 16, 64][rng.random_range(0..3)];
        let mut energy = 0.0;
        for d in 0..m as i64 {
            let c = ici_los(d, eps, m);
            dft = dft.max((c - dft_oracle_los_at(d, eps, m)).norm());
            energy += c.norm_sqr();
        }
        parseval = parseval.max((energy - 1.0).abs());
    }
    (dft, parseval)
}

/// Worst relative deviation of the simulated NLoS ICI power from `I_D^2`
/// at offsets 1, 2, 3.
pub fn nlos_ici_error(omega: f64, subcarriers: usize, trials: usize, seed: u64) -> f64 {
    let offsets = [1i64, 2, 3];
    let sim = dft_oracle_nlos(omega, subcarriers, 128, trials, &offsets, seed);
    offsets
        .iter()
        .zip(&sim)
        .map(|(&d, &s)| {
            let expected = ici_nlos(d, omega).powi(2);
            (s - expected).abs() / expected
        })
        .fold(0.0, f64::max)
}

fn rel_frobenius(a: &CMatrix, b: &CMatrix) -> f64 {
    (a - b).norm() / b.norm()
}

/// Relative errors of the sample mean, the sample NLoS covariance and the
/// estimation-error covariance of one pair, over `draws` samples.
pub fn channel_moment_errors(draws: usize, seed: u64) -> Result<(f64, f64, f64)> {
    let cfg = ScenarioConfig {
        num_tas: 1,
        num_aps: 1,
        antennas_per_ap: 4,
        railway_length: 200.0,
        rician_factor_db: 0.0,
        ..ScenarioConfig::default()
    };
    let snap = build_snapshot(&cfg, 0.0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let stats = build_statistics(&cfg, &snap, &[cfg.max_power], &mut rng)?;
    let pair = stats.pair(0, 0);
    let n = pair.antennas();
    let mut mean = CVector::zeros(n);
    let mut cov = CMatrix::zeros(n, n);
    let mut err = CMatrix::zeros(n, n);
    for _ in 0..draws {
        let real = ChannelRealization::draw(&stats, &mut rng);
        let g = real.g(0, 0);
        mean += g;
        add_outer(&mut cov, &(g - &pair.los), 1.0);
        add_outer(&mut err, &real.gtilde(0, 0), 1.0);
    }
    let d = draws as f64;
    mean /= crate::ici::C64::new(d, 0.0);
    cov /= crate::ici::C64::new(d, 0.0);
    err /= crate::ici::C64::new(d, 0.0);
    Ok((
        (&mean - &pair.los).norm() / pair.los.norm(),
        rel_frobenius(&cov, &pair.corr),
        rel_frobenius(&err, &pair.c),
    ))
}

/// Monte Carlo LSFD moments for local MR at every subcarrier.
///
/// Trials run in fixed chunks with their own ChaCha streams and are merged
/// in chunk order.
pub fn mr_lsfd_estimates(
    stats: &ChannelStatistics,
    ici: &IciProfile,
    trials: usize,
    seed: u64,
) -> Result<Vec<LsfdEstimate>> {
    const CHUNK: usize = 2048;
    let m = ici.subcarriers();
    let (kk, ll) = (stats.num_tas, stats.num_aps);
    let chunks: Vec<Vec<LsfdMoments>> = (0..trials.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let mut acc: Vec<LsfdMoments> = (0..m).map(|_| LsfdMoments::new(kk, ll)).collect();
            for _ in c * CHUNK..((c + 1) * CHUNK).min(trials) {
                let real = ChannelRealization::draw(stats, &mut rng);
                let combiners: Vec<Vec<CVector>> =
                    (0..ll).map(|l| (0..kk).map(|k| mr_local(&real, k, l)).collect()).collect();
                for (s, a) in acc.iter_mut().enumerate() {
                    a.accumulate(&real, ici, &combiners, s)?;
                }
            }
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let mut total: Vec<LsfdMoments> = (0..m).map(|_| LsfdMoments::new(kk, ll)).collect();
    for chunk in &chunks {
        for (t, c) in total.iter_mut().zip(chunk) {
            t.merge(c);
        }
    }
    total.iter().map(|t| t.finalize(stats.noise_power)).collect()
}

/// Scenario of the closed-form fidelity check: `L = 4`, `K = 2`, `N = 2`, `M = 8`.
pub fn fidelity_scenario() -> ScenarioConfig {
    ScenarioConfig {
        num_aps: 4,
        num_tas: 2,
        antennas_per_ap: 2,
        railway_length: 400.0,
        train_length: 100.0,
        ..ScenarioConfig::default()
    }
}

/// One closed-form against Monte Carlo comparison.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct FidelityPoint {
    pub k: usize,
    pub s: usize,
    pub optimal: bool,
    pub closed_form: f64,
    pub monte_carlo: f64,
}

impl FidelityPoint {
    pub fn relative_error(&self) -> f64 {
        (self.closed_form - self.monte_carlo).abs() / self.closed_form
    }
}

/// Closed-form local-MR SE against the Monte Carlo UatF SE with the same
/// weights, for every `(k, s)` and both weight rules.
pub fn closed_form_fidelity(cfg: &ScenarioConfig, d_tr: f64, trials: usize, seed: u64) -> Result<Vec<FidelityPoint>> {
    let snap = build_snapshot(cfg, d_tr)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let powers = vec![cfg.max_power; cfg.num_tas];
    let stats = build_statistics(cfg, &snap, &powers, &mut rng)?;
    let ici = IciProfile::new(cfg, &snap);
    let estimates = mr_lsfd_estimates(&stats, &ici, trials, seed ^ 0x5eed)?;
    let mut out = Vec::new();
    for (s, est) in estimates.iter().enumerate() {
        let cf = ClosedFormStats::new(&stats, &ici, s, None)?;
        for k in 0..cfg.num_tas {
            for optimal in [true, false] {
                let a = if optimal {
                    cf.optimal_weights(k, &powers, DRange::AllSubcarriers)?
                } else {
                    mf_weights(cfg.num_aps)
                };
                out.push(FidelityPoint {
                    k,
                    s,
                    optimal,
                    closed_form: (1.0 + cf.sinr(k, &a, &powers)?).log2(),
                    monte_carlo: (1.0 + est.sinr(k, &a, &powers)).log2(),
                });
            }
        }
    }
    Ok(out)
}

/// Runs every suite. Desk scale uses fewer Monte Carlo trials with a
/// correspondingly wider tolerance.
pub fn run_oracle_suite(scale: Scale) -> Result<Vec<OracleCheck>> {
    let mut checks = Vec::new();

    let (dft, parseval) = los_ici_errors(1000, 1);
    checks.push(OracleCheck::new(
        "ici-los-dft",
        dft <= 1e-10,
        format!("max |I - DFT| = {dft:.2e} (tol 1e-10)"),
    ));
    checks.push(OracleCheck::new(
        "ici-los-parseval",
        parseval <= 1e-12,
        format!("max |sum |I|^2 - 1| = {parseval:.2e} (tol 1e-12)"),
    ));

    let (trials, tol) = match scale {
        Scale::Desk => (20_000, 0.10),
        Scale::Paper => (100_000, 0.05),
    };
    let nlos = nlos_ici_error(0.0335, 64, trials, 2);
    checks.push(OracleCheck::new(
        "ici-nlos-moments",
        nlos <= tol,
        format!("max relative error {nlos:.4} over offsets 1..3 (tol {tol})"),
    ));

    let draws = match scale {
        Scale::Desk => 20_000,
        Scale::Paper => 100_000,
    };
    let (mean, cov, err) = channel_moment_errors(draws, 3)?;
    let worst = mean.max(cov).max(err);
    checks.push(OracleCheck::new(
        "channel-moments",
        worst <= 0.05,
        format!("mean {mean:.4}, R {cov:.4}, C {err:.4} relative (tol 0.05)"),
    ));

    let (trials, tol) = match scale {
        Scale::Desk => (20_000, 0.05),
        Scale::Paper => (100_000, 0.02),
    };
    let points = closed_form_fidelity(&fidelity_scenario(), 150.0, trials, 4)?;
    let worst = points.iter().map(FidelityPoint::relative_error).fold(0.0, f64::max);
    checks.push(OracleCheck::new(
        "closed-form-vs-monte-carlo",
        worst <= tol,
        format!("max relative SE error {worst:.4} over {} points (tol {tol})", points.len()),
    ));
    Ok(checks)
}
