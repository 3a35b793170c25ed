//! Doppler-induced inter-carrier interference (ICI).
//!
//! A normalized Doppler offset `eps` rotates the time-domain OFDM samples so
//! that, after the receiver DFT, subcarrier `m` leaks into subcarrier `s`
//! with the Dirichlet-kernel weight
//!
//! ```text
//! I[d] = sin(pi (d + eps)) / (M sin(pi (d + eps) / M)) * exp(j pi (1 - 1/M) (d + eps)),   d = m - s
//! ```
//!
//! The diffuse (NLoS) part has no single angle, so it is described by the
//! statistical coefficient `I_D[0] = 1`, `I_D[d] = (-1)^d omega / (sqrt(2) d)`.
//!
//! Both brute-force DFT oracles live here as well; they never call the
//! closed-form kernels.

use std::f64::consts::PI;

use nalgebra::{Complex, DMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::geometry::{GeometrySnapshot, ScenarioConfig};

pub type C64 = Complex<f64>;

/// Below this `|sin(pi x / M)|` the kernel is evaluated by its series limit.
const SINGULARITY_GUARD: f64 = 1e-12;

/// `eps_kl = omega * sin(phi_kl)` for every TA/AP pair.
pub fn normalized_dfo(config: &ScenarioConfig, snapshot: &GeometrySnapshot) -> DMatrix<f64> {
    let omega = config.max_normalized_doppler();
    snapshot.aoa_sines.map(|s| omega * s)
}

/// LoS ICI coefficient between subcarriers at offset `delta = m - s`.
pub fn ici_los(delta: i64, eps: f64, subcarriers: usize) -> C64 {
    let m = subcarriers as f64;
    let x = delta as f64 + eps;
    let den = (PI * x / m).sin();
    let magnitude = if den.abs() < SINGULARITY_GUARD {
        // x = j M + r with |r| tiny: ratio -> (-1)^{j (M + 1)} (1 - (pi r)^2 (1 - 1/M^2) / 6)
        let j = (x / m).round();
        let r = x - j * m;
        let sign = if ((j as i64) * (subcarriers as i64 + 1)).rem_euclid(2) == 0 {
            1.0
        } else {
            -1.0
        };
        sign * (1.0 - (PI * r).powi(2) * (1.0 - 1.0 / (m * m)) / 6.0)
    } else {
        (PI * x).sin() / (m * den)
    };
    C64::from_polar(1.0, PI * (1.0 - 1.0 / m) * x) * magnitude
}

/// Statistical NLoS ICI coefficient at offset `delta`.
pub fn ici_nlos(delta: i64, omega: f64) -> f64 {
    if delta == 0 {
        1.0
    } else {
        let sign = if delta.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
        sign * omega / (std::f64::consts::SQRT_2 * delta as f64)
    }
}

/// LoS coefficient at any integer offset by direct DFT summation.
pub fn dft_oracle_los_at(delta: i64, eps: f64, subcarriers: usize) -> C64 {
    let m = subcarriers as f64;
    let x = delta as f64 + eps;
    let sum: C64 = (0..subcarriers)
        .map(|n| C64::from_polar(1.0, 2.0 * PI * n as f64 * x / m))
        .sum();
    sum / m
}

/// LoS coefficients for offsets `0..M` by direct DFT summation.
pub fn dft_oracle_los(eps: f64, subcarriers: usize) -> Vec<C64> {
    (0..subcarriers as i64)
        .map(|d| dft_oracle_los_at(d, eps, subcarriers))
        .collect()
}

/// Monte Carlo second moment of the aggregate NLoS ICI coefficient.
///
/// Each trial draws `n_paths` rays with AoA uniform on `[-pi, pi]` and i.i.d.
/// `CN(0, 1/n_paths)` amplitudes, applies each ray's Doppler rotation to the
/// time-domain samples and takes the DFT at every requested offset. Returns
/// `E|I_agg[delta]|^2` per offset, to be compared with `ici_nlos(delta)^2`.
pub fn dft_oracle_nlos(
    omega: f64,
    subcarriers: usize,
    n_paths: usize,
    n_trials: usize,
    offsets: &[i64],
    seed: u64,
) -> Vec<f64> {
    const CHUNK: usize = 1024;
    let m = subcarriers;
    let mf = m as f64;
    let twiddles: Vec<Vec<C64>> = offsets
        .iter()
        .map(|&d| {
            (0..m)
                .map(|n| C64::from_polar(1.0, 2.0 * PI * n as f64 * d as f64 / mf))
                .collect()
        })
        .collect();
    let amp_scale = (0.5 / n_paths as f64).sqrt();
    let chunks = n_trials.div_ceil(CHUNK);

    let partials: Vec<Vec<f64>> = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(chunk as u64);
            let trials = CHUNK.min(n_trials - chunk * CHUNK);
            let mut acc = vec![0.0; offsets.len()];
            let mut samples = vec![C64::new(0.0, 0.0); m];
            for _ in 0..trials {
                samples.iter_mut().for_each(|y| *y = C64::new(0.0, 0.0));
                for _ in 0..n_paths {
                    let phi = rng.random_range(-PI..PI);
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    let eps = omega * phi.sin();
                    let step = C64::from_polar(1.0, 2.0 * PI * eps / mf);
                    let mut cur = C64::new(re, im) * amp_scale;
                    for y in samples.iter_mut() {
                        *y += cur;
                        cur *= step;
                    }
                }
                for (a, tw) in acc.iter_mut().zip(&twiddles) {
                    let coeff: C64 = samples.iter().zip(tw).map(|(y, t)| y * t).sum::<C64>() / mf;
                    *a += coeff.norm_sqr();
                }
            }
            acc
        })
        .collect();

    let mut total = vec![0.0; offsets.len()];
    for p in &partials {
        for (t, v) in total.iter_mut().zip(p) {
            *t += v;
        }
    }
    total.iter().map(|t| t / n_trials as f64).collect()
}

/// Tabulated ICI coefficients for one snapshot.
///
/// Offsets follow the linear convention `delta = m - s` with `m, s` in
/// `0..M`, so `delta` ranges over `-(M-1)..=M-1`.
#[derive(Debug, Clone)]
pub struct IciProfile {
    omega: f64,
    subcarriers: usize,
    num_tas: usize,
    num_aps: usize,
    epsilon: DMatrix<f64>,
    los: Vec<C64>,
    nlos: Vec<f64>,
    ici_free: bool,
}

impl IciProfile {
    pub fn new(config: &ScenarioConfig, snapshot: &GeometrySnapshot) -> Self {
        let epsilon = normalized_dfo(config, snapshot);
        Self::from_epsilon(config.max_normalized_doppler(), config.subcarriers, epsilon)
    }

    /// Builds the tables from an explicit offset matrix (K x L).
    pub fn from_epsilon(omega: f64, subcarriers: usize, epsilon: DMatrix<f64>) -> Self {
        let (num_tas, num_aps) = epsilon.shape();
        let span = 2 * subcarriers - 1;
        let mut los = Vec::with_capacity(num_tas * num_aps * span);
        for k in 0..num_tas {
            for l in 0..num_aps {
                let eps = epsilon[(k, l)];
                los.extend((0..span).map(|j| ici_los(j as i64 - (subcarriers as i64 - 1), eps, subcarriers)));
            }
        }
        let nlos = (0..span)
            .map(|j| ici_nlos(j as i64 - (subcarriers as i64 - 1), omega))
            .collect();
        IciProfile {
            omega,
            subcarriers,
            num_tas,
            num_aps,
            epsilon,
            los,
            nlos,
            ici_free: false,
        }
    }

    /// Single-carrier reference: only the `m = s` terms exist, with unit gain.
    pub fn ici_free(num_tas: usize, num_aps: usize, subcarriers: usize) -> Self {
        let mut profile = Self::from_epsilon(0.0, subcarriers, DMatrix::zeros(num_tas, num_aps));
        profile.ici_free = true;
        profile
    }

    pub fn is_ici_free(&self) -> bool {
        self.ici_free
    }

    pub fn omega(&self) -> f64 {
        self.omega
    }

    pub fn subcarriers(&self) -> usize {
        self.subcarriers
    }

    pub fn num_tas(&self) -> usize {
        self.num_tas
    }

    pub fn num_aps(&self) -> usize {
        self.num_aps
    }

    pub fn epsilon(&self) -> &DMatrix<f64> {
        &self.epsilon
    }

    fn offset_index(&self, delta: i64) -> usize {
        debug_assert!(delta.unsigned_abs() < self.subcarriers as u64);
        (delta + self.subcarriers as i64 - 1) as usize
    }

    /// `I_kl[delta]`.
    pub fn los(&self, k: usize, l: usize, delta: i64) -> C64 {
        let span = 2 * self.subcarriers - 1;
        self.los[(k * self.num_aps + l) * span + self.offset_index(delta)]
    }

    /// `I_D[delta]`.
    pub fn nlos(&self, delta: i64) -> f64 {
        self.nlos[self.offset_index(delta)]
    }

    /// Subcarrier pairs `(m, m - s)` that contribute to subcarrier `s`
    /// (0-based). In ICI-free mode only `m = s` contributes.
    pub fn offsets(&self, s: usize) -> Vec<(usize, i64)> {
        if self.ici_free {
            vec![(s, 0)]
        } else {
            (0..self.subcarriers).map(|m| (m, m as i64 - s as i64)).collect()
        }
    }

    /// `sum_m I_D[m - s]^2` over the contributing subcarriers.
    pub fn nlos_power_sum(&self, s: usize) -> f64 {
        self.offsets(s).iter().map(|&(_, d)| self.nlos(d).powi(2)).sum()
    }
}
