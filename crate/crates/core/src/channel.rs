//! Rician channel statistics, channel sampling and phase-aware MMSE
//! estimation.
//!
//! Every TA/AP pair has a deterministic LoS vector `los` (with a random but
//! known phase) and a NLoS covariance `corr`. Orthogonal pilots of length
//! `tau_p = K` are assumed, so after despreading the observation of pair
//! `(k, l)` is `z = sqrt(p_k tau_p) g_kl + n` with `n ~ CN(0, sigma^2 I)`.

use std::f64::consts::PI;

use nalgebra::DVector;
use rand::Rng;

use crate::error::{Error, Result};
use crate::geometry::{CorrelationModel, GeometrySnapshot, RicianSplit, ScenarioConfig};
use crate::ici::C64;
use crate::linalg::{complex_gaussian, hermitian_eigen, spectral_map, trace_re, CMatrix, CVector};

/// Statistics of one TA/AP link.
#[derive(Debug, Clone)]
pub struct PairStatistics {
    /// LoS component `h_bar`.
    pub los: CVector,
    /// NLoS spatial correlation `R`.
    pub corr: CMatrix,
    /// `R^{1/2}`, used for sampling.
    pub corr_sqrt: CMatrix,
    pub beta_los: f64,
    pub beta_nlos: f64,
    /// LoS phase shift, radians.
    pub phase: f64,
    /// Pilot transmit power used for estimation.
    pub pilot_power: f64,
    pub pilot_length: usize,
    pub noise_power: f64,
    /// `(p tau_p R + sigma^2 I)^{-1}` (pseudo-inverse when singular).
    pub psi: CMatrix,
    /// Covariance of the estimate's NLoS part, `p tau_p R Psi R`.
    pub q: CMatrix,
    /// Estimation error covariance `R - Q`.
    pub c: CMatrix,
    /// `sqrt(p tau_p) R Psi`, applied to the centred observation.
    estimator: CMatrix,
}

impl PairStatistics {
    /// Derives the estimation matrices from a LoS vector and a covariance.
    pub fn from_parts(
        los: CVector,
        corr: CMatrix,
        pilot_power: f64,
        pilot_length: usize,
        noise_power: f64,
    ) -> Result<Self> {
        let n = los.len();
        if corr.shape() != (n, n) {
            return Err(Error::Dimension(format!(
                "LoS vector has {n} entries but correlation is {:?}",
                corr.shape()
            )));
        }
        let (values, vectors) = hermitian_eigen(&corr);
        let tr = trace_re(&corr);
        let floor = -1e-10 * tr.abs().max(f64::MIN_POSITIVE) / n as f64;
        if let Some(bad) = values.iter().find(|&&v| v < floor) {
            return Err(Error::Numerical(format!(
                "correlation matrix is not positive semi-definite (eigenvalue {bad:e})"
            )));
        }
        let gain = pilot_power * pilot_length as f64;
        let noise = noise_power;
        let inv = move |x: f64| {
            let d = gain * x.max(0.0) + noise;
            if d > 0.0 {
                1.0 / d
            } else {
                0.0
            }
        };
        let psi = spectral_map(&values, &vectors, inv);
        let q = spectral_map(&values, &vectors, |x| {
            let x = x.max(0.0);
            gain * x * x * inv(x)
        });
        let estimator = spectral_map(&values, &vectors, |x| {
            let x = x.max(0.0);
            gain.sqrt() * x * inv(x)
        });
        let corr_sqrt = spectral_map(&values, &vectors, |x| x.max(0.0).sqrt());
        let c = &corr - &q;
        let beta_los = los.norm_squared() / n as f64;
        let beta_nlos = tr / n as f64;
        let phase = if los.is_empty() { 0.0 } else { los[0].arg() };
        Ok(PairStatistics {
            los,
            corr,
            corr_sqrt,
            beta_los,
            beta_nlos,
            phase,
            pilot_power,
            pilot_length,
            noise_power,
            psi,
            q,
            c,
            estimator,
        })
    }

    pub fn antennas(&self) -> usize {
        self.los.len()
    }

    /// Rician factor `beta_los / beta_nlos`.
    pub fn rician_factor(&self) -> f64 {
        self.beta_los / self.beta_nlos
    }
}

/// Statistics for every TA/AP pair, stored TA-major.
#[derive(Debug, Clone)]
pub struct ChannelStatistics {
    pub num_tas: usize,
    pub num_aps: usize,
    pub antennas: usize,
    pub pilot_length: usize,
    pub noise_power: f64,
    pairs: Vec<PairStatistics>,
}

impl ChannelStatistics {
    /// Assembles statistics from per-pair blocks ordered `k * L + l`.
    pub fn from_pairs(num_tas: usize, num_aps: usize, pairs: Vec<PairStatistics>) -> Result<Self> {
        if pairs.len() != num_tas * num_aps || pairs.is_empty() {
            return Err(Error::Dimension(format!(
                "expected {} pair blocks, got {}",
                num_tas * num_aps,
                pairs.len()
            )));
        }
        let antennas = pairs[0].antennas();
        if pairs.iter().any(|p| p.antennas() != antennas) {
            return Err(Error::Dimension("pairs have different antenna counts".into()));
        }
        Ok(ChannelStatistics {
            num_tas,
            num_aps,
            antennas,
            pilot_length: pairs[0].pilot_length,
            noise_power: pairs[0].noise_power,
            pairs,
        })
    }

    pub fn pair(&self, k: usize, l: usize) -> &PairStatistics {
        &self.pairs[k * self.num_aps + l]
    }

    pub fn pairs(&self) -> &[PairStatistics] {
        &self.pairs
    }
}

/// LoS and NLoS shares of the large-scale fading `zeta`.
pub fn rician_split(split: RicianSplit, rician: f64, zeta: f64) -> (f64, f64) {
    match split {
        RicianSplit::SquareRoot => (
            (rician / (rician + 1.0)).sqrt() * zeta,
            (1.0 / (rician + 1.0)).sqrt() * zeta,
        ),
        RicianSplit::Conventional => (rician / (rician + 1.0) * zeta, zeta / (rician + 1.0)),
    }
}

/// ULA response `[1, e^{j 2 pi d_H sin(phi)}, ...]`.
pub fn steering_vector(antennas: usize, spacing: f64, sin_aoa: f64) -> CVector {
    CVector::from_fn(antennas, |n, _| {
        C64::from_polar(1.0, 2.0 * PI * spacing * n as f64 * sin_aoa)
    })
}

/// Clustered local-scattering correlation with unit average diagonal.
///
/// `[R]_{s,t} = (1/C) sum_c exp(j 2 pi d_H (s-t) sin(phi_c) - (sigma^2/2) (2 pi d_H (s-t) cos(phi_c))^2)`,
/// which for half-wavelength spacing is the usual `pi (s - t)` form.
pub fn clustered_correlation(
    antennas: usize,
    spacing: f64,
    nominal_aoas: &[f64],
    asd_rad: f64,
) -> CMatrix {
    let clusters = nominal_aoas.len() as f64;
    CMatrix::from_fn(antennas, antennas, |s, t| {
        let dist = 2.0 * PI * spacing * (s as f64 - t as f64);
        nominal_aoas
            .iter()
            .map(|&phi| {
                let spread = -0.5 * asd_rad * asd_rad * (dist * phi.cos()).powi(2);
                C64::from_polar(spread.exp(), dist * phi.sin())
            })
            .sum::<C64>()
            / clusters
    })
}

/// Builds statistics for every pair of `snapshot`.
///
/// `pilot_powers[k]` is TA `k`'s pilot power. LoS phases and nominal cluster
/// AoAs are drawn from `rng`.
pub fn build_statistics<R: Rng + ?Sized>(
    config: &ScenarioConfig,
    snapshot: &GeometrySnapshot,
    pilot_powers: &[f64],
    rng: &mut R,
) -> Result<ChannelStatistics> {
    build_statistics_with_antennas(config, snapshot, config.antennas_per_ap, pilot_powers, rng)
}

/// As [`build_statistics`] with an explicit per-AP antenna count.
pub fn build_statistics_with_antennas<R: Rng + ?Sized>(
    config: &ScenarioConfig,
    snapshot: &GeometrySnapshot,
    antennas: usize,
    pilot_powers: &[f64],
    rng: &mut R,
) -> Result<ChannelStatistics> {
    let (num_tas, num_aps) = (snapshot.num_tas(), snapshot.num_aps());
    if pilot_powers.len() != num_tas {
        return Err(Error::Dimension(format!(
            "{} pilot powers for {num_tas} TAs",
            pilot_powers.len()
        )));
    }
    let rician = config.rician_factor();
    let halfwidth = config.nominal_aoa_halfwidth_deg.to_radians();
    let asd = config.cluster_asd_deg.to_radians();
    let pilot_length = num_tas;
    let mut pairs = Vec::with_capacity(num_tas * num_aps);
    for k in 0..num_tas {
        for l in 0..num_aps {
            let zeta = snapshot.large_scale[(k, l)];
            let sin_aoa = snapshot.aoa_sines[(k, l)];
            let (beta_los, beta_nlos) = rician_split(config.rician_split, rician, zeta);
            let phase = rng.random_range(-PI..PI);
            let los = steering_vector(antennas, config.antenna_spacing, sin_aoa)
                * C64::from_polar(beta_los.sqrt(), phase);
            let corr = match config.correlation {
                CorrelationModel::Uncorrelated => CMatrix::identity(antennas, antennas) * C64::new(beta_nlos, 0.0),
                CorrelationModel::Correlated => {
                    let aoa = sin_aoa.asin();
                    let nominal: Vec<f64> = (0..config.scattering_clusters)
                        .map(|_| {
                            if halfwidth > 0.0 {
                                aoa + rng.random_range(-halfwidth..halfwidth)
                            } else {
                                aoa
                            }
                        })
                        .collect();
                    clustered_correlation(antennas, config.antenna_spacing, &nominal, asd)
                        * C64::new(beta_nlos, 0.0)
                }
            };
            pairs.push(PairStatistics::from_parts(
                los,
                corr,
                pilot_powers[k],
                pilot_length,
                config.noise_power,
            )?);
        }
    }
    ChannelStatistics::from_pairs(num_tas, num_aps, pairs)
}

/// Draws `g = h_bar + R^{1/2} z`.
pub fn sample_channel<R: Rng + ?Sized>(stats: &PairStatistics, rng: &mut R) -> CVector {
    let z = complex_gaussian(rng, stats.antennas());
    &stats.los + &stats.corr_sqrt * z
}

/// Phase-aware MMSE estimate of `g` from a freshly drawn despread pilot observation.
pub fn mmse_estimate<R: Rng + ?Sized>(stats: &PairStatistics, g: &CVector, rng: &mut R) -> CVector {
    let noise = complex_gaussian(rng, stats.antennas()) * C64::new(stats.noise_power.sqrt(), 0.0);
    let gain = (stats.pilot_power * stats.pilot_length as f64).sqrt();
    // z - z_bar = sqrt(p tau) (g - h_bar) + n
    let centred = (g - &stats.los) * C64::new(gain, 0.0) + noise;
    &stats.los + &stats.estimator * centred
}

/// True channels and their MMSE estimates for every pair.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    pub num_tas: usize,
    pub num_aps: usize,
    g: Vec<CVector>,
    ghat: Vec<CVector>,
    los: Vec<CVector>,
}

impl ChannelRealization {
    pub fn draw<R: Rng + ?Sized>(stats: &ChannelStatistics, rng: &mut R) -> Self {
        let mut g = Vec::with_capacity(stats.pairs.len());
        let mut ghat = Vec::with_capacity(stats.pairs.len());
        for pair in &stats.pairs {
            let gi = sample_channel(pair, rng);
            ghat.push(mmse_estimate(pair, &gi, rng));
            g.push(gi);
        }
        ChannelRealization {
            num_tas: stats.num_tas,
            num_aps: stats.num_aps,
            g,
            ghat,
            los: stats.pairs.iter().map(|p| p.los.clone()).collect(),
        }
    }

    /// Assembles a realization from explicit vectors (ordered `k * L + l`).
    pub fn from_parts(
        num_tas: usize,
        num_aps: usize,
        g: Vec<CVector>,
        ghat: Vec<CVector>,
        los: Vec<CVector>,
    ) -> Result<Self> {
        let n = num_tas * num_aps;
        if g.len() != n || ghat.len() != n || los.len() != n {
            return Err(Error::Dimension(format!("expected {n} vectors per field")));
        }
        Ok(ChannelRealization {
            num_tas,
            num_aps,
            g,
            ghat,
            los,
        })
    }

    fn idx(&self, k: usize, l: usize) -> usize {
        k * self.num_aps + l
    }

    /// True channel `g_kl`.
    pub fn g(&self, k: usize, l: usize) -> &CVector {
        &self.g[self.idx(k, l)]
    }

    /// Estimate `g_hat_kl`.
    pub fn ghat(&self, k: usize, l: usize) -> &CVector {
        &self.ghat[self.idx(k, l)]
    }

    /// Estimation error `g_tilde = g - g_hat`.
    pub fn gtilde(&self, k: usize, l: usize) -> CVector {
        self.g(k, l) - self.ghat(k, l)
    }

    /// NLoS part of the estimate, `h_hat = g_hat - h_bar`.
    pub fn hhat(&self, k: usize, l: usize) -> CVector {
        self.ghat(k, l) - &self.los[self.idx(k, l)]
    }

    /// True NLoS part, `h = g - h_bar`.
    pub fn h(&self, k: usize, l: usize) -> CVector {
        self.g(k, l) - &self.los[self.idx(k, l)]
    }

    pub fn los(&self, k: usize, l: usize) -> &CVector {
        &self.los[self.idx(k, l)]
    }

    /// Stacked estimate `[g_hat_k1; ...; g_hat_kL]`.
    pub fn ghat_stacked(&self, k: usize) -> CVector {
        stack((0..self.num_aps).map(|l| self.ghat(k, l)))
    }
}

/// Concatenates per-AP vectors into one collective vector.
pub fn stack<'a>(parts: impl Iterator<Item = &'a CVector>) -> CVector {
    let data: Vec<C64> = parts.flat_map(|v| v.iter().copied()).collect();
    DVector::from_vec(data)
}
