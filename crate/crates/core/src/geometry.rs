//! Linear railway scenario: access points on one side of a straight track,
//! single-antenna train antennas (TAs) on the roof of a moving train.
//!
//! Coordinates are in meters on a 2D plane. APs sit at `y = d_ve`, TAs at
//! `y = 0`. The train displacement `d_tr` shifts every TA horizontally.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Speed of light used for the Doppler normalization, m/s.
pub const SPEED_OF_LIGHT: f64 = 3.0e8;

/// How the Rician factor splits the large-scale fading into LoS and NLoS
/// power.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RicianSplit {
    /// `sqrt(K/(K+1))` and `sqrt(1/(K+1))`.
    #[default]
    SquareRoot,
    /// `K/(K+1)` and `1/(K+1)`, which conserves total power.
    Conventional,
}

/// NLoS spatial correlation model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CorrelationModel {
    /// Clustered Gaussian local scattering around uniformly drawn nominal AoAs.
    #[default]
    Correlated,
    /// `R = beta_nlos * I`.
    Uncorrelated,
}

/// Physical and system parameters of one scenario.
///
/// Defaults reproduce the reference high-speed-train setup: 10 APs with 4
/// antennas along 1 km of track, 8 TAs on a 200 m train at 300 km/h, 1.8 GHz
/// carrier, 20 MHz bandwidth, 8-subcarrier coherence blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    /// Number of APs (L).
    pub num_aps: usize,
    /// Antennas per AP (N).
    pub antennas_per_ap: usize,
    /// Number of train antennas (K).
    pub num_tas: usize,
    /// Length of the railway segment covered by APs, m.
    pub railway_length: f64,
    /// Train length, m.
    pub train_length: f64,
    /// Perpendicular distance between track and AP line, m.
    pub track_distance: f64,
    /// Carrier frequency, Hz.
    pub carrier_frequency: f64,
    /// System bandwidth, Hz.
    pub bandwidth: f64,
    /// OFDM symbol duration, s. When absent it is derived as
    /// `total_subcarriers / bandwidth`.
    pub symbol_duration: Option<f64>,
    /// Subcarriers per coherence block (M).
    pub subcarriers: usize,
    /// Total number of OFDM subcarriers.
    pub total_subcarriers: usize,
    /// Train speed, km/h.
    pub velocity_kmh: f64,
    /// Receiver noise power, W.
    pub noise_power: f64,
    /// Maximum TA transmit power, W.
    pub max_power: f64,
    pub pathloss_exponent: f64,
    /// Path loss at the 1 km reference distance (linear).
    pub pathloss_reference: f64,
    pub rician_factor_db: f64,
    /// Angular standard deviation of rays around each cluster's nominal AoA, degrees.
    pub cluster_asd_deg: f64,
    /// Half-width of the uniform window for nominal cluster AoAs, degrees.
    pub nominal_aoa_halfwidth_deg: f64,
    /// Number of scattering clusters per link.
    pub scattering_clusters: usize,
    /// Antenna spacing in wavelengths.
    pub antenna_spacing: f64,
    pub rician_split: RicianSplit,
    pub correlation: CorrelationModel,
}

/// Receiver noise figure of the default noise power, dB.
pub const NOISE_FIGURE_DB: f64 = 15.0;

/// Thermal noise over `bandwidth` with a [`NOISE_FIGURE_DB`] receiver noise figure, W.
pub fn thermal_noise_power(bandwidth: f64) -> f64 {
    let dbm = -174.0 + 10.0 * bandwidth.log10() + NOISE_FIGURE_DB;
    10f64.powf(dbm / 10.0) * 1e-3
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            num_aps: 10,
            antennas_per_ap: 4,
            num_tas: 8,
            railway_length: 1000.0,
            train_length: 200.0,
            track_distance: 50.0,
            carrier_frequency: 1.8e9,
            bandwidth: 20e6,
            symbol_duration: Some(67e-6),
            subcarriers: 8,
            total_subcarriers: 1024,
            velocity_kmh: 300.0,
            noise_power: thermal_noise_power(20e6),
            max_power: 0.2,
            pathloss_exponent: 3.0,
            pathloss_reference: 1e-12,
            rician_factor_db: 20.0,
            cluster_asd_deg: 30.0,
            nominal_aoa_halfwidth_deg: 30.0,
            scattering_clusters: 6,
            antenna_spacing: 0.5,
            rician_split: RicianSplit::SquareRoot,
            correlation: CorrelationModel::Correlated,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let positive_count = |key: &str, v: usize, min: usize| {
            if v < min {
                Err(Error::config(key, format!("must be at least {min}, got {v}")))
            } else {
                Ok(())
            }
        };
        positive_count("num_aps", self.num_aps, 1)?;
        positive_count("antennas_per_ap", self.antennas_per_ap, 1)?;
        positive_count("num_tas", self.num_tas, 1)?;
        positive_count("subcarriers", self.subcarriers, 2)?;
        positive_count("total_subcarriers", self.total_subcarriers, 1)?;
        positive_count("scattering_clusters", self.scattering_clusters, 1)?;

        let finite_positive = |key: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::config(key, format!("must be finite and > 0, got {v}")))
            }
        };
        finite_positive("railway_length", self.railway_length)?;
        finite_positive("train_length", self.train_length)?;
        finite_positive("track_distance", self.track_distance)?;
        finite_positive("carrier_frequency", self.carrier_frequency)?;
        finite_positive("bandwidth", self.bandwidth)?;
        finite_positive("pathloss_exponent", self.pathloss_exponent)?;
        finite_positive("pathloss_reference", self.pathloss_reference)?;
        if let Some(ts) = self.symbol_duration {
            finite_positive("symbol_duration", ts)?;
        }

        let finite_nonneg = |key: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::config(key, format!("must be finite and >= 0, got {v}")))
            }
        };
        finite_nonneg("velocity_kmh", self.velocity_kmh)?;
        finite_nonneg("noise_power", self.noise_power)?;
        finite_nonneg("max_power", self.max_power)?;
        finite_nonneg("cluster_asd_deg", self.cluster_asd_deg)?;
        finite_nonneg("nominal_aoa_halfwidth_deg", self.nominal_aoa_halfwidth_deg)?;

        if !(self.antenna_spacing > 0.0 && self.antenna_spacing <= 0.5) {
            return Err(Error::config(
                "antenna_spacing",
                format!("must lie in (0, 0.5], got {}", self.antenna_spacing),
            ));
        }
        if self.rician_factor_db.is_nan() || self.rician_factor_db == f64::INFINITY {
            return Err(Error::config(
                "rician_factor_db",
                "must be a number below +inf (use -inf for pure NLoS)",
            ));
        }
        if self.subcarriers < 8 {
            log::warn!(
                "coherence block of {} subcarriers; at least 8 are needed for the block ICI model to be representative",
                self.subcarriers
            );
        }
        Ok(())
    }

    /// Train speed in m/s.
    pub fn velocity_mps(&self) -> f64 {
        self.velocity_kmh / 3.6
    }

    pub fn symbol_duration(&self) -> f64 {
        self.symbol_duration
            .unwrap_or(self.total_subcarriers as f64 / self.bandwidth)
    }

    /// Maximum normalized Doppler offset `f v T_s / c`.
    pub fn max_normalized_doppler(&self) -> f64 {
        self.carrier_frequency * self.velocity_mps() * self.symbol_duration() / SPEED_OF_LIGHT
    }

    /// Rician factor on the linear scale.
    pub fn rician_factor(&self) -> f64 {
        10f64.powf(self.rician_factor_db / 10.0)
    }

    /// Large-scale fading at `distance` meters.
    pub fn large_scale_fading(&self, distance: f64) -> f64 {
        self.pathloss_reference * (distance / 1000.0).powf(-self.pathloss_exponent)
    }

    /// Uniform AP abscissas `(l - 1/2) d_rai / L`.
    pub fn ap_abscissas(&self) -> Vec<f64> {
        let spacing = self.railway_length / self.num_aps as f64;
        (0..self.num_aps).map(|l| (l as f64 + 0.5) * spacing).collect()
    }

    /// Initial TA abscissas `(k - 1/2) d_hst / K`, measured from the rear of the train.
    pub fn ta_abscissas(&self) -> Vec<f64> {
        let spacing = self.train_length / self.num_tas as f64;
        (0..self.num_tas).map(|k| (k as f64 + 0.5) * spacing).collect()
    }
}

/// Positions, distances, angles and large-scale fading at one train position.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometrySnapshot {
    pub ap_positions: Vec<[f64; 2]>,
    pub ta_positions: Vec<[f64; 2]>,
    /// Train displacement, m.
    pub displacement: f64,
    /// `d_kl`, K x L, m.
    pub distances: DMatrix<f64>,
    /// `sin(phi_kl)`, K x L.
    pub aoa_sines: DMatrix<f64>,
    /// `zeta_kl`, K x L.
    pub large_scale: DMatrix<f64>,
}

impl GeometrySnapshot {
    pub fn num_tas(&self) -> usize {
        self.ta_positions.len()
    }

    pub fn num_aps(&self) -> usize {
        self.ap_positions.len()
    }
}

/// Builds the snapshot for train displacement `d_tr` with the default AP layout.
pub fn build_snapshot(config: &ScenarioConfig, d_tr: f64) -> Result<GeometrySnapshot> {
    build_snapshot_with_aps(config, &config.ap_abscissas(), d_tr)
}

/// Builds a snapshot with explicit AP abscissas (all at `y = d_ve`).
///
/// Used for the co-located cellular base station and for degenerate layouts
/// in tests.
pub fn build_snapshot_with_aps(
    config: &ScenarioConfig,
    ap_abscissas: &[f64],
    d_tr: f64,
) -> Result<GeometrySnapshot> {
    config.validate()?;
    if !d_tr.is_finite() {
        return Err(Error::config("d_tr", format!("train displacement must be finite, got {d_tr}")));
    }
    if ap_abscissas.is_empty() || ap_abscissas.iter().any(|a| !a.is_finite()) {
        return Err(Error::config("ap_abscissas", "need at least one finite AP abscissa"));
    }
    let d_ve = config.track_distance;
    let ap_positions: Vec<[f64; 2]> = ap_abscissas.iter().map(|&a| [a, d_ve]).collect();
    let ta_positions: Vec<[f64; 2]> = config
        .ta_abscissas()
        .into_iter()
        .map(|a| [a + d_tr, 0.0])
        .collect();

    let (k_count, l_count) = (ta_positions.len(), ap_positions.len());
    let mut distances = DMatrix::zeros(k_count, l_count);
    let mut aoa_sines = DMatrix::zeros(k_count, l_count);
    let mut large_scale = DMatrix::zeros(k_count, l_count);
    for (k, ta) in ta_positions.iter().enumerate() {
        for (l, ap) in ap_positions.iter().enumerate() {
            let horizontal = ap[0] - ta[0];
            let d = horizontal.hypot(ap[1] - ta[1]);
            distances[(k, l)] = d;
            aoa_sines[(k, l)] = (horizontal / d).clamp(-1.0, 1.0);
            large_scale[(k, l)] = config.large_scale_fading(d);
        }
    }
    Ok(GeometrySnapshot {
        ap_positions,
        ta_positions,
        displacement: d_tr,
        distances,
        aoa_sines,
        large_scale,
    })
}

/// Train displacements `start, start + step, ...` up to and including `end`.
pub fn sweep_displacements(start: f64, end: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::config("step", format!("must be > 0, got {step}")));
    }
    if !(start.is_finite() && end.is_finite()) || start > end {
        return Err(Error::config(
            "start",
            format!("need finite start <= end, got {start}..{end}"),
        ));
    }
    // Small slack so that e.g. 0.1 steps do not lose the end point to rounding.
    let count = ((end - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|i| start + i as f64 * step).collect())
}

/// One snapshot per displacement in the inclusive sweep.
pub fn sweep_positions(
    config: &ScenarioConfig,
    start: f64,
    end: f64,
    step: f64,
) -> Result<Vec<GeometrySnapshot>> {
    sweep_displacements(start, end, step)?
        .into_iter()
        .map(|d| build_snapshot(config, d))
        .collect()
}
