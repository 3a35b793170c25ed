//! Receive combining and instantaneous SINRs under inter-carrier
//! interference.
//!
//! All architectures share one structure: a desired effective vector
//! `f_k[0]`, interfering effective vectors `f_i[m - s]` for every TA and
//! subcarrier, and a coloured-noise matrix
//! `sum_i p_i sum_m I_D^2[m - s] C_i + sigma^2 I` that accounts for channel
//! estimation error. [`SinrModel`] holds these for one receiver (the CPU,
//! a single AP, or a cellular BS) at one subcarrier.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{stack, ChannelRealization, ChannelStatistics};
use crate::error::{Error, Result};
use crate::ici::{IciProfile, C64};
use crate::linalg::{add_outer, hermitian_solve, quad_form, CMatrix, CVector};

/// Combining rule applied to the channel estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Combiner {
    Mmse,
    Mr,
}

/// Receiver architecture tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Architecture {
    CentralizedMmse,
    CentralizedMr,
    LocalMmse,
    LocalMr,
    SmallcellMmse,
    SmallcellMr,
    CellularMmse,
    CellularMr,
}

impl Architecture {
    pub fn combiner(self) -> Combiner {
        match self {
            Architecture::CentralizedMmse
            | Architecture::LocalMmse
            | Architecture::SmallcellMmse
            | Architecture::CellularMmse => Combiner::Mmse,
            _ => Combiner::Mr,
        }
    }
}

/// `I_il[delta] h_bar_il + I_D[delta] h_hat_il` for one AP.
pub fn effective_vector_local(
    real: &ChannelRealization,
    ici: &IciProfile,
    i: usize,
    l: usize,
    delta: i64,
) -> CVector {
    real.los(i, l) * ici.los(i, l, delta) + real.hhat(i, l) * C64::new(ici.nlos(delta), 0.0)
}

/// Collective effective vector, stacked over all APs.
pub fn effective_vector(real: &ChannelRealization, ici: &IciProfile, i: usize, delta: i64) -> CVector {
    let parts: Vec<CVector> = (0..real.num_aps)
        .map(|l| effective_vector_local(real, ici, i, l, delta))
        .collect();
    stack(parts.iter())
}

/// Interference structure seen by one receiver at one subcarrier.
#[derive(Debug, Clone)]
pub struct SinrModel {
    /// `vectors[i]` lists `(delta, f_i[delta])` over the contributing subcarriers.
    vectors: Vec<Vec<(i64, CVector)>>,
    powers: Vec<f64>,
    /// `sum_i p_i sum_m I_D^2 C_i + sigma^2 I`.
    colored: CMatrix,
    noise_power: f64,
}

impl SinrModel {
    /// Assembles a model from explicit parts.
    pub fn from_parts(
        vectors: Vec<Vec<(i64, CVector)>>,
        powers: Vec<f64>,
        colored: CMatrix,
        noise_power: f64,
    ) -> Result<Self> {
        let dim = colored.nrows();
        if vectors.len() != powers.len() {
            return Err(Error::Dimension(format!(
                "{} TAs but {} powers",
                vectors.len(),
                powers.len()
            )));
        }
        if colored.ncols() != dim || vectors.iter().flatten().any(|(_, f)| f.len() != dim) {
            return Err(Error::Dimension(format!("effective vectors must have length {dim}")));
        }
        if vectors.iter().any(|v| !v.iter().any(|(d, _)| *d == 0)) {
            return Err(Error::Dimension("every TA needs a zero-offset vector".into()));
        }
        Ok(SinrModel {
            vectors,
            powers,
            colored,
            noise_power,
        })
    }

    /// Fully centralized processing at the CPU (vectors of length `L N`).
    pub fn centralized(
        real: &ChannelRealization,
        stats: &ChannelStatistics,
        ici: &IciProfile,
        powers: &[f64],
        s: usize,
    ) -> Result<Self> {
        check_inputs(real, stats, ici, powers)?;
        let offsets = ici.offsets(s);
        let vectors = (0..real.num_tas)
            .map(|i| {
                offsets
                    .iter()
                    .map(|&(_, d)| (d, effective_vector(real, ici, i, d)))
                    .collect()
            })
            .collect();
        let n = stats.antennas;
        let dim = n * stats.num_aps;
        let nlos_sum = ici.nlos_power_sum(s);
        let mut colored = CMatrix::identity(dim, dim) * C64::new(stats.noise_power, 0.0);
        for l in 0..stats.num_aps {
            let mut block = colored.view_mut((l * n, l * n), (n, n));
            for (i, &p) in powers.iter().enumerate() {
                block += &stats.pair(i, l).c * C64::new(p * nlos_sum, 0.0);
            }
        }
        SinrModel::from_parts(vectors, powers.to_vec(), colored, stats.noise_power)
    }

    /// Local processing at AP `l` using only that AP's quantities.
    pub fn local(
        real: &ChannelRealization,
        stats: &ChannelStatistics,
        ici: &IciProfile,
        powers: &[f64],
        s: usize,
        l: usize,
    ) -> Result<Self> {
        check_inputs(real, stats, ici, powers)?;
        if l >= stats.num_aps {
            return Err(Error::Dimension(format!("AP index {l} out of range")));
        }
        let offsets = ici.offsets(s);
        let vectors = (0..real.num_tas)
            .map(|i| {
                offsets
                    .iter()
                    .map(|&(_, d)| (d, effective_vector_local(real, ici, i, l, d)))
                    .collect()
            })
            .collect();
        let n = stats.antennas;
        let nlos_sum = ici.nlos_power_sum(s);
        let mut colored = CMatrix::identity(n, n) * C64::new(stats.noise_power, 0.0);
        for (i, &p) in powers.iter().enumerate() {
            colored += &stats.pair(i, l).c * C64::new(p * nlos_sum, 0.0);
        }
        SinrModel::from_parts(vectors, powers.to_vec(), colored, stats.noise_power)
    }

    pub fn dim(&self) -> usize {
        self.colored.nrows()
    }

    pub fn num_tas(&self) -> usize {
        self.vectors.len()
    }

    /// `f_k[0]`.
    pub fn desired(&self, k: usize) -> &CVector {
        self.vectors[k]
            .iter()
            .find(|(d, _)| *d == 0)
            .map(|(_, f)| f)
            .expect("validated in from_parts")
    }

    /// Effective vectors `(delta, f_i[delta])` of TA `i`.
    pub fn effective(&self, i: usize) -> &[(i64, CVector)] {
        &self.vectors[i]
    }

    /// Signal and interference-plus-noise power of TA `k` with combiner `v`.
    pub fn signal_and_interference(&self, k: usize, v: &CVector) -> (f64, f64) {
        let mut signal = 0.0;
        let mut interference = 0.0;
        for (i, list) in self.vectors.iter().enumerate() {
            let p = self.powers[i];
            for (d, f) in list {
                let g = p * v.dotc(f).norm_sqr();
                if i == k && *d == 0 {
                    signal = g;
                } else {
                    interference += g;
                }
            }
        }
        (signal, interference + quad_form(v, &self.colored))
    }

    /// Instantaneous SINR of TA `k` for an arbitrary combiner.
    ///
    /// A zero combiner gives 0; an interference-free nonzero signal gives
    /// `f64::INFINITY`.
    pub fn sinr(&self, k: usize, v: &CVector) -> f64 {
        let (signal, denom) = self.signal_and_interference(k, v);
        ratio(signal, denom)
    }

    /// `sum_i p_i sum_m (f_i f_i^H) + colored`.
    pub fn total_covariance(&self) -> CMatrix {
        let mut a = self.colored.clone();
        for (i, list) in self.vectors.iter().enumerate() {
            for (_, f) in list {
                add_outer(&mut a, f, self.powers[i]);
            }
        }
        a
    }

    /// MMSE combiner `p_k A^{-1} f_k[0]`.
    pub fn mmse_combiner(&self, k: usize) -> Result<CVector> {
        self.mmse_combiner_with(&self.total_covariance(), k)
    }

    fn mmse_combiner_with(&self, total: &CMatrix, k: usize) -> Result<CVector> {
        let x = hermitian_solve(total, self.desired(k))?;
        Ok(x * C64::new(self.powers[k], 0.0))
    }

    /// Maximal SINR `p_k f^H B^{-1} f`, where `B` excludes TA `k`'s own
    /// desired term.
    pub fn mmse_sinr(&self, k: usize) -> Result<f64> {
        self.mmse_sinr_with(&self.total_covariance(), k)
    }

    fn mmse_sinr_with(&self, total: &CMatrix, k: usize) -> Result<f64> {
        let f = self.desired(k);
        let p = self.powers[k];
        if p == 0.0 || f.norm_squared() == 0.0 {
            return Ok(0.0);
        }
        let mut b = total.clone();
        add_outer(&mut b, f, -p);
        match hermitian_solve(&b, f) {
            Ok(x) => Ok(p * f.dotc(&x).re.max(0.0)),
            // noiseless: B may be singular while A is not
            Err(e) if self.noise_power == 0.0 => match self.mmse_combiner_with(total, k) {
                Ok(v) => Ok(self.sinr(k, &v)),
                Err(_) => Err(e),
            },
            Err(e) => Err(e),
        }
    }

    /// Maximal SINRs for every TA.
    pub fn mmse_sinrs(&self) -> Result<Vec<f64>> {
        let total = self.total_covariance();
        (0..self.num_tas()).map(|k| self.mmse_sinr_with(&total, k)).collect()
    }

    /// MMSE combiners for every TA.
    pub fn mmse_combiners(&self) -> Result<Vec<CVector>> {
        let total = self.total_covariance();
        (0..self.num_tas())
            .map(|k| self.mmse_combiner_with(&total, k))
            .collect()
    }
}

fn ratio(signal: f64, denom: f64) -> f64 {
    if signal <= 0.0 {
        0.0
    } else if denom <= 0.0 {
        f64::INFINITY
    } else {
        signal / denom
    }
}

fn check_inputs(
    real: &ChannelRealization,
    stats: &ChannelStatistics,
    ici: &IciProfile,
    powers: &[f64],
) -> Result<()> {
    let shape = (stats.num_tas, stats.num_aps);
    if (real.num_tas, real.num_aps) != shape || (ici.num_tas(), ici.num_aps()) != shape {
        return Err(Error::Dimension(format!(
            "statistics are {shape:?}, realization ({}, {}), ICI profile ({}, {})",
            real.num_tas,
            real.num_aps,
            ici.num_tas(),
            ici.num_aps()
        )));
    }
    if powers.len() != stats.num_tas {
        return Err(Error::Dimension(format!(
            "{} powers for {} TAs",
            powers.len(),
            stats.num_tas
        )));
    }
    Ok(())
}

/// MR combiner at one AP: the local estimate `g_hat_kl`.
pub fn mr_local(real: &ChannelRealization, k: usize, l: usize) -> CVector {
    real.ghat(k, l).clone()
}

/// MR combiner for collective processing: the stacked estimate.
pub fn mr_collective(real: &ChannelRealization, k: usize) -> CVector {
    real.ghat_stacked(k)
}

/// SINRs of all TAs under centralized processing for one realization.
pub fn centralized_sinrs(
    real: &ChannelRealization,
    stats: &ChannelStatistics,
    ici: &IciProfile,
    powers: &[f64],
    s: usize,
    combiner: Combiner,
) -> Result<Vec<f64>> {
    let model = SinrModel::centralized(real, stats, ici, powers, s)?;
    match combiner {
        Combiner::Mmse => model.mmse_sinrs(),
        Combiner::Mr => Ok((0..real.num_tas)
            .map(|k| model.sinr(k, &mr_collective(real, k)))
            .collect()),
    }
}

/// Per-AP SINRs (`K x L`, row-major by TA) under local processing.
pub fn local_sinrs(
    real: &ChannelRealization,
    stats: &ChannelStatistics,
    ici: &IciProfile,
    powers: &[f64],
    s: usize,
    combiner: Combiner,
) -> Result<Vec<Vec<f64>>> {
    let mut out = vec![vec![0.0; stats.num_aps]; stats.num_tas];
    for l in 0..stats.num_aps {
        let model = SinrModel::local(real, stats, ici, powers, s, l)?;
        let sinrs = match combiner {
            Combiner::Mmse => model.mmse_sinrs()?,
            Combiner::Mr => (0..real.num_tas)
                .map(|k| model.sinr(k, &mr_local(real, k, l)))
                .collect(),
        };
        for (k, v) in sinrs.into_iter().enumerate() {
            out[k][l] = v;
        }
    }
    Ok(out)
}

/// Local combiners `v_kl` for every TA at AP `l`.
pub fn local_combiners(
    real: &ChannelRealization,
    stats: &ChannelStatistics,
    ici: &IciProfile,
    powers: &[f64],
    s: usize,
    l: usize,
    combiner: Combiner,
) -> Result<Vec<CVector>> {
    match combiner {
        Combiner::Mr => Ok((0..real.num_tas).map(|k| mr_local(real, k, l)).collect()),
        Combiner::Mmse => SinrModel::local(real, stats, ici, powers, s, l)?.mmse_combiners(),
    }
}

/// `log2(1 + sinr)`, with `+inf` mapped to `+inf`.
pub fn spectral_efficiency(sinr: f64) -> f64 {
    (1.0 + sinr).log2()
}

/// Picks the serving AP with the highest SE; the lowest index wins ties.
pub fn smallcell_select(se_by_ap: &[f64]) -> (f64, usize) {
    let mut best = (f64::NEG_INFINITY, 0);
    for (l, &se) in se_by_ap.iter().enumerate() {
        if se > best.0 {
            best = (se, l);
        }
    }
    best
}

/// Ergodic SE over `trials` fresh realizations.
///
/// Returns a `K x L` matrix of per-AP averages of `log2(1 + SINR_kl)`.
pub fn local_ergodic_se<R: Rng + ?Sized>(
    stats: &ChannelStatistics,
    ici: &IciProfile,
    powers: &[f64],
    s: usize,
    combiner: Combiner,
    trials: usize,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    let mut acc = vec![vec![0.0; stats.num_aps]; stats.num_tas];
    for _ in 0..trials {
        let real = ChannelRealization::draw(stats, rng);
        let sinrs = local_sinrs(&real, stats, ici, powers, s, combiner)?;
        for (row, sinr_row) in acc.iter_mut().zip(&sinrs) {
            for (a, &x) in row.iter_mut().zip(sinr_row) {
                *a += spectral_efficiency(x);
            }
        }
    }
    let n = trials.max(1) as f64;
    Ok(acc
        .into_iter()
        .map(|row| row.into_iter().map(|x| x / n).collect())
        .collect())
}

/// Small-cell SE: each TA is served by the single AP that gives it the
/// highest ergodic SE. Returns `(SE_k, serving AP)` per TA.
pub fn smallcell_se<R: Rng + ?Sized>(
    stats: &ChannelStatistics,
    ici: &IciProfile,
    powers: &[f64],
    s: usize,
    combiner: Combiner,
    trials: usize,
    rng: &mut R,
) -> Result<Vec<(f64, usize)>> {
    let per_ap = local_ergodic_se(stats, ici, powers, s, combiner, trials, rng)?;
    Ok(per_ap.iter().map(|row| smallcell_select(row)).collect())
}

/// Ergodic SE of centralized processing over `trials` realizations.
pub fn centralized_se<R: Rng + ?Sized>(
    stats: &ChannelStatistics,
    ici: &IciProfile,
    powers: &[f64],
    s: usize,
    combiner: Combiner,
    trials: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let mut acc = vec![0.0; stats.num_tas];
    for _ in 0..trials {
        let real = ChannelRealization::draw(stats, rng);
        let sinrs = centralized_sinrs(&real, stats, ici, powers, s, combiner)?;
        for (a, x) in acc.iter_mut().zip(sinrs) {
            *a += spectral_efficiency(x);
        }
    }
    Ok(acc.into_iter().map(|x| x / trials.max(1) as f64).collect())
}

/// Cellular SE: one BS with all `L N` antennas, i.e. centralized
/// processing over single-AP statistics.
pub fn cellular_se<R: Rng + ?Sized>(
    bs_stats: &ChannelStatistics,
    bs_ici: &IciProfile,
    powers: &[f64],
    s: usize,
    combiner: Combiner,
    trials: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if bs_stats.num_aps != 1 {
        return Err(Error::Dimension(format!(
            "cellular statistics must describe one BS, got {} APs",
            bs_stats.num_aps
        )));
    }
    centralized_se(bs_stats, bs_ici, powers, s, combiner, trials, rng)
}
