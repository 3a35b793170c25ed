//! Experiment orchestration: position and speed sweeps over every receiver
//! architecture with seeded, order-independent randomness.
//!
//! Randomness is keyed by `(seed, position index, trial index)`: each key
//! selects its own ChaCha stream, so results do not depend on the number of
//! worker threads. All architectures at one position share the same
//! statistics and channel realizations, and so do all speeds.

use std::io::Write;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channel::{build_statistics, build_statistics_with_antennas, ChannelRealization, ChannelStatistics};
use crate::clustering::{extract_generic_coeffs, form_clusters, ClusterAssignment};
use crate::combining::{centralized_sinrs, local_combiners, local_sinrs, spectral_efficiency, Combiner};
use crate::error::{Error, Result};
use crate::geometry::{build_snapshot, build_snapshot_with_aps, GeometrySnapshot, ScenarioConfig};
use crate::ici::IciProfile;
use crate::linalg::CVector;
use crate::lsfd::{mf_weights, ClosedFormStats, DRange, LsfdEstimate, LsfdMoments};
use crate::power::{fractional_power, maxmin_power, maxsum_power, PowerScheme};

/// Per-TA SE values above this are clipped when reported, bit/s/Hz.
pub const SE_CAP: f64 = 30.0;

/// Trials per work unit. Chunks are reduced in index order.
const CHUNK: usize = 8;

/// Default max-min tolerance on the SINR spread.
pub const MAXMIN_TOLERANCE: f64 = 1e-4;
/// Default max-sum relative tolerance on the surrogate objective.
pub const MAXSUM_TOLERANCE: f64 = 1e-6;
pub const POWER_MAX_ITER: usize = 10_000;

/// Receiver architecture evaluated by the harness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Arch {
    CentralizedMmse,
    CentralizedMr,
    /// Local MMSE with optimal LSFD weights, moments by Monte Carlo.
    LocalMmseLsfd,
    LocalMmseMf,
    /// Local MR with optimal LSFD weights, closed form.
    LocalMrLsfd,
    LocalMrMf,
    SmallcellMmse,
    SmallcellMr,
    CellularMmse,
    CellularMr,
}

impl Arch {
    pub const ALL: [Arch; 10] = [
        Arch::CentralizedMmse,
        Arch::CentralizedMr,
        Arch::LocalMmseLsfd,
        Arch::LocalMmseMf,
        Arch::LocalMrLsfd,
        Arch::LocalMrMf,
        Arch::SmallcellMmse,
        Arch::SmallcellMr,
        Arch::CellularMmse,
        Arch::CellularMr,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Arch::CentralizedMmse => "centralized-mmse",
            Arch::CentralizedMr => "centralized-mr",
            Arch::LocalMmseLsfd => "local-mmse-lsfd",
            Arch::LocalMmseMf => "local-mmse-mf",
            Arch::LocalMrLsfd => "local-mr-lsfd",
            Arch::LocalMrMf => "local-mr-mf",
            Arch::SmallcellMmse => "smallcell-mmse",
            Arch::SmallcellMr => "smallcell-mr",
            Arch::CellularMmse => "cellular-mmse",
            Arch::CellularMr => "cellular-mr",
        }
    }

    pub fn combiner(self) -> Combiner {
        match self {
            Arch::CentralizedMmse
            | Arch::LocalMmseLsfd
            | Arch::LocalMmseMf
            | Arch::SmallcellMmse
            | Arch::CellularMmse => Combiner::Mmse,
            _ => Combiner::Mr,
        }
    }

    /// Needs channel realizations (anything but closed-form local MR).
    pub fn is_monte_carlo(self) -> bool {
        !matches!(self, Arch::LocalMrLsfd | Arch::LocalMrMf)
    }
}

impl std::fmt::Display for Arch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Arch::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::config("architectures", format!("unknown architecture '{s}'")))
    }
}

/// Whether ICI is modeled or the single-carrier reference path is used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum IciMode {
    #[default]
    Doppler,
    Free,
}

/// One experiment: a grid of train positions and speeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    pub scenario: ScenarioConfig,
    /// Train displacements `d_tr`, m.
    pub positions: Vec<f64>,
    /// Speeds, km/h. Empty means the scenario's own speed.
    pub speeds_kmh: Vec<f64>,
    pub architectures: Vec<Arch>,
    pub trials: usize,
    pub seed: u64,
    pub power_scheme: PowerScheme,
    /// Clustering threshold in dB; `None` lets every AP serve every TA.
    pub cluster_theta_db: Option<f64>,
    pub ici_mode: IciMode,
    /// Also count realizations where MMSE loses to MR.
    pub check_dominance: bool,
}

impl ExperimentPlan {
    /// Plan with every position of a uniform sweep of `count` points across
    /// the covered track (`0 ..= d_rai - d_hst`).
    pub fn new(scenario: ScenarioConfig, architectures: Vec<Arch>, count: usize, trials: usize, seed: u64) -> Self {
        let positions = track_positions(&scenario, count);
        ExperimentPlan {
            scenario,
            positions,
            speeds_kmh: Vec::new(),
            architectures,
            trials,
            seed,
            power_scheme: PowerScheme::Full,
            cluster_theta_db: None,
            ici_mode: IciMode::Doppler,
            check_dominance: false,
        }
    }

    pub fn speeds(&self) -> Vec<f64> {
        if self.speeds_kmh.is_empty() {
            vec![self.scenario.velocity_kmh]
        } else {
            self.speeds_kmh.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.scenario.validate()?;
        if self.architectures.is_empty() {
            return Err(Error::config("architectures", "at least one architecture is required"));
        }
        if self.trials == 0 {
            return Err(Error::config("trials", "must be at least 1"));
        }
        if self.positions.is_empty() || self.positions.iter().any(|p| !p.is_finite()) {
            return Err(Error::config("positions", "need at least one finite position"));
        }
        if self.speeds_kmh.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::config("speeds_kmh", "speeds must be finite and >= 0"));
        }
        if let Some(t) = self.cluster_theta_db {
            if t.is_nan() || t < 0.0 {
                return Err(Error::config("cluster_theta_db", format!("must be >= 0, got {t}")));
            }
        }
        Ok(())
    }
}

/// `count` evenly spaced displacements from 0 to `d_rai - d_hst` inclusive.
pub fn track_positions(scenario: &ScenarioConfig, count: usize) -> Vec<f64> {
    let span = (scenario.railway_length - scenario.train_length).max(0.0);
    match count {
        0 => Vec::new(),
        1 => vec![0.0],
        n => (0..n).map(|i| span * i as f64 / (n - 1) as f64).collect(),
    }
}

/// One (speed, position, architecture) result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub speed_kmh: f64,
    pub position: f64,
    pub architecture: Arch,
    /// `(1/M) sum_s SE_k[s]` per TA.
    pub per_ta: Vec<f64>,
    /// Mean over TAs and subcarriers.
    pub block_se: f64,
    pub worst_se: f64,
    pub sum_se: f64,
    /// Wall time of the whole position, s.
    pub wall_time: f64,
}

/// Rows in (position, speed, architecture) order plus run metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub seed: u64,
    pub rows: Vec<ResultRow>,
    /// Realization-level comparisons of MMSE against MR.
    pub dominance_checks: usize,
    pub dominance_violations: usize,
}

/// Empirical CDF summary with linear interpolation between order statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cdf {
    pub min: f64,
    /// 95%-likely value.
    pub p5: f64,
    pub p50: f64,
    pub p95: f64,
    pub max: f64,
}

/// Quantile `q` of sorted data, interpolating at rank `(n - 1) q`.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let rank = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (rank - lo as f64)
}

pub fn compute_cdf(values: &[f64]) -> Result<Cdf> {
    if values.is_empty() {
        return Err(Error::Numerical("CDF of an empty series".into()));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::Numerical("CDF of a series containing NaN".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    Ok(Cdf {
        min: sorted[0],
        p5: quantile(&sorted, 0.05),
        p50: quantile(&sorted, 0.5),
        p95: quantile(&sorted, 0.95),
        max: sorted[sorted.len() - 1],
    })
}

/// Per (architecture, speed) aggregate over positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryEntry {
    pub architecture: Arch,
    pub speed_kmh: f64,
    pub positions: usize,
    pub average_se: f64,
    pub worst_ta_average_se: f64,
    pub sum_se_average: f64,
    pub cdf: Cdf,
}

impl ResultTable {
    pub fn rows_for(&self, arch: Arch, speed_kmh: f64) -> impl Iterator<Item = &ResultRow> {
        self.rows
            .iter()
            .filter(move |r| r.architecture == arch && r.speed_kmh == speed_kmh)
    }

    /// Block SE per position.
    pub fn series(&self, arch: Arch, speed_kmh: f64) -> Vec<f64> {
        self.rows_for(arch, speed_kmh).map(|r| r.block_se).collect()
    }

    fn mean_of(&self, arch: Arch, speed_kmh: f64, f: impl Fn(&ResultRow) -> f64) -> f64 {
        let v: Vec<f64> = self.rows_for(arch, speed_kmh).map(f).collect();
        if v.is_empty() {
            f64::NAN
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    }

    /// Average SE over positions.
    pub fn average_se(&self, arch: Arch, speed_kmh: f64) -> f64 {
        self.mean_of(arch, speed_kmh, |r| r.block_se)
    }

    /// Per-position worst-TA SE, averaged over positions.
    pub fn worst_ta_average(&self, arch: Arch, speed_kmh: f64) -> f64 {
        self.mean_of(arch, speed_kmh, |r| r.worst_se)
    }

    pub fn sum_se_average(&self, arch: Arch, speed_kmh: f64) -> f64 {
        self.mean_of(arch, speed_kmh, |r| r.sum_se)
    }

    pub fn cdf(&self, arch: Arch, speed_kmh: f64) -> Result<Cdf> {
        compute_cdf(&self.series(arch, speed_kmh))
    }

    pub fn summary(&self) -> Result<Vec<SummaryEntry>> {
        let mut keys: Vec<(Arch, f64)> = Vec::new();
        for r in &self.rows {
            if !keys.iter().any(|&(a, v)| a == r.architecture && v == r.speed_kmh) {
                keys.push((r.architecture, r.speed_kmh));
            }
        }
        keys.into_iter()
            .map(|(a, v)| {
                Ok(SummaryEntry {
                    architecture: a,
                    speed_kmh: v,
                    positions: self.rows_for(a, v).count(),
                    average_se: self.average_se(a, v),
                    worst_ta_average_se: self.worst_ta_average(a, v),
                    sum_se_average: self.sum_se_average(a, v),
                    cdf: self.cdf(a, v)?,
                })
            })
            .collect()
    }

    /// `speed_kmh,position_m,architecture,block_se,worst_se,sum_se,wall_time_s,se_ta0,...`
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let k = self.rows.first().map_or(0, |r| r.per_ta.len());
        let mut header: Vec<String> = [
            "speed_kmh",
            "position_m",
            "architecture",
            "block_se",
            "worst_se",
            "sum_se",
            "wall_time_s",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        header.extend((0..k).map(|i| format!("se_ta{i}")));
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec = vec![
                r.speed_kmh.to_string(),
                r.position.to_string(),
                r.architecture.to_string(),
                r.block_se.to_string(),
                r.worst_se.to_string(),
                r.sum_se.to_string(),
                format!("{:.6}", r.wall_time),
            ];
            rec.extend(r.per_ta.iter().map(|x| x.to_string()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

const DOMAIN_CELL_FREE: u64 = 0;
const DOMAIN_CELLULAR: u64 = 1;

/// RNG for `(position, slot)`; slot 0 draws statistics, slot `t + 1` trial `t`.
pub fn stream_rng(seed: u64, domain: u64, position: usize, slot: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ domain.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    rng.set_stream(((position as u64) << 32) | slot);
    rng
}

/// Speed-dependent state at one position.
struct SpeedContext {
    ici: IciProfile,
    bs_ici: Option<IciProfile>,
    powers: Vec<f64>,
}

struct PositionContext {
    stats: ChannelStatistics,
    bs_stats: Option<ChannelStatistics>,
    assignment: ClusterAssignment,
    speeds: Vec<SpeedContext>,
}

fn ici_for(plan: &ExperimentPlan, cfg: &ScenarioConfig, snap: &GeometrySnapshot) -> IciProfile {
    match plan.ici_mode {
        IciMode::Doppler => IciProfile::new(cfg, snap),
        IciMode::Free => IciProfile::ici_free(snap.num_tas(), snap.num_aps(), cfg.subcarriers),
    }
}

/// Transmit powers for one position and speed.
///
/// Max-min and max-sum work on the closed-form local-MR coefficients at the
/// middle subcarrier, with LSFD weights frozen at full power.
pub fn allocate_power(
    scheme: PowerScheme,
    scenario: &ScenarioConfig,
    snap: &GeometrySnapshot,
    stats: &ChannelStatistics,
    ici: &IciProfile,
    assignment: &ClusterAssignment,
) -> Result<Vec<f64>> {
    let p_max = scenario.max_power;
    let full = vec![p_max; snap.num_tas()];
    match scheme {
        PowerScheme::Full => Ok(full),
        PowerScheme::Fractional => Ok(fractional_power(assignment, snap, p_max)?.powers),
        PowerScheme::Maxmin | PowerScheme::Maxsum => {
            let cf = ClosedFormStats::new(stats, ici, scenario.subcarriers / 2, Some(&assignment.mask))?;
            let weights = frozen_weights(&cf, &full)?;
            let coeffs = extract_generic_coeffs(&cf, &weights)?;
            let alloc = if scheme == PowerScheme::Maxmin {
                maxmin_power(&coeffs, p_max, MAXMIN_TOLERANCE, POWER_MAX_ITER)?
            } else {
                maxsum_power(&coeffs, p_max, MAXSUM_TOLERANCE, POWER_MAX_ITER)?
            };
            Ok(alloc.powers)
        }
    }
}

fn frozen_weights(cf: &ClosedFormStats, full: &[f64]) -> Result<Vec<CVector>> {
    (0..cf.num_tas())
        .map(|k| cf.optimal_weights(k, full, DRange::AllSubcarriers))
        .collect()
}

fn prepare_position(plan: &ExperimentPlan, index: usize, d_tr: f64) -> Result<(GeometrySnapshot, PositionContext)> {
    let cfg = &plan.scenario;
    let snap = build_snapshot(cfg, d_tr)?;
    let pilots = vec![cfg.max_power; cfg.num_tas];
    let mut rng = stream_rng(plan.seed, DOMAIN_CELL_FREE, index, 0);
    let stats = build_statistics(cfg, &snap, &pilots, &mut rng)?;
    let assignment = match plan.cluster_theta_db {
        Some(theta) => form_clusters(&snap, theta)?,
        None => ClusterAssignment::full(&snap),
    };
    let cellular = plan
        .architectures
        .iter()
        .any(|a| matches!(a, Arch::CellularMmse | Arch::CellularMr));
    let bs = if cellular {
        let bs_snap = build_snapshot_with_aps(cfg, &[cfg.railway_length / 2.0], d_tr)?;
        let mut rng = stream_rng(plan.seed, DOMAIN_CELLULAR, index, 0);
        let bs_stats = build_statistics_with_antennas(
            cfg,
            &bs_snap,
            cfg.num_aps * cfg.antennas_per_ap,
            &pilots,
            &mut rng,
        )?;
        Some((bs_snap, bs_stats))
    } else {
        None
    };
    let mut speeds = Vec::new();
    for v in plan.speeds() {
        let cfg_v = ScenarioConfig {
            velocity_kmh: v,
            ..cfg.clone()
        };
        let ici = ici_for(plan, &cfg_v, &snap);
        let bs_ici = bs.as_ref().map(|(bs_snap, _)| ici_for(plan, &cfg_v, bs_snap));
        let powers = allocate_power(plan.power_scheme, cfg, &snap, &stats, &ici, &assignment)?;
        speeds.push(SpeedContext { ici, bs_ici, powers });
    }
    Ok((
        snap,
        PositionContext {
            stats,
            bs_stats: bs.map(|(_, s)| s),
            assignment,
            speeds,
        },
    ))
}

/// Which Monte Carlo quantities a plan needs.
#[derive(Clone, Copy)]
struct Needs {
    central: [bool; 2],
    cellular: [bool; 2],
    small: [bool; 2],
    local_mmse: bool,
    dominance: bool,
}

impl Needs {
    fn of(plan: &ExperimentPlan) -> Self {
        let has = |a: Arch| plan.architectures.contains(&a);
        let d = plan.check_dominance;
        Needs {
            central: [has(Arch::CentralizedMmse) || d, has(Arch::CentralizedMr) || d],
            cellular: [
                has(Arch::CellularMmse) || (d && has(Arch::CellularMr)),
                has(Arch::CellularMr) || (d && has(Arch::CellularMmse)),
            ],
            small: [has(Arch::SmallcellMmse) || d, has(Arch::SmallcellMr) || d],
            local_mmse: has(Arch::LocalMmseLsfd) || has(Arch::LocalMmseMf),
            dominance: d,
        }
    }

    fn any(&self) -> bool {
        self.central.iter().chain(&self.cellular).chain(&self.small).any(|&x| x) || self.local_mmse
    }
}

const COMBINERS: [Combiner; 2] = [Combiner::Mmse, Combiner::Mr];

/// Sums over trials, laid out `[speed][combiner][s][k]` (small cells add `[l]`).
#[derive(Clone)]
struct Accum {
    central: Vec<f64>,
    cellular: Vec<f64>,
    small: Vec<f64>,
    moments: Vec<LsfdMoments>,
    checks: usize,
    violations: usize,
}

struct Dims {
    speeds: usize,
    m: usize,
    k: usize,
    l: usize,
}

impl Dims {
    fn idx(&self, v: usize, c: usize, s: usize, k: usize) -> usize {
        ((v * 2 + c) * self.m + s) * self.k + k
    }

    fn idx_l(&self, v: usize, c: usize, s: usize, k: usize, l: usize) -> usize {
        self.idx(v, c, s, k) * self.l + l
    }
}

impl Accum {
    fn new(d: &Dims, needs: &Needs) -> Self {
        let n = d.speeds * 2 * d.m * d.k;
        Accum {
            central: vec![0.0; n],
            cellular: vec![0.0; n],
            small: vec![0.0; n * d.l],
            moments: if needs.local_mmse {
                (0..d.speeds * d.m).map(|_| LsfdMoments::new(d.k, d.l)).collect()
            } else {
                Vec::new()
            },
            checks: 0,
            violations: 0,
        }
    }

    fn merge(&mut self, other: &Accum) {
        for (a, b) in [
            (&mut self.central, &other.central),
            (&mut self.cellular, &other.cellular),
            (&mut self.small, &other.small),
        ] {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        for (a, b) in self.moments.iter_mut().zip(&other.moments) {
            a.merge(b);
        }
        self.checks += other.checks;
        self.violations += other.violations;
    }
}

/// Relative slack when comparing MMSE and MR SINRs of one realization.
const DOMINANCE_SLACK: f64 = 1e-9;

fn count_dominance(acc: &mut Accum, mmse: &[f64], mr: &[f64]) {
    for (a, b) in mmse.iter().zip(mr) {
        acc.checks += 1;
        if *a < b * (1.0 - DOMINANCE_SLACK) {
            acc.violations += 1;
        }
    }
}

fn run_trial(
    plan: &ExperimentPlan,
    ctx: &PositionContext,
    needs: &Needs,
    dims: &Dims,
    index: usize,
    t: usize,
    acc: &mut Accum,
) -> Result<()> {
    let mut rng = stream_rng(plan.seed, DOMAIN_CELL_FREE, index, t as u64 + 1);
    let real = ChannelRealization::draw(&ctx.stats, &mut rng);
    let bs_real = ctx.bs_stats.as_ref().map(|bs| {
        let mut rng = stream_rng(plan.seed, DOMAIN_CELLULAR, index, t as u64 + 1);
        ChannelRealization::draw(bs, &mut rng)
    });
    let mask = &ctx.assignment.mask;
    for (v, sc) in ctx.speeds.iter().enumerate() {
        for s in 0..dims.m {
            let mut central: [Option<Vec<f64>>; 2] = [None, None];
            for c in 0..2 {
                if needs.central[c] {
                    let sinrs = centralized_sinrs(&real, &ctx.stats, &sc.ici, &sc.powers, s, COMBINERS[c])?;
                    for (k, x) in sinrs.iter().enumerate() {
                        acc.central[dims.idx(v, c, s, k)] += capped_se(*x);
                    }
                    central[c] = Some(sinrs);
                }
            }
            if let [Some(a), Some(b)] = &central {
                if needs.dominance {
                    count_dominance(acc, a, b);
                }
            }
            if let (Some(bs_real), Some(bs_stats), Some(bs_ici)) = (&bs_real, &ctx.bs_stats, &sc.bs_ici) {
                let mut cell: [Option<Vec<f64>>; 2] = [None, None];
                for c in 0..2 {
                    if needs.cellular[c] {
                        let sinrs = centralized_sinrs(bs_real, bs_stats, bs_ici, &sc.powers, s, COMBINERS[c])?;
                        for (k, x) in sinrs.iter().enumerate() {
                            acc.cellular[dims.idx(v, c, s, k)] += capped_se(*x);
                        }
                        cell[c] = Some(sinrs);
                    }
                }
                if let [Some(a), Some(b)] = &cell {
                    if needs.dominance {
                        count_dominance(acc, a, b);
                    }
                }
            }
            let mut small: [Option<Vec<Vec<f64>>>; 2] = [None, None];
            for c in 0..2 {
                if needs.small[c] {
                    let sinrs = local_sinrs(&real, &ctx.stats, &sc.ici, &sc.powers, s, COMBINERS[c])?;
                    for (k, row) in sinrs.iter().enumerate() {
                        for (l, x) in row.iter().enumerate() {
                            acc.small[dims.idx_l(v, c, s, k, l)] += capped_se(*x);
                        }
                    }
                    small[c] = Some(sinrs);
                }
            }
            if let [Some(a), Some(b)] = &small {
                if needs.dominance {
                    count_dominance(acc, &a.concat(), &b.concat());
                }
            }
            if needs.local_mmse {
                let mut combiners = (0..dims.l)
                    .map(|l| local_combiners(&real, &ctx.stats, &sc.ici, &sc.powers, s, l, Combiner::Mmse))
                    .collect::<Result<Vec<_>>>()?;
                for (l, per_ta) in combiners.iter_mut().enumerate() {
                    for (k, vk) in per_ta.iter_mut().enumerate() {
                        if !mask[(k, l)] {
                            vk.fill(Default::default());
                        }
                    }
                }
                acc.moments[v * dims.m + s].accumulate(&real, &sc.ici, &combiners, s)?;
            }
        }
    }
    Ok(())
}

fn capped_se(sinr: f64) -> f64 {
    spectral_efficiency(sinr).min(SE_CAP)
}

/// SE of TA `k` from Monte Carlo LSFD moments with weights frozen at full power.
fn lsfd_mc_se(est: &LsfdEstimate, k: usize, full: &[f64], powers: &[f64], optimal: bool) -> Result<f64> {
    let a = if optimal {
        est.optimal_weights(k, full)?
    } else {
        mf_weights(est.num_aps)
    };
    if a.iter().all(|x| x.norm_sqr() == 0.0) {
        return Ok(0.0);
    }
    Ok(capped_se(est.sinr(k, &a, powers)))
}

/// Closed-form local-MR SE of TA `k`.
fn lsfd_cf_se(cf: &ClosedFormStats, k: usize, full: &[f64], powers: &[f64], optimal: bool) -> Result<f64> {
    let a = if optimal {
        cf.optimal_weights(k, full, DRange::AllSubcarriers)?
    } else {
        mf_weights(cf.num_aps())
    };
    if a.iter().all(|x| x.norm_sqr() == 0.0) {
        return Ok(0.0);
    }
    Ok(capped_se(cf.sinr(k, &a, powers)?))
}

fn evaluate_position(plan: &ExperimentPlan, index: usize, d_tr: f64) -> Result<(Vec<ResultRow>, usize, usize)> {
    let start = Instant::now();
    let (_, ctx) = prepare_position(plan, index, d_tr)?;
    let needs = Needs::of(plan);
    let cfg = &plan.scenario;
    let dims = Dims {
        speeds: ctx.speeds.len(),
        m: cfg.subcarriers,
        k: cfg.num_tas,
        l: cfg.num_aps,
    };
    let acc = if needs.any() {
        let chunks: Vec<Accum> = (0..plan.trials.div_ceil(CHUNK))
            .into_par_iter()
            .map(|c| {
                let mut acc = Accum::new(&dims, &needs);
                for t in c * CHUNK..((c + 1) * CHUNK).min(plan.trials) {
                    run_trial(plan, &ctx, &needs, &dims, index, t, &mut acc)?;
                }
                Ok(acc)
            })
            .collect::<Result<_>>()?;
        let mut total = Accum::new(&dims, &needs);
        for c in &chunks {
            total.merge(c);
        }
        total
    } else {
        Accum::new(&dims, &needs)
    };
    let n = plan.trials as f64;
    let full = vec![cfg.max_power; cfg.num_tas];
    let speeds = plan.speeds();
    let mut per_speed: Vec<Vec<(Arch, Vec<f64>)>> = Vec::new();
    for (v, sc) in ctx.speeds.iter().enumerate() {
        let mut out = Vec::new();
        let estimates = if needs.local_mmse {
            (0..dims.m)
                .map(|s| acc.moments[v * dims.m + s].finalize(cfg.noise_power))
                .collect::<Result<Vec<_>>>()?
        } else {
            Vec::new()
        };
        let closed: Vec<ClosedFormStats> = if plan
            .architectures
            .iter()
            .any(|a| matches!(a, Arch::LocalMrLsfd | Arch::LocalMrMf))
        {
            (0..dims.m)
                .map(|s| ClosedFormStats::new(&ctx.stats, &sc.ici, s, Some(&ctx.assignment.mask)))
                .collect::<Result<_>>()?
        } else {
            Vec::new()
        };
        for &arch in &plan.architectures {
            let c = if arch.combiner() == Combiner::Mmse { 0 } else { 1 };
            let mut se = vec![0.0; dims.k];
            for s in 0..dims.m {
                for k in 0..dims.k {
                    let value = match arch {
                        Arch::CentralizedMmse | Arch::CentralizedMr => acc.central[dims.idx(v, c, s, k)] / n,
                        Arch::CellularMmse | Arch::CellularMr => acc.cellular[dims.idx(v, c, s, k)] / n,
                        Arch::SmallcellMmse | Arch::SmallcellMr => 0.0,
                        Arch::LocalMmseLsfd => lsfd_mc_se(&estimates[s], k, &full, &sc.powers, true)?,
                        Arch::LocalMmseMf => lsfd_mc_se(&estimates[s], k, &full, &sc.powers, false)?,
                        Arch::LocalMrLsfd => lsfd_cf_se(&closed[s], k, &full, &sc.powers, true)?,
                        Arch::LocalMrMf => lsfd_cf_se(&closed[s], k, &full, &sc.powers, false)?,
                    };
                    se[k] += value / dims.m as f64;
                }
            }
            if matches!(arch, Arch::SmallcellMmse | Arch::SmallcellMr) {
                // one serving AP per TA, chosen on the block-averaged ergodic SE
                for (k, out_k) in se.iter_mut().enumerate() {
                    let block = |l: usize| -> f64 {
                        (0..dims.m).map(|s| acc.small[dims.idx_l(v, c, s, k, l)]).sum::<f64>() / (n * dims.m as f64)
                    };
                    let per_ap: Vec<f64> = (0..dims.l).map(block).collect();
                    *out_k = crate::combining::smallcell_select(&per_ap).0;
                }
            }
            out.push((arch, se));
        }
        per_speed.push(out);
    }
    let wall_time = start.elapsed().as_secs_f64();
    let mut rows = Vec::new();
    for (v, out) in per_speed.into_iter().enumerate() {
        for (arch, per_ta) in out {
            let block_se = per_ta.iter().sum::<f64>() / per_ta.len() as f64;
            let worst_se = per_ta.iter().cloned().fold(f64::INFINITY, f64::min);
            let sum_se = per_ta.iter().sum();
            rows.push(ResultRow {
                speed_kmh: speeds[v],
                position: d_tr,
                architecture: arch,
                per_ta,
                block_se,
                worst_se,
                sum_se,
                wall_time,
            });
        }
    }
    Ok((rows, acc.checks, acc.violations))
}

/// Runs every (position, speed, architecture) combination of `plan`.
///
/// Positions and trial chunks run in parallel on the rayon pool; the result
/// is identical for any thread count.
pub fn run_plan(plan: &ExperimentPlan) -> Result<ResultTable> {
    plan.validate()?;
    let per_position: Vec<(Vec<ResultRow>, usize, usize)> = plan
        .positions
        .par_iter()
        .enumerate()
        .map(|(i, &d_tr)| {
            evaluate_position(plan, i, d_tr).map_err(|e| e.with_context(&format!("position {d_tr} m")))
        })
        .collect::<Result<_>>()?;
    let mut table = ResultTable {
        seed: plan.seed,
        rows: Vec::new(),
        dominance_checks: 0,
        dominance_violations: 0,
    };
    for (rows, checks, violations) in per_position {
        table.rows.extend(rows);
        table.dominance_checks += checks;
        table.dominance_violations += violations;
    }
    Ok(table)
}
