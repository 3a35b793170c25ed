//! TA-centric cooperation clusters and the linear-fractional SINR
//! coefficients that feed power control.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::channel::ChannelStatistics;
use crate::error::{Error, Result};
use crate::geometry::GeometrySnapshot;
use crate::ici::IciProfile;
use crate::linalg::CVector;
use crate::lsfd::{ClosedFormStats, LsfdEstimate};

/// Which APs serve which TAs.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    /// Threshold in dB; `f64::INFINITY` means every AP serves every TA.
    pub theta_db: f64,
    /// Master AP per TA.
    pub master: Vec<usize>,
    /// `mask[(i, l)]` is true iff AP `l` serves TA `i`.
    pub mask: DMatrix<bool>,
}

#[derive(Serialize)]
struct ClusterRecord {
    ta: usize,
    master: usize,
    aps: Vec<usize>,
    theta_db: Option<f64>,
}

impl ClusterAssignment {
    /// Every AP serves every TA.
    pub fn full(snapshot: &GeometrySnapshot) -> Self {
        form_clusters(snapshot, f64::INFINITY).expect("infinite threshold is valid")
    }

    pub fn num_tas(&self) -> usize {
        self.mask.nrows()
    }

    pub fn num_aps(&self) -> usize {
        self.mask.ncols()
    }

    /// APs serving TA `i`.
    pub fn aps_of(&self, i: usize) -> Vec<usize> {
        (0..self.num_aps()).filter(|&l| self.mask[(i, l)]).collect()
    }

    /// TAs served by AP `l`.
    pub fn tas_of(&self, l: usize) -> Vec<usize> {
        (0..self.num_tas()).filter(|&i| self.mask[(i, l)]).collect()
    }

    /// JSON array with one record per TA (keys `ta`, `master`, `aps`, `theta_db`).
    pub fn to_json(&self) -> Result<String> {
        let theta = self.theta_db.is_finite().then_some(self.theta_db);
        let records: Vec<ClusterRecord> = (0..self.num_tas())
            .map(|i| ClusterRecord {
                ta: i,
                master: self.master[i],
                aps: self.aps_of(i),
                theta_db: theta,
            })
            .collect();
        Ok(serde_json::to_string_pretty(&records)?)
    }
}

/// Forms clusters: each TA picks its strongest AP as master (lowest index on
/// ties) and adds every AP within `theta_db` of it. The master always serves.
pub fn form_clusters(snapshot: &GeometrySnapshot, theta_db: f64) -> Result<ClusterAssignment> {
    if theta_db.is_nan() || theta_db < 0.0 {
        return Err(Error::config("cluster_theta_db", format!("must be >= 0, got {theta_db}")));
    }
    let zeta = &snapshot.large_scale;
    let (kk, ll) = zeta.shape();
    let mut mask = DMatrix::from_element(kk, ll, false);
    let mut master = Vec::with_capacity(kk);
    for i in 0..kk {
        let mut best = 0;
        for l in 1..ll {
            if zeta[(i, l)] > zeta[(i, best)] {
                best = l;
            }
        }
        master.push(best);
        let top_db = 10.0 * zeta[(i, best)].log10();
        for l in 0..ll {
            let gap = top_db - 10.0 * zeta[(i, l)].log10();
            mask[(i, l)] = l == best || gap < theta_db;
        }
    }
    Ok(ClusterAssignment {
        theta_db,
        master,
        mask,
    })
}

/// Closed-form LSFD terms with every unserved TA/AP term zeroed.
pub fn masked_closed_form_stats(
    stats: &ChannelStatistics,
    ici: &IciProfile,
    assignment: &ClusterAssignment,
    s: usize,
) -> Result<ClosedFormStats> {
    ClosedFormStats::new(stats, ici, s, Some(&assignment.mask))
}

/// `SINR_k(p) = b_k p_k / (f_k^T p + sigma_k^2)` for every TA.
#[derive(Debug, Clone, PartialEq)]
pub struct GenericSinrCoeffs {
    pub b: DVector<f64>,
    /// Row `k` is `f_k`.
    pub f: DMatrix<f64>,
    pub sigma2: DVector<f64>,
}

impl GenericSinrCoeffs {
    pub fn new(b: DVector<f64>, f: DMatrix<f64>, sigma2: DVector<f64>) -> Result<Self> {
        let k = b.len();
        if f.shape() != (k, k) || sigma2.len() != k {
            return Err(Error::Dimension(format!(
                "coefficients for {k} TAs need a {k}x{k} f matrix and {k} noise terms"
            )));
        }
        if b.iter().chain(f.iter()).chain(sigma2.iter()).any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::Numerical("SINR coefficients must be finite and nonnegative".into()));
        }
        Ok(GenericSinrCoeffs { b, f, sigma2 })
    }

    pub fn num_tas(&self) -> usize {
        self.b.len()
    }

    pub fn sinr(&self, k: usize, powers: &[f64]) -> f64 {
        let num = self.b[k] * powers[k];
        let den: f64 = self.f.row(k).iter().zip(powers).map(|(f, p)| f * p).sum::<f64>() + self.sigma2[k];
        if num <= 0.0 {
            0.0
        } else if den <= 0.0 {
            f64::INFINITY
        } else {
            num / den
        }
    }

    pub fn sinrs(&self, powers: &[f64]) -> Vec<f64> {
        (0..self.num_tas()).map(|k| self.sinr(k, powers)).collect()
    }

    /// `sum_k log2(1 + SINR_k)`.
    pub fn sum_se(&self, powers: &[f64]) -> f64 {
        self.sinrs(powers).iter().map(|x| (1.0 + x).log2()).sum()
    }
}

/// Coefficients from closed-form statistics with frozen weights `a_k`.
pub fn extract_generic_coeffs(cf: &ClosedFormStats, weights: &[CVector]) -> Result<GenericSinrCoeffs> {
    let kk = cf.num_tas();
    if weights.len() != kk {
        return Err(Error::Dimension(format!("{} weight vectors for {kk} TAs", weights.len())));
    }
    let mut b = DVector::zeros(kk);
    let mut f = DMatrix::zeros(kk, kk);
    let mut sigma2 = DVector::zeros(kk);
    for (k, a) in weights.iter().enumerate() {
        let (bk, fk, sk) = cf.coefficients(k, a);
        b[k] = bk;
        f.row_mut(k).copy_from(&fk.transpose());
        sigma2[k] = sk;
    }
    GenericSinrCoeffs::new(b, f, sigma2)
}

/// Coefficients from Monte Carlo LSFD moments with frozen weights `a_k`.
pub fn extract_generic_coeffs_mc(est: &LsfdEstimate, weights: &[CVector]) -> Result<GenericSinrCoeffs> {
    let kk = est.num_tas;
    if weights.len() != kk {
        return Err(Error::Dimension(format!("{} weight vectors for {kk} TAs", weights.len())));
    }
    let mut b = DVector::zeros(kk);
    let mut f = DMatrix::zeros(kk, kk);
    let mut sigma2 = DVector::zeros(kk);
    for (k, a) in weights.iter().enumerate() {
        let (bk, fk, sk) = est.coefficients(k, a);
        b[k] = bk;
        f.row_mut(k).copy_from(&fk.transpose());
        sigma2[k] = sk;
    }
    GenericSinrCoeffs::new(b, f, sigma2)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::build_statistics;
    use crate::geometry::{build_snapshot, ScenarioConfig};
    use crate::lsfd::{mf_weights, DRange};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn scenario() -> (ScenarioConfig, GeometrySnapshot) {
        let cfg = ScenarioConfig {
            track_distance: 20.0,
            ..ScenarioConfig::default()
        };
        let snap = build_snapshot(&cfg, 300.0).unwrap();
        (cfg, snap)
    }

    #[test]
    fn threshold_extremes() {
        let (_, snap) = scenario();
        let all = form_clusters(&snap, f64::INFINITY).unwrap();
        assert!(all.mask.iter().all(|&x| x));
        let none = form_clusters(&snap, 0.0).unwrap();
        for i in 0..snap.num_tas() {
            assert_eq!(none.aps_of(i), vec![none.master[i]]);
        }
        assert!(form_clusters(&snap, -1.0).is_err());
    }

    #[test]
    fn clusters_grow_with_threshold() {
        let (_, snap) = scenario();
        let thetas = [0.0, 5.0, 10.0, 20.0];
        let sets: Vec<_> = thetas.iter().map(|&t| form_clusters(&snap, t).unwrap()).collect();
        for w in sets.windows(2) {
            for i in 0..snap.num_tas() {
                for l in 0..snap.num_aps() {
                    assert!(!w[0].mask[(i, l)] || w[1].mask[(i, l)]);
                }
            }
        }
        let sizes: Vec<usize> = sets.iter().map(|c| c.mask.iter().filter(|&&x| x).count()).collect();
        assert!(sizes[3] > sizes[0]);
    }

    #[test]
    fn membership_views_agree() {
        let (_, snap) = scenario();
        let c = form_clusters(&snap, 10.0).unwrap();
        for i in 0..c.num_tas() {
            assert!(c.aps_of(i).contains(&c.master[i]));
            for l in c.aps_of(i) {
                assert!(c.tas_of(l).contains(&i));
            }
        }
        let json: serde_json::Value = serde_json::from_str(&c.to_json().unwrap()).unwrap();
        assert_eq!(json[0]["theta_db"], 10.0);
        assert_eq!(json[0]["master"], c.master[0]);
    }

    #[test]
    fn masked_stats_identity_and_idempotence() {
        let (cfg, snap) = scenario();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let stats = build_statistics(&cfg, &snap, &vec![cfg.max_power; cfg.num_tas], &mut rng).unwrap();
        let ici = IciProfile::new(&cfg, &snap);
        let full = ClusterAssignment::full(&snap);
        let a = masked_closed_form_stats(&stats, &ici, &full, 3).unwrap();
        let b = ClosedFormStats::new(&stats, &ici, 3, None).unwrap();
        let w = mf_weights(cfg.num_aps);
        let p = vec![cfg.max_power; cfg.num_tas];
        for k in 0..cfg.num_tas {
            assert_eq!(a.sinr(k, &w, &p).unwrap(), b.sinr(k, &w, &p).unwrap());
        }
        let c = form_clusters(&snap, 10.0).unwrap();
        let once = masked_closed_form_stats(&stats, &ici, &c, 3).unwrap();
        let mut twice_mask = c.clone();
        twice_mask.mask = c.mask.zip_map(&c.mask, |x, y| x && y);
        let twice = masked_closed_form_stats(&stats, &ici, &twice_mask, 3).unwrap();
        for k in 0..cfg.num_tas {
            assert_eq!(once.b(k), twice.b(k));
            assert_eq!(once.lambda(k), twice.lambda(k));
        }
    }

    #[test]
    fn coefficient_fidelity_over_random_powers() {
        let (cfg, snap) = scenario();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let stats = build_statistics(&cfg, &snap, &vec![cfg.max_power; cfg.num_tas], &mut rng).unwrap();
        let ici = IciProfile::new(&cfg, &snap);
        let c = form_clusters(&snap, 10.0).unwrap();
        let cf = masked_closed_form_stats(&stats, &ici, &c, 4).unwrap();
        let full = vec![cfg.max_power; cfg.num_tas];
        let weights: Vec<_> = (0..cfg.num_tas)
            .map(|k| cf.optimal_weights(k, &full, DRange::AllSubcarriers).unwrap())
            .collect();
        let coeffs = extract_generic_coeffs(&cf, &weights).unwrap();
        for _ in 0..20 {
            let p: Vec<f64> = (0..cfg.num_tas).map(|_| rng.random_range(0.01..1.0) * cfg.max_power).collect();
            for k in 0..cfg.num_tas {
                let direct = cf.sinr(k, &weights[k], &p).unwrap();
                assert_relative_eq!(coeffs.sinr(k, &p), direct, max_relative = 1e-10);
            }
        }
        for k in 0..cfg.num_tas {
            assert_relative_eq!(coeffs.sinr(k, &full), cf.max_sinr(k, &full).unwrap(), max_relative = 1e-9);
        }
    }

    #[test]
    fn single_ta_is_linear_fractional() {
        let cfg = ScenarioConfig {
            num_tas: 1,
            ..ScenarioConfig::default()
        };
        let snap = build_snapshot(&cfg, 100.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let stats = build_statistics(&cfg, &snap, &[cfg.max_power], &mut rng).unwrap();
        let ici = IciProfile::new(&cfg, &snap);
        let cf = ClosedFormStats::new(&stats, &ici, 2, None).unwrap();
        let a = cf.optimal_weights(0, &[cfg.max_power], DRange::AllSubcarriers).unwrap();
        let coeffs = extract_generic_coeffs(&cf, &[a.clone()]).unwrap();
        for p in [0.1 * cfg.max_power, cfg.max_power] {
            let expected = coeffs.b[0] * p / (coeffs.f[(0, 0)] * p + coeffs.sigma2[0]);
            assert_relative_eq!(cf.sinr(0, &a, &[p]).unwrap(), expected, max_relative = 1e-10);
        }
    }

    #[test]
    fn null_user_has_zero_sinr() {
        let coeffs = GenericSinrCoeffs::new(
            DVector::from_vec(vec![0.0, 2.0]),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.2, 1.0]),
            DVector::from_vec(vec![0.1, 0.1]),
        )
        .unwrap();
        assert_eq!(coeffs.sinr(0, &[1.0, 1.0]), 0.0);
        assert_eq!(coeffs.sinr(0, &[0.01, 0.3]), 0.0);
        assert!(GenericSinrCoeffs::new(DVector::zeros(2), DMatrix::zeros(1, 1), DVector::zeros(2)).is_err());
    }
}
