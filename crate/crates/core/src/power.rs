//! Uplink power control over linear-fractional SINRs
//! `SINR_k(p) = b_k p_k / (f_k^T p + sigma_k^2)`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::clustering::{ClusterAssignment, GenericSinrCoeffs};
use crate::error::{Error, Result};
use crate::geometry::GeometrySnapshot;

/// Power-control scheme tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PowerScheme {
    #[default]
    Full,
    Fractional,
    Maxmin,
    Maxsum,
}

/// One solver iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    /// SINR spread (max-min) or surrogate objective (max-sum).
    pub value: f64,
    pub powers: Vec<f64>,
}

/// Transmit powers and how they were obtained.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerAllocation {
    pub scheme: PowerScheme,
    pub powers: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<TraceRow>,
}

impl PowerAllocation {
    fn direct(scheme: PowerScheme, powers: Vec<f64>) -> Self {
        PowerAllocation {
            scheme,
            powers,
            iterations: 0,
            converged: true,
            trace: Vec::new(),
        }
    }

    /// Writes the trace as CSV: `iteration,value,p0,p1,...`.
    pub fn write_trace_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let k = self.powers.len();
        let mut header = vec!["iteration".to_string(), "value".to_string()];
        header.extend((0..k).map(|i| format!("p{i}")));
        w.write_record(&header)?;
        for row in &self.trace {
            let mut rec = vec![row.iteration.to_string(), format!("{:e}", row.value)];
            rec.extend(row.powers.iter().map(|p| format!("{p:e}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Every TA at full power.
pub fn full_power(num_tas: usize, max_power: f64) -> PowerAllocation {
    PowerAllocation::direct(PowerScheme::Full, vec![max_power; num_tas])
}

/// Fractional power control `p_k = P min_i(zeta_i) / zeta_k`, with
/// `zeta_i` summed over TA `i`'s cluster.
pub fn fractional_power(
    assignment: &ClusterAssignment,
    snapshot: &GeometrySnapshot,
    max_power: f64,
) -> Result<PowerAllocation> {
    let zeta: Vec<f64> = (0..assignment.num_tas())
        .map(|i| {
            assignment
                .aps_of(i)
                .iter()
                .map(|&l| snapshot.large_scale[(i, l)])
                .sum()
        })
        .collect();
    if let Some(i) = zeta.iter().position(|&z| z <= 0.0) {
        return Err(Error::Numerical(format!("TA {i} has an empty or silent cluster")));
    }
    let min = zeta.iter().cloned().fold(f64::INFINITY, f64::min);
    Ok(PowerAllocation::direct(
        PowerScheme::Fractional,
        zeta.iter().map(|z| max_power * min / z).collect(),
    ))
}

fn check_coeffs(coeffs: &GenericSinrCoeffs, max_power: f64, tol: f64) -> Result<()> {
    if !(max_power > 0.0) {
        return Err(Error::config("max_power", "must be positive"));
    }
    if !(tol > 0.0) {
        return Err(Error::config("power_tolerance", "must be positive"));
    }
    if coeffs.num_tas() == 0 {
        return Err(Error::Dimension("no TAs".into()));
    }
    Ok(())
}

/// Max-min fairness by the normalized fixed-point iteration
/// `p_k <- p_k / SINR_k(p)`, `p <- P p / max(p)`.
pub fn maxmin_power(
    coeffs: &GenericSinrCoeffs,
    max_power: f64,
    tol: f64,
    max_iter: usize,
) -> Result<PowerAllocation> {
    check_coeffs(coeffs, max_power, tol)?;
    if let Some(k) = coeffs.b.iter().position(|&b| b <= 0.0) {
        return Err(Error::Numerical(format!("TA {k} has no useful signal (b = 0)")));
    }
    let k = coeffs.num_tas();
    let mut p = vec![max_power; k];
    let mut trace = Vec::new();
    let mut spread = f64::INFINITY;
    for iter in 0..=max_iter {
        let sinr = coeffs.sinrs(&p);
        let max = sinr.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = sinr.iter().cloned().fold(f64::INFINITY, f64::min);
        spread = max - min;
        trace.push(TraceRow {
            iteration: iter,
            value: spread,
            powers: p.clone(),
        });
        if spread <= tol {
            return Ok(PowerAllocation {
                scheme: PowerScheme::Maxmin,
                powers: p,
                iterations: iter,
                converged: true,
                trace,
            });
        }
        if !sinr.iter().all(|s| s.is_finite() && *s > 0.0) {
            return Err(Error::Numerical("max-min iteration produced a non-finite SINR".into()));
        }
        for (pk, s) in p.iter_mut().zip(&sinr) {
            *pk /= s;
        }
        let top = p.iter().cloned().fold(0.0, f64::max);
        for pk in p.iter_mut() {
            *pk *= max_power / top;
        }
    }
    Err(Error::NotConverged {
        solver: "max-min fixed point",
        iterations: max_iter,
        residual: spread,
    })
}

/// Max-sum SE by block coordinate descent on the weighted-MMSE surrogate.
pub fn maxsum_power(
    coeffs: &GenericSinrCoeffs,
    max_power: f64,
    tol: f64,
    max_iter: usize,
) -> Result<PowerAllocation> {
    check_coeffs(coeffs, max_power, tol)?;
    let k = coeffs.num_tas();
    let floor = 1e-12 * max_power;
    let mut p = vec![max_power; k];
    let mut u = vec![0.0; k];
    let mut d = vec![0.0; k];
    let objective = |p: &[f64], u: &[f64], d: &[f64]| -> f64 {
        (0..k)
            .map(|j| {
                let total = coeffs.b[j] * p[j] + interference(coeffs, j, p);
                let e = u[j] * u[j] * total - 2.0 * u[j] * (coeffs.b[j] * p[j]).sqrt() + 1.0;
                d[j] * e - d[j].ln()
            })
            .sum()
    };
    let mut trace = Vec::new();
    let mut previous = f64::INFINITY;
    for iter in 0..max_iter {
        for j in 0..k {
            let total = coeffs.b[j] * p[j] + interference(coeffs, j, &p);
            u[j] = (coeffs.b[j] * p[j]).sqrt() / total;
        }
        for j in 0..k {
            let total = coeffs.b[j] * p[j] + interference(coeffs, j, &p);
            let e = u[j] * u[j] * total - 2.0 * u[j] * (coeffs.b[j] * p[j]).sqrt() + 1.0;
            d[j] = 1.0 / e;
        }
        let mut next = vec![0.0; k];
        for j in 0..k {
            let den = d[j] * u[j] * u[j] * coeffs.b[j]
                + (0..k).map(|i| d[i] * u[i] * u[i] * coeffs.f[(i, j)]).sum::<f64>();
            let candidate = coeffs.b[j] * d[j] * d[j] * u[j] * u[j] / (den * den);
            next[j] = if candidate.is_finite() {
                candidate.clamp(floor, max_power)
            } else {
                max_power
            };
        }
        p = next;
        let current = objective(&p, &u, &d);
        trace.push(TraceRow {
            iteration: iter,
            value: current,
            powers: p.clone(),
        });
        if !current.is_finite() {
            return Err(Error::Numerical("max-sum surrogate objective is not finite".into()));
        }
        let scale = previous.abs().max(1.0);
        if previous.is_finite() && current > previous + 1e-9 * scale {
            return Err(Error::Numerical(format!(
                "max-sum surrogate objective increased from {previous} to {current}"
            )));
        }
        if previous.is_finite() && previous - current < tol * scale {
            return Ok(PowerAllocation {
                scheme: PowerScheme::Maxsum,
                powers: p,
                iterations: iter + 1,
                converged: true,
                trace,
            });
        }
        previous = current;
    }
    Err(Error::NotConverged {
        solver: "max-sum block coordinate descent",
        iterations: max_iter,
        residual: trace.last().map_or(f64::NAN, |r| r.value),
    })
}

fn interference(coeffs: &GenericSinrCoeffs, k: usize, p: &[f64]) -> f64 {
    coeffs.f.row(k).iter().zip(p).map(|(f, p)| f * p).sum::<f64>() + coeffs.sigma2[k]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clustering::form_clusters;
    use crate::geometry::{build_snapshot, ScenarioConfig};
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_coeffs(k: usize, rng: &mut ChaCha8Rng) -> GenericSinrCoeffs {
        GenericSinrCoeffs::new(
            DVector::from_fn(k, |_, _| rng.random_range(0.5..2.0)),
            DMatrix::from_fn(k, k, |_, _| rng.random_range(0.0..0.3)),
            DVector::from_fn(k, |_, _| rng.random_range(0.01..0.1)),
        )
        .unwrap()
    }

    /// Largest common SINR target reachable with `p <= P`, by bisection on
    /// the linear system `p_k = t (f_k^T p + sigma_k^2) / b_k`.
    fn bisection_maxmin(coeffs: &GenericSinrCoeffs, max_power: f64) -> f64 {
        let k = coeffs.num_tas();
        let feasible = |t: f64| -> bool {
            let mut a = DMatrix::<f64>::identity(k, k);
            let mut rhs = DVector::zeros(k);
            for i in 0..k {
                for j in 0..k {
                    a[(i, j)] -= t * coeffs.f[(i, j)] / coeffs.b[i];
                }
                rhs[i] = t * coeffs.sigma2[i] / coeffs.b[i];
            }
            match a.lu().solve(&rhs) {
                Some(p) => p.iter().all(|&x| x >= 0.0 && x <= max_power),
                None => false,
            }
        };
        let (mut lo, mut hi) = (0.0, 1e6);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if feasible(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }

    #[test]
    fn fractional_identities() {
        let cfg = ScenarioConfig::default();
        let snap = build_snapshot(&cfg, 200.0).unwrap();
        let c = form_clusters(&snap, 10.0).unwrap();
        let alloc = fractional_power(&c, &snap, 0.2).unwrap();
        let zeta: Vec<f64> = (0..cfg.num_tas)
            .map(|i| c.aps_of(i).iter().map(|&l| snap.large_scale[(i, l)]).sum())
            .collect();
        let min = zeta.iter().cloned().fold(f64::INFINITY, f64::min);
        for (p, z) in alloc.powers.iter().zip(&zeta) {
            assert!(*p > 0.0 && *p <= 0.2 + 1e-15);
            assert_relative_eq!(p / 0.2 * z, min, max_relative = 1e-12);
        }
    }

    #[test]
    fn fractional_two_tas() {
        let cfg = ScenarioConfig {
            num_tas: 2,
            num_aps: 1,
            ..ScenarioConfig::default()
        };
        let mut snap = build_snapshot(&cfg, 0.0).unwrap();
        snap.large_scale = DMatrix::from_row_slice(2, 1, &[2e-9, 1e-9]);
        let c = form_clusters(&snap, f64::INFINITY).unwrap();
        let alloc = fractional_power(&c, &snap, 1.0).unwrap();
        assert_relative_eq!(alloc.powers[0], 0.5);
        assert_relative_eq!(alloc.powers[1], 1.0);
        snap.large_scale = DMatrix::from_row_slice(2, 1, &[3e-9, 3e-9]);
        assert_eq!(fractional_power(&c, &snap, 1.0).unwrap().powers, vec![1.0, 1.0]);
    }

    #[test]
    fn maxmin_symmetric_and_single() {
        let sym = GenericSinrCoeffs::new(
            DVector::from_vec(vec![1.0, 1.0]),
            DMatrix::from_row_slice(2, 2, &[0.1, 0.2, 0.2, 0.1]),
            DVector::from_vec(vec![0.05, 0.05]),
        )
        .unwrap();
        let out = maxmin_power(&sym, 0.2, 1e-4, 10_000).unwrap();
        assert_eq!(out.powers, vec![0.2, 0.2]);
        let single = GenericSinrCoeffs::new(
            DVector::from_vec(vec![2.0]),
            DMatrix::from_element(1, 1, 0.3),
            DVector::from_vec(vec![0.01]),
        )
        .unwrap();
        let out = maxmin_power(&single, 0.2, 1e-4, 10_000).unwrap();
        assert_eq!(out.powers, vec![0.2]);
        assert_relative_eq!(single.sinr(0, &out.powers), 2.0 * 0.2 / (0.3 * 0.2 + 0.01));
    }

    #[test]
    fn maxmin_matches_bisection_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..20 {
            let coeffs = random_coeffs(3, &mut rng);
            let out = maxmin_power(&coeffs, 1.0, 1e-4, 10_000).unwrap();
            let sinr = coeffs.sinrs(&out.powers);
            let min = sinr.iter().cloned().fold(f64::INFINITY, f64::min);
            let max = sinr.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert!(max - min <= 1e-4);
            let full = coeffs.sinrs(&[1.0; 3]).into_iter().fold(f64::INFINITY, f64::min);
            assert!(min >= full * (1.0 - 1e-9));
            assert_relative_eq!(out.powers.iter().cloned().fold(0.0, f64::max), 1.0);
            let oracle = bisection_maxmin(&coeffs, 1.0);
            assert!((min - oracle).abs() <= 1e-3 * oracle, "fixed point {min} vs oracle {oracle}");
        }
    }

    #[test]
    fn maxmin_rejects_null_user() {
        let coeffs = GenericSinrCoeffs::new(
            DVector::from_vec(vec![0.0, 1.0]),
            DMatrix::zeros(2, 2),
            DVector::from_vec(vec![0.1, 0.1]),
        )
        .unwrap();
        assert!(maxmin_power(&coeffs, 1.0, 1e-4, 100).is_err());
    }

    #[test]
    fn maxsum_interference_free_uses_full_power() {
        let coeffs = GenericSinrCoeffs::new(
            DVector::from_vec(vec![1.5]),
            DMatrix::zeros(1, 1),
            DVector::from_vec(vec![0.02]),
        )
        .unwrap();
        let out = maxsum_power(&coeffs, 0.2, 1e-6, 10_000).unwrap();
        assert_relative_eq!(out.powers[0], 0.2, max_relative = 1e-9);
    }

    #[test]
    fn maxsum_trace_is_monotone() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let k = rng.random_range(2..6);
            let coeffs = random_coeffs(k, &mut rng);
            let out = maxsum_power(&coeffs, 1.0, 1e-6, 10_000).unwrap();
            for w in out.trace.windows(2) {
                assert!(w[1].value <= w[0].value + 1e-9 * w[0].value.abs().max(1.0));
            }
            assert!(coeffs.sum_se(&out.powers) >= coeffs.sum_se(&vec![1.0; k]) - 1e-9);
        }
    }

    #[test]
    fn maxsum_grid_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for _ in 0..10 {
            let coeffs = random_coeffs(2, &mut rng);
            let out = maxsum_power(&coeffs, 1.0, 1e-6, 10_000).unwrap();
            let ours = coeffs.sum_se(&out.powers);
            assert!(ours >= coeffs.sum_se(&[1.0, 1.0]) - 1e-9);
            let mm = maxmin_power(&coeffs, 1.0, 1e-4, 10_000).unwrap();
            assert!(ours >= coeffs.sum_se(&mm.powers) - 1e-9);
            let mut best: f64 = 0.0;
            for i in 1..=100 {
                for j in 1..=100 {
                    best = best.max(coeffs.sum_se(&[i as f64 / 100.0, j as f64 / 100.0]));
                }
            }
            assert!(best <= ours * 1.01, "grid {best} vs BCD {ours}");
        }
    }

    #[test]
    fn trace_csv_has_header_and_rows() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let coeffs = random_coeffs(2, &mut rng);
        let out = maxmin_power(&coeffs, 1.0, 1e-4, 10_000).unwrap();
        let mut buf = Vec::new();
        out.write_trace_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("iteration,value,p0,p1"));
        assert_eq!(text.lines().count(), out.trace.len() + 1);
    }
}
