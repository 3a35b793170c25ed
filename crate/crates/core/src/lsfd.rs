//! Large-scale fading decoding (LSFD) at the CPU.
//!
//! Two paths are provided. [`ClosedFormStats`] holds the deterministic
//! use-and-then-forget terms for local MR combining, from which the SE for
//! any weight vector and the optimal weights follow in closed form.
//! [`LsfdMoments`] estimates the same moments by Monte Carlo for an
//! arbitrary local combiner family (e.g. local MMSE).
//!
//! For TA `k` at subcarrier `s` with weights `a`, both paths evaluate
//!
//! ```text
//! SINR = p_k |a^H E{u_kk[0]}|^2
//!      / (sum_i p_i sum_m a^H E{u_ki u_ki^H} a - p_k |a^H E{u_kk[0]}|^2 + sigma^2 a^H Lambda a)
//! ```
//!
//! In closed form, `E{u_kk[0]} = b_k`, `E{u_kk u_kk^H} = Xi_kk + c_k c_k^H` and
//! `E{u_ki u_ki^H} = Xi_ki + d_ki d_ki^H` for `i != k`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::channel::{ChannelRealization, ChannelStatistics};
use crate::error::{Error, Result};
use crate::ici::{IciProfile, C64};
use crate::linalg::{add_outer, condition_number, hermitian_solve, CMatrix, CVector};

/// Range of the `d_ki` outer-product sum used when forming optimal weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DRange {
    /// Every subcarrier, consistent with the SINR being maximized.
    #[default]
    AllSubcarriers,
    /// Only `m != s`.
    ExcludeSelf,
}

/// Cooperation weights applied at the CPU.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightMode {
    LsfdOptimal,
    MfEqual,
}

/// Closed-form statistics for local MR combining at one subcarrier.
#[derive(Debug, Clone)]
pub struct ClosedFormStats {
    num_tas: usize,
    num_aps: usize,
    subcarrier: usize,
    noise_power: f64,
    offsets: Vec<i64>,
    b: Vec<CVector>,
    /// Diagonal of `Xi_ki[delta]`, indexed `(k K + i) D + j`.
    xi: Vec<DVector<f64>>,
    /// `sum_m Xi_ki[m - s]`, indexed `k K + i`.
    xi_sum: Vec<DVector<f64>>,
    /// `c_k[delta]`, indexed `k D + j`.
    c: Vec<CVector>,
    /// `d_ki[delta]`, indexed `(k K + i) D + j`.
    d: Vec<CVector>,
    lambda: Vec<DVector<f64>>,
}

fn trace_product(a: &CMatrix, b: &CMatrix) -> C64 {
    // tr(A B) without forming the product
    let n = a.nrows();
    let mut acc = C64::new(0.0, 0.0);
    for r in 0..n {
        for c in 0..n {
            acc += a[(r, c)] * b[(c, r)];
        }
    }
    acc
}

impl ClosedFormStats {
    /// Builds every term for subcarrier `s`. With a mask, TA `k`'s terms at
    /// AP `l` are zero wherever `mask[(k, l)]` is false.
    pub fn new(
        stats: &ChannelStatistics,
        ici: &IciProfile,
        s: usize,
        mask: Option<&DMatrix<bool>>,
    ) -> Result<Self> {
        let (kk, ll) = (stats.num_tas, stats.num_aps);
        if (ici.num_tas(), ici.num_aps()) != (kk, ll) {
            return Err(Error::Dimension(format!(
                "statistics are {kk}x{ll} but ICI profile is {}x{}",
                ici.num_tas(),
                ici.num_aps()
            )));
        }
        if let Some(m) = mask {
            if m.shape() != (kk, ll) {
                return Err(Error::Dimension(format!("mask is {:?}, expected ({kk}, {ll})", m.shape())));
            }
        }
        if s >= ici.subcarriers() {
            return Err(Error::Dimension(format!("subcarrier {s} out of range")));
        }
        let served = |k: usize, l: usize| mask.is_none_or(|m| m[(k, l)]);
        let offsets: Vec<i64> = ici.offsets(s).into_iter().map(|(_, d)| d).collect();
        let nd = offsets.len();

        let mut b = Vec::with_capacity(kk);
        let mut lambda = Vec::with_capacity(kk);
        let mut c = Vec::with_capacity(kk * nd);
        for k in 0..kk {
            let tr_q: Vec<f64> = (0..ll).map(|l| stats.pair(k, l).q.trace().re).collect();
            let los_sq: Vec<f64> = (0..ll).map(|l| stats.pair(k, l).los.norm_squared()).collect();
            let entry = |l: usize, delta: i64| -> C64 {
                if served(k, l) {
                    ici.los(k, l, delta) * los_sq[l] + C64::new(ici.nlos(delta) * tr_q[l], 0.0)
                } else {
                    C64::new(0.0, 0.0)
                }
            };
            b.push(CVector::from_fn(ll, |l, _| entry(l, 0)));
            lambda.push(DVector::from_fn(ll, |l, _| {
                if served(k, l) {
                    tr_q[l] + los_sq[l]
                } else {
                    0.0
                }
            }));
            for &delta in &offsets {
                c.push(CVector::from_fn(ll, |l, _| entry(l, delta)));
            }
        }

        let mut xi = Vec::with_capacity(kk * kk * nd);
        let mut xi_sum = Vec::with_capacity(kk * kk);
        let mut d = Vec::with_capacity(kk * kk * nd);
        for k in 0..kk {
            for i in 0..kk {
                // per-AP scalars independent of the offset
                let mut nlos_part = vec![0.0; ll];
                let mut los_part = vec![0.0; ll];
                let mut cross = vec![C64::new(0.0, 0.0); ll];
                for l in 0..ll {
                    if !served(k, l) {
                        continue;
                    }
                    let pk = stats.pair(k, l);
                    let pi = stats.pair(i, l);
                    let tr_rq = trace_product(&pi.corr, &pk.q).re;
                    let hrh = pk.los.dotc(&(&pi.corr * &pk.los)).re;
                    nlos_part[l] = tr_rq + hrh;
                    los_part[l] = pi.los.dotc(&(&pk.q * &pi.los)).re;
                    cross[l] = pk.los.dotc(&pi.los);
                }
                let mut total = DVector::zeros(ll);
                for &delta in &offsets {
                    let id2 = ici.nlos(delta).powi(2);
                    let entry = DVector::from_fn(ll, |l, _| {
                        id2 * nlos_part[l] + ici.los(i, l, delta).norm_sqr() * los_part[l]
                    });
                    total += &entry;
                    xi.push(entry);
                    d.push(CVector::from_fn(ll, |l, _| ici.los(i, l, delta) * cross[l]));
                }
                xi_sum.push(total);
            }
        }

        Ok(ClosedFormStats {
            num_tas: kk,
            num_aps: ll,
            subcarrier: s,
            noise_power: stats.noise_power,
            offsets,
            b,
            xi,
            xi_sum,
            c,
            d,
            lambda,
        })
    }

    pub fn num_tas(&self) -> usize {
        self.num_tas
    }

    pub fn num_aps(&self) -> usize {
        self.num_aps
    }

    pub fn subcarrier(&self) -> usize {
        self.subcarrier
    }

    pub fn noise_power(&self) -> f64 {
        self.noise_power
    }

    /// Contributing offsets `m - s`, in subcarrier order.
    pub fn offsets(&self) -> &[i64] {
        &self.offsets
    }

    fn offset_slot(&self, delta: i64) -> Option<usize> {
        self.offsets.iter().position(|&d| d == delta)
    }

    pub fn b(&self, k: usize) -> &CVector {
        &self.b[k]
    }

    /// Diagonal of `Xi_ki[delta]`; zero when `delta` does not contribute.
    pub fn xi(&self, k: usize, i: usize, delta: i64) -> DVector<f64> {
        match self.offset_slot(delta) {
            Some(j) => self.xi[(k * self.num_tas + i) * self.offsets.len() + j].clone(),
            None => DVector::zeros(self.num_aps),
        }
    }

    /// `sum_m Xi_ki[m - s]`.
    pub fn xi_sum(&self, k: usize, i: usize) -> &DVector<f64> {
        &self.xi_sum[k * self.num_tas + i]
    }

    pub fn c(&self, k: usize, delta: i64) -> CVector {
        match self.offset_slot(delta) {
            Some(j) => self.c[k * self.offsets.len() + j].clone(),
            None => CVector::zeros(self.num_aps),
        }
    }

    pub fn d(&self, k: usize, i: usize, delta: i64) -> CVector {
        match self.offset_slot(delta) {
            Some(j) => self.d[(k * self.num_tas + i) * self.offsets.len() + j].clone(),
            None => CVector::zeros(self.num_aps),
        }
    }

    pub fn lambda(&self, k: usize) -> &DVector<f64> {
        &self.lambda[k]
    }

    fn c_list(&self, k: usize) -> impl Iterator<Item = (i64, &CVector)> {
        let nd = self.offsets.len();
        self.offsets.iter().copied().zip(&self.c[k * nd..(k + 1) * nd])
    }

    fn d_list(&self, k: usize, i: usize) -> impl Iterator<Item = (i64, &CVector)> {
        let nd = self.offsets.len();
        let start = (k * self.num_tas + i) * nd;
        self.offsets.iter().copied().zip(&self.d[start..start + nd])
    }

    /// Interference-plus-noise terms of TA `k` as linear coefficients:
    /// returns `(|a^H b_k|^2, f_k, sigma^2 a^H Lambda_k a)` such that
    /// `SINR = p_k b / (f^T p + sigma)`.
    pub fn coefficients(&self, k: usize, a: &CVector) -> (f64, DVector<f64>, f64) {
        let weight: DVector<f64> = a.map(|x| x.norm_sqr());
        let signal = a.dotc(&self.b[k]).norm_sqr();
        let f = DVector::from_fn(self.num_tas, |i, _| {
            let mut v = weight.dot(self.xi_sum(k, i));
            if i == k {
                v += self
                    .c_list(k)
                    .filter(|(d, _)| *d != 0)
                    .map(|(_, c)| a.dotc(c).norm_sqr())
                    .sum::<f64>();
            } else {
                v += self.d_list(k, i).map(|(_, d)| a.dotc(d).norm_sqr()).sum::<f64>();
            }
            v
        });
        let noise = self.noise_power * weight.dot(&self.lambda[k]);
        (signal, f, noise)
    }

    /// Closed-form SINR of TA `k` with weights `a`.
    pub fn sinr(&self, k: usize, a: &CVector, powers: &[f64]) -> Result<f64> {
        if a.iter().all(|x| x.norm_sqr() == 0.0) {
            return Err(Error::Numerical("LSFD weight vector is zero".into()));
        }
        let (b, f, noise) = self.coefficients(k, a);
        let num = powers[k] * b;
        let den = f.iter().zip(powers).map(|(f, p)| f * p).sum::<f64>() + noise;
        Ok(if num <= 0.0 {
            0.0
        } else if den <= 0.0 {
            f64::INFINITY
        } else {
            num / den
        })
    }

    /// APs whose terms for TA `k` are not identically zero.
    pub fn active_aps(&self, k: usize) -> Vec<usize> {
        (0..self.num_aps)
            .filter(|&l| self.lambda[k][l] > 0.0 || self.b[k][l].norm_sqr() > 0.0)
            .collect()
    }

    /// Denominator matrix of the optimal-weight solve.
    pub fn weight_matrix(&self, k: usize, powers: &[f64], range: DRange) -> CMatrix {
        let ll = self.num_aps;
        let mut diag = DVector::<f64>::zeros(ll);
        for (i, &p) in powers.iter().enumerate() {
            diag += self.xi_sum(k, i) * p;
        }
        diag += &self.lambda[k] * self.noise_power;
        let mut m = CMatrix::from_diagonal(&diag.map(|x| C64::new(x, 0.0)));
        for (delta, c) in self.c_list(k) {
            if delta != 0 {
                add_outer(&mut m, c, powers[k]);
            }
        }
        for (i, &p) in powers.iter().enumerate() {
            if i == k {
                continue;
            }
            for (delta, d) in self.d_list(k, i) {
                if range == DRange::AllSubcarriers || delta != 0 {
                    add_outer(&mut m, d, p);
                }
            }
        }
        m
    }

    /// Optimal LSFD weights for TA `k`, solved over the active APs only.
    pub fn optimal_weights(&self, k: usize, powers: &[f64], range: DRange) -> Result<CVector> {
        let active = self.active_aps(k);
        let mut a = CVector::zeros(self.num_aps);
        if active.is_empty() {
            return Ok(a);
        }
        let full = self.weight_matrix(k, powers, range);
        let sub = full.select_rows(&active).select_columns(&active);
        let rhs = CVector::from_iterator(active.len(), active.iter().map(|&l| self.b[k][l]));
        let sol = hermitian_solve(&sub, &rhs)
            .map_err(|e| e.with_context(&format!("LSFD weights for TA {k}")))?;
        for (j, &l) in active.iter().enumerate() {
            a[l] = sol[j];
        }
        Ok(a)
    }

    /// Maximal SINR `p_k b^H D^{-1} b` (all-subcarrier `d` range).
    pub fn max_sinr(&self, k: usize, powers: &[f64]) -> Result<f64> {
        let a = self.optimal_weights(k, powers, DRange::AllSubcarriers)?;
        Ok(powers[k] * a.dotc(&self.b[k]).re.max(0.0))
    }
}

/// Equal MF cooperation weights `[1/L, ..., 1/L]`.
pub fn mf_weights(num_aps: usize) -> CVector {
    CVector::from_element(num_aps, C64::new(1.0 / num_aps as f64, 0.0))
}

/// Optimal weights for every TA.
pub fn lsfd_optimal_weights(cf: &ClosedFormStats, powers: &[f64], range: DRange) -> Result<Vec<CVector>> {
    (0..cf.num_tas()).map(|k| cf.optimal_weights(k, powers, range)).collect()
}

/// `log2(1 + SINR)` of TA `k` under local MR combining with weights `a`.
pub fn closed_form_se_mr(cf: &ClosedFormStats, k: usize, a: &CVector, powers: &[f64]) -> Result<f64> {
    Ok((1.0 + cf.sinr(k, a, powers)?).log2())
}

/// Neumaier-compensated running sum over a flat buffer.
#[derive(Debug, Clone)]
struct CompensatedSum {
    sum: Vec<f64>,
    comp: Vec<f64>,
}

impl CompensatedSum {
    fn new(len: usize) -> Self {
        CompensatedSum {
            sum: vec![0.0; len],
            comp: vec![0.0; len],
        }
    }

    fn add(&mut self, j: usize, x: f64) {
        let s = self.sum[j];
        let t = s + x;
        if s.abs() >= x.abs() {
            self.comp[j] += (s - t) + x;
        } else {
            self.comp[j] += (x - t) + s;
        }
        self.sum[j] = t;
    }

    fn merge(&mut self, other: &CompensatedSum) {
        for j in 0..self.sum.len() {
            self.add(j, other.sum[j]);
            self.add(j, other.comp[j]);
        }
    }

    fn value(&self, j: usize) -> f64 {
        self.sum[j] + self.comp[j]
    }
}

/// Monte Carlo accumulator of LSFD moments for arbitrary local combiners.
///
/// Per TA `k` it tracks `E{u_kk[0]}`, `sum_m E{u_ki[m-s] u_ki^H[m-s]}` for
/// every `i` and `E{||v_kl||^2}`, where
/// `u_ki,l[delta] = v_kl^H (I_il[delta] h_bar_il + I_D[delta] h_il)`.
#[derive(Debug, Clone)]
pub struct LsfdMoments {
    num_tas: usize,
    num_aps: usize,
    trials: usize,
    mean: CompensatedSum,
    second: CompensatedSum,
    norms: CompensatedSum,
}

impl LsfdMoments {
    pub fn new(num_tas: usize, num_aps: usize) -> Self {
        LsfdMoments {
            num_tas,
            num_aps,
            trials: 0,
            mean: CompensatedSum::new(2 * num_tas * num_aps),
            second: CompensatedSum::new(2 * num_tas * num_tas * num_aps * num_aps),
            norms: CompensatedSum::new(num_tas * num_aps),
        }
    }

    pub fn trials(&self) -> usize {
        self.trials
    }

    /// Adds one realization. `combiners[l][k]` is `v_kl`.
    pub fn accumulate(
        &mut self,
        real: &ChannelRealization,
        ici: &IciProfile,
        combiners: &[Vec<CVector>],
        s: usize,
    ) -> Result<()> {
        let (kk, ll) = (self.num_tas, self.num_aps);
        if combiners.len() != ll || combiners.iter().any(|c| c.len() != kk) {
            return Err(Error::Dimension(format!("expected {ll} x {kk} local combiners")));
        }
        let offsets = ici.offsets(s);
        // received effective channels I h_bar + I_D h, per (i, l, offset)
        let mut received = Vec::with_capacity(kk * ll * offsets.len());
        for i in 0..kk {
            for l in 0..ll {
                let h = real.h(i, l);
                for &(_, delta) in &offsets {
                    received.push(real.los(i, l) * ici.los(i, l, delta) + &h * C64::new(ici.nlos(delta), 0.0));
                }
            }
        }
        let nd = offsets.len();
        let mut u = CVector::zeros(ll);
        for k in 0..kk {
            for l in 0..ll {
                let j = k * ll + l;
                self.norms.add(j, combiners[l][k].norm_squared());
            }
            for i in 0..kk {
                let mut outer = CMatrix::zeros(ll, ll);
                for (slot, &(_, delta)) in offsets.iter().enumerate() {
                    for l in 0..ll {
                        u[l] = combiners[l][k].dotc(&received[(i * ll + l) * nd + slot]);
                    }
                    if i == k && delta == 0 {
                        for l in 0..ll {
                            let j = 2 * (k * ll + l);
                            self.mean.add(j, u[l].re);
                            self.mean.add(j + 1, u[l].im);
                        }
                    }
                    add_outer(&mut outer, &u, 1.0);
                }
                let base = 2 * (k * kk + i) * ll * ll;
                for (j, x) in outer.iter().enumerate() {
                    self.second.add(base + 2 * j, x.re);
                    self.second.add(base + 2 * j + 1, x.im);
                }
            }
        }
        self.trials += 1;
        Ok(())
    }

    /// Combines two accumulators (e.g. from parallel chunks, in a fixed order).
    pub fn merge(&mut self, other: &LsfdMoments) {
        self.mean.merge(&other.mean);
        self.second.merge(&other.second);
        self.norms.merge(&other.norms);
        self.trials += other.trials;
    }

    /// Sample averages.
    pub fn finalize(&self, noise_power: f64) -> Result<LsfdEstimate> {
        if self.trials == 0 {
            return Err(Error::Numerical("no LSFD trials accumulated".into()));
        }
        let (kk, ll) = (self.num_tas, self.num_aps);
        let n = self.trials as f64;
        let mean = (0..kk)
            .map(|k| {
                CVector::from_fn(ll, |l, _| {
                    let j = 2 * (k * ll + l);
                    C64::new(self.mean.value(j), self.mean.value(j + 1)) / n
                })
            })
            .collect();
        let second = (0..kk * kk)
            .map(|ki| {
                let base = 2 * ki * ll * ll;
                // column-major, matching nalgebra's iteration order
                CMatrix::from_iterator(
                    ll,
                    ll,
                    (0..ll * ll).map(|j| {
                        C64::new(self.second.value(base + 2 * j), self.second.value(base + 2 * j + 1)) / n
                    }),
                )
            })
            .collect();
        let norms = (0..kk)
            .map(|k| DVector::from_fn(ll, |l, _| self.norms.value(k * ll + l) / n))
            .collect();
        Ok(LsfdEstimate {
            num_tas: kk,
            num_aps: ll,
            trials: self.trials,
            noise_power,
            mean,
            second,
            norms,
        })
    }
}

/// Estimated LSFD moments for one subcarrier.
#[derive(Debug, Clone)]
pub struct LsfdEstimate {
    pub num_tas: usize,
    pub num_aps: usize,
    pub trials: usize,
    pub noise_power: f64,
    /// `E{u_kk[0]}` per TA.
    pub mean: Vec<CVector>,
    /// `sum_m E{u_ki u_ki^H}`, indexed `k K + i`.
    pub second: Vec<CMatrix>,
    /// Diagonal of `Lambda_k` (`E{||v_kl||^2}`) per TA.
    pub norms: Vec<DVector<f64>>,
}

impl LsfdEstimate {
    pub fn second(&self, k: usize, i: usize) -> &CMatrix {
        &self.second[k * self.num_tas + i]
    }

    /// `(|a^H mu|^2, f_k, sigma^2 a^H Lambda a)` in linear-fractional form,
    /// where `f_kk` already excludes the desired mean.
    pub fn coefficients(&self, k: usize, a: &CVector) -> (f64, DVector<f64>, f64) {
        let signal = a.dotc(&self.mean[k]).norm_sqr();
        let f = DVector::from_fn(self.num_tas, |i, _| {
            let q = a.dotc(&(self.second(k, i) * a)).re;
            if i == k {
                (q - signal).max(0.0)
            } else {
                q
            }
        });
        let weight: DVector<f64> = a.map(|x| x.norm_sqr());
        (signal, f, self.noise_power * weight.dot(&self.norms[k]))
    }

    pub fn sinr(&self, k: usize, a: &CVector, powers: &[f64]) -> f64 {
        let (b, f, noise) = self.coefficients(k, a);
        let num = powers[k] * b;
        let den = f.iter().zip(powers).map(|(f, p)| f * p).sum::<f64>() + noise;
        if num <= 0.0 {
            0.0
        } else if den <= 0.0 {
            f64::INFINITY
        } else {
            num / den
        }
    }

    fn total(&self, k: usize, powers: &[f64]) -> CMatrix {
        let mut g = CMatrix::from_diagonal(&self.norms[k].map(|x| C64::new(x * self.noise_power, 0.0)));
        for (i, &p) in powers.iter().enumerate() {
            g += self.second(k, i) * C64::new(p, 0.0);
        }
        g
    }

    /// Optimal weights `(sum_i p_i sum_m E{u u^H} + sigma^2 Lambda)^{-1} E{u_kk[0]}`.
    pub fn optimal_weights(&self, k: usize, powers: &[f64]) -> Result<CVector> {
        let active: Vec<usize> = (0..self.num_aps).filter(|&l| self.norms[k][l] > 0.0).collect();
        let mut a = CVector::zeros(self.num_aps);
        if active.is_empty() {
            return Ok(a);
        }
        let sub = self.total(k, powers).select_rows(&active).select_columns(&active);
        let cond = condition_number(&sub);
        if cond > 1e12 {
            log::warn!(
                "LSFD moment matrix for TA {k} has condition number {cond:.3e} after {} trials",
                self.trials
            );
        }
        let rhs = CVector::from_iterator(active.len(), active.iter().map(|&l| self.mean[k][l]));
        let sol = hermitian_solve(&sub, &rhs)?;
        for (j, &l) in active.iter().enumerate() {
            a[l] = sol[j];
        }
        Ok(a)
    }

    /// Maximal SINR, evaluated at the optimal weights.
    pub fn max_sinr(&self, k: usize, powers: &[f64]) -> Result<f64> {
        let a = self.optimal_weights(k, powers)?;
        if a.iter().all(|x| x.norm_sqr() == 0.0) {
            return Ok(0.0);
        }
        Ok(self.sinr(k, &a, powers))
    }

    pub fn max_se(&self, k: usize, powers: &[f64]) -> Result<f64> {
        Ok((1.0 + self.max_sinr(k, powers)?).log2())
    }
}

/// Generic LSFD SE for TA `k` from a realization stream and a combiner
/// family `combine(real) -> combiners[l][k]`.
pub fn generic_lsfd_mc<I, F>(
    realizations: I,
    ici: &IciProfile,
    stats: &ChannelStatistics,
    powers: &[f64],
    s: usize,
    mut combine: F,
) -> Result<LsfdEstimate>
where
    I: IntoIterator<Item = ChannelRealization>,
    F: FnMut(&ChannelRealization) -> Result<Vec<Vec<CVector>>>,
{
    if powers.len() != stats.num_tas {
        return Err(Error::Dimension(format!("{} powers for {} TAs", powers.len(), stats.num_tas)));
    }
    let mut moments = LsfdMoments::new(stats.num_tas, stats.num_aps);
    for real in realizations {
        let combiners = combine(&real)?;
        moments.accumulate(&real, ici, &combiners, s)?;
    }
    moments.finalize(stats.noise_power)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{build_statistics, ChannelRealization, PairStatistics};
    use crate::combining::{local_combiners, Combiner};
    use crate::geometry::{build_snapshot, CorrelationModel, ScenarioConfig};
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn config(k: usize, l: usize, n: usize) -> ScenarioConfig {
        ScenarioConfig {
            num_tas: k,
            num_aps: l,
            antennas_per_ap: n,
            railway_length: 150.0 * l as f64,
            train_length: 120.0,
            velocity_kmh: 350.0,
            ..ScenarioConfig::default()
        }
    }

    fn setup(k: usize, l: usize, n: usize, seed: u64) -> (ChannelStatistics, IciProfile) {
        let cfg = config(k, l, n);
        let snap = build_snapshot(&cfg, 40.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let stats = build_statistics(&cfg, &snap, &vec![cfg.max_power; k], &mut rng).unwrap();
        (stats, IciProfile::new(&cfg, &snap))
    }

    /// Term-by-term evaluation with explicit index loops.
    fn naive_terms(
        stats: &ChannelStatistics,
        ici: &IciProfile,
        k: usize,
        i: usize,
        delta: i64,
    ) -> (Vec<C64>, Vec<f64>, Vec<C64>, Vec<C64>, Vec<f64>) {
        let n = stats.antennas;
        let mut b = vec![];
        let mut xi = vec![];
        let mut c = vec![];
        let mut d = vec![];
        let mut lam = vec![];
        for l in 0..stats.num_aps {
            let pk = stats.pair(k, l);
            let pi = stats.pair(i, l);
            let mut tr_q = 0.0;
            let mut hh = 0.0;
            let mut tr_rq = C64::new(0.0, 0.0);
            let mut hrh = C64::new(0.0, 0.0);
            let mut hqh = C64::new(0.0, 0.0);
            let mut hkhi = C64::new(0.0, 0.0);
            for a in 0..n {
                tr_q += pk.q[(a, a)].re;
                hh += pk.los[a].norm_sqr();
                hkhi += pk.los[a].conj() * pi.los[a];
                for bb in 0..n {
                    tr_rq += pi.corr[(a, bb)] * pk.q[(bb, a)];
                    hrh += pk.los[a].conj() * pi.corr[(a, bb)] * pk.los[bb];
                    hqh += pi.los[a].conj() * pk.q[(a, bb)] * pi.los[bb];
                }
            }
            let id = ici.nlos(delta);
            b.push(ici.los(k, l, 0) * hh + tr_q * ici.nlos(0));
            c.push(ici.los(k, l, delta) * hh + tr_q * id);
            xi.push(id * id * (tr_rq.re + hrh.re) + ici.los(i, l, delta).norm_sqr() * hqh.re);
            d.push(ici.los(i, l, delta) * hkhi);
            lam.push(tr_q + hh);
        }
        (b, xi, c, d, lam)
    }

    #[test]
    fn matches_term_by_term_oracle() {
        let (stats, ici) = setup(2, 2, 2, 1);
        for s in [0, 5] {
            let cf = ClosedFormStats::new(&stats, &ici, s, None).unwrap();
            for k in 0..2 {
                for i in 0..2 {
                    for &delta in cf.offsets() {
                        let (b, xi, c, d, lam) = naive_terms(&stats, &ici, k, i, delta);
                        for l in 0..2 {
                            assert!((cf.b(k)[l] - b[l]).norm() <= 1e-10 * b[l].norm());
                            assert_relative_eq!(cf.xi(k, i, delta)[l], xi[l], max_relative = 1e-10);
                            assert!((cf.c(k, delta)[l] - c[l]).norm() <= 1e-10 * c[l].norm().max(1e-30));
                            assert!((cf.d(k, i, delta)[l] - d[l]).norm() <= 1e-10 * d[l].norm().max(1e-30));
                            assert_relative_eq!(cf.lambda(k)[l], lam[l], max_relative = 1e-10);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn zero_offset_reduces_to_plain_terms() {
        let cfg = ScenarioConfig {
            velocity_kmh: 0.0,
            ..config(2, 3, 2)
        };
        let snap = build_snapshot(&cfg, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let stats = build_statistics(&cfg, &snap, &[0.2, 0.2], &mut rng).unwrap();
        let ici = IciProfile::new(&cfg, &snap);
        let cf = ClosedFormStats::new(&stats, &ici, 2, None).unwrap();
        for l in 0..3 {
            let p = stats.pair(0, l);
            let expected = p.los.norm_squared() + p.q.trace().re;
            assert_relative_eq!(cf.b(0)[l].re, expected, max_relative = 1e-12);
            assert!(cf.b(0)[l].im.abs() < 1e-12 * expected);
            // delta != 0: c = I_D tr(Q) = 0 at zero Doppler, d = 0
            assert!(cf.c(0, 1)[l].norm() < 1e-12 * expected);
            assert!(cf.d(0, 1, -2)[l].norm() < 1e-12 * expected);
        }
    }

    #[test]
    fn scalar_rayleigh_reduction() {
        // h_bar = 0, R = beta: Xi_kk[0] = beta q with q = p tau beta^2 / (p tau beta + sigma^2)
        let (beta, p, tau, sigma2) = (2e-9, 0.2, 1, 1e-12);
        let pair = PairStatistics::from_parts(
            CVector::zeros(1),
            CMatrix::from_element(1, 1, C64::new(beta, 0.0)),
            p,
            tau,
            sigma2,
        )
        .unwrap();
        let stats = ChannelStatistics::from_pairs(1, 1, vec![pair]).unwrap();
        let ici = IciProfile::from_epsilon(0.02, 8, DMatrix::from_element(1, 1, 0.01));
        let cf = ClosedFormStats::new(&stats, &ici, 0, None).unwrap();
        let q = p * tau as f64 * beta * beta / (p * tau as f64 * beta + sigma2);
        assert_relative_eq!(cf.xi(0, 0, 0)[0], beta * q, max_relative = 1e-10);
    }

    #[test]
    fn optimal_weights_reach_closed_form_maximum() {
        let (stats, ici) = setup(3, 4, 2, 7);
        let powers = [0.2, 0.1, 0.15];
        let cf = ClosedFormStats::new(&stats, &ici, 3, None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for k in 0..3 {
            let a = cf.optimal_weights(k, &powers, DRange::AllSubcarriers).unwrap();
            let achieved = cf.sinr(k, &a, &powers).unwrap();
            assert_relative_eq!(achieved, cf.max_sinr(k, &powers).unwrap(), max_relative = 1e-10);
            let mf = cf.sinr(k, &mf_weights(4), &powers).unwrap();
            assert!(achieved >= mf * (1.0 - 1e-12));
            for _ in 0..50 {
                let w = crate::linalg::complex_gaussian(&mut rng, 4);
                assert!(cf.sinr(k, &w, &powers).unwrap() <= achieved * (1.0 + 1e-10));
            }
            let scaled = &a * C64::new(0.0, -3.0);
            assert_relative_eq!(cf.sinr(k, &scaled, &powers).unwrap(), achieved, max_relative = 1e-10);
            let excl = cf.optimal_weights(k, &powers, DRange::ExcludeSelf).unwrap();
            assert!(cf.sinr(k, &excl, &powers).unwrap() <= achieved * (1.0 + 1e-10));
        }
        assert!(cf.sinr(0, &CVector::zeros(4), &powers).is_err());
    }

    #[test]
    fn single_ap_weight_is_irrelevant() {
        let (stats, ici) = setup(2, 1, 2, 13);
        let cf = ClosedFormStats::new(&stats, &ici, 0, None).unwrap();
        let powers = [0.2, 0.2];
        let one = cf.sinr(0, &CVector::from_element(1, C64::new(1.0, 0.0)), &powers).unwrap();
        let other = cf.sinr(0, &CVector::from_element(1, C64::new(-0.3, 2.0)), &powers).unwrap();
        assert_relative_eq!(one, other, max_relative = 1e-12);
    }

    #[test]
    fn selector_weights_match_single_ap_stats() {
        let (stats, ici) = setup(2, 3, 2, 17);
        let powers = [0.2, 0.05];
        let cf = ClosedFormStats::new(&stats, &ici, 1, None).unwrap();
        let mut mask = DMatrix::from_element(2, 3, false);
        mask[(0, 1)] = true;
        mask[(1, 1)] = true;
        let masked = ClosedFormStats::new(&stats, &ici, 1, Some(&mask)).unwrap();
        let mut e = CVector::zeros(3);
        e[1] = C64::new(1.0, 0.0);
        for k in 0..2 {
            assert_relative_eq!(
                cf.sinr(k, &e, &powers).unwrap(),
                masked.sinr(k, &mf_weights(3), &powers).unwrap(),
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn mirrored_aps_get_equal_weight_magnitude() {
        // pure LoS with opposite offsets over a symmetric offset range: the
        // second AP's terms are the conjugate mirror of the first's
        let steer = |sin: f64| crate::channel::steering_vector(2, 0.5, sin) * C64::new(1e-4, 0.0);
        let pairs = vec![
            PairStatistics::from_parts(steer(0.6), CMatrix::zeros(2, 2), 0.2, 1, 1e-9).unwrap(),
            PairStatistics::from_parts(steer(-0.6), CMatrix::zeros(2, 2), 0.2, 1, 1e-9).unwrap(),
        ];
        let stats = ChannelStatistics::from_pairs(1, 2, pairs).unwrap();
        let eps = DMatrix::from_row_slice(1, 2, &[0.03, -0.03]);
        let ici = IciProfile::from_epsilon(0.05, 9, eps);
        let cf = ClosedFormStats::new(&stats, &ici, 4, None).unwrap();
        let a = cf.optimal_weights(0, &[0.2], DRange::AllSubcarriers).unwrap();
        assert_relative_eq!(a[0].norm(), a[1].norm(), max_relative = 1e-9);

        // with NLoS the odd sign of I_D breaks the mirror slightly
        let cfg = ScenarioConfig {
            subcarriers: 9,
            num_tas: 1,
            num_aps: 2,
            antennas_per_ap: 2,
            correlation: CorrelationModel::Uncorrelated,
            ..ScenarioConfig::default()
        };
        let ta = cfg.ta_abscissas()[0];
        let snap = crate::geometry::build_snapshot_with_aps(&cfg, &[100.0, 300.0], 200.0 - ta).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let stats = build_statistics(&cfg, &snap, &[0.2], &mut rng).unwrap();
        let ici = IciProfile::new(&cfg, &snap);
        assert_relative_eq!(ici.epsilon()[(0, 0)], -ici.epsilon()[(0, 1)], epsilon = 1e-15);
        let cf = ClosedFormStats::new(&stats, &ici, 4, None).unwrap();
        let a = cf.optimal_weights(0, &[0.2], DRange::AllSubcarriers).unwrap();
        assert_relative_eq!(a[0].norm(), a[1].norm(), max_relative = 1e-2);
    }

    #[test]
    fn monte_carlo_matches_closed_form() {
        let (stats, ici) = setup(2, 2, 1, 21);
        let powers = [0.2, 0.1];
        let s = 3;
        let cf = ClosedFormStats::new(&stats, &ici, s, None).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let stream = (0..100_000).map(|_| ChannelRealization::draw(&stats, &mut rng));
        let est = generic_lsfd_mc(stream, &ici, &stats, &powers, s, |real| {
            Ok((0..2)
                .map(|l| local_combiners(real, &stats, &ici, &powers, s, l, Combiner::Mr).unwrap())
                .collect())
        })
        .unwrap();
        for k in 0..2 {
            let closed = (1.0 + cf.max_sinr(k, &powers).unwrap()).log2();
            let mc = est.max_se(k, &powers).unwrap();
            assert!((mc - closed).abs() <= 0.02 * closed, "k={k} mc={mc} closed={closed}");
            let mf = mf_weights(2);
            let closed_mf = closed_form_se_mr(&cf, k, &mf, &powers).unwrap();
            let mc_mf = (1.0 + est.sinr(k, &mf, &powers)).log2();
            assert!((mc_mf - closed_mf).abs() <= 0.02 * closed_mf);
        }
    }

    #[test]
    fn deterministic_channels_are_exact() {
        // R = 0: every moment is deterministic and one trial suffices
        let los = |x: f64| CVector::from_vec(vec![C64::new(x, 0.3), C64::new(-0.2, x)]);
        let pairs = vec![
            PairStatistics::from_parts(los(1.0), CMatrix::zeros(2, 2), 0.2, 2, 0.1).unwrap(),
            PairStatistics::from_parts(los(0.4), CMatrix::zeros(2, 2), 0.2, 2, 0.1).unwrap(),
            PairStatistics::from_parts(los(0.7), CMatrix::zeros(2, 2), 0.2, 2, 0.1).unwrap(),
            PairStatistics::from_parts(los(1.3), CMatrix::zeros(2, 2), 0.2, 2, 0.1).unwrap(),
        ];
        let stats = ChannelStatistics::from_pairs(2, 2, pairs).unwrap();
        let ici = IciProfile::ici_free(2, 2, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let real = ChannelRealization::draw(&stats, &mut rng);
        let powers = [0.2, 0.1];
        let est = generic_lsfd_mc(std::iter::once(real.clone()), &ici, &stats, &powers, 0, |r| {
            Ok((0..2)
                .map(|l| (0..2).map(|k| r.ghat(k, l).clone()).collect())
                .collect())
        })
        .unwrap();
        let a = mf_weights(2);
        // direct: sum over APs of v_kl^H h_il
        for k in 0..2 {
            let i = 1 - k;
            let sig: C64 = (0..2).map(|l| real.ghat(k, l).dotc(real.los(k, l)) * a[l]).sum();
            let int: C64 = (0..2).map(|l| real.ghat(k, l).dotc(real.los(i, l)) * a[l]).sum();
            let noise: f64 = (0..2).map(|l| a[l].norm_sqr() * real.ghat(k, l).norm_squared()).sum::<f64>() * 0.1;
            let direct = powers[k] * sig.norm_sqr() / (powers[i] * int.norm_sqr() + noise);
            assert_relative_eq!(est.sinr(k, &a, &powers), direct, max_relative = 1e-10);
        }
    }

    #[test]
    fn compensated_merge_is_order_stable() {
        let mut a = CompensatedSum::new(1);
        let mut b = CompensatedSum::new(1);
        a.add(0, 1e16);
        b.add(0, 1.0);
        b.add(0, 1.0);
        a.merge(&b);
        a.add(0, -1e16);
        assert_eq!(a.value(0), 2.0);
    }
}
