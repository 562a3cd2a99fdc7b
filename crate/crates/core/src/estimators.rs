//! Realized covariance, the asymptotic covariance estimator and the
//! Studentized residual-sparsity statistics.
//!
//! Vectorized indices follow the row-major convention: the pair `(i, j)`
//! of a `d`-dimensional process sits at position `i * d + j` (zero-based).
//! The `d^2 x d^2` estimator is never formed; [`AsyCovOracle`] evaluates
//! single entries in `O(n)` and memoizes them.

use dashmap::DashMap;
use serde::{Deserialize, Serialize};

use crate::error::{HicovError, Result};
use crate::model_sim::TrueQuantities;
use crate::sum::Compensated;

/// Reported statistic magnitude for pairs whose variance estimate was floored.
pub const SENTINEL: f64 = 1e15;

/// Relative floor applied to the variance estimate of a pair.
pub const VHAT_FLOOR_REL: f64 = 1e-12;

pub type Pair = (usize, usize);

/// One-step increments `dy[i][h] = Y^i_{t_{h+1}} - Y^i_{t_h}`, one row per asset.
#[derive(Debug, Clone, PartialEq)]
pub struct IncrementMatrix {
    d: usize,
    n: usize,
    dy: Vec<f64>,
}

impl IncrementMatrix {
    pub fn new(d: usize, n: usize, dy: Vec<f64>) -> Result<Self> {
        if n < 2 {
            return Err(HicovError::invalid(format!("need at least 2 increments, got {n}")));
        }
        if d == 0 || dy.len() != d * n {
            return Err(HicovError::invalid(format!(
                "increment buffer has {} entries, expected {d} x {n}",
                dy.len()
            )));
        }
        if let Some(pos) = dy.iter().position(|x| !x.is_finite()) {
            return Err(HicovError::Data(format!(
                "non-finite increment for asset {} at step {}",
                pos / n,
                pos % n
            )));
        }
        Ok(Self { d, n, dy })
    }

    /// Differences along each row of a row-major `d x cols` price matrix.
    pub fn from_prices(d: usize, cols: usize, prices: &[f64]) -> Result<Self> {
        if cols < 3 || prices.len() != d * cols {
            return Err(HicovError::invalid(format!(
                "price matrix needs d x (n+1) entries with n >= 2 (d = {d}, columns = {cols})"
            )));
        }
        let n = cols - 1;
        let mut dy = Vec::with_capacity(d * n);
        for row in prices.chunks_exact(cols) {
            dy.extend(row.windows(2).map(|w| w[1] - w[0]));
        }
        Self::new(d, n, dy)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn row(&self, asset: usize) -> &[f64] {
        &self.dy[asset * self.n..(asset + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.dy
    }

    /// Copy with asset `asset` multiplied by `c`.
    pub fn scaled(&self, asset: usize, c: f64) -> Self {
        let mut out = self.clone();
        for x in &mut out.dy[asset * self.n..(asset + 1) * self.n] {
            *x *= c;
        }
        out
    }

    /// Copy with the factor row replaced by zeros.
    pub fn with_zero_factor(&self) -> Self {
        let mut out = self.clone();
        let f = self.d - 1;
        out.dy[f * self.n..].iter_mut().for_each(|x| *x = 0.0);
        out
    }
}

/// `sum_h dY_h dY_h'`, symmetric `d x d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizedCov {
    pub d: usize,
    pub rc: Vec<f64>,
}

impl RealizedCov {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rc[i * self.d + j]
    }

    pub fn factor(&self) -> usize {
        self.d - 1
    }

    /// Copy with `[Y^d, Y^d]` set to one, used when the factor column is
    /// identically zero so that the pair statistic reduces to a test of
    /// `[Y^i, Y^j]` itself.
    pub fn with_unit_factor_variance(&self) -> Self {
        let mut out = self.clone();
        let f = self.d - 1;
        out.rc[f * self.d + f] = 1.0;
        out
    }
}

pub fn realized_cov(inc: &IncrementMatrix) -> RealizedCov {
    let d = inc.d();
    let mut rc = vec![0.0; d * d];
    for i in 0..d {
        let xi = inc.row(i);
        for j in i..d {
            let xj = inc.row(j);
            let mut acc = Compensated::default();
            for (a, b) in xi.iter().zip(xj) {
                acc.add(a * b);
            }
            let v = acc.value();
            rc[i * d + j] = v;
            rc[j * d + i] = v;
        }
    }
    RealizedCov { d, rc }
}

fn canonical_key(ij: Pair, kl: Pair) -> [u32; 4] {
    let p = if ij.0 <= ij.1 { ij } else { (ij.1, ij.0) };
    let q = if kl.0 <= kl.1 { kl } else { (kl.1, kl.0) };
    let (p, q) = if p <= q { (p, q) } else { (q, p) };
    [p.0 as u32, p.1 as u32, q.0 as u32, q.1 as u32]
}

/// `n sum_h chi_h^{ij} chi_h^{kl} - n/2 sum_h (chi_h^{ij} chi_{h+1}^{kl} + chi_{h+1}^{ij} chi_h^{kl})`.
fn chat_uncached(inc: &IncrementMatrix, ij: Pair, kl: Pair) -> f64 {
    let (xi, xj, xk, xl) = (inc.row(ij.0), inc.row(ij.1), inc.row(kl.0), inc.row(kl.1));
    let n = inc.n();
    let mut lag0 = Compensated::default();
    let mut lag1 = Compensated::default();
    let mut prev_a = 0.0;
    let mut prev_b = 0.0;
    for h in 0..n {
        let a = xi[h] * xj[h];
        let b = xk[h] * xl[h];
        lag0.add(a * b);
        if h > 0 {
            lag1.add(prev_a * b);
            lag1.add(a * prev_b);
        }
        prev_a = a;
        prev_b = b;
    }
    n as f64 * (lag0.value() - 0.5 * lag1.value())
}

/// Lazy, memoized entries of the asymptotic covariance estimator.
///
/// Keys are canonicalized under `(i,j) <-> (j,i)` and `(ij) <-> (kl)`, so
/// symmetric requests return bit-identical values. The cache is sharded and
/// safe to query from several threads.
pub struct AsyCovOracle<'a> {
    inc: &'a IncrementMatrix,
    cache: DashMap<[u32; 4], f64>,
}

impl<'a> AsyCovOracle<'a> {
    pub fn new(inc: &'a IncrementMatrix) -> Self {
        Self {
            inc,
            cache: DashMap::new(),
        }
    }

    pub fn increments(&self) -> &IncrementMatrix {
        self.inc
    }

    pub fn entry(&self, ij: Pair, kl: Pair) -> Result<f64> {
        let d = self.inc.d();
        for idx in [ij.0, ij.1, kl.0, kl.1] {
            if idx >= d {
                return Err(HicovError::IndexOutOfRange { index: idx, dim: d });
            }
        }
        Ok(self.entry_unchecked(ij, kl))
    }

    fn entry_unchecked(&self, ij: Pair, kl: Pair) -> f64 {
        let key = canonical_key(ij, kl);
        if let Some(v) = self.cache.get(&key) {
            return *v;
        }
        let v = chat_uncached(self.inc, (key[0] as usize, key[1] as usize), (key[2] as usize, key[3] as usize));
        self.cache.insert(key, v);
        v
    }

    /// Number of distinct entries evaluated so far.
    pub fn evaluated(&self) -> usize {
        self.cache.len()
    }
}

/// `rc^{id} rc^{jd} - rc^{ij} rc^{dd}` with `d` the factor.
pub fn that(rc: &RealizedCov, i: usize, j: usize) -> f64 {
    let f = rc.factor();
    rc.get(i, f) * rc.get(j, f) - rc.get(i, j) * rc.get(f, f)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vhat {
    pub value: f64,
    pub clamped: bool,
}

/// Scale-aware floor `1e-12 * rc^{ii} rc^{jj} (rc^{dd})^2`.
pub fn vhat_floor(rc: &RealizedCov, i: usize, j: usize) -> f64 {
    let f = rc.factor();
    let scale = rc.get(i, i) * rc.get(j, j) * rc.get(f, f) * rc.get(f, f);
    (VHAT_FLOOR_REL * scale).max(f64::MIN_POSITIVE)
}

/// Estimated asymptotic variance of `that(i, j)`, from ten oracle entries.
///
/// The value is a quadratic form in a covariance matrix and hence
/// non-negative up to rounding; anything at or below [`vhat_floor`] is
/// replaced by the floor and flagged.
pub fn vhat(oracle: &AsyCovOracle<'_>, rc: &RealizedCov, i: usize, j: usize) -> Result<Vhat> {
    let d = rc.d;
    if oracle.increments().d() != d {
        return Err(HicovError::invalid("oracle and realized covariance disagree in dimension"));
    }
    let f = d - 1;
    for idx in [i, j] {
        if idx >= f {
            return Err(HicovError::IndexOutOfRange { index: idx, dim: f });
        }
    }
    let (qif, qjf, qij, qff) = (rc.get(i, f), rc.get(j, f), rc.get(i, j), rc.get(f, f));
    let c = |a: Pair, b: Pair| oracle.entry_unchecked(a, b);
    let (pif, pjf, pff, pij) = ((i, f), (j, f), (f, f), (i, j));

    let value = qjf * qjf * c(pif, pif)
        + qif * qif * c(pjf, pjf)
        + qij * qij * c(pff, pff)
        + qff * qff * c(pij, pij)
        + 2.0 * qff * qij * c(pij, pff)
        + 2.0 * qif * qjf * c(pif, pjf)
        - 2.0 * qif * qff * c(pij, pjf)
        - 2.0 * qjf * qff * c(pij, pif)
        - 2.0 * qij * qif * c(pjf, pff)
        - 2.0 * qij * qjf * c(pif, pff);

    let floor = vhat_floor(rc, i, j);
    if value > floor {
        Ok(Vhat { value, clamped: false })
    } else {
        Ok(Vhat {
            value: floor,
            clamped: true,
        })
    }
}

/// How the pair statistic treats the last column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum StatMode {
    /// Last column is the observable factor.
    #[default]
    Factor,
    /// Last column is identically zero; the statistic tests `[Y^i, Y^j] = 0`.
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairStat {
    pub i: usize,
    pub j: usize,
    pub that: f64,
    pub vhat: f64,
    pub t: f64,
    pub t_centered: Option<f64>,
    pub clamped: bool,
}

/// Pair statistics plus the realized covariance they were computed from.
#[derive(Debug, Clone)]
pub struct PairAnalysis {
    pub mode: StatMode,
    /// Realized covariance as used by the statistics (unit factor variance
    /// in [`StatMode::Raw`]).
    pub rc: RealizedCov,
    pub stats: Vec<PairStat>,
    pub n: usize,
}

pub(crate) fn studentize(n: usize, that: f64, vhat: Vhat) -> f64 {
    if vhat.clamped {
        if that == 0.0 {
            0.0
        } else {
            that.signum() * SENTINEL
        }
    } else {
        (n as f64).sqrt() * that / vhat.value.sqrt()
    }
}

fn check_pairs(pairs: &[Pair], d_under: usize) -> Result<()> {
    for &(i, j) in pairs {
        if i >= j {
            return Err(HicovError::invalid(format!("pair ({i}, {j}) must satisfy i < j")));
        }
        if j >= d_under {
            return Err(HicovError::IndexOutOfRange { index: j, dim: d_under });
        }
    }
    Ok(())
}

/// All pairs `i < j < d_under`.
pub fn all_pairs(d_under: usize) -> Vec<Pair> {
    (0..d_under).flat_map(|i| (i + 1..d_under).map(move |j| (i, j))).collect()
}

/// Statistics for `pairs` in the given mode, sharing one realized
/// covariance and one oracle.
pub fn analyze_pairs(
    inc: &IncrementMatrix,
    pairs: &[Pair],
    mode: StatMode,
    truth: Option<&TrueQuantities>,
) -> Result<PairAnalysis> {
    let d = inc.d();
    if d < 3 {
        return Err(HicovError::invalid(format!("need at least two assets and a factor, got d = {d}")));
    }
    check_pairs(pairs, d - 1)?;
    if let Some(t) = truth {
        if t.d != d {
            return Err(HicovError::invalid("truth and increments disagree in dimension"));
        }
    }
    let rc = match mode {
        StatMode::Factor => realized_cov(inc),
        StatMode::Raw => realized_cov(inc).with_unit_factor_variance(),
    };
    let oracle = AsyCovOracle::new(inc);
    let n = inc.n();
    let rn = (n as f64).sqrt();
    let mut stats = Vec::with_capacity(pairs.len());
    for &(i, j) in pairs {
        let th = that(&rc, i, j);
        let v = vhat(&oracle, &rc, i, j)?;
        let t = studentize(n, th, v);
        let t_centered = truth.map(|tq| {
            if v.clamped {
                t
            } else {
                rn * (th - tq.tau(i, j)) / v.value.sqrt()
            }
        });
        stats.push(PairStat {
            i,
            j,
            that: th,
            vhat: v.value,
            t,
            t_centered,
            clamped: v.clamped,
        });
    }
    Ok(PairAnalysis { mode, rc, stats, n })
}

/// Factor-mode statistics `T = sqrt(n) that / sqrt(vhat)` for each pair.
pub fn pair_stats(inc: &IncrementMatrix, pairs: &[Pair], truth: Option<&TrueQuantities>) -> Result<Vec<PairStat>> {
    analyze_pairs(inc, pairs, StatMode::Factor, truth).map(|a| a.stats)
}
