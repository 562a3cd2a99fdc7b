//! MA(1) multiplier bootstrap for the pair statistics.
//!
//! Multipliers are `e_h = eta_h - eta_{h-1}` with `eta_0..eta_n` iid
//! `N(0, 1/2)`, so `Var(e_h) = 1`, `Cov(e_h, e_{h+1}) = -1/2` and all higher
//! lags vanish. With these weights the conditional covariance of
//! `sqrt(n) sum_h e_h chi_h` is exactly the asymptotic covariance estimator.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{HicovError, Result};
use crate::estimators::{IncrementMatrix, Pair, PairAnalysis, RealizedCov};
use crate::mtest::HypothesisPartition;
use crate::par;
use crate::rng::{domain, substream};

#[derive(Debug, Clone, PartialEq)]
pub struct MultiplierVector {
    pub e: Vec<f64>,
}

impl MultiplierVector {
    pub fn zeros(n: usize) -> Self {
        Self { e: vec![0.0; n] }
    }

    pub fn len(&self) -> usize {
        self.e.len()
    }

    pub fn is_empty(&self) -> bool {
        self.e.is_empty()
    }
}

pub fn gen_multipliers<R: Rng + ?Sized>(n: usize, rng: &mut R) -> MultiplierVector {
    let sd = std::f64::consts::FRAC_1_SQRT_2;
    let mut prev = sd * rng.sample::<f64, _>(StandardNormal);
    let e = (0..n)
        .map(|_| {
            let cur = sd * rng.sample::<f64, _>(StandardNormal);
            let out = cur - prev;
            prev = cur;
            out
        })
        .collect();
    MultiplierVector { e }
}

/// Bootstrapped realized covariance restricted to a set of assets.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialMatrix {
    rows: Vec<usize>,
    slot: HashMap<usize, usize>,
    values: Vec<f64>,
}

impl PartialMatrix {
    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        let (a, b) = (*self.slot.get(&i)?, *self.slot.get(&j)?);
        Some(self.values[a * self.rows.len() + b])
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.get(i, j).expect("asset present in partial matrix")
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let k = 4 * c;
        acc[0] += a[k] * b[k];
        acc[1] += a[k + 1] * b[k + 1];
        acc[2] += a[k + 2] * b[k + 2];
        acc[3] += a[k + 3] * b[k + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for k in 4 * chunks..a.len() {
        s += a[k] * b[k];
    }
    s
}

/// `sqrt(n) sum_h e_h dY_h^i dY_h^j` for all `i, j` in `rows`, as one
/// weighted Gram product. `rows` must contain the factor.
pub fn bootstrap_rc(inc: &IncrementMatrix, e: &MultiplierVector, rows: &[usize]) -> Result<PartialMatrix> {
    let d = inc.d();
    let n = inc.n();
    if e.len() != n {
        return Err(HicovError::invalid(format!("{} multipliers for {n} increments", e.len())));
    }
    if !rows.contains(&(d - 1)) {
        return Err(HicovError::invalid(format!("bootstrap rows must include the factor (index {})", d - 1)));
    }
    let mut rows: Vec<usize> = rows.to_vec();
    rows.sort_unstable();
    rows.dedup();
    if let Some(&bad) = rows.iter().find(|&&r| r >= d) {
        return Err(HicovError::IndexOutOfRange { index: bad, dim: d });
    }
    let k = rows.len();
    let weighted: Vec<Vec<f64>> = rows
        .iter()
        .map(|&r| inc.row(r).iter().zip(&e.e).map(|(x, w)| x * w).collect())
        .collect();
    let rn = (n as f64).sqrt();
    let mut values = vec![0.0; k * k];
    for a in 0..k {
        for b in a..k {
            let v = rn * dot(&weighted[a], inc.row(rows[b]));
            values[a * k + b] = v;
            values[b * k + a] = v;
        }
    }
    let slot = rows.iter().enumerate().map(|(s, &r)| (r, s)).collect();
    Ok(PartialMatrix { rows, slot, values })
}

/// Bootstrapped numerator
/// `rc*^{id} rc^{jd} + rc^{id} rc*^{jd} - rc*^{ij} rc^{dd} - rc^{ij} rc*^{dd}`.
pub fn that_star(rc: &RealizedCov, rc_star: &PartialMatrix, i: usize, j: usize) -> f64 {
    let f = rc.factor();
    rc_star.at(i, f) * rc.get(j, f) + rc.get(i, f) * rc_star.at(j, f)
        - rc_star.at(i, j) * rc.get(f, f)
        - rc.get(i, j) * rc_star.at(f, f)
}

/// Bootstrapped statistic `that* / sqrt(vhat)`.
///
/// `rc_star` already carries the `sqrt(n)` scaling, so the conditional
/// variance of the result is exactly one.
pub fn tstar(rc: &RealizedCov, rc_star: &PartialMatrix, vhat_ij: f64, i: usize, j: usize) -> f64 {
    that_star(rc, rc_star, i, j) / vhat_ij.sqrt()
}

/// Bootstrapped group maxima, one row per resample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapDraws {
    /// Row-major `b x l`.
    pub maxima: Vec<f64>,
    pub b: usize,
    pub l: usize,
    pub partition_id: String,
}

impl BootstrapDraws {
    pub fn get(&self, resample: usize, group: usize) -> f64 {
        self.maxima[resample * self.l + group]
    }

    pub fn row(&self, resample: usize) -> &[f64] {
        &self.maxima[resample * self.l..(resample + 1) * self.l]
    }

    /// Flat CSV: a header line `b,l,partition_id` followed by `b` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{},{},{}", self.b, self.l, self.partition_id)?;
        for r in 0..self.b {
            let line: Vec<String> = self.row(r).iter().map(|x| format!("{x}")).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut lines = input.lines();
        let header = lines.next().ok_or_else(|| HicovError::Data("empty draws cache".into()))??;
        let mut parts = header.splitn(3, ',');
        let parse_usize = |s: Option<&str>| -> Result<usize> {
            s.and_then(|x| x.trim().parse().ok())
                .ok_or_else(|| HicovError::Data(format!("bad draws cache header `{header}`")))
        };
        let b = parse_usize(parts.next())?;
        let l = parse_usize(parts.next())?;
        let partition_id = parts.next().unwrap_or_default().to_string();
        let mut maxima = Vec::with_capacity(b * l);
        for line in lines {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            for cell in line.split(',') {
                maxima.push(
                    cell.parse::<f64>()
                        .map_err(|e| HicovError::Data(format!("bad draws cache value `{cell}`: {e}")))?,
                );
            }
        }
        if maxima.len() != b * l {
            return Err(HicovError::Data(format!(
                "draws cache holds {} values, header says {b} x {l}",
                maxima.len()
            )));
        }
        Ok(Self {
            maxima,
            b,
            l,
            partition_id,
        })
    }
}

/// Cache key for persisted draws: hash of the increments, seed, resample
/// count and partition.
pub fn draws_cache_key(inc: &IncrementMatrix, seed: u64, b: usize, partition_id: &str) -> String {
    let mut h = Sha256::new();
    h.update((inc.d() as u64).to_le_bytes());
    h.update((inc.n() as u64).to_le_bytes());
    for x in inc.as_slice() {
        h.update(x.to_le_bytes());
    }
    h.update(seed.to_le_bytes());
    h.update((b as u64).to_le_bytes());
    h.update(partition_id.as_bytes());
    h.finalize().iter().take(16).map(|byte| format!("{byte:02x}")).collect()
}

/// Group maxima `max_{lambda in group} |T*_lambda|` for `b` resamples whose
/// multipliers come from `source(resample)`.
///
/// Pairs whose variance estimate was floored contribute zero.
pub fn bootstrap_group_maxima_with<F>(
    inc: &IncrementMatrix,
    analysis: &PairAnalysis,
    partition: &HypothesisPartition,
    b: usize,
    source: F,
) -> Result<BootstrapDraws>
where
    F: Fn(usize) -> MultiplierVector + Sync + Send,
{
    if b == 0 {
        return Err(HicovError::invalid("need at least one bootstrap resample"));
    }
    if inc.d() != analysis.rc.d {
        return Err(HicovError::invalid("increments and statistics disagree in dimension"));
    }
    let index: HashMap<Pair, usize> = analysis.stats.iter().enumerate().map(|(k, s)| ((s.i, s.j), k)).collect();
    let mut groups: Vec<Vec<(usize, usize, f64)>> = Vec::with_capacity(partition.len());
    let mut rows = vec![inc.d() - 1];
    for g in partition.groups() {
        let mut members = Vec::with_capacity(g.len());
        for &(i, j) in g {
            let k = *index
                .get(&(i, j))
                .ok_or_else(|| HicovError::Partition(format!("pair ({i}, {j}) has no statistic")))?;
            let st = &analysis.stats[k];
            if !st.clamped {
                members.push((i, j, st.vhat.sqrt()));
            }
            rows.push(i);
            rows.push(j);
        }
        groups.push(members);
    }
    rows.sort_unstable();
    rows.dedup();

    let l = partition.len();
    let rc = &analysis.rc;
    let per_resample = par::map_indexed(b, |r| -> Result<Vec<f64>> {
        let e = source(r);
        let star = bootstrap_rc(inc, &e, &rows)?;
        Ok(groups
            .iter()
            .map(|members| {
                members
                    .iter()
                    .map(|&(i, j, sv)| (that_star(rc, &star, i, j) / sv).abs())
                    .fold(0.0, f64::max)
            })
            .collect())
    });
    let mut maxima = Vec::with_capacity(b * l);
    for row in per_resample {
        maxima.extend(row?);
    }
    Ok(BootstrapDraws {
        maxima,
        b,
        l,
        partition_id: partition.fingerprint(),
    })
}

/// As [`bootstrap_group_maxima_with`], with resample `r` drawing its
/// multipliers from ChaCha stream `r` under a key taken from `rng`.
pub fn bootstrap_group_maxima<R: Rng + ?Sized>(
    inc: &IncrementMatrix,
    analysis: &PairAnalysis,
    partition: &HypothesisPartition,
    b: usize,
    rng: &mut R,
) -> Result<BootstrapDraws> {
    let base: u64 = rng.random();
    let n = inc.n();
    bootstrap_group_maxima_with(inc, analysis, partition, b, |r| {
        gen_multipliers(n, &mut substream(base, domain::BOOTSTRAP, r as u64))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{all_pairs, analyze_pairs, realized_cov, AsyCovOracle, StatMode};
    use crate::mtest::pairwise_partition;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_inc(d: usize, n: usize, seed: u64) -> IncrementMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dy = (0..d * n).map(|_| rng.sample::<f64, _>(StandardNormal) / (n as f64).sqrt()).collect();
        IncrementMatrix::new(d, n, dy).unwrap()
    }

    #[test]
    fn multipliers_telescope() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let reps = 20_000;
        for n in [1usize, 5, 40] {
            let sums: Vec<f64> = (0..reps).map(|_| gen_multipliers(n, &mut rng).e.iter().sum()).collect();
            let var = sums.iter().map(|s| s * s).sum::<f64>() / reps as f64;
            // Var of a chi-square(reps)/reps estimator: sd = sqrt(2/reps)
            assert!((var - 1.0).abs() < 4.0 * (2.0 / reps as f64).sqrt(), "n {n} var {var}");
        }
    }

    #[test]
    fn zero_multipliers_give_zero_matrix() {
        let inc = random_inc(3, 10, 1);
        let m = bootstrap_rc(&inc, &MultiplierVector::zeros(10), &[0, 1, 2]).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(m.get(i, j), Some(0.0));
            }
        }
    }

    #[test]
    fn bootstrap_rc_hand_value_and_factor_requirement() {
        let inc = IncrementMatrix::new(1, 2, vec![1.0, 1.0]).unwrap();
        let e = MultiplierVector { e: vec![1.0, -1.0] };
        assert_eq!(bootstrap_rc(&inc, &e, &[0]).unwrap().get(0, 0), Some(0.0));

        let inc = random_inc(3, 4, 2);
        assert!(bootstrap_rc(&inc, &MultiplierVector::zeros(4), &[0, 1]).is_err());
    }

    #[test]
    fn tstar_hand_values() {
        let inc = random_inc(3, 4, 2);
        let zero = bootstrap_rc(&inc, &MultiplierVector::zeros(4), &[0, 1, 2]).unwrap();
        let rc = realized_cov(&inc);
        assert_eq!(tstar(&rc, &zero, 1.0, 0, 1), 0.0);

        let ones_rc = RealizedCov { d: 3, rc: vec![1.0; 9] };
        let ones_star = PartialMatrix {
            rows: vec![0, 1, 2],
            slot: [(0, 0), (1, 1), (2, 2)].into_iter().collect(),
            values: vec![1.0; 9],
        };
        assert_eq!(that_star(&ones_rc, &ones_star, 0, 1), 0.0);
    }

    #[test]
    fn conditional_variance_of_tstar_is_one() {
        // Var(T*|data) = g' C g / vhat with g the gradient of that; exact.
        let inc = random_inc(4, 25, 6);
        let rc = realized_cov(&inc);
        let o = AsyCovOracle::new(&inc);
        let f = 3;
        for (i, j) in all_pairs(3) {
            let g = [
                ((i, f), rc.get(j, f)),
                ((j, f), rc.get(i, f)),
                ((i, j), -rc.get(f, f)),
                ((f, f), -rc.get(i, j)),
            ];
            let mut q = 0.0;
            for &(p, gp) in &g {
                for &(r, gr) in &g {
                    q += gp * gr * o.entry(p, r).unwrap();
                }
            }
            let v = crate::estimators::vhat(&o, &rc, i, j).unwrap().value;
            assert!((q / v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn stub_zero_multipliers_give_zero_maxima() {
        let inc = random_inc(4, 30, 8);
        let part = pairwise_partition(3);
        let an = analyze_pairs(&inc, &all_pairs(3), StatMode::Factor, None).unwrap();
        let draws = bootstrap_group_maxima_with(&inc, &an, &part, 1, |_| MultiplierVector::zeros(30)).unwrap();
        assert_eq!(draws.l, 3);
        assert!(draws.maxima.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn draws_are_deterministic_and_nonnegative() {
        let inc = random_inc(5, 40, 9);
        let part = pairwise_partition(4);
        let an = analyze_pairs(&inc, &all_pairs(4), StatMode::Factor, None).unwrap();
        let a = bootstrap_group_maxima(&inc, &an, &part, 50, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = bootstrap_group_maxima(&inc, &an, &part, 50, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.l, 6);
        assert!(a.maxima.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn tstar_is_scale_invariant() {
        let inc = random_inc(4, 30, 10);
        let e = gen_multipliers(30, &mut ChaCha8Rng::seed_from_u64(4));
        let t_of = |inc: &IncrementMatrix| {
            let an = analyze_pairs(inc, &[(0, 2)], StatMode::Factor, None).unwrap();
            let star = bootstrap_rc(inc, &e, &[0, 1, 2, 3]).unwrap();
            tstar(&an.rc, &star, an.stats[0].vhat, 0, 2)
        };
        let base = t_of(&inc);
        for c in [0.5, 2.0, 10.0] {
            for asset in 0..4 {
                let t = t_of(&inc.scaled(asset, c));
                assert!((t - base).abs() <= 1e-10 * base.abs());
            }
        }
    }

    #[test]
    fn draws_cache_round_trip() {
        let draws = BootstrapDraws {
            maxima: vec![0.1, 1.0 / 3.0, 2.5e-17, 7.0],
            b: 2,
            l: 2,
            partition_id: "abc".into(),
        };
        let mut buf = Vec::new();
        draws.write_csv(&mut buf).unwrap();
        let back = BootstrapDraws::read_csv(&buf[..]).unwrap();
        assert_eq!(back, draws);
    }
}
