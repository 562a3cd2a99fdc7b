//! Stepdown multiple testing over a partition of the pair hypotheses.
//!
//! Groups are tested with `max |T|` over their members. The stepdown loop
//! sorts the group statistics in descending order and compares the k-th
//! largest against the critical value of the set of groups not yet
//! rejected. Two critical value families are provided: Bonferroni-Holm
//! (normal quantile at `1 - alpha / (2m)`, `m` the number of remaining
//! pairs) and Romano-Wolf (bootstrap quantile of the maximum over the
//! remaining groups).

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use statrs::function::erf::erfc;

use crate::bootstrap::BootstrapDraws;
use crate::error::{HicovError, Result};
use crate::estimators::{Pair, SENTINEL};

/// Disjoint, non-empty groups of pairs `(i, j)`, `i < j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisPartition {
    groups: Vec<Vec<Pair>>,
    labels: Vec<String>,
    /// Sector names per group, for sector partitions.
    sector_keys: Option<Vec<(String, String)>>,
}

impl HypothesisPartition {
    pub fn new(groups: Vec<Vec<Pair>>, labels: Vec<String>) -> Result<Self> {
        if groups.len() != labels.len() {
            return Err(HicovError::Partition(format!(
                "{} groups but {} labels",
                groups.len(),
                labels.len()
            )));
        }
        let mut seen = HashSet::new();
        for (g, members) in groups.iter().enumerate() {
            if members.is_empty() {
                return Err(HicovError::Partition(format!("group `{}` is empty", labels[g])));
            }
            for &(i, j) in members {
                if i >= j {
                    return Err(HicovError::Partition(format!("pair ({i}, {j}) must satisfy i < j")));
                }
                if !seen.insert((i, j)) {
                    return Err(HicovError::Partition(format!("pair ({i}, {j}) appears in more than one group")));
                }
            }
        }
        Ok(Self {
            groups,
            labels,
            sector_keys: None,
        })
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn groups(&self) -> &[Vec<Pair>] {
        &self.groups
    }

    pub fn group(&self, l: usize) -> &[Pair] {
        &self.groups[l]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn sector_keys(&self) -> Option<&[(String, String)]> {
        self.sector_keys.as_deref()
    }

    /// All pairs, group by group.
    pub fn pairs(&self) -> Vec<Pair> {
        self.groups.iter().flatten().copied().collect()
    }

    /// Number of pairs in the union of the given groups.
    pub fn pair_count(&self, subset: &[usize]) -> usize {
        subset.iter().map(|&l| self.groups[l].len()).sum()
    }

    /// Short content hash identifying the partition.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for g in &self.groups {
            for &(i, j) in g {
                h.update((i as u64).to_le_bytes());
                h.update((j as u64).to_le_bytes());
            }
            h.update(b"|");
        }
        h.finalize().iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

/// Singleton groups over all pairs `i < j < d_under`, labelled one-based.
pub fn pairwise_partition(d_under: usize) -> HypothesisPartition {
    let mut groups = Vec::new();
    let mut labels = Vec::new();
    for i in 0..d_under {
        for j in i + 1..d_under {
            groups.push(vec![(i, j)]);
            labels.push(format!("({},{})", i + 1, j + 1));
        }
    }
    HypothesisPartition {
        groups,
        labels,
        sector_keys: None,
    }
}

/// Singleton groups labelled with asset names.
pub fn pairwise_partition_named<S: AsRef<str>>(names: &[S]) -> HypothesisPartition {
    let mut p = pairwise_partition(names.len());
    p.labels = p
        .groups
        .iter()
        .map(|g| format!("{}~{}", names[g[0].0].as_ref(), names[g[0].1].as_ref()))
        .collect();
    p
}

/// One group per unordered sector pair `(k, l)`, `k <= l`, in order of
/// first appearance of the sectors. Within-sector groups of single-asset
/// sectors are empty and therefore omitted.
pub fn sector_partition<S: AsRef<str>>(labels: &[S]) -> Result<HypothesisPartition> {
    let mut sectors: Vec<&str> = Vec::new();
    let mut member_of = Vec::with_capacity(labels.len());
    for (a, lab) in labels.iter().enumerate() {
        let lab = lab.as_ref().trim();
        if lab.is_empty() {
            return Err(HicovError::Partition(format!("asset {} has an empty sector label", a + 1)));
        }
        let k = match sectors.iter().position(|s| *s == lab) {
            Some(k) => k,
            None => {
                sectors.push(lab);
                sectors.len() - 1
            }
        };
        member_of.push(k);
    }
    let s = sectors.len();
    let mut cells: BTreeMap<(usize, usize), Vec<Pair>> = BTreeMap::new();
    for i in 0..labels.len() {
        for j in i + 1..labels.len() {
            let (a, b) = (member_of[i], member_of[j]);
            cells.entry((a.min(b), a.max(b))).or_default().push((i, j));
        }
    }
    let mut groups = Vec::new();
    let mut names = Vec::new();
    let mut keys = Vec::new();
    for k in 0..s {
        for l in k..s {
            if let Some(g) = cells.remove(&(k, l)) {
                groups.push(g);
                names.push(if k == l {
                    sectors[k].to_string()
                } else {
                    format!("{}|{}", sectors[k], sectors[l])
                });
                keys.push((sectors[k].to_string(), sectors[l].to_string()));
            }
        }
    }
    let mut p = HypothesisPartition::new(groups, names)?;
    p.sector_keys = Some(keys);
    Ok(p)
}

/// Inverse standard normal CDF (Wichura's AS241, PPND16).
#[allow(clippy::excessive_precision)]
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(HicovError::Domain(format!("normal quantile needs p in (0, 1), got {p}")));
    }
    const A: [f64; 8] = [
        3.387_132_872_796_366_6,
        133.141_667_891_784_38,
        1_971.590_950_306_551_4,
        13_731.693_765_509_461,
        45_921.953_931_549_87,
        67_265.770_927_008_7,
        33_430.575_583_588_13,
        2_509.080_928_730_122_7,
    ];
    const B: [f64; 8] = [
        1.0,
        42.313_330_701_600_91,
        687.187_007_492_057_9,
        5_394.196_021_424_751,
        21_213.794_301_586_597,
        39_307.895_800_092_71,
        28_729.085_735_721_943,
        5_226.495_278_852_546,
    ];
    const C: [f64; 8] = [
        1.423_437_110_749_683_6,
        4.630_337_846_156_545,
        5.769_497_221_460_691,
        3.647_848_324_763_204_5,
        1.270_458_252_452_368_4,
        0.241_780_725_177_450_6,
        0.022_723_844_989_269_184,
        7.745_450_142_783_414e-4,
    ];
    const D: [f64; 8] = [
        1.0,
        2.053_191_626_637_759,
        1.676_384_830_183_803_8,
        0.689_767_334_985_1,
        0.148_103_976_427_480_07,
        0.015_198_666_563_616_457,
        5.475_938_084_995_345e-4,
        1.050_750_071_644_416_8e-9,
    ];
    const E: [f64; 8] = [
        6.657_904_643_501_103,
        5.463_784_911_164_114,
        1.784_826_539_917_291_3,
        0.296_560_571_828_504_9,
        0.026_532_189_526_576_124,
        0.001_242_660_947_388_078_4,
        2.711_555_568_743_487_6e-5,
        2.010_334_399_292_288_1e-7,
    ];
    const F: [f64; 8] = [
        1.0,
        0.599_832_206_555_887_9,
        0.136_929_880_922_735_8,
        0.014_875_361_290_850_615,
        7.868_691_311_456_133e-4,
        1.846_318_317_510_054_8e-5,
        1.421_511_758_316_446e-7,
        2.044_263_103_389_939_8e-15,
    ];
    fn poly(c: &[f64; 8], x: f64) -> f64 {
        c.iter().rev().fold(0.0, |acc, &k| acc * x + k)
    }

    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180_625 - q * q;
        return Ok(q * poly(&A, r) / poly(&B, r));
    }
    let r = if q < 0.0 { p } else { 1.0 - p };
    let r = (-r.ln()).sqrt();
    let x = if r <= 5.0 {
        let r = r - 1.6;
        poly(&C, r) / poly(&D, r)
    } else {
        let r = r - 5.0;
        poly(&E, r) / poly(&F, r)
    };
    Ok(if q < 0.0 { -x } else { x })
}

/// Upper tail `1 - Phi(x)`.
pub fn normal_sf(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(HicovError::Domain(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

/// `Phi^{-1}(1 - alpha / (2m))`, `m` the number of pairs in the union of `subset`.
pub fn holm_critical(partition: &HypothesisPartition, subset: &[usize], alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let m = partition.pair_count(subset);
    if m == 0 {
        return Err(HicovError::Partition("critical value requested for an empty subset".into()));
    }
    normal_quantile(1.0 - alpha / (2.0 * m as f64))
}

/// One-based rank `ceil((1 - alpha)(b + 1))`, clamped to `1..=b`.
pub fn rw_rank(b: usize, alpha: f64) -> usize {
    // the small offset keeps exact products such as 0.95 * 1000 at 950
    let r = ((1.0 - alpha) * (b as f64 + 1.0) - 1e-9).ceil();
    (r.max(1.0) as usize).min(b)
}

fn order_statistic(values: &mut [f64], rank: usize) -> f64 {
    let (_, v, _) = values.select_nth_unstable_by(rank - 1, |a, b| a.total_cmp(b));
    *v
}

/// Empirical quantile of `max_{l in subset} maxima[b][l]` at rank
/// [`rw_rank`].
pub fn rw_critical(draws: &BootstrapDraws, subset: &[usize], alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if subset.is_empty() {
        return Err(HicovError::Partition("critical value requested for an empty subset".into()));
    }
    if let Some(&bad) = subset.iter().find(|&&l| l >= draws.l) {
        return Err(HicovError::IndexOutOfRange { index: bad, dim: draws.l });
    }
    let mut maxes: Vec<f64> = (0..draws.b)
        .map(|r| subset.iter().map(|&l| draws.get(r, l)).fold(f64::NEG_INFINITY, f64::max))
        .collect();
    Ok(order_statistic(&mut maxes, rw_rank(draws.b, alpha)))
}

/// Critical values `c^L(1 - alpha)` for subsets `L` of the groups.
pub trait CriticalValueProvider: Sync {
    fn name(&self) -> &'static str;

    fn critical(&self, subset: &[usize], alpha: f64) -> Result<f64>;

    /// Smallest level at which `stat` exceeds the critical value of `subset`.
    fn p_value(&self, stat: f64, subset: &[usize]) -> Result<f64>;

    /// Critical values and p-values for every suffix `order[k..]`, with
    /// `stats[k]` the statistic of group `order[k]`.
    fn suffix_profile(&self, order: &[usize], stats: &[f64], alpha: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut crit = Vec::with_capacity(order.len());
        let mut pv = Vec::with_capacity(order.len());
        for k in 0..order.len() {
            crit.push(self.critical(&order[k..], alpha)?);
            pv.push(self.p_value(stats[k], &order[k..])?);
        }
        Ok((crit, pv))
    }
}

#[derive(Debug, Clone)]
pub struct HolmProvider {
    sizes: Vec<usize>,
}

impl HolmProvider {
    pub fn new(partition: &HypothesisPartition) -> Self {
        Self {
            sizes: partition.groups().iter().map(Vec::len).collect(),
        }
    }

    fn holm_p(stat: f64, m: usize) -> f64 {
        (2.0 * m as f64 * normal_sf(stat)).min(1.0)
    }
}

impl CriticalValueProvider for HolmProvider {
    fn name(&self) -> &'static str {
        "Holm"
    }

    fn critical(&self, subset: &[usize], alpha: f64) -> Result<f64> {
        check_alpha(alpha)?;
        let m: usize = subset.iter().map(|&l| self.sizes[l]).sum();
        if m == 0 {
            return Err(HicovError::Partition("critical value requested for an empty subset".into()));
        }
        normal_quantile(1.0 - alpha / (2.0 * m as f64))
    }

    fn p_value(&self, stat: f64, subset: &[usize]) -> Result<f64> {
        let m: usize = subset.iter().map(|&l| self.sizes[l]).sum();
        Ok(Self::holm_p(stat, m))
    }

    fn suffix_profile(&self, order: &[usize], stats: &[f64], alpha: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        check_alpha(alpha)?;
        let mut crit = vec![0.0; order.len()];
        let mut pv = vec![0.0; order.len()];
        let mut m = 0usize;
        for k in (0..order.len()).rev() {
            m += self.sizes[order[k]];
            crit[k] = normal_quantile(1.0 - alpha / (2.0 * m as f64))?;
            pv[k] = Self::holm_p(stats[k], m);
        }
        Ok((crit, pv))
    }
}

pub struct RomanoWolfProvider<'a> {
    draws: &'a BootstrapDraws,
}

impl<'a> RomanoWolfProvider<'a> {
    pub fn new(draws: &'a BootstrapDraws) -> Self {
        Self { draws }
    }

    /// `(1 + #{b : max_b >= stat}) / (B + 1)`, or one when every resample
    /// reaches `stat`. This inverts the rank rule exactly.
    fn rw_p(maxes: &[f64], stat: f64) -> f64 {
        let b = maxes.len();
        let c = maxes.iter().filter(|&&v| v >= stat).count();
        if c >= b {
            1.0
        } else {
            (c as f64 + 1.0) / (b as f64 + 1.0)
        }
    }
}

impl CriticalValueProvider for RomanoWolfProvider<'_> {
    fn name(&self) -> &'static str {
        "RW"
    }

    fn critical(&self, subset: &[usize], alpha: f64) -> Result<f64> {
        rw_critical(self.draws, subset, alpha)
    }

    fn p_value(&self, stat: f64, subset: &[usize]) -> Result<f64> {
        if subset.is_empty() {
            return Err(HicovError::Partition("p-value requested for an empty subset".into()));
        }
        let maxes: Vec<f64> = (0..self.draws.b)
            .map(|r| subset.iter().map(|&l| self.draws.get(r, l)).fold(f64::NEG_INFINITY, f64::max))
            .collect();
        Ok(Self::rw_p(&maxes, stat))
    }

    fn suffix_profile(&self, order: &[usize], stats: &[f64], alpha: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        check_alpha(alpha)?;
        let draws = self.draws;
        if let Some(&bad) = order.iter().find(|&&l| l >= draws.l) {
            return Err(HicovError::IndexOutOfRange { index: bad, dim: draws.l });
        }
        let rank = rw_rank(draws.b, alpha);
        let mut running = vec![f64::NEG_INFINITY; draws.b];
        let mut scratch = vec![0.0; draws.b];
        let mut crit = vec![0.0; order.len()];
        let mut pv = vec![0.0; order.len()];
        for k in (0..order.len()).rev() {
            let l = order[k];
            for (r, m) in running.iter_mut().enumerate() {
                *m = m.max(draws.get(r, l));
            }
            scratch.copy_from_slice(&running);
            crit[k] = order_statistic(&mut scratch, rank);
            pv[k] = Self::rw_p(&running, stats[k]);
        }
        Ok((crit, pv))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepdownResult {
    /// Group indices sorted by statistic, descending.
    pub order: Vec<usize>,
    /// Per group.
    pub rejected: Vec<bool>,
    /// Critical value faced at each executed step.
    pub critical_trace: Vec<f64>,
    /// Per group.
    pub adjusted_p: Vec<f64>,
    /// Per group: statistic is the clamped-variance sentinel.
    pub sentinel: Vec<bool>,
}

impl StepdownResult {
    pub fn num_rejected(&self) -> usize {
        self.rejected.iter().filter(|&&r| r).count()
    }

    /// Critical value faced by group `l`, if its step was executed.
    pub fn critical_for(&self, l: usize) -> Option<f64> {
        let pos = self.order.iter().position(|&g| g == l)?;
        self.critical_trace.get(pos).copied()
    }
}

pub fn stepdown(group_stats: &[f64], provider: &dyn CriticalValueProvider, alpha: f64) -> Result<StepdownResult> {
    check_alpha(alpha)?;
    if let Some(pos) = group_stats.iter().position(|s| s.is_nan()) {
        return Err(HicovError::invalid(format!("group statistic {pos} is NaN")));
    }
    let l = group_stats.len();
    let mut order: Vec<usize> = (0..l).collect();
    // stable: ties keep ascending group index
    order.sort_by(|&a, &b| group_stats[b].total_cmp(&group_stats[a]));
    let sorted: Vec<f64> = order.iter().map(|&g| group_stats[g]).collect();

    let (crit, pv) = provider.suffix_profile(&order, &sorted, alpha)?;
    for k in 1..crit.len() {
        if crit[k] > crit[k - 1] {
            return Err(HicovError::NonMonotone {
                step: k + 1,
                earlier: crit[k - 1],
                later: crit[k],
            });
        }
    }

    let mut rejected = vec![false; l];
    let mut critical_trace = Vec::new();
    for k in 0..l {
        critical_trace.push(crit[k]);
        if sorted[k] > crit[k] {
            rejected[order[k]] = true;
        } else {
            break;
        }
    }

    let mut adjusted_p = vec![1.0; l];
    let mut running = 0.0f64;
    for k in 0..l {
        running = running.max(pv[k]).min(1.0);
        adjusted_p[order[k]] = running;
    }
    let sentinel = group_stats.iter().map(|&s| s >= SENTINEL).collect();
    Ok(StepdownResult {
        order,
        rejected,
        critical_trace,
        adjusted_p,
        sentinel,
    })
}

/// Serializable per-group outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub label: String,
    pub statistic: f64,
    pub critical: Option<f64>,
    pub rejected: bool,
    pub adjusted_p: f64,
    pub clamped_members: usize,
}

pub fn group_reports(
    partition: &HypothesisPartition,
    group_stats: &[f64],
    result: &StepdownResult,
    clamped_members: &[usize],
) -> Vec<GroupReport> {
    (0..partition.len())
        .map(|l| GroupReport {
            label: partition.labels()[l].clone(),
            statistic: group_stats[l],
            critical: result.critical_for(l),
            rejected: result.rejected[l],
            adjusted_p: result.adjusted_p[l],
            clamped_members: clamped_members.get(l).copied().unwrap_or(0),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    struct Constant(f64);

    impl CriticalValueProvider for Constant {
        fn name(&self) -> &'static str {
            "const"
        }
        fn critical(&self, _: &[usize], _: f64) -> Result<f64> {
            Ok(self.0)
        }
        fn p_value(&self, stat: f64, _: &[usize]) -> Result<f64> {
            Ok(if stat > self.0 { 0.0 } else { 1.0 })
        }
    }

    struct Increasing;

    impl CriticalValueProvider for Increasing {
        fn name(&self) -> &'static str {
            "bad"
        }
        fn critical(&self, subset: &[usize], _: f64) -> Result<f64> {
            Ok(10.0 - subset.len() as f64)
        }
        fn p_value(&self, _: f64, _: &[usize]) -> Result<f64> {
            Ok(1.0)
        }
    }

    /// Bisection on the complementary error function.
    fn quantile_oracle(p: f64) -> f64 {
        let (mut lo, mut hi) = (-40.0f64, 40.0f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if normal_sf(-mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn normal_quantile_values() {
        assert_eq!(normal_quantile(0.5).unwrap(), 0.0);
        assert!((normal_quantile(0.975).unwrap() - 1.959964).abs() < 1e-6);
        for &p in &[1e-12, 1e-6, 0.001, 0.02, 0.3, 0.6, 0.9, 0.99, 0.999_999] {
            let x = normal_quantile(p).unwrap();
            if p >= 1e-6 {
                assert!((x + normal_quantile(1.0 - p).unwrap()).abs() < 1e-9);
            }
            if p > 1e-300 && p < 0.999 {
                assert!((x - quantile_oracle(p)).abs() < 1e-9, "p {p}");
            }
        }
        assert!(normal_quantile(0.0).is_err());
        assert!(normal_quantile(1.0).is_err());
        assert!(normal_quantile(f64::NAN).is_err());
    }

    #[test]
    fn holm_critical_values() {
        let part = pairwise_partition(3);
        assert!((holm_critical(&part, &[0], 0.05).unwrap() - 1.959964).abs() < 1e-5);
        assert!((holm_critical(&part, &[0, 1], 0.05).unwrap() - 2.241403).abs() < 1e-5);
        assert!(holm_critical(&part, &[0], 0.05).unwrap() <= holm_critical(&part, &[0, 2], 0.05).unwrap());
    }

    #[test]
    fn rw_rank_and_constant_column() {
        assert_eq!(rw_rank(999, 0.05), 950);
        assert_eq!(rw_rank(199, 0.05), 190);
        assert_eq!(rw_rank(1, 0.05), 1);
        let draws = BootstrapDraws {
            maxima: vec![2.5; 10],
            b: 10,
            l: 1,
            partition_id: String::new(),
        };
        assert_eq!(rw_critical(&draws, &[0], 0.05).unwrap(), 2.5);
    }

    #[test]
    fn constant_provider_example() {
        let r = stepdown(&[3.0, 1.0], &Constant(2.0), 0.05).unwrap();
        assert_eq!(r.rejected, vec![true, false]);
        assert_eq!(r.critical_trace, vec![2.0, 2.0]);

        let r = stepdown(&[1.0, 0.5, 1.5], &Constant(2.0), 0.05).unwrap();
        assert_eq!(r.num_rejected(), 0);
        assert_eq!(r.critical_trace.len(), 1);
    }

    #[test]
    fn ties_are_broken_by_group_index() {
        let r = stepdown(&[1.0, 3.0, 3.0, 0.0], &Constant(2.0), 0.05).unwrap();
        assert_eq!(r.order, vec![1, 2, 0, 3]);
    }

    #[test]
    fn non_monotone_provider_is_detected() {
        assert!(matches!(
            stepdown(&[3.0, 2.0, 1.0], &Increasing, 0.05),
            Err(HicovError::NonMonotone { .. })
        ));
    }

    #[test]
    fn degenerate_draws_reject_nothing() {
        let stats = [4.0, 3.0, 2.5, 0.1];
        let draws = BootstrapDraws {
            maxima: (0..100).flat_map(|_| stats).collect(),
            b: 100,
            l: 4,
            partition_id: String::new(),
        };
        for alpha in [0.01, 0.05, 0.5, 0.99] {
            let r = stepdown(&stats, &RomanoWolfProvider::new(&draws), alpha).unwrap();
            assert_eq!(r.num_rejected(), 0);
        }
    }

    #[test]
    fn adjusted_p_consistent_with_decisions() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let l = 12;
        let b = 199;
        for _ in 0..50 {
            let draws = BootstrapDraws {
                maxima: (0..b * l).map(|_| rng.random::<f64>() * 3.0).collect(),
                b,
                l,
                partition_id: String::new(),
            };
            let stats: Vec<f64> = (0..l).map(|_| rng.random::<f64>() * 4.0).collect();
            let part = pairwise_partition(6);
            let holm = HolmProvider::new(&HypothesisPartition::new(
                part.groups()[..l].to_vec(),
                part.labels()[..l].to_vec(),
            ).unwrap());
            let rw = RomanoWolfProvider::new(&draws);
            for provider in [&holm as &dyn CriticalValueProvider, &rw] {
                for step in 1..=10 {
                    let alpha = step as f64 / 100.0;
                    let r = stepdown(&stats, provider, alpha).unwrap();
                    for g in 0..l {
                        assert_eq!(r.rejected[g], r.adjusted_p[g] <= alpha, "{} g {g} alpha {alpha}", provider.name());
                    }
                    let along: Vec<f64> = r.order.iter().map(|&g| r.adjusted_p[g]).collect();
                    assert!(along.windows(2).all(|w| w[0] <= w[1]));
                    let k = r.num_rejected();
                    assert!(r.order[..k].iter().all(|&g| r.rejected[g]));
                    assert!(r.order[k..].iter().all(|&g| !r.rejected[g]));
                }
            }
        }
    }

    #[test]
    fn partitions() {
        let p = pairwise_partition(3);
        assert_eq!(p.groups(), &[vec![(0, 1)], vec![(0, 2)], vec![(1, 2)]]);

        let s = sector_partition(&["A", "A", "B"]).unwrap();
        assert_eq!(s.groups(), &[vec![(0, 1)], vec![(0, 2), (1, 2)]]);
        assert_eq!(s.labels(), &["A".to_string(), "A|B".to_string()]);

        // 11 sectors, two of them with a single asset
        let mut labels = Vec::new();
        for k in 0..11 {
            let size = if k < 2 { 1 } else { 3 };
            labels.extend(std::iter::repeat_n(format!("S{k}"), size));
        }
        assert_eq!(sector_partition(&labels).unwrap().len(), 64);

        assert!(sector_partition(&["A", ""]).is_err());
        assert!(HypothesisPartition::new(vec![vec![(0, 1)], vec![(0, 1)]], vec!["a".into(), "b".into()]).is_err());
        assert!(HypothesisPartition::new(vec![vec![]], vec!["a".into()]).is_err());
    }
}
