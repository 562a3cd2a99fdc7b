//! Monte Carlo driver for family-wise error rates and average powers.
//!
//! Each `(n, rho_gamma)` cell runs `m` replications. A replication
//! simulates one path, computes every pair statistic once, and feeds the
//! same statistics to each requested stepdown method, so methods are
//! compared on identical data. Replication `r` of a cell draws from its own
//! ChaCha stream, which makes the table independent of the thread count.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::bootstrap::bootstrap_group_maxima;
use crate::error::{HicovError, Result};
use crate::estimators::{all_pairs, analyze_pairs, Pair, StatMode};
use crate::model_sim::{draw_structure, simulate_paths, HestonParams, SimScenario};
use crate::mtest::{pairwise_partition, stepdown, HolmProvider, RomanoWolfProvider};
use crate::par;
use crate::rng::{domain, mix64, substream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    Holm,
    RW,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Holm => "Holm",
            Method::RW => "RW",
        })
    }
}

impl FromStr for Method {
    type Err = HicovError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "holm" | "bh" | "bonferroni-holm" => Ok(Method::Holm),
            "rw" | "romano-wolf" | "romanowolf" => Ok(Method::RW),
            other => Err(HicovError::Config(format!("unknown method `{other}` (expected Holm or RW)"))),
        }
    }
}

/// Flat experiment description; every field has a desk-scale default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub n_grid: Vec<usize>,
    pub rho_gamma_grid: Vec<f64>,
    /// Total dimension, factor included.
    pub d: usize,
    pub num_blocks: usize,
    pub mu: f64,
    pub kappa: f64,
    pub theta: f64,
    pub eta: f64,
    pub rho: f64,
    pub methods: Vec<Method>,
    pub alpha: f64,
    /// Monte Carlo replications per cell.
    #[serde(alias = "M")]
    pub m: usize,
    /// Bootstrap resamples per replication.
    #[serde(alias = "B")]
    pub b: usize,
    pub seed: u64,
    /// Worker threads; `None` uses the global pool.
    pub jobs: Option<usize>,
    /// Draw new loadings and residual variances in every replication.
    pub redraw_structure: bool,
    pub fine_factor: usize,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        let h = HestonParams::default();
        Self {
            n_grid: vec![78, 195, 390],
            rho_gamma_grid: vec![0.25, 0.5, 0.75],
            d: 21,
            num_blocks: 10,
            mu: h.mu,
            kappa: h.kappa,
            theta: h.theta,
            eta: h.eta,
            rho: h.rho,
            methods: vec![Method::Holm, Method::RW],
            alpha: 0.05,
            m: 1000,
            b: 199,
            seed: 0,
            jobs: None,
            redraw_structure: false,
            fine_factor: 10,
        }
    }
}

impl ExperimentSpec {
    /// One hundred assets in ten blocks, the full sample-size grid,
    /// 10^4 replications and 999 resamples.
    pub fn full_scale() -> Self {
        Self {
            n_grid: vec![26, 39, 78, 130, 195, 390],
            d: 101,
            m: 10_000,
            b: 999,
            ..Self::default()
        }
    }

    pub fn heston(&self) -> HestonParams {
        HestonParams {
            mu: self.mu,
            kappa: self.kappa,
            theta: self.theta,
            eta: self.eta,
            rho: self.rho,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 1 {
            return Err(HicovError::Config("M must be >= 1".into()));
        }
        if self.b < 1 {
            return Err(HicovError::Config("B must be >= 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(HicovError::Config(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if self.n_grid.is_empty() || self.rho_gamma_grid.is_empty() || self.methods.is_empty() {
            return Err(HicovError::Config("n_grid, rho_gamma_grid and methods must be non-empty".into()));
        }
        if self.d < 3 {
            return Err(HicovError::Config(format!("d must be >= 3, got {}", self.d)));
        }
        if self.num_blocks < 1 || self.num_blocks > self.d - 1 {
            return Err(HicovError::Config(format!(
                "num_blocks must lie in 1..={}, got {}",
                self.d - 1,
                self.num_blocks
            )));
        }
        if self.jobs == Some(0) {
            return Err(HicovError::Config("jobs must be >= 1".into()));
        }
        if let Some(n) = self.n_grid.iter().find(|&&n| n < 2) {
            return Err(HicovError::Config(format!("sample sizes must be >= 2, got {n}")));
        }
        self.heston().validate()
    }

    /// Key of the replication streams for one cell. Depends on the cell's
    /// values, not its position in the grid.
    pub fn cell_key(&self, n: usize, rho_gamma: f64) -> u64 {
        mix64(self.seed ^ mix64(n as u64 ^ mix64(rho_gamma.to_bits())))
    }

    /// Scenario with the fixed structure of this experiment's seed.
    pub fn scenario(&self, n: usize, rho_gamma: f64) -> Result<SimScenario> {
        SimScenario::draw(n, self.d, self.heston(), self.num_blocks, rho_gamma, self.fine_factor, self.seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodOutcome {
    pub method: Method,
    /// Rejected true nulls.
    pub false_rejections: usize,
    /// Rejected false nulls.
    pub true_rejections: usize,
}

/// Outcome of one simulated data set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub true_nulls: usize,
    pub false_nulls: usize,
    pub outcomes: Vec<MethodOutcome>,
    /// Pairs whose variance estimate was floored.
    pub clamped: usize,
    /// Every statistic is zero or floored.
    pub degenerate: bool,
}

impl ReplicationRecord {
    pub fn outcome(&self, method: Method) -> Option<&MethodOutcome> {
        self.outcomes.iter().find(|o| o.method == method)
    }

    /// At least one true null rejected.
    pub fn family_wise_error(&self, method: Method) -> bool {
        self.outcome(method).is_some_and(|o| o.false_rejections > 0)
    }

    /// Fraction of false nulls rejected, `None` without false nulls.
    pub fn power(&self, method: Method) -> Option<f64> {
        let o = self.outcome(method)?;
        (self.false_nulls > 0).then(|| o.true_rejections as f64 / self.false_nulls as f64)
    }
}

/// Simulates one path and applies each method to the singleton partition.
pub fn run_replication<R: Rng + ?Sized>(
    scenario: &SimScenario,
    methods: &[Method],
    alpha: f64,
    b: usize,
    rng: &mut R,
) -> Result<ReplicationRecord> {
    let grid = simulate_paths(scenario, rng)?;
    let truth = grid
        .truth
        .as_ref()
        .ok_or_else(|| HicovError::invalid("simulated path carries no truth"))?;
    let inc = grid.increments()?;
    let d_under = scenario.d_under();
    let pairs: Vec<Pair> = all_pairs(d_under);
    let analysis = analyze_pairs(&inc, &pairs, StatMode::Factor, Some(truth))?;
    let partition = pairwise_partition(d_under);
    let stats: Vec<f64> = analysis.stats.iter().map(|s| s.t.abs()).collect();
    let null: Vec<bool> = pairs.iter().map(|&(i, j)| truth.is_null(i, j)).collect();
    let true_nulls = null.iter().filter(|&&x| x).count();

    let mut outcomes = Vec::with_capacity(methods.len());
    for &method in methods {
        let result = match method {
            Method::Holm => stepdown(&stats, &HolmProvider::new(&partition), alpha)?,
            Method::RW => {
                let draws = bootstrap_group_maxima(&inc, &analysis, &partition, b, rng)?;
                stepdown(&stats, &RomanoWolfProvider::new(&draws), alpha)?
            }
        };
        let (mut false_rejections, mut true_rejections) = (0, 0);
        for (k, &rej) in result.rejected.iter().enumerate() {
            if rej {
                if null[k] {
                    false_rejections += 1;
                } else {
                    true_rejections += 1;
                }
            }
        }
        outcomes.push(MethodOutcome {
            method,
            false_rejections,
            true_rejections,
        });
    }
    let clamped = analysis.stats.iter().filter(|s| s.clamped).count();
    let degenerate = analysis.stats.iter().all(|s| s.clamped || s.t == 0.0);
    Ok(ReplicationRecord {
        true_nulls,
        false_nulls: pairs.len() - true_nulls,
        outcomes,
        clamped,
        degenerate,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub n: usize,
    pub rho_gamma: f64,
    pub method: Method,
    pub fwer: f64,
    /// `sqrt(fwer (1 - fwer) / M)`.
    pub mc_se: f64,
    /// `None` when no replication has a false null.
    pub avg_power: Option<f64>,
    pub power_se: Option<f64>,
    pub replications: usize,
    pub clamped_pairs: usize,
    pub clamped_replications: usize,
    pub degenerate_replications: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentTable {
    pub spec: ExperimentSpec,
    pub cells: Vec<CellResult>,
    pub wall_clock_secs: f64,
}

fn summarize(n: usize, rho_gamma: f64, method: Method, records: &[ReplicationRecord]) -> CellResult {
    let m = records.len() as f64;
    let fwer = records.iter().filter(|r| r.family_wise_error(method)).count() as f64 / m;
    let powers: Vec<f64> = records.iter().filter_map(|r| r.power(method)).collect();
    let (avg_power, power_se) = if powers.is_empty() {
        (None, None)
    } else {
        let k = powers.len() as f64;
        let mean = powers.iter().sum::<f64>() / k;
        let var = if powers.len() > 1 {
            powers.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (k - 1.0)
        } else {
            0.0
        };
        (Some(mean), Some((var / k).sqrt()))
    };
    CellResult {
        n,
        rho_gamma,
        method,
        fwer,
        mc_se: (fwer * (1.0 - fwer) / m).sqrt(),
        avg_power,
        power_se,
        replications: records.len(),
        clamped_pairs: records.iter().map(|r| r.clamped).sum(),
        clamped_replications: records.iter().filter(|r| r.clamped > 0).count(),
        degenerate_replications: records.iter().filter(|r| r.degenerate).count(),
    }
}

/// Runs all replications of one `(n, rho_gamma)` cell.
pub fn run_cell(spec: &ExperimentSpec, n: usize, rho_gamma: f64) -> Result<Vec<ReplicationRecord>> {
    let fixed = spec.scenario(n, rho_gamma)?;
    let key = spec.cell_key(n, rho_gamma);
    let records = par::map_indexed(spec.m, |r| {
        let mut rng = substream(key, domain::REPLICATION, r as u64);
        if spec.redraw_structure {
            let (betas, structure) = draw_structure(spec.d - 1, spec.num_blocks, rho_gamma, &mut rng)?;
            let scenario = SimScenario {
                betas,
                structure,
                ..fixed.clone()
            };
            run_replication(&scenario, &spec.methods, spec.alpha, spec.b, &mut rng)
        } else {
            run_replication(&fixed, &spec.methods, spec.alpha, spec.b, &mut rng)
        }
    });
    records.into_iter().collect()
}

/// Runs the grid, calling `on_cell` with the summaries of each finished
/// `(n, rho_gamma)` cell so callers can flush partial results.
pub fn run_experiment_with<F>(spec: &ExperimentSpec, mut on_cell: F) -> Result<ExperimentTable>
where
    F: FnMut(&[CellResult]) -> Result<()> + Send,
{
    spec.validate()?;
    let start = Instant::now();
    let body = |on_cell: &mut F| -> Result<Vec<CellResult>> {
        let mut cells = Vec::new();
        for &rho_gamma in &spec.rho_gamma_grid {
            for &n in &spec.n_grid {
                let records = run_cell(spec, n, rho_gamma)?;
                let summaries: Vec<CellResult> =
                    spec.methods.iter().map(|&m| summarize(n, rho_gamma, m, &records)).collect();
                on_cell(&summaries)?;
                cells.extend(summaries);
            }
        }
        Ok(cells)
    };
    let cells = with_jobs(spec.jobs, || body(&mut on_cell))?;
    Ok(ExperimentTable {
        spec: spec.clone(),
        cells,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentTable> {
    run_experiment_with(spec, |_| Ok(()))
}

/// Runs `f` on a dedicated pool of `jobs` threads.
#[cfg(feature = "parallel")]
pub fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match jobs {
        None => f(),
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build()
            .map_err(|e| HicovError::Config(format!("cannot build a pool of {j} threads: {e}")))?
            .install(f),
    }
}

#[cfg(not(feature = "parallel"))]
pub fn with_jobs<T>(_jobs: Option<usize>, f: impl FnOnce() -> Result<T>) -> Result<T> {
    f()
}

/// Which summary a table CSV shows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableKind {
    Fwer,
    Power,
}

impl ExperimentTable {
    pub fn cell(&self, n: usize, rho_gamma: f64, method: Method) -> Option<&CellResult> {
        self.cells
            .iter()
            .find(|c| c.n == n && c.rho_gamma == rho_gamma && c.method == method)
    }

    /// Rows `rho_gamma x method`, columns `n`, three decimals. Missing
    /// values are left blank.
    pub fn write_table_csv<W: std::io::Write>(&self, kind: TableKind, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["rho_gamma".to_string(), "method".to_string()];
        header.extend(self.spec.n_grid.iter().map(|n| format!("n={n}")));
        w.write_record(&header)?;
        for &rho_gamma in &self.spec.rho_gamma_grid {
            for &method in &self.spec.methods {
                let mut row = vec![format!("{rho_gamma:.2}"), method.to_string()];
                for &n in &self.spec.n_grid {
                    let v = self.cell(n, rho_gamma, method).and_then(|c| match kind {
                        TableKind::Fwer => Some(c.fwer),
                        TableKind::Power => c.avg_power,
                    });
                    row.push(v.map(|v| format!("{v:.3}")).unwrap_or_default());
                }
                w.write_record(&row)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_json<W: std::io::Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, self)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model_sim::ResidualStructure;

    fn tiny_spec() -> ExperimentSpec {
        ExperimentSpec {
            n_grid: vec![39],
            rho_gamma_grid: vec![0.5],
            d: 7,
            num_blocks: 3,
            m: 6,
            b: 19,
            seed: 11,
            ..ExperimentSpec::default()
        }
    }

    #[test]
    fn spec_toml_round_trip_and_aliases() {
        let spec = tiny_spec();
        let text = toml::to_string(&spec).unwrap();
        assert_eq!(toml::from_str::<ExperimentSpec>(&text).unwrap(), spec);
        let parsed: ExperimentSpec = toml::from_str("M = 5\nB = 9\nmethods = [\"RW\"]").unwrap();
        assert_eq!((parsed.m, parsed.b, parsed.methods.clone()), (5, 9, vec![Method::RW]));
        assert!(toml::from_str::<ExperimentSpec>("bogus = 1").is_err());
    }

    #[test]
    fn spec_validation() {
        assert!(ExperimentSpec { m: 0, ..tiny_spec() }.validate().is_err());
        assert!(ExperimentSpec { b: 0, ..tiny_spec() }.validate().is_err());
        assert!(ExperimentSpec { alpha: 1.0, ..tiny_spec() }.validate().is_err());
        assert!(tiny_spec().validate().is_ok());
        assert!(ExperimentSpec::full_scale().validate().is_ok());
        assert_eq!(ExperimentSpec::full_scale().d - 1, 100);
    }

    #[test]
    fn method_parsing() {
        assert_eq!("holm".parse::<Method>().unwrap(), Method::Holm);
        assert_eq!("BH".parse::<Method>().unwrap(), Method::Holm);
        assert_eq!("rw".parse::<Method>().unwrap(), Method::RW);
        assert!("bonferroni".parse::<Method>().is_err());
    }

    #[test]
    fn power_counts_only_within_block_pairs() {
        // four residual assets in two blocks: false nulls are (0,1) and (2,3)
        let structure = ResidualStructure::from_diagonals(vec![0.3; 4], vec![2, 2], 0.9).unwrap();
        let scenario = SimScenario {
            n: 390,
            d: 5,
            heston: HestonParams::default(),
            structure,
            betas: vec![1.0; 4],
            fine_factor: 2,
            seed: 0,
        };
        let mut rng = substream(3, domain::REPLICATION, 0);
        let rec = run_replication(&scenario, &[Method::Holm, Method::RW], 0.05, 99, &mut rng).unwrap();
        assert_eq!((rec.true_nulls, rec.false_nulls), (4, 2));
        for m in [Method::Holm, Method::RW] {
            let o = rec.outcome(m).unwrap();
            assert!(o.true_rejections <= 2);
            assert_eq!(rec.power(m), Some(o.true_rejections as f64 / 2.0));
            assert_eq!(rec.family_wise_error(m), o.false_rejections > 0);
        }
    }

    #[test]
    fn all_null_structure_has_no_power() {
        let structure = ResidualStructure::from_diagonals(vec![0.3; 4], vec![1; 4], 0.0).unwrap();
        let scenario = SimScenario {
            n: 78,
            d: 5,
            heston: HestonParams::default(),
            structure,
            betas: vec![1.0, 0.5, 1.5, 2.0],
            fine_factor: 2,
            seed: 0,
        };
        let mut rng = substream(4, domain::REPLICATION, 0);
        let rec = run_replication(&scenario, &[Method::Holm], 0.05, 9, &mut rng).unwrap();
        assert_eq!(rec.false_nulls, 0);
        assert_eq!(rec.power(Method::Holm), None);
    }

    #[test]
    fn degenerate_path_is_flagged() {
        let heston = HestonParams {
            eta: 0.0,
            ..HestonParams::default()
        };
        let structure = ResidualStructure::from_diagonals(vec![0.0; 4], vec![2, 2], 0.5).unwrap();
        let scenario = SimScenario {
            n: 20,
            d: 5,
            heston,
            structure,
            betas: vec![0.0; 4],
            fine_factor: 1,
            seed: 0,
        };
        let mut rng = substream(5, domain::REPLICATION, 0);
        let rec = run_replication(&scenario, &[Method::Holm, Method::RW], 0.05, 9, &mut rng).unwrap();
        assert!(rec.degenerate);
        assert_eq!(rec.clamped, 6);
        assert!(!rec.family_wise_error(Method::Holm) && !rec.family_wise_error(Method::RW));
    }

    #[test]
    fn experiment_is_deterministic_and_well_formed() {
        let spec = tiny_spec();
        let a = run_experiment(&spec).unwrap();
        let b = run_experiment(&ExperimentSpec { jobs: Some(3), ..spec.clone() }).unwrap();
        assert_eq!(a.cells, b.cells);
        assert_eq!(a.cells.len(), 2);
        for c in &a.cells {
            assert!((0.0..=1.0).contains(&c.fwer));
            assert!(c.avg_power.is_some_and(|p| (0.0..=1.0).contains(&p)));
            assert_eq!(c.replications, 6);
        }
        let mut csv = Vec::new();
        a.write_table_csv(TableKind::Fwer, &mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("rho_gamma,method,n=39\n0.50,Holm,"));
        assert_eq!(text.lines().count(), 3);
    }

    #[test]
    fn single_replication_table() {
        let spec = ExperimentSpec {
            m: 1,
            methods: vec![Method::Holm],
            ..tiny_spec()
        };
        let t = run_experiment(&spec).unwrap();
        assert_eq!(t.cells[0].mc_se, 0.0);
        assert_eq!(t.cells[0].power_se, Some(0.0));
    }

    #[test]
    fn redraw_mode_runs() {
        let spec = ExperimentSpec {
            redraw_structure: true,
            m: 3,
            ..tiny_spec()
        };
        let t = run_experiment(&spec).unwrap();
        assert_eq!(t.cells.len(), 2);
    }
}
