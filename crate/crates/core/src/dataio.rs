//! Price panels from CSV, the end-to-end residual-sparsity analysis, and
//! report files.
//!
//! Input is a CSV with a header of asset ids and one row of log-prices per
//! bar. Bars are treated as equidistant on `[0, 1]`. With a session column,
//! increments that cross a session boundary (overnight returns) are
//! dropped by default.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bootstrap::{bootstrap_group_maxima, draws_cache_key, BootstrapDraws};
use crate::error::{HicovError, Result};
use crate::estimators::{all_pairs, analyze_pairs, IncrementMatrix, PairAnalysis, RealizedCov, StatMode};
use crate::harness::Method;
use crate::mtest::{
    group_reports, pairwise_partition_named, stepdown, GroupReport, HolmProvider, HypothesisPartition,
    RomanoWolfProvider, StepdownResult,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadOptions {
    /// Column holding a session (trading day) id.
    pub session_col: Option<String>,
    /// Drop increments spanning two sessions.
    pub drop_gaps: bool,
    /// Input holds prices rather than log-prices.
    pub take_log: bool,
    /// Further non-price columns, e.g. timestamps.
    pub ignore_cols: Vec<String>,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            session_col: None,
            drop_gaps: true,
            take_log: false,
            ignore_cols: Vec::new(),
        }
    }
}

/// Log-prices of `d - 1` assets and a factor, one row per series.
///
/// Without a factor column the last row is identically zero and analyses
/// test the raw covariations.
#[derive(Debug, Clone, PartialEq)]
pub struct PricePanel {
    pub asset_ids: Vec<String>,
    pub factor_id: Option<String>,
    /// Row-major `d x bars`, factor last.
    pub prices: Vec<f64>,
    pub bars: usize,
    /// Per bar; consecutive bars in different sessions are not differenced.
    pub sessions: Option<Vec<String>>,
}

impl PricePanel {
    pub fn d(&self) -> usize {
        self.asset_ids.len() + 1
    }

    pub fn mode(&self) -> StatMode {
        if self.factor_id.is_some() {
            StatMode::Factor
        } else {
            StatMode::Raw
        }
    }

    pub fn price(&self, series: usize, bar: usize) -> f64 {
        self.prices[series * self.bars + bar]
    }

    fn keep(&self, bar: usize) -> bool {
        self.sessions.as_ref().is_none_or(|s| s[bar] == s[bar + 1])
    }

    /// Number of increments after gap removal.
    pub fn n(&self) -> usize {
        (0..self.bars.saturating_sub(1)).filter(|&h| self.keep(h)).count()
    }

    pub fn increments(&self) -> Result<IncrementMatrix> {
        let kept: Vec<usize> = (0..self.bars.saturating_sub(1)).filter(|&h| self.keep(h)).collect();
        let mut dy = Vec::with_capacity(self.d() * kept.len());
        for series in 0..self.d() {
            dy.extend(kept.iter().map(|&h| self.price(series, h + 1) - self.price(series, h)));
        }
        IncrementMatrix::new(self.d(), kept.len(), dy)
    }
}

fn column_index(path: &Path, headers: &[String], name: &str) -> Result<usize> {
    headers.iter().position(|h| h == name).ok_or_else(|| HicovError::MissingColumn {
        path: path.to_path_buf(),
        name: name.to_string(),
        available: headers.join(", "),
    })
}

/// Reads a panel. `factor_col` names the factor series; `None` gives a
/// zero factor.
pub fn load_price_csv(path: &Path, factor_col: Option<&str>, opts: &LoadOptions) -> Result<PricePanel> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let factor = factor_col.map(|f| column_index(path, &headers, f)).transpose()?;
    let session = opts
        .session_col
        .as_deref()
        .map(|s| column_index(path, &headers, s))
        .transpose()?;
    let mut skip = vec![false; headers.len()];
    for name in &opts.ignore_cols {
        skip[column_index(path, &headers, name)?] = true;
    }
    if let Some(s) = session {
        skip[s] = true;
    }
    let mut seen = HashMap::new();
    for (c, h) in headers.iter().enumerate() {
        if !skip[c] {
            if h.is_empty() {
                return Err(HicovError::Parse {
                    path: path.to_path_buf(),
                    row: 1,
                    column: c + 1,
                    message: "empty column name".into(),
                });
            }
            if let Some(prev) = seen.insert(h.as_str(), c) {
                return Err(HicovError::Parse {
                    path: path.to_path_buf(),
                    row: 1,
                    column: c + 1,
                    message: format!("duplicate column `{h}` (also column {})", prev + 1),
                });
            }
        }
    }
    let assets: Vec<usize> = (0..headers.len()).filter(|&c| !skip[c] && Some(c) != factor).collect();
    if assets.len() < 2 {
        return Err(HicovError::Data(format!(
            "{}: need at least two asset columns besides the factor",
            path.display()
        )));
    }

    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); assets.len() + 1];
    let mut sessions = session.map(|_| Vec::new());
    for (k, record) in reader.records().enumerate() {
        let record = record?;
        let row = k + 2;
        if record.len() != headers.len() {
            return Err(HicovError::Parse {
                path: path.to_path_buf(),
                row,
                column: record.len().min(headers.len()) + 1,
                message: format!("expected {} fields, found {}", headers.len(), record.len()),
            });
        }
        let parse = |c: usize| -> Result<f64> {
            let cell = &record[c];
            let v: f64 = cell.parse().map_err(|_| HicovError::Parse {
                path: path.to_path_buf(),
                row,
                column: c + 1,
                message: format!("`{cell}` is not a number"),
            })?;
            let v = if opts.take_log {
                if !(v > 0.0) {
                    return Err(HicovError::Parse {
                        path: path.to_path_buf(),
                        row,
                        column: c + 1,
                        message: format!("price {v} has no logarithm"),
                    });
                }
                v.ln()
            } else {
                v
            };
            if v.is_finite() {
                Ok(v)
            } else {
                Err(HicovError::Parse {
                    path: path.to_path_buf(),
                    row,
                    column: c + 1,
                    message: "value is not finite".into(),
                })
            }
        };
        for (slot, &c) in assets.iter().enumerate() {
            columns[slot].push(parse(c)?);
        }
        columns[assets.len()].push(match factor {
            Some(f) => parse(f)?,
            None => 0.0,
        });
        if let (Some(s), Some(out)) = (session, sessions.as_mut()) {
            out.push(record[s].to_string());
        }
    }
    let bars = columns[0].len();
    let panel = PricePanel {
        asset_ids: assets.iter().map(|&c| headers[c].clone()).collect(),
        factor_id: factor.map(|f| headers[f].clone()),
        prices: columns.concat(),
        bars,
        sessions: if opts.drop_gaps { sessions } else { None },
    };
    if panel.n() < 2 {
        return Err(HicovError::Data(format!(
            "{}: {} bars leave {} usable increments, need at least 2",
            path.display(),
            bars,
            panel.n()
        )));
    }
    Ok(panel)
}

/// Sector label per asset from a two-column `asset,sector` file.
pub fn load_sectors<S: AsRef<str>>(path: &Path, asset_ids: &[S]) -> Result<Vec<String>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let a = column_index(path, &headers, "asset")?;
    let s = column_index(path, &headers, "sector")?;
    let mut map = HashMap::new();
    for (k, record) in reader.records().enumerate() {
        let record = record?;
        let (Some(asset), Some(sector)) = (record.get(a), record.get(s)) else {
            return Err(HicovError::Parse {
                path: path.to_path_buf(),
                row: k + 2,
                column: record.len() + 1,
                message: "missing asset or sector".into(),
            });
        };
        if map.insert(asset.to_string(), sector.to_string()).is_some() {
            return Err(HicovError::Parse {
                path: path.to_path_buf(),
                row: k + 2,
                column: a + 1,
                message: format!("asset `{asset}` listed twice"),
            });
        }
    }
    asset_ids
        .iter()
        .map(|id| {
            map.get(id.as_ref())
                .cloned()
                .ok_or_else(|| HicovError::Data(format!("{}: no sector for asset `{}`", path.display(), id.as_ref())))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeOptions {
    pub alpha: f64,
    pub b: usize,
    /// The first method drives the mask.
    pub methods: Vec<Method>,
    pub seed: u64,
    /// Directory for persisted bootstrap draws.
    pub cache_dir: Option<PathBuf>,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            b: 999,
            methods: vec![Method::RW],
            seed: 0,
            cache_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodTable {
    pub method: Method,
    pub groups: Vec<GroupReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub n: usize,
    pub d: usize,
    pub alpha: f64,
    #[serde(rename = "B")]
    pub b: usize,
    pub seed: u64,
    pub mode: StatMode,
    pub factor: Option<String>,
    pub mask_method: Method,
    pub partition: String,
    pub pairs: usize,
    pub significant_pairs: usize,
    pub fraction_significant: f64,
    /// Pairs whose variance estimate was floored, as `a~b`.
    pub clamped_pairs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub asset_ids: Vec<String>,
    /// Row-major; residual realized correlation in factor mode, raw in raw
    /// mode. `None` where a variance is zero.
    pub correlation: Vec<Option<f64>>,
    /// Row-major; true where the pair was not found significant.
    pub mask: Vec<bool>,
    /// Group tables for the requested partition, one per method.
    pub tables: Vec<MethodTable>,
    pub meta: ReportMeta,
}

impl AnalysisReport {
    pub fn d_under(&self) -> usize {
        self.asset_ids.len()
    }

    pub fn masked(&self, i: usize, j: usize) -> bool {
        self.mask[i * self.d_under() + j]
    }
}

/// Residual (or raw) realized correlation of the first `d - 1` series.
pub fn residual_correlation(rc: &RealizedCov, mode: StatMode) -> Vec<Option<f64>> {
    let du = rc.d - 1;
    let f = rc.factor();
    let cov = |i: usize, j: usize| match mode {
        StatMode::Factor => rc.get(i, j) - rc.get(i, f) * rc.get(j, f) / rc.get(f, f),
        StatMode::Raw => rc.get(i, j),
    };
    let var: Vec<f64> = (0..du).map(|i| cov(i, i)).collect();
    let mut out = vec![None; du * du];
    for i in 0..du {
        for j in 0..du {
            let denom = (var[i] * var[j]).sqrt();
            if i == j {
                out[i * du + j] = (var[i] > 0.0).then_some(1.0);
            } else if denom > 0.0 && denom.is_finite() {
                out[i * du + j] = Some((cov(i, j) / denom).clamp(-1.0, 1.0));
            }
        }
    }
    out
}

fn group_statistics(analysis: &PairAnalysis, partition: &HypothesisPartition) -> (Vec<f64>, Vec<usize>) {
    let index: HashMap<(usize, usize), usize> =
        analysis.stats.iter().enumerate().map(|(k, s)| ((s.i, s.j), k)).collect();
    partition
        .groups()
        .iter()
        .map(|g| {
            let members = g.iter().map(|p| &analysis.stats[index[p]]);
            let stat = members.clone().map(|s| s.t.abs()).fold(0.0, f64::max);
            (stat, members.filter(|s| s.clamped).count())
        })
        .unzip()
}

fn draws_for(
    inc: &IncrementMatrix,
    analysis: &PairAnalysis,
    partition: &HypothesisPartition,
    opts: &AnalyzeOptions,
    stream: u64,
) -> Result<BootstrapDraws> {
    let seed = opts.seed ^ stream;
    let compute = || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        bootstrap_group_maxima(inc, analysis, partition, opts.b, &mut rng)
    };
    let Some(dir) = &opts.cache_dir else {
        return compute();
    };
    let fingerprint = partition.fingerprint();
    let file = dir.join(format!("{}.csv", draws_cache_key(inc, seed, opts.b, &fingerprint)));
    if let Ok(f) = File::open(&file) {
        let draws = BootstrapDraws::read_csv(BufReader::new(f))?;
        if draws.b == opts.b && draws.l == partition.len() && draws.partition_id == fingerprint {
            return Ok(draws);
        }
    }
    let draws = compute()?;
    std::fs::create_dir_all(dir)?;
    let mut w = BufWriter::new(File::create(&file)?);
    draws.write_csv(&mut w)?;
    w.flush()?;
    Ok(draws)
}

fn run_methods(
    inc: &IncrementMatrix,
    analysis: &PairAnalysis,
    partition: &HypothesisPartition,
    opts: &AnalyzeOptions,
    stream: u64,
) -> Result<Vec<(Method, StepdownResult, Vec<GroupReport>)>> {
    let (stats, clamped) = group_statistics(analysis, partition);
    let mut draws = None;
    let mut out = Vec::new();
    for &method in &opts.methods {
        let result = match method {
            Method::Holm => stepdown(&stats, &HolmProvider::new(partition), opts.alpha)?,
            Method::RW => {
                if draws.is_none() {
                    draws = Some(draws_for(inc, analysis, partition, opts, stream)?);
                }
                let provider = RomanoWolfProvider::new(draws.as_ref().expect("draws computed above"));
                stepdown(&stats, &provider, opts.alpha)?
            }
        };
        let reports = group_reports(partition, &stats, &result, &clamped);
        out.push((method, result, reports));
    }
    Ok(out)
}

/// Pair statistics, bootstrap, stepdown, mask and group tables.
///
/// `partition` defaults to one group per pair. The mask always comes from
/// the pairwise test with the first method.
pub fn analyze(panel: &PricePanel, partition: Option<&HypothesisPartition>, opts: &AnalyzeOptions) -> Result<AnalysisReport> {
    if opts.b < 1 {
        return Err(HicovError::invalid("need at least one bootstrap resample"));
    }
    if !(opts.alpha > 0.0 && opts.alpha < 1.0) {
        return Err(HicovError::invalid(format!("alpha must lie in (0, 1), got {}", opts.alpha)));
    }
    let mask_method = *opts
        .methods
        .first()
        .ok_or_else(|| HicovError::invalid("at least one method is required"))?;
    let inc = panel.increments()?;
    let du = panel.asset_ids.len();
    let mode = panel.mode();
    let analysis = analyze_pairs(&inc, &all_pairs(du), mode, None)?;

    let pairwise = pairwise_partition_named(&panel.asset_ids);
    let pair_results = run_methods(&inc, &analysis, &pairwise, opts, 0)?;
    let tables = match partition {
        Some(p) => run_methods(&inc, &analysis, p, opts, 1)?
            .into_iter()
            .map(|(method, _, groups)| MethodTable { method, groups })
            .collect(),
        None => pair_results
            .iter()
            .map(|(method, _, groups)| MethodTable {
                method: *method,
                groups: groups.clone(),
            })
            .collect(),
    };

    let rejected = &pair_results[0].1.rejected;
    let mut mask = vec![false; du * du];
    for (l, g) in pairwise.groups().iter().enumerate() {
        let (i, j) = g[0];
        mask[i * du + j] = !rejected[l];
        mask[j * du + i] = !rejected[l];
    }
    let significant = rejected.iter().filter(|&&r| r).count();
    let pairs = rejected.len();
    let clamped_pairs = analysis
        .stats
        .iter()
        .filter(|s| s.clamped)
        .map(|s| format!("{}~{}", panel.asset_ids[s.i], panel.asset_ids[s.j]))
        .collect();
    Ok(AnalysisReport {
        asset_ids: panel.asset_ids.clone(),
        correlation: residual_correlation(&analysis.rc, mode),
        mask,
        tables,
        meta: ReportMeta {
            n: inc.n(),
            d: inc.d(),
            alpha: opts.alpha,
            b: opts.b,
            seed: opts.seed,
            mode,
            factor: panel.factor_id.clone(),
            mask_method,
            partition: if partition.is_some() { "sector".into() } else { "pairwise".into() },
            pairs,
            significant_pairs: significant,
            fraction_significant: if pairs == 0 { 0.0 } else { significant as f64 / pairs as f64 },
            clamped_pairs,
        },
    })
}

/// Matrix CSV with masked cells left empty and undefined correlations
/// written as `NaN`.
pub fn write_matrix_csv<W: Write>(report: &AnalysisReport, out: W) -> Result<()> {
    let du = report.d_under();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec![String::new()];
    header.extend(report.asset_ids.iter().cloned());
    w.write_record(&header)?;
    for i in 0..du {
        let mut row = vec![report.asset_ids[i].clone()];
        for j in 0..du {
            row.push(if report.masked(i, j) {
                String::new()
            } else {
                match report.correlation[i * du + j] {
                    Some(v) => format!("{v}"),
                    None => "NaN".into(),
                }
            });
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `matrix.csv`, `groups.json`, `meta.json` and the complete
/// `report.json` into `dir`.
pub fn write_report(report: &AnalysisReport, dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let matrix = dir.join("matrix.csv");
    let groups = dir.join("groups.json");
    let meta = dir.join("meta.json");
    let full = dir.join("report.json");
    let mut w = BufWriter::new(File::create(&matrix)?);
    write_matrix_csv(report, &mut w)?;
    w.flush()?;
    write_json(&groups, &report.tables)?;
    write_json(&meta, &report.meta)?;
    write_json(&full, report)?;
    Ok(vec![matrix, groups, meta, full])
}

pub(crate) fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Reads back the `report.json` written by [`write_report`].
pub fn read_report(dir: &Path) -> Result<AnalysisReport> {
    let f = File::open(dir.join("report.json"))?;
    Ok(serde_json::from_reader(BufReader::new(f))?)
}
