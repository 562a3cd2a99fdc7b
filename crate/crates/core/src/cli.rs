//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 for usage and configuration errors, 2 for
//! failures while running.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::dataio::{analyze, load_price_csv, load_sectors, write_json, write_report, AnalyzeOptions, LoadOptions};
use crate::error::{HicovError, Result};
use crate::harness::{run_experiment_with, with_jobs, CellResult, ExperimentSpec, ExperimentTable, Method, TableKind};
use crate::model_sim::{simulate_paths, HestonParams, SimScenario};
use crate::mtest::sector_partition;
use crate::rng::{domain, substream};

pub const SEED_ENV: &str = "HICOV_SEED";

#[derive(Debug, Parser)]
#[command(name = "hicov", version, about = "Residual-sparsity tests for high-dimensional realized covariance")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one path of the factor model and write it as CSV.
    Simulate(SimulateArgs),
    /// Pairwise statistics and stepdown decisions for one price file.
    Test(TestArgs),
    /// Monte Carlo family-wise error rates.
    McFwer(McArgs),
    /// Monte Carlo average powers.
    McPower(McArgs),
    /// Masked correlation matrix and group p-values for a price panel.
    Analyze(AnalyzeArgs),
    /// Fast invariant checks.
    Selftest,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 390)]
    pub n: usize,
    /// Number of series including the factor.
    #[arg(long, default_value_t = 21)]
    pub d: usize,
    #[arg(long = "rho-gamma", default_value_t = 0.5, allow_hyphen_values = true)]
    pub rho_gamma: f64,
    #[arg(long = "num-blocks", default_value_t = 10)]
    pub num_blocks: usize,
    #[arg(long = "fine-factor", default_value_t = 10)]
    pub fine_factor: usize,
    #[arg(long, default_value_t = 0.05, allow_hyphen_values = true)]
    pub mu: f64,
    #[arg(long, default_value_t = 3.0)]
    pub kappa: f64,
    #[arg(long, default_value_t = 0.09)]
    pub theta: f64,
    #[arg(long, default_value_t = 0.3)]
    pub eta: f64,
    #[arg(long, default_value_t = -0.6, allow_hyphen_values = true)]
    pub rho: f64,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output CSV; the truth and the resolved config are written beside it.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct LoadArgs {
    #[arg(long)]
    pub prices: PathBuf,
    /// Factor column; without it the raw covariations are tested.
    #[arg(long)]
    pub factor: Option<String>,
    #[arg(long = "session-col")]
    pub session_col: Option<String>,
    /// Keep increments across session boundaries.
    #[arg(long = "keep-gaps")]
    pub keep_gaps: bool,
    /// Input holds prices; take logarithms.
    #[arg(long = "take-log")]
    pub take_log: bool,
    /// Non-price columns to skip (repeatable).
    #[arg(long = "ignore-col")]
    pub ignore_cols: Vec<String>,
}

impl LoadArgs {
    fn options(&self) -> LoadOptions {
        LoadOptions {
            session_col: self.session_col.clone(),
            drop_gaps: !self.keep_gaps,
            take_log: self.take_log,
            ignore_cols: self.ignore_cols.clone(),
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct TestArgs {
    #[command(flatten)]
    pub load: LoadArgs,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long = "B", alias = "b", default_value_t = 999)]
    pub b: usize,
    #[arg(long, value_delimiter = ',', default_value = "holm")]
    pub method: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub load: LoadArgs,
    /// `asset,sector` file; groups are sector pairs.
    #[arg(long)]
    pub sectors: Option<PathBuf>,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long = "B", alias = "b", default_value_t = 999)]
    pub b: usize,
    /// Comma-separated; the first one drives the mask.
    #[arg(long, value_delimiter = ',', default_value = "rw,holm")]
    pub method: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long = "cache-dir")]
    pub cache_dir: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct McArgs {
    /// Flat TOML file with experiment keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// `key=value` override (repeatable); values use TOML syntax.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Start from the full-size preset (100 assets, 10^4 replications, 999 resamples).
    #[arg(long = "full-scale")]
    pub full_scale: bool,
    #[arg(long)]
    pub out: PathBuf,
}

enum Failure {
    Usage(String),
    Runtime(HicovError),
}

impl From<HicovError> for Failure {
    fn from(e: HicovError) -> Self {
        match e {
            HicovError::Config(_) => Failure::Usage(e.to_string()),
            e => Failure::Runtime(e),
        }
    }
}

/// Parses `args` (program name first) and runs; returns the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn dispatch(cli: Cli) -> std::result::Result<(), Failure> {
    if cli.jobs == Some(0) {
        return Err(Failure::Usage("--jobs must be at least 1".into()));
    }
    match cli.command {
        Command::Simulate(a) => with_jobs(cli.jobs, || simulate(&a)).map_err(Into::into),
        Command::Test(a) => {
            let methods = parse_methods(&a.method)?;
            with_jobs(cli.jobs, || test(&a, &methods)).map_err(Into::into)
        }
        Command::Analyze(a) => {
            let methods = parse_methods(&a.method)?;
            with_jobs(cli.jobs, || run_analyze(&a, &methods)).map_err(Into::into)
        }
        Command::McFwer(a) => monte_carlo(&a, cli.jobs, TableKind::Fwer),
        Command::McPower(a) => monte_carlo(&a, cli.jobs, TableKind::Power),
        Command::Selftest => {
            if selftest(&mut std::io::stdout())? {
                Ok(())
            } else {
                Err(Failure::Runtime(HicovError::Data("self test failed".into())))
            }
        }
    }
}

fn parse_methods(names: &[String]) -> std::result::Result<Vec<Method>, Failure> {
    let methods = names
        .iter()
        .map(|s| s.parse::<Method>())
        .collect::<Result<Vec<_>>>()
        .map_err(|e| Failure::Usage(e.to_string()))?;
    if methods.is_empty() {
        return Err(Failure::Usage("at least one method is required".into()));
    }
    Ok(methods)
}

/// Seed precedence: flag, then file, then the environment, then zero.
pub fn resolve_seed(flag: Option<u64>, file: Option<u64>) -> Result<u64> {
    if let Some(s) = flag.or(file) {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| HicovError::Config(format!("{SEED_ENV}=`{v}` is not an unsigned integer"))),
        Err(_) => Ok(0),
    }
}

fn parse_override(kv: &str) -> Result<(String, toml::Value)> {
    let (key, value) = kv
        .split_once('=')
        .ok_or_else(|| HicovError::Config(format!("override `{kv}` is not of the form key=value")))?;
    let key = key.trim().to_string();
    let value = value.trim();
    let parsed = toml::from_str::<toml::Table>(&format!("v = {value}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(value.to_string()));
    Ok((key, parsed))
}

/// Defaults (or the full-scale preset), then the file, then overrides,
/// then the seed rule.
pub fn resolve_spec(
    config: Option<&Path>,
    overrides: &[String],
    seed_flag: Option<u64>,
    full_scale: bool,
    jobs: Option<usize>,
) -> Result<ExperimentSpec> {
    let base = if full_scale {
        ExperimentSpec::full_scale()
    } else {
        ExperimentSpec::default()
    };
    let mut table = toml::Table::try_from(&base).map_err(|e| HicovError::Config(e.to_string()))?;
    let mut explicit_seed = None;
    if let Some(path) = config {
        let text = fs::read_to_string(path)
            .map_err(|e| HicovError::Config(format!("cannot read {}: {e}", path.display())))?;
        let file: toml::Table = toml::from_str(&text)
            .map_err(|e| HicovError::Config(format!("{}: {e}", path.display())))?;
        for (k, v) in file {
            let k = canonical_key(&k);
            if k == "seed" {
                explicit_seed = v.as_integer();
            }
            table.insert(k, v);
        }
    }
    for kv in overrides {
        let (k, v) = parse_override(kv)?;
        let k = canonical_key(&k);
        if k == "seed" {
            explicit_seed = v.as_integer();
        }
        table.insert(k, v);
    }
    let explicit_seed = explicit_seed
        .map(|s| u64::try_from(s).map_err(|_| HicovError::Config(format!("seed must be non-negative, got {s}"))))
        .transpose()?;
    let seed = resolve_seed(seed_flag, explicit_seed)?;
    table.insert("seed".into(), toml::Value::Integer(seed as i64));
    if let Some(j) = jobs {
        table.insert("jobs".into(), toml::Value::Integer(j as i64));
    }
    let spec: ExperimentSpec = table
        .try_into()
        .map_err(|e: toml::de::Error| HicovError::Config(e.message().to_string()))?;
    spec.validate()?;
    Ok(spec)
}

fn canonical_key(k: &str) -> String {
    match k {
        "M" => "m".into(),
        "B" => "b".into(),
        other => other.replace('-', "_"),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(text.as_bytes())?;
    w.flush()?;
    Ok(())
}

fn echo_config<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = toml::to_string(value).map_err(|e| HicovError::Config(e.to_string()))?;
    write_text(path, &text)
}

fn simulate(a: &SimulateArgs) -> Result<()> {
    let seed = resolve_seed(a.seed, None)?;
    let heston = HestonParams {
        mu: a.mu,
        kappa: a.kappa,
        theta: a.theta,
        eta: a.eta,
        rho: a.rho,
    };
    let scenario = SimScenario::draw(a.n, a.d, heston, a.num_blocks, a.rho_gamma, a.fine_factor, seed)?;
    let grid = simulate_paths(&scenario, &mut substream(seed, domain::PATHS, 0))?;
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let mut w = BufWriter::new(File::create(&a.out)?);
    grid.write_csv(&mut w)?;
    w.flush()?;
    write_json(&sidecar(&a.out, "truth.json"), &grid.truth)?;
    write_json(&sidecar(&a.out, "scenario.json"), &scenario)?;
    echo_config(&sidecar(&a.out, "config.toml"), &Resolved { seed, args: a })?;
    eprintln!("wrote {} ({} series, {} increments)", a.out.display(), grid.d, grid.n);
    Ok(())
}

/// `dir/stem.suffix` for an output file `dir/stem.ext`.
fn sidecar(out: &Path, suffix: &str) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.{suffix}"))
}

fn test(a: &TestArgs, methods: &[Method]) -> Result<()> {
    let seed = resolve_seed(a.seed, None)?;
    let panel = load_price_csv(&a.load.prices, a.load.factor.as_deref(), &a.load.options())?;
    let opts = AnalyzeOptions {
        alpha: a.alpha,
        b: a.b,
        methods: methods.to_vec(),
        seed,
        cache_dir: None,
    };
    let report = analyze(&panel, None, &opts)?;
    fs::create_dir_all(&a.out)?;
    let inc = panel.increments()?;
    let stats = crate::estimators::analyze_pairs(
        &inc,
        &crate::estimators::all_pairs(panel.asset_ids.len()),
        panel.mode(),
        None,
    )?;
    let mut w = csv::Writer::from_path(a.out.join("pairs.csv"))?;
    let mut header = vec!["asset_i", "asset_j", "that", "vhat", "t", "clamped"]
        .into_iter()
        .map(String::from)
        .collect::<Vec<_>>();
    for t in &report.tables {
        header.push(format!("rejected_{}", t.method));
        header.push(format!("adjusted_p_{}", t.method));
    }
    w.write_record(&header)?;
    for (k, s) in stats.stats.iter().enumerate() {
        let mut row = vec![
            panel.asset_ids[s.i].clone(),
            panel.asset_ids[s.j].clone(),
            format!("{}", s.that),
            format!("{}", s.vhat),
            format!("{}", s.t),
            s.clamped.to_string(),
        ];
        for t in &report.tables {
            row.push(t.groups[k].rejected.to_string());
            row.push(format!("{}", t.groups[k].adjusted_p));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    write_json(&a.out.join("meta.json"), &report.meta)?;
    echo_config(&a.out.join("config.toml"), &Resolved { seed, args: a })?;
    println!(
        "{} of {} pairs significant at alpha = {} ({})",
        report.meta.significant_pairs, report.meta.pairs, a.alpha, report.meta.mask_method
    );
    Ok(())
}

#[derive(Serialize)]
struct Resolved<'a, T: Serialize> {
    seed: u64,
    #[serde(flatten)]
    args: &'a T,
}

fn run_analyze(a: &AnalyzeArgs, methods: &[Method]) -> Result<()> {
    let seed = resolve_seed(a.seed, None)?;
    let panel = load_price_csv(&a.load.prices, a.load.factor.as_deref(), &a.load.options())?;
    let partition = match &a.sectors {
        Some(path) => Some(sector_partition(&load_sectors(path, &panel.asset_ids)?)?),
        None => None,
    };
    let opts = AnalyzeOptions {
        alpha: a.alpha,
        b: a.b,
        methods: methods.to_vec(),
        seed,
        cache_dir: a.cache_dir.clone(),
    };
    let report = analyze(&panel, partition.as_ref(), &opts)?;
    write_report(&report, &a.out)?;
    echo_config(&a.out.join("config.toml"), &Resolved { seed, args: a })?;
    println!(
        "{} of {} pairs significant ({:.1}%); {} groups tested; reports in {}",
        report.meta.significant_pairs,
        report.meta.pairs,
        100.0 * report.meta.fraction_significant,
        report.tables.first().map_or(0, |t| t.groups.len()),
        a.out.display()
    );
    Ok(())
}

fn write_tables(dir: &Path, table: &ExperimentTable, kind: TableKind) -> Result<()> {
    let name = match kind {
        TableKind::Fwer => "fwer.csv",
        TableKind::Power => "power.csv",
    };
    let mut w = BufWriter::new(File::create(dir.join(name))?);
    table.write_table_csv(kind, &mut w)?;
    w.flush()?;
    Ok(())
}

fn monte_carlo(a: &McArgs, jobs: Option<usize>, kind: TableKind) -> std::result::Result<(), Failure> {
    let spec = resolve_spec(a.config.as_deref(), &a.overrides, a.seed, a.full_scale, jobs)?;
    if a.full_scale {
        eprintln!(
            "warning: full-scale run ({} assets, M = {}, B = {}, {} cells); expect hours of compute",
            spec.d - 1,
            spec.m,
            spec.b,
            spec.n_grid.len() * spec.rho_gamma_grid.len()
        );
    }
    fs::create_dir_all(&a.out).map_err(HicovError::from)?;
    let mut resolved = spec.clone();
    resolved.jobs = None;
    echo_config(&a.out.join("config.toml"), &resolved)?;

    let out = a.out.clone();
    let mut partial = ExperimentTable {
        spec: spec.clone(),
        cells: Vec::new(),
        wall_clock_secs: 0.0,
    };
    let table = run_experiment_with(&spec, move |cells: &[CellResult]| {
        partial.cells.extend_from_slice(cells);
        for c in cells {
            eprintln!(
                "n = {:>4}  rho_gamma = {:.2}  {:<4}  fwer = {:.3}  power = {}",
                c.n,
                c.rho_gamma,
                c.method,
                c.fwer,
                c.avg_power.map_or("-".into(), |p| format!("{p:.3}"))
            );
        }
        write_tables(&out, &partial, kind)
    })?;
    write_tables(&a.out, &table, kind)?;
    let mut sidecar = table.clone();
    sidecar.spec.jobs = None;
    write_json(&a.out.join("experiment.json"), &sidecar)?;
    println!("{}", fs::read_to_string(a.out.join(match kind {
        TableKind::Fwer => "fwer.csv",
        TableKind::Power => "power.csv",
    })).map_err(HicovError::from)?.trim_end());
    Ok(())
}

/// Quick internal consistency checks; prints one line per check.
pub fn selftest<W: Write>(out: &mut W) -> Result<bool> {
    use crate::bootstrap::{bootstrap_rc, gen_multipliers, MultiplierVector};
    use crate::estimators::{AsyCovOracle, IncrementMatrix};
    use crate::mtest::{normal_quantile, pairwise_partition, stepdown, HolmProvider};
    use rand::Rng;
    use rand_distr::StandardNormal;

    let mut rng = substream(1, domain::REPLICATION, 0);
    let mut results: Vec<(&str, bool)> = Vec::new();

    // conditional covariance of bootstrap entries against the estimator
    let mut ok = true;
    for _ in 0..20 {
        let (d, n) = (3, 8);
        let dy: Vec<f64> = (0..d * n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let inc = IncrementMatrix::new(d, n, dy)?;
        let oracle = AsyCovOracle::new(&inc);
        // unit vectors recover the bilinear form entrywise
        let unit = |h: usize| {
            let mut e = MultiplierVector::zeros(n);
            e.e[h] = 1.0;
            e
        };
        let star: Vec<_> = (0..n).map(|h| bootstrap_rc(&inc, &unit(h), &[0, 1, 2])).collect::<Result<_>>()?;
        let weight = |h: usize, g: usize| match h.abs_diff(g) {
            0 => 1.0,
            1 => -0.5,
            _ => 0.0,
        };
        let mut want = 0.0;
        for h in 0..n {
            for g in 0..n {
                want += weight(h, g) * star[h].get(0, 1).unwrap_or(0.0) * star[g].get(1, 2).unwrap_or(0.0);
            }
        }
        let got = oracle.entry((0, 1), (1, 2))?;
        ok &= (got - want).abs() <= 1e-10 * (1.0 + got.abs());
    }
    results.push(("bootstrap conditional covariance matches estimator", ok));

    let reps = 20_000;
    let mut s = [0.0f64; 3];
    for _ in 0..reps {
        let e = gen_multipliers(4, &mut rng).e;
        s[0] += e[1] * e[1];
        s[1] += e[1] * e[2];
        s[2] += e[0] * e[2];
    }
    let m: Vec<f64> = s.iter().map(|v| v / reps as f64).collect();
    results.push((
        "multiplier autocovariances 1, -1/2, 0",
        (m[0] - 1.0).abs() < 0.05 && (m[1] + 0.5).abs() < 0.05 && m[2].abs() < 0.05,
    ));

    results.push((
        "normal quantile",
        (normal_quantile(0.975)? - 1.959_963_984_540_054).abs() < 1e-9,
    ));

    let part = pairwise_partition(4);
    let holm = HolmProvider::new(&part);
    let mut ok = true;
    for _ in 0..200 {
        let stats: Vec<f64> = (0..part.len()).map(|_| 4.0 * rng.random::<f64>()).collect();
        let got = stepdown(&stats, &holm, 0.05)?.rejected;
        let mut order: Vec<usize> = (0..stats.len()).collect();
        order.sort_by(|&a, &b| stats[b].total_cmp(&stats[a]));
        let mut want = vec![false; stats.len()];
        for (k, &g) in order.iter().enumerate() {
            let p = 2.0 * crate::mtest::normal_sf(stats[g]);
            if p < 0.05 / (stats.len() - k) as f64 {
                want[g] = true;
            } else {
                break;
            }
        }
        ok &= got == want;
    }
    results.push(("stepdown agrees with classic Holm", ok));

    let mut all = true;
    for (name, pass) in &results {
        writeln!(out, "{} {name}", if *pass { "PASS" } else { "FAIL" })?;
        all &= pass;
    }
    Ok(all)
}
