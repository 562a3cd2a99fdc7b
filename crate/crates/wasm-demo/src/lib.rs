//! WebAssembly bindings for the browser demo.
//!
//! Every exported function takes plain numbers and returns a JSON string,
//! so the page needs no generated type glue beyond what `wasm-bindgen`
//! emits. Errors come back as `{"error": "..."}`.

use hicov::bootstrap::gen_multipliers;
use hicov::dataio::{analyze, AnalyzeOptions, PricePanel};
use hicov::harness::Method;
use hicov::model_sim::{simulate_paths, HestonParams, PathGrid, SimScenario};
use hicov::rng::{domain, substream};
use serde::Serialize;
use wasm_bindgen::prelude::*;

fn to_json<T: Serialize>(r: hicov::Result<T>) -> String {
    match r {
        Ok(v) => serde_json::to_string(&v).unwrap_or_else(|e| error_json(&e.to_string())),
        Err(e) => error_json(&e.to_string()),
    }
}

fn error_json(msg: &str) -> String {
    serde_json::json!({ "error": msg }).to_string()
}

fn simulate(n: usize, d_under: usize, rho_gamma: f64, num_blocks: usize, seed: u64) -> hicov::Result<PathGrid> {
    let scenario = SimScenario::draw(n, d_under + 1, HestonParams::default(), num_blocks, rho_gamma, 10, seed)?;
    simulate_paths(&scenario, &mut substream(seed, domain::PATHS, 0))
}

#[derive(Debug, Serialize)]
pub struct PathsView {
    pub asset_ids: Vec<String>,
    pub n: usize,
    /// One row of log-prices per series, factor last.
    pub prices: Vec<Vec<f64>>,
    /// Row-major `d_under x d_under`: the pair has zero residual covariation.
    pub null_truth: Vec<bool>,
}

pub fn paths_view(n: usize, d_under: usize, rho_gamma: f64, num_blocks: usize, seed: u64) -> hicov::Result<PathsView> {
    let grid = simulate(n, d_under, rho_gamma, num_blocks, seed)?;
    let truth = grid.truth.as_ref().expect("simulated paths carry truth");
    Ok(PathsView {
        asset_ids: grid.asset_ids.clone(),
        n: grid.n,
        prices: grid.prices.chunks(grid.n + 1).map(<[f64]>::to_vec).collect(),
        null_truth: truth.null_truth.clone(),
    })
}

#[derive(Debug, Serialize)]
pub struct SparsityView {
    pub asset_ids: Vec<String>,
    pub correlation: Vec<Option<f64>>,
    /// True where the pair was not found significant.
    pub mask: Vec<bool>,
    pub null_truth: Vec<bool>,
    pub significant_pairs: usize,
    pub pairs: usize,
    /// Rejected pairs whose residual covariation is actually zero.
    pub false_discoveries: usize,
    pub missed: usize,
}

/// Simulates a panel and runs the pairwise stepdown test. With
/// `use_factor = false` the factor column is zeroed and raw covariations
/// are tested instead.
#[allow(clippy::too_many_arguments)]
pub fn sparsity_view(
    n: usize,
    d_under: usize,
    rho_gamma: f64,
    num_blocks: usize,
    alpha: f64,
    b: usize,
    use_rw: bool,
    use_factor: bool,
    seed: u64,
) -> hicov::Result<SparsityView> {
    let grid = simulate(n, d_under, rho_gamma, num_blocks, seed)?;
    let truth = grid.truth.clone().expect("simulated paths carry truth");
    let mut prices = grid.prices.clone();
    if !use_factor {
        let f = d_under * (n + 1);
        prices[f..].iter_mut().for_each(|p| *p = 0.0);
    }
    let panel = PricePanel {
        asset_ids: grid.asset_ids[..d_under].to_vec(),
        factor_id: use_factor.then(|| "F".to_string()),
        prices,
        bars: n + 1,
        sessions: None,
    };
    let opts = AnalyzeOptions {
        alpha,
        b,
        methods: vec![if use_rw { Method::RW } else { Method::Holm }],
        seed,
        cache_dir: None,
    };
    let report = analyze(&panel, None, &opts)?;
    let (mut false_discoveries, mut missed) = (0, 0);
    for i in 0..d_under {
        for j in i + 1..d_under {
            match (truth.is_null(i, j), report.masked(i, j)) {
                (true, false) => false_discoveries += 1,
                (false, true) => missed += 1,
                _ => {}
            }
        }
    }
    let null_truth = (0..d_under * d_under)
        .map(|k| truth.is_null(k / d_under, k % d_under))
        .collect();
    Ok(SparsityView {
        asset_ids: report.asset_ids,
        correlation: report.correlation,
        mask: report.mask,
        null_truth,
        significant_pairs: report.meta.significant_pairs,
        pairs: report.meta.pairs,
        false_discoveries,
        missed,
    })
}

#[derive(Debug, Serialize)]
pub struct AutocovView {
    pub lags: Vec<usize>,
    pub empirical: Vec<f64>,
    pub theoretical: Vec<f64>,
    /// One sample vector for plotting.
    pub sample: Vec<f64>,
}

/// Empirical autocovariance of the bootstrap multipliers, pooled over
/// positions and `reps` vectors of length `n`.
pub fn autocov_view(n: usize, reps: usize, max_lag: usize, seed: u64) -> hicov::Result<AutocovView> {
    if n < 2 || reps == 0 || max_lag >= n {
        return Err(hicov::HicovError::InvalidParameter(format!(
            "need n >= 2, reps >= 1 and max_lag < n (n = {n}, reps = {reps}, max_lag = {max_lag})"
        )));
    }
    let mut rng = substream(seed, domain::BOOTSTRAP, 0);
    let mut sums = vec![0.0; max_lag + 1];
    let mut sample = Vec::new();
    for r in 0..reps {
        let e = gen_multipliers(n, &mut rng).e;
        for (lag, s) in sums.iter_mut().enumerate() {
            *s += (0..n - lag).map(|h| e[h] * e[h + lag]).sum::<f64>() / (n - lag) as f64;
        }
        if r == 0 {
            sample = e;
        }
    }
    Ok(AutocovView {
        lags: (0..=max_lag).collect(),
        empirical: sums.iter().map(|s| s / reps as f64).collect(),
        theoretical: (0..=max_lag)
            .map(|lag| match lag {
                0 => 1.0,
                1 => -0.5,
                _ => 0.0,
            })
            .collect(),
        sample,
    })
}

#[wasm_bindgen]
pub fn simulate_paths_json(n: usize, d_under: usize, rho_gamma: f64, num_blocks: usize, seed: u32) -> String {
    to_json(paths_view(n, d_under, rho_gamma, num_blocks, seed as u64))
}

#[wasm_bindgen]
#[allow(clippy::too_many_arguments)]
pub fn residual_sparsity_json(
    n: usize,
    d_under: usize,
    rho_gamma: f64,
    num_blocks: usize,
    alpha: f64,
    b: usize,
    use_rw: bool,
    use_factor: bool,
    seed: u32,
) -> String {
    to_json(sparsity_view(n, d_under, rho_gamma, num_blocks, alpha, b, use_rw, use_factor, seed as u64))
}

#[wasm_bindgen]
pub fn multiplier_autocov_json(n: usize, reps: usize, max_lag: usize, seed: u32) -> String {
    to_json(autocov_view(n, reps, max_lag, seed as u64))
}
