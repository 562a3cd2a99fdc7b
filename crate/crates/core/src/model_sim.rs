//! One-factor model with Heston variance and block-correlated residuals.
//!
//! The factor is the last asset:
//!
//! ```text
//! dY^d = mu dt + sqrt(v) dB^d
//! dv   = kappa (theta - v) dt + eta sqrt(v) (rho dB^d + sqrt(1 - rho^2) dB^{d+1})
//! dR^j = gamma_j' dB_under,      Y^j = beta^j Y^d + R^j,   j < d
//! ```
//!
//! Paths are produced by a full-truncation Euler scheme on a fine grid with
//! `fine_factor` sub-steps per observation interval and then subsampled to
//! the `n + 1` observation times `t_h = h / n` on `[0, 1]`.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{HicovError, Result};
use crate::estimators::IncrementMatrix;
use crate::rng::{domain, substream};
use crate::sum::Compensated;

/// Parameters of the factor drift and its square-root variance process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HestonParams {
    pub mu: f64,
    pub kappa: f64,
    pub theta: f64,
    pub eta: f64,
    pub rho: f64,
}

impl Default for HestonParams {
    /// mu = 0.05, kappa = 3, theta = 0.09, eta = 0.3, rho = -0.6.
    fn default() -> Self {
        Self {
            mu: 0.05,
            kappa: 3.0,
            theta: 0.09,
            eta: 0.3,
            rho: -0.6,
        }
    }
}

impl HestonParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0) {
            return Err(HicovError::invalid(format!("kappa must be > 0, got {}", self.kappa)));
        }
        if !(self.theta > 0.0) {
            return Err(HicovError::invalid(format!("theta must be > 0, got {}", self.theta)));
        }
        if !(self.eta >= 0.0) {
            return Err(HicovError::invalid(format!("eta must be >= 0, got {}", self.eta)));
        }
        if !(self.rho.abs() <= 1.0) {
            return Err(HicovError::invalid(format!("rho must lie in [-1, 1], got {}", self.rho)));
        }
        if !self.mu.is_finite() {
            return Err(HicovError::invalid("mu must be finite"));
        }
        Ok(())
    }

    /// Feller indicator `2 kappa theta > eta^2`.
    pub fn feller(&self) -> bool {
        2.0 * self.kappa * self.theta > self.eta * self.eta
    }

    /// Shape and rate of the stationary Gamma law, `None` when `eta == 0`.
    pub fn stationary_shape_rate(&self) -> Option<(f64, f64)> {
        if self.eta == 0.0 {
            return None;
        }
        let e2 = self.eta * self.eta;
        Some((2.0 * self.kappa * self.theta / e2, 2.0 * self.kappa / e2))
    }
}

/// One draw from the stationary law of the variance process.
///
/// With `eta == 0` the process is deterministic and its only stationary
/// point is `theta`.
pub fn sample_stationary_variance<R: Rng + ?Sized>(heston: &HestonParams, rng: &mut R) -> Result<f64> {
    heston.validate()?;
    match heston.stationary_shape_rate() {
        None => Ok(heston.theta),
        Some((shape, rate)) => {
            let gamma = Gamma::new(shape, 1.0 / rate)
                .map_err(|e| HicovError::invalid(format!("stationary gamma law: {e}")))?;
            Ok(gamma.sample(rng))
        }
    }
}

/// Residual covariation `Gamma = gamma gamma'`, block diagonal with constant
/// within-block correlation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualStructure {
    pub d_under: usize,
    /// Lower-triangular loading matrix, row-major `d_under x d_under`.
    pub gamma: Vec<f64>,
    pub block_sizes: Vec<usize>,
    pub rho_gamma: f64,
    /// Diagonal of `Gamma`.
    pub diagonals: Vec<f64>,
}

impl ResidualStructure {
    /// Builds the structure from pinned diagonals. Zero diagonals are
    /// allowed (degenerate residuals).
    pub fn from_diagonals(diagonals: Vec<f64>, block_sizes: Vec<usize>, rho_gamma: f64) -> Result<Self> {
        let d_under = diagonals.len();
        if d_under == 0 {
            return Err(HicovError::invalid("residual dimension must be positive"));
        }
        if block_sizes.contains(&0) || block_sizes.iter().sum::<usize>() != d_under {
            return Err(HicovError::Partition(format!(
                "block sizes {block_sizes:?} do not partition {d_under} residuals"
            )));
        }
        if let Some(bad) = diagonals.iter().find(|x| !(x.is_finite() && **x >= 0.0)) {
            return Err(HicovError::invalid(format!("residual variances must be finite and >= 0, got {bad}")));
        }
        if !(rho_gamma < 1.0) || !rho_gamma.is_finite() {
            return Err(HicovError::invalid(format!("rho_gamma must be < 1, got {rho_gamma}")));
        }

        let mut gamma = vec![0.0; d_under * d_under];
        let mut start = 0;
        for (block, &size) in block_sizes.iter().enumerate() {
            if size >= 2 && rho_gamma <= -1.0 / (size as f64 - 1.0) {
                return Err(HicovError::NotPsd { block, size, rho_gamma });
            }
            let diag = &diagonals[start..start + size];
            let cov = |a: usize, b: usize| {
                if a == b {
                    diag[a]
                } else {
                    rho_gamma * (diag[a] * diag[b]).sqrt()
                }
            };
            let chol = semidefinite_cholesky(size, cov).ok_or(HicovError::NotPsd { block, size, rho_gamma })?;
            for a in 0..size {
                for b in 0..=a {
                    gamma[(start + a) * d_under + start + b] = chol[a * size + b];
                }
            }
            start += size;
        }

        Ok(Self {
            d_under,
            gamma,
            block_sizes,
            rho_gamma,
            diagonals,
        })
    }

    /// Block index of residual `i`.
    pub fn block_of(&self, i: usize) -> usize {
        let mut end = 0;
        for (k, &s) in self.block_sizes.iter().enumerate() {
            end += s;
            if i < end {
                return k;
            }
        }
        self.block_sizes.len()
    }

    /// `(start, size)` of every block.
    pub fn blocks(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.block_sizes.iter().scan(0usize, |start, &s| {
            let out = (*start, s);
            *start += s;
            Some(out)
        })
    }

    /// Entry `Gamma^{ij}` from its defining formula; off-block entries are
    /// exactly zero.
    pub fn cov(&self, i: usize, j: usize) -> f64 {
        if i == j {
            self.diagonals[i]
        } else if self.block_of(i) == self.block_of(j) {
            self.rho_gamma * (self.diagonals[i] * self.diagonals[j]).sqrt()
        } else {
            0.0
        }
    }

    /// Dense `Gamma`, row-major.
    pub fn cov_matrix(&self) -> Vec<f64> {
        let m = self.d_under;
        let mut out = vec![0.0; m * m];
        for i in 0..m {
            for j in 0..m {
                out[i * m + j] = self.cov(i, j);
            }
        }
        out
    }

    pub fn loading(&self, i: usize, j: usize) -> f64 {
        self.gamma[i * self.d_under + j]
    }
}

/// Cholesky factor of a PSD matrix given entrywise. Returns `None` when a
/// pivot is clearly negative or a zero pivot has a non-zero column below it.
fn semidefinite_cholesky(size: usize, a: impl Fn(usize, usize) -> f64) -> Option<Vec<f64>> {
    let mut l = vec![0.0; size * size];
    let scale = (0..size).map(|i| a(i, i).abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let tol = 1e-13 * scale;
    for j in 0..size {
        let mut pivot = a(j, j);
        for k in 0..j {
            pivot -= l[j * size + k] * l[j * size + k];
        }
        if pivot < -tol {
            return None;
        }
        if pivot <= tol {
            for i in j + 1..size {
                let mut s = a(i, j);
                for k in 0..j {
                    s -= l[i * size + k] * l[j * size + k];
                }
                if s.abs() > tol.sqrt() * scale.sqrt() {
                    return None;
                }
            }
            continue;
        }
        let ljj = pivot.sqrt();
        l[j * size + j] = ljj;
        for i in j + 1..size {
            let mut s = a(i, j);
            for k in 0..j {
                s -= l[i * size + k] * l[j * size + k];
            }
            l[i * size + j] = s / ljj;
        }
    }
    Some(l)
}

/// Draws a block structure: diagonals iid Uniform[0.2, 0.5], `num_blocks`
/// equal blocks with within-block correlation `rho_gamma`.
pub fn draw_residual_structure<R: Rng + ?Sized>(
    d_under: usize,
    num_blocks: usize,
    rho_gamma: f64,
    rng: &mut R,
) -> Result<ResidualStructure> {
    if num_blocks == 0 || d_under == 0 || !d_under.is_multiple_of(num_blocks) {
        return Err(HicovError::Partition(format!(
            "{num_blocks} blocks do not evenly divide {d_under} residuals"
        )));
    }
    let uni = Uniform::new_inclusive(0.2, 0.5).expect("valid bounds");
    let diagonals: Vec<f64> = (0..d_under).map(|_| uni.sample(rng)).collect();
    ResidualStructure::from_diagonals(diagonals, vec![d_under / num_blocks; num_blocks], rho_gamma)
}

/// Everything needed to simulate one data set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimScenario {
    pub n: usize,
    pub d: usize,
    pub heston: HestonParams,
    pub structure: ResidualStructure,
    pub betas: Vec<f64>,
    pub fine_factor: usize,
    pub seed: u64,
}

impl SimScenario {
    /// Draws factor loadings (iid Uniform[0.25, 2.25]) and then the residual
    /// structure from the structure stream of `seed`.
    pub fn draw(
        n: usize,
        d: usize,
        heston: HestonParams,
        num_blocks: usize,
        rho_gamma: f64,
        fine_factor: usize,
        seed: u64,
    ) -> Result<Self> {
        if d < 3 {
            return Err(HicovError::invalid(format!("d must be >= 3, got {d}")));
        }
        let mut rng = substream(seed, domain::STRUCTURE, 0);
        let (betas, structure) = draw_structure(d - 1, num_blocks, rho_gamma, &mut rng)?;
        let scenario = Self {
            n,
            d,
            heston,
            structure,
            betas,
            fine_factor,
            seed,
        };
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn d_under(&self) -> usize {
        self.d - 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(HicovError::invalid(format!("n must be >= 2, got {}", self.n)));
        }
        if self.d < 3 {
            return Err(HicovError::invalid(format!("d must be >= 3, got {}", self.d)));
        }
        if self.fine_factor < 1 {
            return Err(HicovError::invalid("fine_factor must be >= 1"));
        }
        if self.structure.d_under != self.d - 1 || self.betas.len() != self.d - 1 {
            return Err(HicovError::invalid(format!(
                "residual structure ({}) and betas ({}) must have dimension d - 1 = {}",
                self.structure.d_under,
                self.betas.len(),
                self.d - 1
            )));
        }
        if self.betas.iter().any(|b| !b.is_finite()) {
            return Err(HicovError::invalid("betas must be finite"));
        }
        self.heston.validate()
    }
}

/// Draws betas then residual diagonals from one stream.
pub fn draw_structure<R: Rng + ?Sized>(
    d_under: usize,
    num_blocks: usize,
    rho_gamma: f64,
    rng: &mut R,
) -> Result<(Vec<f64>, ResidualStructure)> {
    let uni = Uniform::new_inclusive(0.25, 2.25).expect("valid bounds");
    let betas: Vec<f64> = (0..d_under).map(|_| uni.sample(rng)).collect();
    let structure = draw_residual_structure(d_under, num_blocks, rho_gamma, rng)?;
    Ok((betas, structure))
}

/// Analytic quadratic covariation and test targets for one path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueQuantities {
    pub d: usize,
    pub integrated_variance: f64,
    /// `[Y, Y]_1`, row-major `d x d`.
    pub qv: Vec<f64>,
    /// `T^{ij} = [Y^i,Y^d][Y^j,Y^d] - [Y^i,Y^j][Y^d,Y^d]`, row-major `(d-1) x (d-1)`.
    pub tau: Vec<f64>,
    /// `true` where `Gamma^{ij} = 0`, i.e. the null holds.
    pub null_truth: Vec<bool>,
}

impl TrueQuantities {
    pub fn d_under(&self) -> usize {
        self.d - 1
    }

    pub fn qv(&self, i: usize, j: usize) -> f64 {
        self.qv[i * self.d + j]
    }

    pub fn tau(&self, i: usize, j: usize) -> f64 {
        self.tau[i * self.d_under() + j]
    }

    pub fn is_null(&self, i: usize, j: usize) -> bool {
        self.null_truth[i * self.d_under() + j]
    }
}

pub fn true_quantities(structure: &ResidualStructure, betas: &[f64], integrated_variance: f64) -> Result<TrueQuantities> {
    if !(integrated_variance > 0.0) {
        return Err(HicovError::invalid(format!(
            "integrated variance must be > 0, got {integrated_variance}"
        )));
    }
    let m = structure.d_under;
    if betas.len() != m {
        return Err(HicovError::invalid("betas and residual structure disagree in dimension"));
    }
    let d = m + 1;
    let iv = integrated_variance;
    let mut qv = vec![0.0; d * d];
    for i in 0..m {
        for j in 0..m {
            qv[i * d + j] = betas[i] * betas[j] * iv + structure.cov(i, j);
        }
        qv[i * d + m] = betas[i] * iv;
        qv[m * d + i] = betas[i] * iv;
    }
    qv[m * d + m] = iv;

    let mut tau = vec![0.0; m * m];
    let mut null_truth = vec![false; m * m];
    for i in 0..m {
        for j in 0..m {
            let g = structure.cov(i, j);
            tau[i * m + j] = -g * iv;
            null_truth[i * m + j] = g == 0.0;
        }
    }
    Ok(TrueQuantities {
        d,
        integrated_variance: iv,
        qv,
        tau,
        null_truth,
    })
}

/// Log-prices on the observation grid, one row per asset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathGrid {
    pub d: usize,
    pub n: usize,
    /// Row-major `d x (n + 1)`.
    pub prices: Vec<f64>,
    pub asset_ids: Vec<String>,
    pub truth: Option<TrueQuantities>,
}

impl PathGrid {
    pub fn price(&self, asset: usize, h: usize) -> f64 {
        self.prices[asset * (self.n + 1) + h]
    }

    pub fn increments(&self) -> Result<IncrementMatrix> {
        IncrementMatrix::from_prices(self.d, self.n + 1, &self.prices)
    }

    /// CSV with a header of asset ids and one row per observation time.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.asset_ids)?;
        for h in 0..=self.n {
            w.write_record((0..self.d).map(|a| format!("{}", self.price(a, h))))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Default asset ids for simulated panels: `Y1..Y{d-1}` and the factor `F`.
pub fn default_asset_ids(d: usize) -> Vec<String> {
    (1..d).map(|i| format!("Y{i}")).chain(std::iter::once("F".to_string())).collect()
}

/// Simulates one path with the initial variance drawn from its stationary law.
pub fn simulate_paths<R: Rng + ?Sized>(scenario: &SimScenario, rng: &mut R) -> Result<PathGrid> {
    scenario.validate()?;
    let v0 = sample_stationary_variance(&scenario.heston, rng)?;
    simulate_paths_from(scenario, v0, rng)
}

/// Simulates one path from a given initial variance.
pub fn simulate_paths_from<R: Rng + ?Sized>(scenario: &SimScenario, v0: f64, rng: &mut R) -> Result<PathGrid> {
    scenario.validate()?;
    if !(v0 >= 0.0 && v0.is_finite()) {
        return Err(HicovError::invalid(format!("initial variance must be >= 0, got {v0}")));
    }
    let SimScenario {
        n,
        d,
        heston,
        ref structure,
        ref betas,
        fine_factor,
        ..
    } = *scenario;
    let m = d - 1;
    let steps = n * fine_factor;
    let dt = 1.0 / steps as f64;
    let sdt = dt.sqrt();
    let rho_perp = (1.0 - heston.rho * heston.rho).max(0.0).sqrt();
    let blocks: Vec<(usize, usize)> = structure.blocks().collect();

    let mut prices = vec![0.0; d * (n + 1)];
    let mut resid = vec![0.0; m];
    let mut z = vec![0.0; m];
    let mut factor = 0.0;
    let mut v = v0;
    let mut int_v = Compensated::default();

    for step in 1..=steps {
        for zi in z.iter_mut() {
            *zi = rng.sample::<f64, _>(StandardNormal);
        }
        let zf: f64 = rng.sample(StandardNormal);
        let zv: f64 = rng.sample(StandardNormal);

        // Full truncation: v+ drives both diffusion terms and the drift.
        let vp = v.max(0.0);
        let svp = vp.sqrt();
        int_v.add(vp * dt);
        factor += heston.mu * dt + svp * sdt * zf;
        v += heston.kappa * (heston.theta - vp) * dt + heston.eta * svp * sdt * (heston.rho * zf + rho_perp * zv);

        for &(start, size) in &blocks {
            for a in start..start + size {
                let row = &structure.gamma[a * m + start..a * m + a + 1];
                let dr: f64 = row.iter().zip(&z[start..=a]).map(|(g, zz)| g * zz).sum();
                resid[a] += dr * sdt;
            }
        }

        if step % fine_factor == 0 {
            let h = step / fine_factor;
            for j in 0..m {
                prices[j * (n + 1) + h] = betas[j] * factor + resid[j];
            }
            prices[m * (n + 1) + h] = factor;
        }
    }

    let iv = int_v.value();
    let truth = if iv > 0.0 {
        Some(true_quantities(structure, betas, iv)?)
    } else {
        None
    };
    Ok(PathGrid {
        d,
        n,
        prices,
        asset_ids: default_asset_ids(d),
        truth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn ten_blocks_have_exact_zero_off_block() {
        let s = draw_residual_structure(100, 10, 0.5, &mut rng(1)).unwrap();
        assert_eq!(s.block_sizes, vec![10; 10]);
        for i in 0..100 {
            assert!((0.2..=0.5).contains(&s.diagonals[i]));
            for j in 0..100 {
                if i / 10 != j / 10 {
                    assert_eq!(s.cov(i, j), 0.0);
                    assert_eq!(s.loading(i, j), 0.0);
                }
            }
        }
        // gamma gamma' reproduces Gamma within the first block
        for i in 0..10 {
            for j in 0..10 {
                let g: f64 = (0..100).map(|k| s.loading(i, k) * s.loading(j, k)).sum();
                assert!((g - s.cov(i, j)).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn singleton_blocks_are_diagonal() {
        let s = draw_residual_structure(4, 4, 0.0, &mut rng(2)).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                if i != j {
                    assert_eq!(s.cov(i, j), 0.0);
                }
            }
        }
    }

    #[test]
    fn pinned_two_by_two() {
        let s = ResidualStructure::from_diagonals(vec![0.25, 0.25], vec![2], 0.5).unwrap();
        let g = s.cov_matrix();
        assert_eq!(g, vec![0.25, 0.125, 0.125, 0.25]);
    }

    #[test]
    fn non_divisible_partition_is_rejected() {
        assert!(matches!(
            draw_residual_structure(10, 3, 0.5, &mut rng(3)),
            Err(HicovError::Partition(_))
        ));
    }

    #[test]
    fn too_negative_correlation_names_block() {
        let err = draw_residual_structure(10, 2, -0.3, &mut rng(3)).unwrap_err();
        match err {
            HicovError::NotPsd { block, size, .. } => {
                assert_eq!(block, 0);
                assert_eq!(size, 5);
            }
            other => panic!("unexpected {other:?}"),
        }
        // -0.2 < -1/4 is false, so this one is fine
        assert!(draw_residual_structure(10, 2, -0.2, &mut rng(3)).is_ok());
    }

    #[test]
    fn stationary_variance_degenerate_and_moments() {
        let mut h = HestonParams::default();
        let (shape, rate) = h.stationary_shape_rate().unwrap();
        assert!((shape - 6.0).abs() < 1e-12);
        assert!((rate - 200.0 / 3.0).abs() < 1e-9);
        assert!((shape / rate - h.theta).abs() < 1e-15);

        let mut r = rng(11);
        let draws: Vec<f64> = (0..100_000).map(|_| sample_stationary_variance(&h, &mut r).unwrap()).collect();
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        let sd = (h.theta * h.eta * h.eta / (2.0 * h.kappa)).sqrt();
        assert!((mean - 0.09).abs() < 3.0 * sd / (draws.len() as f64).sqrt(), "mean {mean}");

        h.eta = 0.0;
        assert_eq!(sample_stationary_variance(&h, &mut r).unwrap(), 0.09);
    }

    #[test]
    fn true_quantities_hand_values() {
        let s = ResidualStructure::from_diagonals(vec![0.25, 0.25, 0.3], vec![2, 1], 0.5).unwrap();
        let tq = true_quantities(&s, &[1.0, 2.0, 0.5], 0.09).unwrap();
        assert!((tq.tau(0, 1) + 0.01125).abs() < 1e-15);
        assert!(!tq.is_null(0, 1));
        assert!(tq.is_null(0, 2) && tq.tau(0, 2) == 0.0);
        // bilinear identity against qv
        for i in 0..3 {
            for j in 0..3 {
                let via_qv = tq.qv(i, 3) * tq.qv(j, 3) - tq.qv(i, j) * tq.qv(3, 3);
                assert!((via_qv - tq.tau(i, j)).abs() < 1e-15);
            }
        }
        assert_eq!(tq.qv(3, 3), 0.09);
        assert!(true_quantities(&s, &[1.0, 2.0, 0.5], 0.0).is_err());
    }

    fn scenario(n: usize, d: usize, heston: HestonParams, ff: usize) -> SimScenario {
        SimScenario::draw(n, d, heston, 1, 0.5, ff, 42).unwrap()
    }

    #[test]
    fn noise_free_variance_stays_at_theta() {
        let h = HestonParams {
            eta: 0.0,
            ..HestonParams::default()
        };
        let sc = scenario(50, 3, h, 10);
        let p = simulate_paths(&sc, &mut rng(5)).unwrap();
        let tq = p.truth.unwrap();
        assert!((tq.integrated_variance - 0.09).abs() < 1e-14);
    }

    #[test]
    fn zero_loadings_give_constant_residual_assets() {
        let mut sc = scenario(20, 4, HestonParams::default(), 2);
        sc.betas = vec![0.0; 3];
        sc.structure = ResidualStructure::from_diagonals(vec![0.0; 3], vec![3], 0.5).unwrap();
        let p = simulate_paths(&sc, &mut rng(6)).unwrap();
        for a in 0..3 {
            for h in 0..=20 {
                assert_eq!(p.price(a, h), 0.0);
            }
        }
        assert!((1..=20).any(|h| p.price(3, h) != 0.0));
    }

    #[test]
    fn factor_realized_variance_converges_without_vol_noise() {
        let h = HestonParams {
            eta: 0.0,
            mu: 0.0,
            ..HestonParams::default()
        };
        let sc = scenario(390, 3, h, 10);
        let p = simulate_paths(&sc, &mut rng(8)).unwrap();
        let rv: f64 = (1..=390).map(|k| (p.price(2, k) - p.price(2, k - 1)).powi(2)).sum();
        assert!(((rv - 0.09) / 0.09).abs() < 2.0 / (3900f64).sqrt());
    }

    #[test]
    fn simulation_is_reproducible() {
        let sc = scenario(30, 5, HestonParams::default(), 3);
        let a = simulate_paths(&sc, &mut rng(9)).unwrap();
        let b = simulate_paths(&sc, &mut rng(9)).unwrap();
        assert_eq!(a, b);
        assert!(a.prices.iter().all(|x| x.is_finite()));
    }

    #[test]
    fn stationary_mean_of_integrated_variance() {
        let sc = scenario(20, 3, HestonParams::default(), 10);
        let mut r = rng(10);
        let ivs: Vec<f64> = (0..3000)
            .map(|_| simulate_paths(&sc, &mut r).unwrap().truth.unwrap().integrated_variance)
            .collect();
        let k = ivs.len() as f64;
        let mean = ivs.iter().sum::<f64>() / k;
        let var = ivs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1.0);
        assert!((mean - 0.09).abs() < 3.0 * (var / k).sqrt(), "mean {mean}");
    }

    #[test]
    fn csv_has_header_and_rows() {
        let sc = scenario(4, 3, HestonParams::default(), 1);
        let p = simulate_paths(&sc, &mut rng(12)).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "Y1,Y2,F");
        assert_eq!(lines.len(), 6);
    }
}
