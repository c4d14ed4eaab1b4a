//! Monte Carlo reference prices under lognormal fSABR.
//!
//! The asset follows the Euler scheme S_{k+1} = S_k (1 + σ_k ε_k √Δ) with
//! σ_k = Y0 exp(ν B^H(t_k)) and ε_k = ρ z1_k + ρ̄ z3_k, where z1 are the same
//! normals that build B^H. Realized variance is the left-point sum
//! w_k = Σ_{j<k} σ_j² Δ.

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fbm::{FbmSampler, PathBatch, PathBlock, Scheme, TimeGrid};
use crate::pricers::{Contract, Method, ModelParams, PricingResult};

/// Largest tolerated fraction of paths on which the Euler step drove S ≤ 0.
pub const MAX_FLAGGED_FRACTION: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McConfig {
    /// Time steps over the life of the contract.
    pub n_steps: usize,
    pub n_paths: usize,
    pub seed: u64,
    #[serde(default)]
    pub antithetic: bool,
    #[serde(default)]
    pub scheme: Scheme,
}

impl Default for McConfig {
    fn default() -> Self {
        McConfig {
            n_steps: 252,
            n_paths: 50_000,
            seed: 1,
            antithetic: false,
            scheme: Scheme::Cholesky,
        }
    }
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_steps < 2 {
            return Err(Error::Config(format!(
                "n_steps must be >= 2, got {}",
                self.n_steps
            )));
        }
        if self.n_paths < 2 {
            return Err(Error::Config(format!(
                "n_paths must be >= 2, got {}",
                self.n_paths
            )));
        }
        if self.antithetic && self.n_paths % 2 != 0 {
            return Err(Error::Config(format!(
                "antithetic sampling needs an even path count, got {}",
                self.n_paths
            )));
        }
        Ok(())
    }
}

/// Terminal state of one simulated path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathEnd {
    pub s_t: f64,
    /// Realized variance over [0, T].
    pub w_t: f64,
    /// The asset hit a non-positive value; it is then absorbed at 0.
    pub flagged: bool,
}

struct Stepper {
    s0: f64,
    y0: f64,
    nu: f64,
    rho: f64,
    rho_bar: f64,
    dt: f64,
    sqrt_dt: f64,
}

impl Stepper {
    fn new(params: &ModelParams, grid: &TimeGrid) -> Self {
        Stepper {
            s0: params.s0,
            y0: params.y0,
            nu: params.nu,
            rho: params.rho,
            rho_bar: params.rho_bar(),
            dt: grid.dt(),
            sqrt_dt: grid.dt().sqrt(),
        }
    }

    /// Runs one path; `node(k, y, s, w)` sees every node k = 0..=n.
    fn run(
        &self,
        z1: ArrayView1<f64>,
        bh: ArrayView1<f64>,
        z3: ArrayView1<f64>,
        mut node: impl FnMut(usize, f64, f64, f64),
    ) -> PathEnd {
        let n = z1.len();
        let mut s = self.s0;
        let mut w = 0.0;
        let mut flagged = false;
        let mut y = self.y0;
        for k in 0..n {
            node(k, y, s, w);
            let eps = self.rho * z1[k] + self.rho_bar * z3[k];
            if !flagged {
                s *= 1.0 + y * eps * self.sqrt_dt;
                if s <= 0.0 {
                    flagged = true;
                    s = 0.0;
                }
            }
            w += y * y * self.dt;
            y = self.y0 * (self.nu * bh[k]).exp();
        }
        node(n, y, s, w);
        PathEnd {
            s_t: s,
            w_t: w,
            flagged,
        }
    }

    fn run_block(&self, block: &PathBlock) -> Vec<PathEnd> {
        let z3 = block.z3.as_ref().expect("asset draws requested");
        (0..block.z1.nrows())
            .map(|i| self.run(block.z1.row(i), block.bh.row(i), z3.row(i), |_, _, _, _| {}))
            .collect()
    }
}

fn setup(
    params: &ModelParams,
    contract: &Contract,
    cfg: &McConfig,
) -> Result<(TimeGrid, std::sync::Arc<FbmSampler>)> {
    params.validate()?;
    contract.validate()?;
    cfg.validate()?;
    let grid = TimeGrid::new(contract.t, cfg.n_steps)?;
    let sampler = FbmSampler::shared(&params.hurst()?, &grid, cfg.scheme)?;
    Ok((grid, sampler))
}

fn check_flagged(flagged: usize, n_paths: usize, n_steps: usize) -> Result<()> {
    if flagged as f64 > MAX_FLAGGED_FRACTION * n_paths as f64 {
        return Err(Error::Simulation(format!(
            "{flagged} of {n_paths} paths reached S <= 0 with {n_steps} steps; increase n_steps"
        )));
    }
    Ok(())
}

/// Simulates full paths of (B, B^H, Y, S, w). Memory grows as paths × steps;
/// use [`mc_expectation`] for pricing-size runs.
pub fn simulate_fsabr(
    params: &ModelParams,
    contract: &Contract,
    cfg: &McConfig,
) -> Result<PathBatch> {
    let (grid, sampler) = setup(params, contract, cfg)?;
    let stepper = Stepper::new(params, &grid);
    let blocks = sampler.map_blocks(cfg.seed, cfg.n_paths, cfg.antithetic, true, |b| b);
    let mut batch = PathBatch::from_blocks(grid, cfg.seed, cfg.scheme, &blocks);
    let shape = (cfg.n_paths, cfg.n_steps + 1);
    let (mut y, mut s, mut w) = (
        Array2::zeros(shape),
        Array2::zeros(shape),
        Array2::zeros(shape),
    );
    let mut row = 0;
    for block in &blocks {
        let z3 = block.z3.as_ref().expect("asset draws requested");
        for i in 0..block.z1.nrows() {
            let end = stepper.run(
                block.z1.row(i),
                block.bh.row(i),
                z3.row(i),
                |k, yk, sk, wk| {
                    y[[row, k]] = yk;
                    s[[row, k]] = sk;
                    w[[row, k]] = wk;
                },
            );
            batch.flagged[row] = end.flagged;
            row += 1;
        }
    }
    let n_flagged = batch.flagged.iter().filter(|&&f| f).count();
    check_flagged(n_flagged, cfg.n_paths, cfg.n_steps)?;
    batch.y = Some(y);
    batch.s = Some(s);
    batch.w = Some(w);
    Ok(batch)
}

/// Sample mean of f over simulated path ends.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub std_err: f64,
    /// Number of independent samples behind std_err (pairs when antithetic).
    pub n_samples: usize,
    pub n_flagged: usize,
}

/// Estimates E[f(path end)], averaging antithetic pairs before computing
/// the standard error. Sums run in path order, so the result does not depend
/// on the number of worker threads.
pub fn mc_expectation<F>(
    params: &ModelParams,
    contract: &Contract,
    cfg: &McConfig,
    f: F,
) -> Result<McEstimate>
where
    F: Fn(&PathEnd) -> f64 + Sync,
{
    let (grid, sampler) = setup(params, contract, cfg)?;
    let stepper = Stepper::new(params, &grid);
    let parts = sampler.map_blocks(cfg.seed, cfg.n_paths, cfg.antithetic, true, |b| {
        let ends = stepper.run_block(&b);
        let flagged = ends.iter().filter(|e| e.flagged).count();
        let vals: Vec<f64> = if cfg.antithetic {
            ends.chunks(2)
                .map(|p| 0.5 * (f(&p[0]) + f(&p[1])))
                .collect()
        } else {
            ends.iter().map(&f).collect()
        };
        (vals, flagged)
    });
    let n_flagged: usize = parts.iter().map(|p| p.1).sum();
    check_flagged(n_flagged, cfg.n_paths, cfg.n_steps)?;
    let n = parts.iter().map(|p| p.0.len()).sum::<usize>();
    let mean = parts.iter().flat_map(|p| &p.0).sum::<f64>() / n as f64;
    let ss: f64 = parts
        .iter()
        .flat_map(|p| &p.0)
        .map(|v| (v - mean).powi(2))
        .sum();
    let std_err = (ss / (n as f64 - 1.0) / n as f64).sqrt();
    if !mean.is_finite() {
        return Err(Error::Simulation("non-finite Monte Carlo mean".into()));
    }
    Ok(McEstimate {
        mean,
        std_err,
        n_samples: n,
        n_flagged,
    })
}

fn to_result(est: McEstimate, method: Method, cfg: &McConfig) -> PricingResult {
    let mut diagnostics = std::collections::BTreeMap::new();
    diagnostics.insert("n_paths".to_string(), cfg.n_paths as f64);
    diagnostics.insert("n_steps".to_string(), cfg.n_steps as f64);
    diagnostics.insert("flagged_paths".to_string(), est.n_flagged as f64);
    let mut warnings = Vec::new();
    if est.n_flagged > 0 {
        warnings.push(format!("{} paths absorbed at S = 0", est.n_flagged));
    }
    PricingResult {
        price: est.mean,
        method,
        std_err: Some(est.std_err),
        diagnostics,
        warnings,
    }
}

/// TVO price: E[σ̄ √T / √w_T · (S_T - K)^+] at zero rates.
pub fn mc_tvo_price(
    contract: &Contract,
    params: &ModelParams,
    cfg: &McConfig,
) -> Result<PricingResult> {
    let lev = contract.sigma_bar * contract.t.sqrt();
    let k = contract.k;
    let est = mc_expectation(params, contract, cfg, |e| {
        lev / e.w_t.sqrt() * (e.s_t - k).max(0.0)
    })?;
    Ok(to_result(est, Method::Mc, cfg))
}

/// Vanilla call price E[(S_T - K)^+] at zero rates.
pub fn mc_vanilla_price(
    contract: &Contract,
    params: &ModelParams,
    cfg: &McConfig,
) -> Result<PricingResult> {
    let k = contract.k;
    let est = mc_expectation(params, contract, cfg, |e| (e.s_t - k).max(0.0))?;
    Ok(to_result(est, Method::McVanilla, cfg))
}
