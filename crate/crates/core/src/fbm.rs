//! Fractional Brownian motion in its Molchan–Golosov representation
//! B^H_t = ∫_0^t K(t, s) dB_s: kernel, covariances, conditional law and joint
//! path generation of (B, B^H).

use std::collections::HashMap;
use std::io::Write;
use std::sync::{Arc, Mutex, OnceLock};

use ndarray::{s, Array1, Array2, ArrayView1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::quad::{self, QuadResult};
use crate::rng;
use crate::specfun::{beta_fn, gamma_fn, Hyp2F1};

/// Below this distance from 1/2 the Hurst exponent is treated as Brownian.
pub const BROWNIAN_EPS: f64 = 1e-12;

/// Paths generated together in one matrix product.
pub const BLOCK_PATHS: usize = 256;

const CELL_ABS_TOL: f64 = 1e-15;
const CELL_REL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy)]
pub struct HurstParams {
    h: f64,
    c_h: f64,
    kappa_h: f64,
    brownian: bool,
    hyp: Hyp2F1,
}

impl HurstParams {
    pub fn new(h: f64) -> Result<Self> {
        ensure_finite("HurstParams", "H", h)?;
        if h <= 0.0 || h >= 1.0 {
            return Err(Error::domain(
                "HurstParams",
                format!("H must lie in (0, 1), got {h}"),
            ));
        }
        let brownian = (h - 0.5).abs() < BROWNIAN_EPS;
        let (c_h, kappa_h) = if brownian {
            (1.0, 1.0)
        } else {
            let c = (2.0 * h * gamma_fn(1.5 - h)?
                / (gamma_fn(2.0 - 2.0 * h)? * gamma_fn(h + 0.5)?))
            .sqrt();
            (c, c * beta_fn(1.5 - h, h + 0.5)? / (h + 0.5))
        };
        Ok(HurstParams {
            h,
            c_h,
            kappa_h,
            brownian,
            hyp: Hyp2F1::new(h - 0.5, 0.5 - h, h + 0.5),
        })
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn c_h(&self) -> f64 {
        self.c_h
    }

    /// ∫_0^t K(t, s) ds = κ_H t^{H+1/2}.
    pub fn kappa_h(&self) -> f64 {
        self.kappa_h
    }

    pub fn is_brownian(&self) -> bool {
        self.brownian
    }

    /// K(t, s) given both s and d = t - s, each accurate near its own endpoint.
    #[inline]
    pub(crate) fn kernel_split(&self, t: f64, s: f64, d: f64) -> f64 {
        if self.brownian {
            return 1.0;
        }
        self.c_h * d.powf(self.h - 0.5) * self.hyp.eval_pfaff(d / t, s / t)
    }

    // exponents of the kernel's power behaviour near s = 0 and near s = t
    fn kernel_powers(&self) -> (f64, f64) {
        if self.brownian {
            (0.0, 0.0)
        } else {
            (-(self.h - 0.5).abs(), self.h - 0.5)
        }
    }
}

/// Molchan–Golosov kernel K(t, s); zero for s ≥ t.
pub fn mg_kernel(t: f64, s: f64, hp: &HurstParams) -> Result<f64> {
    ensure_finite("mg_kernel", "t", t)?;
    ensure_finite("mg_kernel", "s", s)?;
    if s <= 0.0 {
        return Err(Error::domain(
            "mg_kernel",
            format!("s must be > 0, got {s}"),
        ));
    }
    if s >= t {
        return Ok(0.0);
    }
    Ok(hp.kernel_split(t, s, t - s))
}

/// Covariance of fractional Brownian motion, ½(t^{2H} + s^{2H} - |t-s|^{2H}).
pub fn fbm_cov(t: f64, s: f64, h: f64) -> f64 {
    let p = 2.0 * h;
    0.5 * (t.powf(p) + s.powf(p) - (t - s).abs().powf(p))
}

/// ∫_lo^hi K(t, s)^p ds for 0 ≤ lo < hi ≤ t and p ∈ {1, 2}.
pub fn kernel_power_integral(
    t: f64,
    lo: f64,
    hi: f64,
    p: i32,
    hp: &HurstParams,
    abs_tol: f64,
    rel_tol: f64,
) -> QuadResult {
    debug_assert!(0.0 <= lo && lo < hi && hi <= t);
    let (p0, p1) = hp.kernel_powers();
    let alpha = if lo == 0.0 { p as f64 * p0 } else { 0.0 };
    let beta = if hi == t { p as f64 * p1 } else { 0.0 };
    let gap = t - hi;
    quad::endpoint_graded(
        |dl, dr| hp.kernel_split(t, lo + dl, gap + dr).powi(p),
        lo,
        hi,
        alpha,
        beta,
        abs_tol,
        rel_tol,
    )
}

/// ∫_0^u K(t1, s) K(t2, s) ds for u ≤ min(t1, t2).
pub fn kernel_cross_integral(
    t1: f64,
    t2: f64,
    u: f64,
    hp: &HurstParams,
    abs_tol: f64,
    rel_tol: f64,
) -> QuadResult {
    let (p0, p1) = hp.kernel_powers();
    let beta = [t1, t2].iter().filter(|&&t| t == u).count() as f64 * p1;
    quad::endpoint_graded(
        |dl, dr| hp.kernel_split(t1, dl, (t1 - u) + dr) * hp.kernel_split(t2, dl, (t2 - u) + dr),
        0.0,
        u,
        2.0 * p0,
        beta,
        abs_tol,
        rel_tol,
    )
}

/// E[B^H_t B_s] = ∫_0^{min(s,t)} K(t, u) du.
pub fn fbm_bm_cov(t: f64, s: f64, hp: &HurstParams) -> f64 {
    if t <= 0.0 || s <= 0.0 {
        return 0.0;
    }
    if hp.brownian {
        return t.min(s);
    }
    if s >= t {
        return hp.kappa_h * t.powf(hp.h + 0.5);
    }
    kernel_power_integral(t, 0.0, s, 1, hp, 1e-15, 1e-13).value
}

/// Uniform partition of [0, T] into n steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    n: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, n: usize) -> Result<Self> {
        ensure_finite("TimeGrid", "T", horizon)?;
        if horizon <= 0.0 {
            return Err(Error::domain(
                "TimeGrid",
                format!("T must be > 0, got {horizon}"),
            ));
        }
        if n < 2 {
            return Err(Error::domain(
                "TimeGrid",
                format!("need at least 2 steps, got {n}"),
            ));
        }
        Ok(TimeGrid { horizon, n })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n_steps(&self) -> usize {
        self.n
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n as f64
    }

    pub fn node(&self, k: usize) -> f64 {
        if k == self.n {
            self.horizon
        } else {
            self.horizon * k as f64 / self.n as f64
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.n).map(|k| self.node(k)).collect()
    }
}

/// Mean and variance of B^H_r given the Brownian history up to time t.
///
/// `increments` are the Brownian increments over the cells of `grid`; t must
/// be a grid node and r > t. The mean integrates the kernel over each cell
/// against that cell's increment.
pub fn cond_mean_var(
    r: f64,
    t: f64,
    hp: &HurstParams,
    grid: &TimeGrid,
    increments: ArrayView1<f64>,
) -> Result<(f64, f64)> {
    ensure_finite("cond_mean_var", "r", r)?;
    ensure_finite("cond_mean_var", "t", t)?;
    if t < 0.0 || r <= t {
        return Err(Error::domain(
            "cond_mean_var",
            format!("need 0 <= t < r, got t={t}, r={r}"),
        ));
    }
    let k_f = t / grid.dt();
    let k = k_f.round() as usize;
    if (k_f - k as f64).abs() > 1e-9 || k > grid.n_steps() {
        return Err(Error::domain(
            "cond_mean_var",
            format!("t={t} is not a grid node"),
        ));
    }
    if increments.len() < k {
        return Err(Error::domain(
            "cond_mean_var",
            format!("{} increments given, {k} needed", increments.len()),
        ));
    }
    if hp.brownian {
        return Ok((increments.slice(s![..k]).sum(), r - t));
    }
    let dt = grid.dt();
    let mut m = 0.0;
    for j in 0..k {
        let (a, b) = (grid.node(j), grid.node(j + 1));
        let c = kernel_power_integral(r, a, b, 1, hp, 1e-15, 1e-12).value;
        m += c / dt * increments[j];
    }
    let v = if t == 0.0 {
        r.powf(2.0 * hp.h)
    } else {
        kernel_power_integral(r, t, r, 2, hp, 1e-15, 1e-12).value
    };
    Ok((m, v.max(0.0)))
}

/// Path construction schemes for (B, B^H).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Exact joint Gaussian law on the grid via a Cholesky factor.
    #[default]
    Cholesky,
    /// Cell-averaged Volterra sum with an independent variance-matching residual.
    KernelDiscretized,
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cholesky" => Ok(Scheme::Cholesky),
            "kernel-discretized" => Ok(Scheme::KernelDiscretized),
            other => Err(Error::Config(format!("unknown scheme '{other}'"))),
        }
    }
}

// Kernel integrals over the cells of the unit grid {j/n}, for every node
// k/n. Everything on [0, T] follows by the scaling K(t, s) = t^{H-1/2} K(1, s/t).
struct UnitCells {
    // row k-1 (offset k(k-1)/2) holds ∫_{j/k}^{(j+1)/k} K(1,v) dv for j < k
    cells: Vec<f64>,
}

impl UnitCells {
    fn build(hp: &HurstParams, n: usize) -> Self {
        let rows: Vec<Vec<f64>> = (1..=n)
            .into_par_iter()
            .map(|k| {
                let kf = k as f64;
                (0..k)
                    .map(|j| {
                        let lo = j as f64 / kf;
                        let hi = if j + 1 == k { 1.0 } else { (j + 1) as f64 / kf };
                        kernel_power_integral(1.0, lo, hi, 1, hp, CELL_ABS_TOL, CELL_REL_TOL).value
                    })
                    .collect()
            })
            .collect();
        UnitCells {
            cells: rows.concat(),
        }
    }

    fn row(&self, k: usize) -> &[f64] {
        let off = k * (k - 1) / 2;
        &self.cells[off..off + k]
    }
}

type CellKey = (u64, usize);
type SamplerKey = (u64, u64, usize, Scheme);

fn unit_cells(hp: &HurstParams, n: usize) -> Arc<UnitCells> {
    static CACHE: OnceLock<Mutex<HashMap<CellKey, Arc<UnitCells>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    let key = (hp.h.to_bits(), n);
    if let Some(c) = cache.lock().expect("cell cache poisoned").get(&key) {
        return c.clone();
    }
    // built outside the lock: the build itself runs on the rayon pool
    let built = Arc::new(UnitCells::build(hp, n));
    cache
        .lock()
        .expect("cell cache poisoned")
        .entry(key)
        .or_insert(built)
        .clone()
}

/// Cov(B^H_{t_k}, B_{t_{j+1}} - B_{t_j}) for nodes k = 1..=n, cells j < k, as an
/// n×n lower-triangular matrix (row k-1).
pub fn cell_covariances(hp: &HurstParams, grid: &TimeGrid) -> Array2<f64> {
    let n = grid.n_steps();
    let mut c = Array2::zeros((n, n));
    if hp.brownian {
        let dt = grid.dt();
        for k in 1..=n {
            c.slice_mut(s![k - 1, ..k]).fill(dt);
        }
        return c;
    }
    let unit = unit_cells(hp, n);
    for k in 1..=n {
        let scale = grid.node(k).powf(hp.h + 0.5);
        for (j, u) in unit.row(k).iter().enumerate() {
            c[[k - 1, j]] = scale * u;
        }
    }
    c
}

#[derive(Debug)]
enum Residual {
    None,
    Factor(Array2<f64>),
    Diagonal(Array1<f64>),
}

/// Generator of (B, B^H) on a fixed grid.
///
/// Per path, B^H(t_k) = Σ_j W_kj z1_j + residual(z2), with ΔB_j = √Δ z1_j and
/// W_kj = Cov(B^H_{t_k}, ΔB_j)/√Δ. The residual is the Cholesky factor of the
/// conditional covariance of B^H given the increments (exact scheme) or an
/// independent per-node normal restoring the marginal variance t_k^{2H}
/// (discretized scheme).
#[derive(Debug)]
pub struct FbmSampler {
    hp: HurstParams,
    grid: TimeGrid,
    scheme: Scheme,
    weights: Array2<f64>,
    residual: Residual,
}

/// Draws and fBM values of a contiguous run of paths.
#[derive(Debug, Clone)]
pub struct PathBlock {
    pub first: u64,
    /// Standard normals driving B: ΔB = √Δ z1 (paths × steps).
    pub z1: Array2<f64>,
    /// B^H at nodes 1..=n (paths × steps); B^H(0) = 0 is implicit.
    pub bh: Array2<f64>,
    /// Independent normals for the asset's orthogonal driver, when requested.
    pub z3: Option<Array2<f64>>,
}

impl FbmSampler {
    /// Returns a shared sampler, building and caching it on first use.
    pub fn shared(hp: &HurstParams, grid: &TimeGrid, scheme: Scheme) -> Result<Arc<Self>> {
        static CACHE: OnceLock<Mutex<HashMap<SamplerKey, Arc<FbmSampler>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(Default::default);
        let key = (hp.h.to_bits(), grid.horizon.to_bits(), grid.n, scheme);
        if let Some(s) = cache.lock().expect("sampler cache poisoned").get(&key) {
            return Ok(s.clone());
        }
        let built = Arc::new(Self::new(hp, grid, scheme)?);
        Ok(cache
            .lock()
            .expect("sampler cache poisoned")
            .entry(key)
            .or_insert(built)
            .clone())
    }

    pub fn new(hp: &HurstParams, grid: &TimeGrid, scheme: Scheme) -> Result<Self> {
        let n = grid.n_steps();
        let dt = grid.dt();
        if hp.brownian {
            return Ok(FbmSampler {
                hp: *hp,
                grid: *grid,
                scheme,
                weights: Array2::zeros((0, 0)),
                residual: Residual::None,
            });
        }
        let weights = cell_covariances(hp, grid) / dt.sqrt();
        let residual = match scheme {
            Scheme::Cholesky => {
                let mut r = Array2::zeros((n, n));
                let nodes = grid.nodes();
                for k in 0..n {
                    for l in 0..=k {
                        let wk = weights.row(k);
                        let wl = weights.row(l);
                        let cross: f64 = wk.slice(s![..=l]).dot(&wl.slice(s![..=l]));
                        let v = fbm_cov(nodes[k + 1], nodes[l + 1], hp.h) - cross;
                        r[[k, l]] = v;
                        r[[l, k]] = v;
                    }
                }
                Residual::Factor(cholesky_with_jitter(r)?)
            }
            Scheme::KernelDiscretized => {
                let diag = Array1::from_shape_fn(n, |k| {
                    let explained: f64 = weights.row(k).iter().map(|w| w * w).sum();
                    (grid.node(k + 1).powf(2.0 * hp.h) - explained)
                        .max(0.0)
                        .sqrt()
                });
                Residual::Diagonal(diag)
            }
        };
        Ok(FbmSampler {
            hp: *hp,
            grid: *grid,
            scheme,
            weights,
            residual,
        })
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn hurst(&self) -> &HurstParams {
        &self.hp
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    /// Generates paths first..first+count. With `asset_draws` each path also
    /// receives n further normals, drawn after the fBM ones from the same stream.
    pub fn block(
        &self,
        seed: u64,
        first: u64,
        count: usize,
        antithetic: bool,
        asset_draws: bool,
    ) -> PathBlock {
        let n = self.grid.n_steps();
        let mut z1 = Array2::zeros((count, n));
        let mut z2 = Array2::zeros((count, n));
        let mut z3 = asset_draws.then(|| Array2::zeros((count, n)));
        let mut buf = vec![0.0; n];
        for i in 0..count {
            let (stream, sign) = rng::stream_of(first + i as u64, antithetic);
            let mut r = rng::path_rng(seed, stream);
            let mut fill = |row: &mut Array2<f64>, r: &mut _| {
                rng::fill_normals(r, &mut buf);
                for (dst, src) in row.row_mut(i).iter_mut().zip(&buf) {
                    *dst = sign * src;
                }
            };
            fill(&mut z1, &mut r);
            fill(&mut z2, &mut r);
            if let Some(z3) = z3.as_mut() {
                fill(z3, &mut r);
            }
        }
        let bh = if self.hp.brownian {
            let sd = self.grid.dt().sqrt();
            let mut bh = z1.clone();
            for mut row in bh.rows_mut() {
                let mut acc = 0.0;
                for x in row.iter_mut() {
                    acc += sd * *x;
                    *x = acc;
                }
            }
            bh
        } else {
            let mut bh = z1.dot(&self.weights.t());
            match &self.residual {
                Residual::Factor(l) => bh += &z2.dot(&l.t()),
                Residual::Diagonal(d) => bh += &(&z2 * d),
                Residual::None => {}
            }
            bh
        };
        PathBlock { first, z1, bh, z3 }
    }

    /// Splits n_paths into blocks and maps them in parallel; results come back
    /// in path order.
    pub fn map_blocks<T, F>(
        &self,
        seed: u64,
        n_paths: usize,
        antithetic: bool,
        asset_draws: bool,
        f: F,
    ) -> Vec<T>
    where
        T: Send,
        F: Fn(PathBlock) -> T + Sync,
    {
        let n_blocks = n_paths.div_ceil(BLOCK_PATHS);
        (0..n_blocks)
            .into_par_iter()
            .map(|b| {
                let first = b * BLOCK_PATHS;
                let count = BLOCK_PATHS.min(n_paths - first);
                f(self.block(seed, first as u64, count, antithetic, asset_draws))
            })
            .collect()
    }
}

const JITTER_STEPS: [f64; 8] = [0.0, 1e-15, 1e-14, 1e-13, 1e-12, 1e-11, 1e-10, 1e-9];

/// Lower Cholesky factor of a symmetric matrix, adding diagonal jitter
/// (relative to the largest diagonal entry) when a pivot is not positive.
pub fn cholesky_with_jitter(a: Array2<f64>) -> Result<Array2<f64>> {
    let scale = a
        .diag()
        .iter()
        .fold(0.0f64, |m, x| m.max(x.abs()))
        .max(f64::MIN_POSITIVE);
    let mut last_failure = (0, f64::NAN, 0.0);
    for rel in JITTER_STEPS {
        let jitter = rel * scale;
        match cholesky(&a, jitter) {
            Ok(l) => return Ok(l),
            Err((row, pivot)) => last_failure = (row, pivot, jitter),
        }
    }
    let (row, min_pivot, jitter) = last_failure;
    Err(Error::Regularization {
        row,
        min_pivot,
        jitter,
        attempts: JITTER_STEPS.len(),
    })
}

fn cholesky(a: &Array2<f64>, jitter: f64) -> std::result::Result<Array2<f64>, (usize, f64)> {
    let n = a.nrows();
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let row_j = l.slice(s![j, ..j]).to_owned();
        let pivot = a[[j, j]] + jitter - row_j.dot(&row_j);
        if !(pivot > 0.0) {
            return Err((j, pivot));
        }
        let d = pivot.sqrt();
        l[[j, j]] = d;
        for i in j + 1..n {
            let v = (a[[i, j]] - l.slice(s![i, ..j]).dot(&row_j)) / d;
            l[[i, j]] = v;
        }
    }
    Ok(l)
}

/// Simulated paths on a grid. Node-valued arrays have n+1 columns (node 0
/// included); increments have n.
#[derive(Debug, Clone)]
pub struct PathBatch {
    pub grid: TimeGrid,
    pub seed: u64,
    pub scheme: Scheme,
    pub db: Array2<f64>,
    pub b: Array2<f64>,
    pub bh: Array2<f64>,
    pub y: Option<Array2<f64>>,
    pub s: Option<Array2<f64>>,
    pub w: Option<Array2<f64>>,
    /// Paths on which the asset reached a non-positive value.
    pub flagged: Vec<bool>,
}

impl PathBatch {
    pub fn n_paths(&self) -> usize {
        self.db.nrows()
    }

    pub(crate) fn from_blocks(
        grid: TimeGrid,
        seed: u64,
        scheme: Scheme,
        blocks: &[PathBlock],
    ) -> Self {
        let n = grid.n_steps();
        let n_paths: usize = blocks.iter().map(|b| b.z1.nrows()).sum();
        let sd = grid.dt().sqrt();
        let mut db = Array2::zeros((n_paths, n));
        let mut b = Array2::zeros((n_paths, n + 1));
        let mut bh = Array2::zeros((n_paths, n + 1));
        let mut row = 0;
        for block in blocks {
            for i in 0..block.z1.nrows() {
                let mut acc = 0.0;
                for k in 0..n {
                    let inc = sd * block.z1[[i, k]];
                    db[[row, k]] = inc;
                    acc += inc;
                    b[[row, k + 1]] = acc;
                    bh[[row, k + 1]] = block.bh[[i, k]];
                }
                row += 1;
            }
        }
        PathBatch {
            grid,
            seed,
            scheme,
            db,
            b,
            bh,
            y: None,
            s: None,
            w: None,
            flagged: vec![false; n_paths],
        }
    }

    /// Long-format CSV with columns path_id,t,B,BH,Y,S,w; fields that were not
    /// simulated are left empty.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "path_id,t,B,BH,Y,S,w")?;
        let nodes = self.grid.nodes();
        let cell = |a: &Option<Array2<f64>>, p: usize, k: usize| {
            a.as_ref()
                .map(|a| format!("{:e}", a[[p, k]]))
                .unwrap_or_default()
        };
        for p in 0..self.n_paths() {
            for (k, t) in nodes.iter().enumerate() {
                writeln!(
                    out,
                    "{p},{t:e},{:e},{:e},{},{},{}",
                    self.b[[p, k]],
                    self.bh[[p, k]],
                    cell(&self.y, p, k),
                    cell(&self.s, p, k),
                    cell(&self.w, p, k),
                )?;
            }
        }
        Ok(())
    }
}

/// Samples n_paths joint paths of (B, B^H) on `grid`.
pub fn sample_paths(
    hp: &HurstParams,
    grid: &TimeGrid,
    n_paths: usize,
    seed: u64,
    scheme: Scheme,
) -> Result<PathBatch> {
    if n_paths == 0 {
        return Err(Error::domain("sample_paths", "n_paths must be >= 1"));
    }
    let sampler = FbmSampler::shared(hp, grid, scheme)?;
    let blocks = sampler.map_blocks(seed, n_paths, false, false, |b| b);
    Ok(PathBatch::from_blocks(*grid, seed, scheme, &blocks))
}
