#![allow(dead_code)]

use fsabr::specfun::ncdf;

/// Upper 1% point of the chi-square distribution with 19 degrees of freedom.
pub const CHI2_19_Q99: f64 = 36.191;

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn var(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

/// Sample mean and its standard error.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    (mean(xs), (var(xs) / xs.len() as f64).sqrt())
}

/// Sample covariance with the standard error of the estimator under
/// joint normality, sqrt((σx²σy² + cov²)/N).
pub fn cov_se(x: &[f64], y: &[f64]) -> (f64, f64) {
    let (mx, my) = (mean(x), mean(y));
    let n = x.len() as f64;
    let c = x
        .iter()
        .zip(y)
        .map(|(a, b)| (a - mx) * (b - my))
        .sum::<f64>()
        / (n - 1.0);
    let se = ((var(x) * var(y) + c * c) / n).sqrt();
    (c, se)
}

/// Two-sample Kolmogorov–Smirnov distance.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            i += 1;
        } else {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    d
}

/// One-sample Kolmogorov–Smirnov distance against N(0, sd²).
pub fn ks_normal(xs: &[f64], sd: f64) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, x)| {
            let f = ncdf(x / sd);
            (f - i as f64 / n).abs().max((i as f64 + 1.0) / n - f)
        })
        .fold(0.0, f64::max)
}

/// Pearson statistic of standard-normal draws pooled into `bins`
/// equiprobable cells.
pub fn chi2_standard_normal(zs: impl Iterator<Item = f64>, bins: usize) -> f64 {
    let mut counts = vec![0usize; bins];
    let mut n = 0usize;
    for z in zs {
        let idx = ((ncdf(z) * bins as f64) as usize).min(bins - 1);
        counts[idx] += 1;
        n += 1;
    }
    let expected = n as f64 / bins as f64;
    counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum()
}

/// Lower Cholesky factor of a small dense symmetric positive definite matrix.
pub fn cholesky(a: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                l[i][j] = (a[i][i] - s).sqrt();
            } else {
                l[i][j] = (a[i][j] - s) / l[j][j];
            }
        }
    }
    l
}

/// Solves L x = b for lower-triangular L.
pub fn forward_solve(l: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let mut x = vec![0.0; b.len()];
    for i in 0..b.len() {
        let s: f64 = (0..i).map(|k| l[i][k] * x[k]).sum();
        x[i] = (b[i] - s) / l[i][i];
    }
    x
}

/// Splits samples into `bins` equally populated groups by key and returns
/// the largest |mean residual| / standard error over the groups.
pub fn worst_binned_z(keys: &[f64], resid: &[f64], bins: usize) -> f64 {
    let mut idx: Vec<usize> = (0..keys.len()).collect();
    idx.sort_by(|&a, &b| keys[a].total_cmp(&keys[b]));
    idx.chunks(keys.len().div_ceil(bins))
        .map(|chunk| {
            let r: Vec<f64> = chunk.iter().map(|&i| resid[i]).collect();
            let (m, se) = mean_se(&r);
            (m / se).abs()
        })
        .fold(0.0, f64::max)
}

/// Per-path B_T, B^H at node `k`, the left-point sums Σ (B^H)^j ΔB for
/// j = 1, 2 and the trapezoidal ∫ (B^H)² dt.
pub struct ConditionalSample {
    pub b_t: Vec<f64>,
    pub bh_k: Vec<f64>,
    pub ito1: Vec<f64>,
    pub ito2: Vec<f64>,
    pub time2: Vec<f64>,
}

pub fn conditional_sample(
    sampler: &fsabr::fbm::FbmSampler,
    node: usize,
    seed: u64,
    n_paths: usize,
) -> ConditionalSample {
    let dt = sampler.grid().dt();
    let sd = dt.sqrt();
    let n = sampler.grid().n_steps();
    let parts = sampler.map_blocks(seed, n_paths, false, false, |b| {
        let mut out = Vec::with_capacity(b.z1.nrows());
        for i in 0..b.z1.nrows() {
            let (mut bt, mut i1, mut i2, mut prev) = (0.0, 0.0, 0.0, 0.0);
            let mut sq = 0.0;
            for k in 0..n {
                let db = sd * b.z1[[i, k]];
                bt += db;
                i1 += prev * db;
                i2 += prev * prev * db;
                let next = b.bh[[i, k]];
                sq += 0.5 * (prev * prev + next * next) * dt;
                prev = next;
            }
            out.push((bt, b.bh[[i, node - 1]], i1, i2, sq));
        }
        out
    });
    let all: Vec<_> = parts.concat();
    ConditionalSample {
        b_t: all.iter().map(|x| x.0).collect(),
        bh_k: all.iter().map(|x| x.1).collect(),
        ito1: all.iter().map(|x| x.2).collect(),
        ito2: all.iter().map(|x| x.3).collect(),
        time2: all.iter().map(|x| x.4).collect(),
    }
}
