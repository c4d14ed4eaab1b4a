//! Closed-form Gaussian expectations and conditional moments of fBM
//! functionals given the terminal value of the driving Brownian motion.

use crate::error::{ensure_finite, Error, Result};
use crate::fbm::HurstParams;
use crate::specfun::{hermite_norm, ncdf, npdf, HermiteIndex};

/// Exponents above this are reported as overflow rather than returning inf.
pub const MAX_EXPONENT: f64 = 700.0;

/// Normal law N(mu, sigma2).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalLaw {
    pub mu: f64,
    pub sigma2: f64,
}

impl NormalLaw {
    pub fn new(mu: f64, sigma2: f64) -> Result<Self> {
        ensure_finite("NormalLaw", "mu", mu)?;
        ensure_finite("NormalLaw", "sigma2", sigma2)?;
        if sigma2 < 0.0 {
            return Err(Error::domain(
                "NormalLaw",
                format!("variance must be >= 0, got {sigma2}"),
            ));
        }
        Ok(NormalLaw { mu, sigma2 })
    }

    // shifted argument (mu + a σ²)/√(1+σ²) and the slope σ²/√(1+σ²)
    fn shifted(&self, a: f64) -> (f64, f64) {
        let r = (1.0 + self.sigma2).sqrt();
        ((self.mu + a * self.sigma2) / r, self.sigma2 / r)
    }
}

fn guarded_exp(op: &'static str, exponent: f64) -> Result<f64> {
    if exponent > MAX_EXPONENT {
        return Err(Error::Range { op, exponent });
    }
    Ok(exponent.exp())
}

/// N''(z) = -z N'(z).
#[inline]
pub fn npdf_prime(z: f64) -> f64 {
    -z * npdf(z)
}

/// E[N(ξ)].
pub fn e_ncdf(law: NormalLaw) -> f64 {
    ncdf(law.shifted(0.0).0)
}

/// E[ξ N(ξ)].
pub fn e_x_ncdf(law: NormalLaw) -> f64 {
    let (q, b) = law.shifted(0.0);
    law.mu * ncdf(q) + b * npdf(q)
}

/// E[e^{aξ} N(ξ)].
pub fn e_eax_ncdf(law: NormalLaw, a: f64) -> Result<f64> {
    let g = guarded_exp("e_eax_ncdf", a * law.mu + 0.5 * a * a * law.sigma2)?;
    Ok(g * ncdf(law.shifted(a).0))
}

/// E[ξ e^{aξ} N(ξ)], the a-derivative of [`e_eax_ncdf`].
pub fn e_x_eax_ncdf(law: NormalLaw, a: f64) -> Result<f64> {
    let g = guarded_exp("e_x_eax_ncdf", a * law.mu + 0.5 * a * a * law.sigma2)?;
    let (q, b) = law.shifted(a);
    let m = law.mu + a * law.sigma2;
    Ok(g * (m * ncdf(q) + b * npdf(q)))
}

/// E[ξ² e^{aξ} N(ξ)], the second a-derivative of [`e_eax_ncdf`].
pub fn e_x2_eax_ncdf(law: NormalLaw, a: f64) -> Result<f64> {
    let g = guarded_exp("e_x2_eax_ncdf", a * law.mu + 0.5 * a * a * law.sigma2)?;
    let (q, b) = law.shifted(a);
    let m = law.mu + a * law.sigma2;
    Ok(g * ((m * m + law.sigma2) * ncdf(q) + 2.0 * m * b * npdf(q) + b * b * npdf_prime(q)))
}

/// E[Z^j e^{γZ} N(α + βZ)] for j = 0, 1, 2 and Z ~ N(0, 1).
///
/// Same content as the `e_*` family, parametrized so that β = 0 is allowed.
pub fn affine_eg_ncdf_moments(alpha: f64, beta: f64, gamma: f64) -> Result<[f64; 3]> {
    let g = guarded_exp("affine_eg_ncdf_moments", 0.5 * gamma * gamma)?;
    let r = (1.0 + beta * beta).sqrt();
    let q = (alpha + beta * gamma) / r;
    let b = beta / r;
    let (n, p) = (ncdf(q), npdf(q));
    Ok([
        g * n,
        g * (gamma * n + b * p),
        g * ((1.0 + gamma * gamma) * n + 2.0 * gamma * b * p + b * b * npdf_prime(q)),
    ])
}

/// E[Z^j N'(α + βZ)] for j = 0, 1 and Z ~ N(0, 1).
pub fn affine_npdf_moments(alpha: f64, beta: f64) -> [f64; 2] {
    let a2 = 1.0 + beta * beta;
    let r = a2.sqrt();
    let p = npdf(alpha / r);
    [p / r, -alpha * beta * p / (a2 * r)]
}

/// k-th raw moment of N(mu, sigma2).
pub fn normal_raw_moment(k: u32, mu: f64, sigma2: f64) -> f64 {
    // Σ_{j even} C(k, j) mu^{k-j} sigma^j (j-1)!!
    let mut total = 0.0;
    let mut binom = 1.0;
    let mut dfact = 1.0;
    let mut sig_pow = 1.0;
    for j in 0..=k {
        if j > 0 {
            binom *= (k - j + 1) as f64 / j as f64;
        }
        if j % 2 == 0 {
            if j >= 2 {
                dfact *= (j - 1) as f64;
                sig_pow *= sigma2;
            }
            total += binom * mu.powi((k - j) as i32) * sig_pow * dfact;
        }
    }
    total
}

/// Mean and variance of B^H_t given B_T (0 < t ≤ T).
pub fn cond_law_bh(t: f64, horizon: f64, b_t: f64, hp: &HurstParams) -> Result<(f64, f64)> {
    ensure_finite("cond_law_bh", "t", t)?;
    ensure_finite("cond_law_bh", "T", horizon)?;
    ensure_finite("cond_law_bh", "B_T", b_t)?;
    if !(t > 0.0 && t <= horizon) {
        return Err(Error::domain(
            "cond_law_bh",
            format!("need 0 < t <= T, got t={t}, T={horizon}"),
        ));
    }
    let h = hp.h();
    let kappa = hp.kappa_h();
    let cov = kappa * t.powf(h + 0.5);
    let mean = cov * b_t / horizon;
    let var = t.powf(2.0 * h) - cov * cov / horizon;
    if var < -1e-12 {
        return Err(Error::Consistency {
            op: "cond_law_bh",
            msg: format!("negative conditional variance {var}"),
        });
    }
    Ok((mean, var.max(0.0)))
}

/// E[(B^H_t)^k | B_T = b_t] for 1 ≤ k ≤ 8.
pub fn cond_moment_bh(k: u32, t: f64, horizon: f64, b_t: f64, hp: &HurstParams) -> Result<f64> {
    if !(1..=8).contains(&k) {
        return Err(Error::domain(
            "cond_moment_bh",
            format!("k must be in 1..=8, got {k}"),
        ));
    }
    let (m, v) = cond_law_bh(t, horizon, b_t, hp)?;
    Ok(normal_raw_moment(k, m, v))
}

/// E[∫_0^T (B^H_t)^k dB_t | B_T = b_t] for 1 ≤ k ≤ 4.
///
/// Expanding (B^H_t)^k into Wick powers :(B^H_t)^m: t^{2Hj} with m = k - 2j,
/// each term contributes to the Hermite polynomial h_{m+1}(B_T/√T):
///
///   T^{kH+1/2} Σ_j k!/(j! m! 2^j) · √((m+1)!) κ_H^m / (2Hj + m(H+1/2) + 1) · h_{m+1}.
///
/// The j = 0 term is the top-order contribution; lower-order terms appear
/// from k = 2 on.
pub fn cond_ito_integral(k: u32, horizon: f64, b_t: f64, hp: &HurstParams) -> Result<f64> {
    if !(1..=4).contains(&k) {
        return Err(Error::domain(
            "cond_ito_integral",
            format!("k must be in 1..=4, got {k}"),
        ));
    }
    ensure_finite("cond_ito_integral", "T", horizon)?;
    ensure_finite("cond_ito_integral", "B_T", b_t)?;
    if horizon <= 0.0 {
        return Err(Error::domain(
            "cond_ito_integral",
            format!("T must be > 0, got {horizon}"),
        ));
    }
    let h = hp.h();
    let kappa = hp.kappa_h();
    let z = b_t / horizon.sqrt();
    let fact = |n: u32| (1..=n).map(f64::from).product::<f64>();
    let mut total = 0.0;
    for j in 0..=k / 2 {
        let m = k - 2 * j;
        let wick = fact(k) / (fact(j) * fact(m) * 2f64.powi(j as i32));
        let coef = fact(m + 1).sqrt() * kappa.powi(m as i32)
            / (2.0 * h * j as f64 + m as f64 * (h + 0.5) + 1.0);
        total += wick * coef * hermite_norm(HermiteIndex::new((m + 1) as usize)?, z);
    }
    Ok(horizon.powf(k as f64 * h + 0.5) * total)
}
