//! Closed-form and semi-analytic prices at t = 0: the decomposition-formula
//! approximation (simplified and full-quadrature), the small vol-of-vol
//! expansion (closed form and Gauss–Hermite evaluator), and the vanilla small
//! vol-of-vol expansion.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bsm::{c_value, derivs_value, f_ww, f_xw, FPoint};
use crate::error::{ensure_finite, Error, Result};
use crate::fbm::{fbm_cov, kernel_cross_integral, HurstParams};
use crate::identities::{affine_eg_ncdf_moments, affine_npdf_moments};
use crate::quad::{adaptive, GaussHermite, GaussLegendre, GradedRule};

/// Lognormal fSABR state: dS/S = Y(ρ dB + ρ̄ dW), Y = Y0 exp(ν B^H).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub s0: f64,
    pub y0: f64,
    pub nu: f64,
    pub rho: f64,
    pub h: f64,
}

impl ModelParams {
    pub fn new(s0: f64, y0: f64, nu: f64, rho: f64, h: f64) -> Result<Self> {
        let p = ModelParams { s0, y0, nu, rho, h };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("S0", self.s0),
            ("Y0", self.y0),
            ("nu", self.nu),
            ("rho", self.rho),
            ("H", self.h),
        ] {
            ensure_finite("ModelParams", name, v)?;
        }
        let bad = |msg: String| Err(Error::domain("ModelParams", msg));
        if self.s0 <= 0.0 {
            return bad(format!("S0 must be > 0, got {}", self.s0));
        }
        if self.y0 <= 0.0 {
            return bad(format!("Y0 must be > 0, got {}", self.y0));
        }
        if self.nu < 0.0 {
            return bad(format!("nu must be >= 0, got {}", self.nu));
        }
        if self.rho.abs() >= 1.0 {
            return bad(format!("rho must lie in (-1, 1), got {}", self.rho));
        }
        if self.h <= 0.0 || self.h >= 1.0 {
            return bad(format!("H must lie in (0, 1), got {}", self.h));
        }
        Ok(())
    }

    pub fn rho_bar(&self) -> f64 {
        (1.0 - self.rho * self.rho).sqrt()
    }

    pub fn hurst(&self) -> Result<HurstParams> {
        HurstParams::new(self.h)
    }
}

/// Call terms: strike, expiry in years and target volatility.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Contract {
    pub k: f64,
    pub t: f64,
    pub sigma_bar: f64,
}

impl Contract {
    pub fn new(k: f64, t: f64, sigma_bar: f64) -> Result<Self> {
        let c = Contract { k, t, sigma_bar };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("K", self.k), ("T", self.t), ("sigma_bar", self.sigma_bar)] {
            ensure_finite("Contract", name, v)?;
            if v <= 0.0 {
                return Err(Error::domain(
                    "Contract",
                    format!("{name} must be > 0, got {v}"),
                ));
            }
        }
        Ok(())
    }

    /// Log-moneyness X0 = log(S0/K).
    pub fn x0(&self, params: &ModelParams) -> f64 {
        (params.s0 / self.k).ln()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "MC")]
    Mc,
    #[serde(rename = "DFA")]
    Dfa,
    #[serde(rename = "DFA-full")]
    DfaFull,
    #[serde(rename = "SVVE")]
    Svve,
    #[serde(rename = "SVVE-quad")]
    SvveQuad,
    #[serde(rename = "vanilla-SVVE")]
    VanillaSvve,
    #[serde(rename = "MC-vanilla")]
    McVanilla,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Mc,
        Method::Dfa,
        Method::DfaFull,
        Method::Svve,
        Method::SvveQuad,
        Method::VanillaSvve,
        Method::McVanilla,
    ];

    pub fn tag(&self) -> &'static str {
        match self {
            Method::Mc => "MC",
            Method::Dfa => "DFA",
            Method::DfaFull => "DFA-full",
            Method::Svve => "SVVE",
            Method::SvveQuad => "SVVE-quad",
            Method::VanillaSvve => "vanilla-SVVE",
            Method::McVanilla => "MC-vanilla",
        }
    }

    pub fn is_monte_carlo(&self) -> bool {
        matches!(self, Method::Mc | Method::McVanilla)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .iter()
            .find(|m| m.tag().eq_ignore_ascii_case(s.trim()))
            .copied()
            .ok_or_else(|| Error::Config(format!("unknown method '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PricingResult {
    pub price: f64,
    pub method: Method,
    /// Standard error, present for Monte Carlo estimates only.
    pub std_err: Option<f64>,
    pub diagnostics: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
}

impl PricingResult {
    fn new(price: f64, method: Method) -> Self {
        PricingResult {
            price,
            method,
            std_err: None,
            diagnostics: BTreeMap::new(),
            warnings: Vec::new(),
        }
    }

    fn diag(mut self, key: &str, value: f64) -> Self {
        self.diagnostics.insert(key.to_string(), value);
        self
    }

    // first-order expansions can dip below zero far out of the money
    fn floored(mut self) -> Self {
        if self.price < 0.0 {
            self.diagnostics
                .insert("unfloored_price".into(), self.price);
            self.warnings
                .push("negative expansion value floored at 0".into());
            self.price = 0.0;
        }
        self
    }

    /// JSON text with a fixed key order.
    pub fn to_json(&self) -> String {
        let mut out = format!(
            "{{\"method\": \"{}\", \"price\": {:e}",
            self.method, self.price
        );
        match self.std_err {
            Some(se) => out.push_str(&format!(", \"std_err\": {se:e}")),
            None => out.push_str(", \"std_err\": null"),
        }
        out.push_str(", \"diagnostics\": {");
        let items: Vec<String> = self
            .diagnostics
            .iter()
            .map(|(k, v)| format!("\"{k}\": {v:e}"))
            .collect();
        out.push_str(&items.join(", "));
        out.push_str("}, \"warnings\": [");
        let warns: Vec<String> = self.warnings.iter().map(|w| format!("{w:?}")).collect();
        out.push_str(&warns.join(", "));
        out.push_str("]}");
        out
    }
}

fn check(contract: &Contract, params: &ModelParams) -> Result<()> {
    contract.validate()?;
    params.validate()
}

/// M0 = Y0² ∫_0^T exp(2ν² t^{2H}) dt, the expected total variance.
pub fn m0(params: &ModelParams, horizon: f64) -> Result<f64> {
    params.validate()?;
    ensure_finite("m0", "T", horizon)?;
    if horizon <= 0.0 {
        return Err(Error::domain("m0", format!("T must be > 0, got {horizon}")));
    }
    let y2 = params.y0 * params.y0;
    if params.nu == 0.0 {
        return Ok(y2 * horizon);
    }
    let a = 2.0 * params.nu * params.nu;
    let p = 2.0 * params.h;
    let r = adaptive(
        |t: f64| (a * t.powf(p)).exp(),
        0.0,
        horizon,
        1e-13 * horizon,
        1e-14,
    );
    Ok(y2 * r.value)
}

/// Decomposition-formula approximation with frozen coefficients:
///
///   Kσ̄√T [ C(X0,M0)/√M0 + 2νρ F_xŵ Y0³ κ_H T^{3/2+H}/(3/2+H)
///          + ν² F_ŵŵ Y0⁴ T^{2+2H}/(1+H) ],
///
/// with F-derivatives at (X0, 0, M0).
pub fn dfa_price(contract: &Contract, params: &ModelParams) -> Result<PricingResult> {
    check(contract, params)?;
    let hp = params.hurst()?;
    let (h, t) = (params.h, contract.t);
    let x0 = contract.x0(params);
    let m = m0(params, t)?;
    let q = FPoint::new(x0, 0.0, m)?;
    let y0 = params.y0;
    let lead = c_value(x0, m) / m.sqrt();
    let corr = 2.0 * params.nu * params.rho * f_xw(q)? * y0.powi(3) * hp.kappa_h() / (1.5 + h)
        * t.powf(1.5 + h);
    let vol = params.nu * params.nu * f_ww(q)? * y0.powi(4) * t.powf(2.0 + 2.0 * h) / (1.0 + h);
    let scale = contract.k * contract.sigma_bar * t.sqrt();
    Ok(PricingResult::new(scale * (lead + corr + vol), Method::Dfa)
        .diag("m0", m)
        .diag("term_leading", scale * lead)
        .diag("term_correlation", scale * corr)
        .diag("term_volvol", scale * vol)
        .floored())
}

/// Node counts and tolerance of the full decomposition-formula quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DfaQuadConfig {
    /// Gauss–Legendre nodes per half interval at the first level.
    pub base_nodes: usize,
    /// Times the node count may be doubled while chasing `rel_tol`.
    pub max_doublings: usize,
    pub rel_tol: f64,
}

impl Default for DfaQuadConfig {
    fn default() -> Self {
        DfaQuadConfig {
            base_nodes: 16,
            max_doublings: 3,
            rel_tol: 1e-6,
        }
    }
}

/// The two correction integrals of the full t = 0 decomposition formula:
///
///   I₁ = ∫_0^T ∫_τ^T exp(ν²/2 [τ^{2H} + 4r^{2H} + 4 Cov(B^H_τ, B^H_r)]) K(r,τ) dr dτ
///   I₂ = ∫_0^T ∫∫_{τ ≤ r₂ ≤ r₁ ≤ T} exp(2ν² [r₁^{2H} + r₂^{2H} + 2P]) K(r₁,τ) K(r₂,τ)
///
/// where P = ∫_0^τ K(r₁,s) K(r₂,s) ds. I₂ is evaluated over the full square
/// [τ, T]² and halved; P comes from a graded rule on [0, τ] as a Gram matrix.
fn dfa_integrals(hp: &HurstParams, horizon: f64, nu: f64, n: usize) -> (f64, f64) {
    let h = hp.h();
    let gl = GaussLegendre::new(n);
    let a = (h - 0.5).abs();
    let nu2 = nu * nu;
    let inner = |tau: f64| GradedRule::new(&gl, tau, horizon, h - 0.5, 0.0);

    let tau1 = GradedRule::new(&gl, 0.0, horizon, -a, h + 0.5);
    let i1_parts: Vec<f64> = (0..tau1.len())
        .into_par_iter()
        .map(|i| {
            let tau = tau1.x[i];
            let rr = inner(tau);
            let tau_pow = tau.powf(2.0 * h);
            let s: f64 = (0..rr.len())
                .map(|j| {
                    let r = rr.x[j];
                    let e =
                        0.5 * nu2 * (tau_pow + 4.0 * r.powf(2.0 * h) + 4.0 * fbm_cov(tau, r, h));
                    rr.w[j] * e.exp() * hp.kernel_split(r, tau, rr.dist_lo[j])
                })
                .sum();
            tau1.w[i] * s
        })
        .collect();

    let tau2 = GradedRule::new(&gl, 0.0, horizon, -2.0 * a, 2.0 * h + 1.0);
    let i2_parts: Vec<f64> = (0..tau2.len())
        .into_par_iter()
        .map(|i| {
            let tau = tau2.x[i];
            let rr = inner(tau);
            let ss = GradedRule::new(&gl, 0.0, tau, -2.0 * a, h - 0.5);
            let m = rr.len();
            let k_tau: Vec<f64> = (0..m)
                .map(|j| hp.kernel_split(rr.x[j], tau, rr.dist_lo[j]))
                .collect();
            let pow: Vec<f64> = rr.x.iter().map(|r| r.powf(2.0 * h)).collect();
            let gram = if nu2 == 0.0 {
                Array2::zeros((m, m))
            } else {
                let amat = Array2::from_shape_fn((m, ss.len()), |(j, k)| {
                    let d = rr.dist_lo[j] + ss.dist_hi[k];
                    hp.kernel_split(rr.x[j], ss.x[k], d) * ss.w[k].sqrt()
                });
                amat.dot(&amat.t())
            };
            let mut s = 0.0;
            for j in 0..m {
                let mut row = 0.0;
                for l in 0..m {
                    let e = 2.0 * nu2 * (pow[j] + pow[l] + 2.0 * gram[[j, l]]);
                    row += rr.w[l] * k_tau[l] * e.exp();
                }
                s += rr.w[j] * k_tau[j] * row;
            }
            0.5 * tau2.w[i] * s
        })
        .collect();

    (i1_parts.iter().sum(), i2_parts.iter().sum())
}

/// Full t = 0 decomposition-formula approximation:
///
///   Kσ̄√T [ C(X0,M0)/√M0 + 2νρ F_xŵ Y0³ I₁ + 4ν² F_ŵŵ Y0⁴ I₂ ].
///
/// The integrals are refined by doubling the node count until successive
/// values agree to `cfg.rel_tol`; if that never happens the result carries a
/// warning and the last difference as its error estimate.
pub fn dfa_full_price_t0(
    contract: &Contract,
    params: &ModelParams,
    cfg: &DfaQuadConfig,
) -> Result<PricingResult> {
    check(contract, params)?;
    if cfg.base_nodes < 2 {
        return Err(Error::Config(
            "DFA quadrature needs at least 2 base nodes".into(),
        ));
    }
    let hp = params.hurst()?;
    let t = contract.t;
    let x0 = contract.x0(params);
    let m = m0(params, t)?;
    let q = FPoint::new(x0, 0.0, m)?;
    let y0 = params.y0;
    let nu = params.nu;

    let mut n = cfg.base_nodes;
    let (mut i1, mut i2) = dfa_integrals(&hp, t, nu, n);
    let (mut e1, mut e2) = (f64::INFINITY, f64::INFINITY);
    let mut converged = false;
    for _ in 0..cfg.max_doublings {
        n *= 2;
        let (j1, j2) = dfa_integrals(&hp, t, nu, n);
        e1 = (j1 - i1).abs();
        e2 = (j2 - i2).abs();
        i1 = j1;
        i2 = j2;
        if e1 <= cfg.rel_tol * i1.abs() && e2 <= cfg.rel_tol * i2.abs() {
            converged = true;
            break;
        }
    }

    let lead = c_value(x0, m) / m.sqrt();
    let corr = 2.0 * nu * params.rho * f_xw(q)? * y0.powi(3) * i1;
    let vol = 4.0 * nu * nu * f_ww(q)? * y0.powi(4) * i2;
    let scale = contract.k * contract.sigma_bar * t.sqrt();
    let mut res = PricingResult::new(scale * (lead + corr + vol), Method::DfaFull)
        .diag("m0", m)
        .diag("i1", i1)
        .diag("i2", i2)
        .diag("i1_err", e1)
        .diag("i2_err", e2)
        .diag("nodes_per_dim", (2 * n) as f64)
        .diag("converged", if converged { 1.0 } else { 0.0 })
        .diag("term_leading", scale * lead)
        .diag("term_correlation", scale * corr)
        .diag("term_volvol", scale * vol);
    if !converged {
        res.warnings.push(format!(
            "quadrature did not reach rel tol {:e} (I1 err {e1:e}, I2 err {e2:e})",
            cfg.rel_tol
        ));
    }
    Ok(res.floored())
}

/// First-order coefficients κ₁..κ₅, expectations E₁..E₅ and the zeroth-order
/// term of the small vol-of-vol expansion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvveTerms {
    pub zeroth: f64,
    pub kappa: [f64; 5],
    pub e: [f64; 5],
}

impl SvveTerms {
    pub fn price(&self) -> f64 {
        self.zeroth
            + self
                .kappa
                .iter()
                .zip(&self.e)
                .map(|(k, e)| k * e)
                .sum::<f64>()
    }
}

/// Conditioned on B_T = √T Z, the zeroth-order log-moneyness is
/// ξ₀ = α₀ + γZ with α₀ = X0 - ρ²Y0²T/2, γ = ρY0√T, and the Black–Scholes
/// arguments are d₁ = p + qZ, d₂ = d₁ - s with s = ρ̄Y0√T, q = ρ/ρ̄.
struct Conditioned {
    alpha0: f64,
    gamma: f64,
    s: f64,
    p: f64,
    q: f64,
    lambda: f64,
}

impl Conditioned {
    fn new(contract: &Contract, params: &ModelParams, hp: &HurstParams) -> Self {
        let t = contract.t;
        let (y0, rho) = (params.y0, params.rho);
        let alpha0 = contract.x0(params) - 0.5 * rho * rho * y0 * y0 * t;
        let s = params.rho_bar() * y0 * t.sqrt();
        Conditioned {
            alpha0,
            gamma: rho * y0 * t.sqrt(),
            s,
            p: alpha0 / s + 0.5 * s,
            q: rho / params.rho_bar(),
            lambda: 2.0 * hp.kappa_h() / (2.0 * params.h + 3.0),
        }
    }
}

/// κ_j and E_j of the small vol-of-vol expansion, with E_j computed in
/// closed form from the Gaussian identities.
///
///   E₁ = E[B_T exp(-d₂²/2)]   E₂ = E[B_T N(d₂)]   E₃ = E[B_T e^{ξ₀} N(d₁)]
///   E₄ = E[B_T² e^{ξ₀} N(d₁)] E₅ = E[e^{ξ₀} N(d₁)]
///
/// with d₁, d₂ evaluated at (ξ₀, ρ̄²Y0²T).
pub fn svve_terms(contract: &Contract, params: &ModelParams) -> Result<SvveTerms> {
    check(contract, params)?;
    let hp = params.hurst()?;
    let c = Conditioned::new(contract, params, &hp);
    let (t, h) = (contract.t, params.h);
    let (k, sb, nu, rho, y0) = (
        contract.k,
        contract.sigma_bar,
        params.nu,
        params.rho,
        params.y0,
    );
    let rho_bar = params.rho_bar();
    let x0 = contract.x0(params);
    let lam = c.lambda;
    let sqrt_t = t.sqrt();

    let ea = c.alpha0.exp();
    let mx = affine_eg_ncdf_moments(c.p, c.q, c.gamma)?;
    let m2 = affine_eg_ncdf_moments(c.p - c.s, c.q, 0.0)?;
    let pd = affine_npdf_moments(c.p - c.s, c.q);
    let e = [
        sqrt_t * (2.0 * PI).sqrt() * pd[1],
        sqrt_t * m2[1],
        sqrt_t * ea * mx[1],
        t * ea * mx[2],
        ea * mx[0],
    ];
    let base = k * sb * nu * lam * t.powf(h - 0.5);
    let kappa = [
        (2.0 / PI).sqrt() * hp.kappa_h() * k * nu * rho_bar * sb * t.powf(h) / (2.0 * h + 3.0),
        base / y0,
        -base * (1.0 + rho * rho * y0 * y0 * t) / y0,
        base * rho,
        -base * rho * t,
    ];
    let zeroth = k * sb / y0 * c_value(x0, y0 * y0 * t);
    Ok(SvveTerms { zeroth, kappa, e })
}

/// Small vol-of-vol expansion of the TVO price to first order in ν.
pub fn svve_price(contract: &Contract, params: &ModelParams) -> Result<PricingResult> {
    let terms = svve_terms(contract, params)?;
    let mut res = PricingResult::new(terms.price(), Method::Svve).diag("zeroth", terms.zeroth);
    for j in 0..5 {
        res = res
            .diag(&format!("kappa_{}", j + 1), terms.kappa[j])
            .diag(&format!("e_{}", j + 1), terms.e[j]);
    }
    Ok(res.floored())
}

/// The same first-order expansion evaluated by Gauss–Hermite quadrature over
/// B_T of the integrand conditioned on B_T:
///
///   Kσ̄√T E[ C/(Y0√T) + ν/(Y0√T) (C_x E[ξ₁|B_T] + ρ̄² C_w E[w₁|B_T])
///            - ν C E[w₁|B_T] / (2 Y0³ T^{3/2}) ]
///
/// with E[w₁|B_T] = 2Y0² λ T^{H+1/2} B_T,
/// E[ξ₁|B_T] = ρY0 λ T^{H-1/2} (B_T² - T) - ρ²Y0² λ T^{H+1/2} B_T, λ = 2κ_H/(2H+3).
pub fn svve_quadrature(
    contract: &Contract,
    params: &ModelParams,
    n_nodes: usize,
) -> Result<PricingResult> {
    check(contract, params)?;
    if n_nodes < 32 {
        return Err(Error::domain(
            "svve_quadrature",
            format!("need >= 32 nodes, got {n_nodes}"),
        ));
    }
    let hp = params.hurst()?;
    let c = Conditioned::new(contract, params, &hp);
    let (t, h) = (contract.t, params.h);
    let (y0, rho, nu) = (params.y0, params.rho, params.nu);
    let rho_bar2 = 1.0 - rho * rho;
    let v0 = c.s * c.s;
    let sqrt_t = t.sqrt();
    let lam = c.lambda;
    let gh = GaussHermite::new(n_nodes);
    let integrand = |z: f64| {
        let b = sqrt_t * z;
        let xi0 = c.alpha0 + c.gamma * z;
        let cv = c_value(xi0, v0);
        let d = derivs_value(xi0, v0);
        let ew1 = 2.0 * y0 * y0 * lam * t.powf(h + 0.5) * b;
        let exi1 = rho * y0 * lam * t.powf(h - 0.5) * (b * b - t) - 0.5 * rho * rho * ew1;
        cv / (y0 * sqrt_t) + nu / (y0 * sqrt_t) * (d.c_x * exi1 + rho_bar2 * d.c_w * ew1)
            - nu * cv * ew1 / (2.0 * y0.powi(3) * t * sqrt_t)
    };
    let price = contract.k * contract.sigma_bar * sqrt_t * gh.expect(integrand);
    Ok(PricingResult::new(price, Method::SvveQuad)
        .diag("nodes", n_nodes as f64)
        .floored())
}

const VANILLA_GH_NODES: usize = 96;

/// Small vol-of-vol expansion of the vanilla call K E[(e^{X_T} - 1)^+]:
///
///   K C(X0, Y0²T) + νK E[C_x E[ξ₁|B_T] + ρ̄² C_w E[w₁|B_T]],
///
/// C-derivatives at (ξ₀, ρ̄²Y0²T), expectation by Gauss–Hermite quadrature.
pub fn vanilla_svve_price(contract: &Contract, params: &ModelParams) -> Result<PricingResult> {
    check(contract, params)?;
    let hp = params.hurst()?;
    let c = Conditioned::new(contract, params, &hp);
    let (t, h) = (contract.t, params.h);
    let (y0, rho) = (params.y0, params.rho);
    let rho_bar2 = 1.0 - rho * rho;
    let v0 = c.s * c.s;
    let sqrt_t = t.sqrt();
    let lam = c.lambda;
    let gh = GaussHermite::new(VANILLA_GH_NODES);
    let first = gh.expect(|z| {
        let b = sqrt_t * z;
        let d = derivs_value(c.alpha0 + c.gamma * z, v0);
        let ew1 = 2.0 * y0 * y0 * lam * t.powf(h + 0.5) * b;
        let exi1 = rho * y0 * lam * t.powf(h - 0.5) * (b * b - t) - 0.5 * rho * rho * ew1;
        d.c_x * exi1 + rho_bar2 * d.c_w * ew1
    });
    let zeroth = contract.k * c_value(contract.x0(params), y0 * y0 * t);
    let first = contract.k * params.nu * first;
    Ok(PricingResult::new(zeroth + first, Method::VanillaSvve)
        .diag("zeroth", zeroth)
        .diag("first_order", first)
        .floored())
}

fn ordered(op: &'static str, times: &[f64]) -> Result<()> {
    for (i, t) in times.iter().enumerate() {
        ensure_finite(op, "time", *t)?;
        if *t < 0.0 || (i > 0 && times[i - 1] >= *t) {
            return Err(Error::domain(
                op,
                format!("times must be increasing from 0, got {times:?}"),
            ));
        }
    }
    Ok(())
}

/// E₀[Y_r²] = Y0² exp(2ν² r^{2H}).
pub fn lemma41_e_y2(params: &ModelParams, r: f64) -> Result<f64> {
    params.validate()?;
    ordered("lemma41_e_y2", &[0.0, r])?;
    Ok(params.y0.powi(2) * (2.0 * params.nu.powi(2) * r.powf(2.0 * params.h)).exp())
}

/// E₀[Y_τ Y_r²] = Y0³ exp(ν²/2 [τ^{2H} + 4r^{2H} + 4 Cov(B^H_τ, B^H_r)]) for τ < r.
pub fn lemma41_e_y_y2(params: &ModelParams, tau: f64, r: f64) -> Result<f64> {
    params.validate()?;
    ordered("lemma41_e_y_y2", &[tau, r])?;
    let h = params.h;
    let e = 0.5
        * params.nu.powi(2)
        * (tau.powf(2.0 * h) + 4.0 * r.powf(2.0 * h) + 4.0 * fbm_cov(tau, r, h));
    Ok(params.y0.powi(3) * e.exp())
}

/// E₀[Y_r² E_τ[Y_u²]] = Y0⁴ exp(2ν² [r^{2H} + u^{2H} + 2∫_0^τ K(r,s)K(u,s) ds])
/// for τ < r < u.
pub fn lemma41_e_y2_cond_y2(params: &ModelParams, tau: f64, r: f64, u: f64) -> Result<f64> {
    params.validate()?;
    ordered("lemma41_e_y2_cond_y2", &[tau, r, u])?;
    let hp = params.hurst()?;
    let h = params.h;
    let p = if tau == 0.0 {
        0.0
    } else {
        kernel_cross_integral(r, u, tau, &hp, 1e-15, 1e-12).value
    };
    let e = 2.0 * params.nu.powi(2) * (r.powf(2.0 * h) + u.powf(2.0 * h) + 2.0 * p);
    Ok(params.y0.powi(4) * e.exp())
}

/// Integrand of I₁: E₀[Y_τ Y_r²] K(r, τ), so that
/// d⟨X, M⟩_τ frozen at t = 0 is 2νρ ∫_τ^T (this) dr dτ.
pub fn lemma41_dxm_integrand(params: &ModelParams, tau: f64, r: f64) -> Result<f64> {
    let e = lemma41_e_y_y2(params, tau, r)?;
    if tau == 0.0 {
        return Err(Error::domain(
            "lemma41_dxm_integrand",
            "kernel needs tau > 0",
        ));
    }
    Ok(e * params.hurst()?.kernel_split(r, tau, r - tau))
}

/// Integrand of I₂: E₀[E_τ[Y_{r₁}²] E_τ[Y_{r₂}²]] K(r₁,τ) K(r₂,τ) for
/// τ < r₂, r₁, so that d⟨M⟩_τ frozen at t = 0 is 4ν² ∫∫ (this) dr₁ dr₂ dτ.
pub fn lemma41_dmm_integrand(params: &ModelParams, tau: f64, r1: f64, r2: f64) -> Result<f64> {
    params.validate()?;
    ordered("lemma41_dmm_integrand", &[0.0, tau, r1.min(r2)])?;
    if tau == 0.0 {
        return Err(Error::domain(
            "lemma41_dmm_integrand",
            "kernel needs tau > 0",
        ));
    }
    let hp = params.hurst()?;
    let h = params.h;
    let p = kernel_cross_integral(r1, r2, tau, &hp, 1e-15, 1e-12).value;
    let e = 2.0 * params.nu.powi(2) * (r1.powf(2.0 * h) + r2.powf(2.0 * h) + 2.0 * p);
    Ok(params.y0.powi(4)
        * e.exp()
        * hp.kernel_split(r1, tau, r1 - tau)
        * hp.kernel_split(r2, tau, r2 - tau))
}
