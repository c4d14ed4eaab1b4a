//! Special functions: standard normal distribution, Gamma/Beta, the Gauss
//! hypergeometric function on the non-positive axis and normalized Hermite
//! polynomials.
//!
//! The checked entry points (`std_normal_cdf`, `gamma_fn`, ...) validate their
//! arguments. Pricers call the unchecked [`ncdf`] / [`npdf`] in inner loops.

use std::f64::consts::{PI, SQRT_2};

use crate::error::{ensure_finite, Error, Result};

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal cumulative distribution function without argument checks.
#[inline]
pub fn ncdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// Standard normal density without argument checks.
#[inline]
pub fn npdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

pub fn std_normal_cdf(x: f64) -> Result<f64> {
    ensure_finite("std_normal_cdf", "x", x)?;
    Ok(ncdf(x))
}

pub fn std_normal_pdf(x: f64) -> Result<f64> {
    ensure_finite("std_normal_pdf", "x", x)?;
    Ok(npdf(x))
}

// Lanczos approximation, g = 7, nine terms.
const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Lanczos series for Γ(x), valid for x ≥ 0.5.
fn lanczos_gamma(x: f64) -> f64 {
    let x = x - 1.0;
    let mut acc = LANCZOS_COEF[0];
    for (i, c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    (2.0 * PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * acc
}

fn lanczos_ln_gamma(x: f64) -> f64 {
    let x = x - 1.0;
    let mut acc = LANCZOS_COEF[0];
    for (i, c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Γ(x) for x > 0.
pub fn gamma_fn(x: f64) -> Result<f64> {
    ensure_finite("gamma_fn", "x", x)?;
    if x <= 0.0 {
        return Err(Error::domain(
            "gamma_fn",
            format!("argument must be > 0, got {x}"),
        ));
    }
    Ok(gamma_pos(x))
}

fn gamma_pos(x: f64) -> f64 {
    if x < 0.5 {
        lanczos_gamma(x + 1.0) / x
    } else {
        lanczos_gamma(x)
    }
}

/// Γ on the whole real line except the poles, via reflection. Used by the
/// hypergeometric connection formulas, whose parameters may be negative.
pub(crate) fn gamma_real(x: f64) -> f64 {
    if x > 0.0 {
        gamma_pos(x)
    } else if x == x.floor() {
        f64::INFINITY
    } else {
        PI / ((PI * x).sin() * gamma_pos(1.0 - x))
    }
}

/// 1/Γ(x), zero at the poles.
pub(crate) fn rgamma(x: f64) -> f64 {
    if x <= 0.0 && x == x.floor() {
        0.0
    } else if x > 0.0 {
        1.0 / gamma_pos(x)
    } else {
        (PI * x).sin() * gamma_pos(1.0 - x) / PI
    }
}

/// B(a, b) = Γ(a)Γ(b)/Γ(a+b) for a, b > 0.
pub fn beta_fn(a: f64, b: f64) -> Result<f64> {
    ensure_finite("beta_fn", "a", a)?;
    ensure_finite("beta_fn", "b", b)?;
    if a <= 0.0 || b <= 0.0 {
        return Err(Error::domain(
            "beta_fn",
            format!("arguments must be > 0, got ({a}, {b})"),
        ));
    }
    if a + b < 140.0 {
        Ok(gamma_pos(a) * gamma_pos(b) / gamma_pos(a + b))
    } else {
        let lg = |x: f64| {
            if x < 0.5 {
                lanczos_ln_gamma(x + 1.0) - x.ln()
            } else {
                lanczos_ln_gamma(x)
            }
        };
        Ok((lg(a) + lg(b) - lg(a + b)).exp())
    }
}

const SERIES_REL_TOL: f64 = 1e-16;
const SERIES_MAX_TERMS: usize = 2_000_000;
// Above this transformed argument the series in 1 - y is used instead.
const CONNECTION_SWITCH: f64 = 0.5;

fn is_nonpositive_integer(x: f64) -> bool {
    x <= 0.0 && x == x.floor()
}

/// Plain hypergeometric series for 0 ≤ y < 1.
fn series_2f1(a: f64, b: f64, c: f64, y: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut small = 0;
    for n in 0..SERIES_MAX_TERMS {
        let nf = n as f64;
        term *= (a + nf) * (b + nf) / ((c + nf) * (nf + 1.0)) * y;
        sum += term;
        if term == 0.0 {
            break;
        }
        if term.abs() <= SERIES_REL_TOL * sum.abs() {
            small += 1;
            if small >= 2 {
                break;
            }
        } else {
            small = 0;
        }
    }
    sum
}

#[derive(Debug, Clone, Copy)]
struct Connection {
    // e = c - a - b of the Pfaff-transformed function
    e: f64,
    coef_regular: f64,
    coef_singular: f64,
}

/// ₂F₁(a, b; c; x) for fixed parameters and x ≤ 0, with the parameter-only
/// work (Pfaff parameters and connection coefficients) done once.
///
/// Evaluation maps x ≤ 0 onto y = x/(x-1) ∈ [0, 1) with the Pfaff
/// transformation. Small y sums the power series directly; y close to 1 uses
/// the linear transformation to 1 - y = 1/(1-x), unless c - a - b is too close
/// to an integer for it, in which case the series is summed to the end.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Hyp2F1 {
    a: f64,
    b: f64,
    c: f64,
    connection: Option<Connection>,
}

impl Hyp2F1 {
    pub(crate) fn new(a: f64, b: f64, c: f64) -> Self {
        // Pfaff: F(a,b;c;x) = (1-x)^{-a} F(a, c-b; c; x/(x-1))
        let b = c - b;
        let e = c - a - b;
        let terminating = is_nonpositive_integer(a) || is_nonpositive_integer(b);
        let connection = if terminating || (e - e.round()).abs() < 1e-7 {
            None
        } else {
            Some(Connection {
                e,
                coef_regular: gamma_real(c) * gamma_real(e) * rgamma(c - a) * rgamma(c - b),
                coef_singular: gamma_real(c) * gamma_real(-e) * rgamma(a) * rgamma(b),
            })
        };
        Hyp2F1 {
            a,
            b,
            c,
            connection,
        }
    }

    pub(crate) fn eval(&self, x: f64) -> f64 {
        if x == 0.0 {
            return 1.0;
        }
        let one_minus_x = 1.0 - x;
        self.eval_pfaff(x / (x - 1.0), 1.0 / one_minus_x)
    }

    /// Evaluates at the point whose Pfaff image is y = x/(x-1), given both y and
    /// 1 - y = 1/(1-x). Callers that know 1 - y exactly avoid the cancellation
    /// of forming it from y.
    pub(crate) fn eval_pfaff(&self, y: f64, one_minus_y: f64) -> f64 {
        let prefactor = one_minus_y.powf(self.a);
        match self.connection {
            Some(conn) if y > CONNECTION_SWITCH => {
                let (a, b, c, e) = (self.a, self.b, self.c, conn.e);
                let z = one_minus_y;
                let regular = if conn.coef_regular == 0.0 {
                    0.0
                } else {
                    conn.coef_regular * series_2f1(a, b, 1.0 - e, z)
                };
                let singular = if conn.coef_singular == 0.0 {
                    0.0
                } else {
                    conn.coef_singular * z.powf(e) * series_2f1(c - a, c - b, 1.0 + e, z)
                };
                prefactor * (regular + singular)
            }
            _ => prefactor * series_2f1(self.a, self.b, self.c, y),
        }
    }
}

/// Gauss hypergeometric function ₂F₁(a, b; c; x) on x ≤ 0, c > 0.
pub fn gauss_2f1(a: f64, b: f64, c: f64, x: f64) -> Result<f64> {
    for (name, v) in [("a", a), ("b", b), ("c", c), ("x", x)] {
        ensure_finite("gauss_2f1", name, v)?;
    }
    if c <= 0.0 {
        return Err(Error::domain(
            "gauss_2f1",
            format!("c must be > 0, got {c}"),
        ));
    }
    if x > 0.0 {
        return Err(Error::Unsupported {
            op: "gauss_2f1",
            arg: x,
        });
    }
    Ok(Hyp2F1::new(a, b, c).eval(x))
}

/// Order of a normalized Hermite polynomial, at most [`HermiteIndex::MAX`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct HermiteIndex(u8);

impl HermiteIndex {
    pub const MAX: usize = 16;

    pub fn new(n: usize) -> Result<Self> {
        if n > Self::MAX {
            return Err(Error::domain(
                "HermiteIndex",
                format!("order {n} exceeds {}", Self::MAX),
            ));
        }
        Ok(HermiteIndex(n as u8))
    }

    pub fn get(self) -> usize {
        self.0 as usize
    }
}

/// h_n(x) = (-1)^n / √(n!) · e^{x²/2} dⁿ/dxⁿ e^{-x²/2}, by the three-term
/// recurrence h_{n+1} = (x h_n - √n h_{n-1}) / √(n+1).
pub fn hermite_norm(n: HermiteIndex, x: f64) -> f64 {
    let n = n.get();
    let mut prev = 1.0;
    if n == 0 {
        return prev;
    }
    let mut cur = x;
    for k in 1..n {
        let kf = k as f64;
        let next = (x * cur - kf.sqrt() * prev) / (kf + 1.0).sqrt();
        prev = cur;
        cur = next;
    }
    cur
}
