//! Normalized Black–Scholes function C(x, w) = e^x N(d1) - N(d2) in
//! log-moneyness x and total variance w, its derivatives, and the scaled
//! function F(x, w, ŵ) = C(x, ŵ)/√(w + ŵ).

use crate::error::{ensure_finite, Error, Result};
use crate::specfun::{ncdf, npdf};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BsPoint {
    pub x: f64,
    pub w: f64,
}

impl BsPoint {
    pub fn new(x: f64, w: f64) -> Result<Self> {
        ensure_finite("BsPoint", "x", x)?;
        ensure_finite("BsPoint", "w", w)?;
        if w < 0.0 {
            return Err(Error::domain("BsPoint", format!("w must be >= 0, got {w}")));
        }
        Ok(BsPoint { x, w })
    }

    /// (d1, d2), defined for w > 0.
    pub fn d(&self) -> Option<(f64, f64)> {
        (self.w > 0.0).then(|| d12(self.x, self.w))
    }
}

#[inline]
fn d12(x: f64, w: f64) -> (f64, f64) {
    let s = w.sqrt();
    let d1 = x / s + 0.5 * s;
    (d1, d1 - s)
}

/// C(x, w) without argument checks; w = 0 gives the payoff (e^x - 1)^+.
#[inline]
pub fn c_value(x: f64, w: f64) -> f64 {
    let ex = x.exp();
    if w <= 0.0 {
        return (ex - 1.0).max(0.0);
    }
    let (d1, d2) = d12(x, w);
    (ex * ncdf(d1) - ncdf(d2)).clamp((ex - 1.0).max(0.0), ex)
}

pub fn bs_c(p: BsPoint) -> f64 {
    c_value(p.x, p.w)
}

/// First and second partial derivatives of C.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BsDerivs {
    pub c_x: f64,
    pub c_w: f64,
    pub c_xx: f64,
    pub c_xw: f64,
    pub c_ww: f64,
}

/// Derivatives without argument checks; requires w > 0.
#[inline]
pub fn derivs_value(x: f64, w: f64) -> BsDerivs {
    let (d1, d2) = d12(x, w);
    let s = w.sqrt();
    let c_x = x.exp() * ncdf(d1);
    let c_w = npdf(d2) / (2.0 * s);
    let dd2_dw = -x / (2.0 * w * s) - 0.25 / s;
    BsDerivs {
        c_x,
        c_w,
        c_xx: c_x + 2.0 * c_w,
        c_xw: c_w * (0.5 - x / w),
        c_ww: c_w * (-d2 * dd2_dw - 0.5 / w),
    }
}

pub fn bs_derivs(p: BsPoint) -> Result<BsDerivs> {
    if p.w == 0.0 {
        return Err(Error::Singular {
            op: "bs_derivs",
            w: p.w,
        });
    }
    Ok(derivs_value(p.x, p.w))
}

/// Argument of F: log-moneyness, realized variance so far and expected
/// remaining variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FPoint {
    pub x: f64,
    pub w: f64,
    pub wh: f64,
}

impl FPoint {
    pub fn new(x: f64, w: f64, wh: f64) -> Result<Self> {
        ensure_finite("FPoint", "x", x)?;
        ensure_finite("FPoint", "w", w)?;
        ensure_finite("FPoint", "wh", wh)?;
        if w < 0.0 || wh < 0.0 || w + wh <= 0.0 {
            return Err(Error::domain(
                "FPoint",
                format!("need w >= 0, wh >= 0, w + wh > 0; got w={w}, wh={wh}"),
            ));
        }
        Ok(FPoint { x, w, wh })
    }

    fn total(&self) -> f64 {
        self.w + self.wh
    }

    fn require_positive_wh(&self, op: &'static str) -> Result<()> {
        if self.wh > 0.0 {
            Ok(())
        } else {
            Err(Error::domain(
                op,
                format!("wh must be > 0, got {}", self.wh),
            ))
        }
    }
}

pub fn f_func(q: FPoint) -> Result<f64> {
    Ok(c_value(q.x, q.wh) / q.total().sqrt())
}

/// ∂²F/∂x∂ŵ.
pub fn f_xw(q: FPoint) -> Result<f64> {
    q.require_positive_wh("f_xw")?;
    let m = q.total();
    let d = derivs_value(q.x, q.wh);
    Ok(-d.c_x / (2.0 * m * m.sqrt()) + d.c_xw / m.sqrt())
}

/// ∂²F/∂ŵ².
pub fn f_ww(q: FPoint) -> Result<f64> {
    q.require_positive_wh("f_ww")?;
    let m = q.total();
    let d = derivs_value(q.x, q.wh);
    let c = c_value(q.x, q.wh);
    Ok(-d.c_w / (m * m.sqrt()) + 0.75 * c / (m * m * m.sqrt()) + d.c_ww / m.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn payoff_limit_and_value() {
        for x in [-0.5, 0.0, 0.3] {
            let p = BsPoint::new(x, 0.0).unwrap();
            assert_eq!(bs_c(p), (f64::exp(x) - 1.0).max(0.0));
            assert!(p.d().is_none());
        }
        let v = bs_c(BsPoint::new(0.0, 0.09).unwrap());
        assert!((v - (ncdf(0.15) - ncdf(-0.15))).abs() < 1e-15);
        assert!((v - 0.119_235).abs() < 1e-6);
        assert!(bs_c(BsPoint::new(0.0, 400.0).unwrap()) > 0.999);
        assert!(BsPoint::new(0.0, -1e-3).is_err());
    }

    #[test]
    fn increasing_in_variance() {
        for x in [-1.0, -0.2, 0.0, 0.6, 1.0] {
            let mut prev = c_value(x, 1e-3);
            for i in 2..=400 {
                let c = c_value(x, 0.01 * i as f64);
                assert!(c > prev, "x={x}, i={i}");
                prev = c;
            }
        }
    }

    #[test]
    fn delta_atm_cancellation() {
        for w in [0.01, 0.2, 1.0] {
            let d = derivs_value(0.0, w);
            let (d1, d2) = d12(0.0, w);
            let expanded = ncdf(d1) + npdf(d1) / w.sqrt() - npdf(d2) / w.sqrt();
            assert!((d.c_x - expanded).abs() < 1e-12);
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let (x, w) = (0.2, 0.25);
        let d = bs_derivs(BsPoint::new(x, w).unwrap()).unwrap();
        let h = 1e-5;
        let fx = (c_value(x + h, w) - c_value(x - h, w)) / (2.0 * h);
        let fw = (c_value(x, w + h) - c_value(x, w - h)) / (2.0 * h);
        assert!(rel(d.c_x, fx) < 1e-6);
        assert!(rel(d.c_w, fw) < 1e-6);
        let fxx = (derivs_value(x + h, w).c_x - derivs_value(x - h, w).c_x) / (2.0 * h);
        let fxw = (derivs_value(x, w + h).c_x - derivs_value(x, w - h).c_x) / (2.0 * h);
        let fww = (derivs_value(x, w + h).c_w - derivs_value(x, w - h).c_w) / (2.0 * h);
        assert!(rel(d.c_xx, fxx) < 1e-6);
        assert!(rel(d.c_xw, fxw) < 1e-6);
        assert!(rel(d.c_ww, fww) < 1e-6);
        let fxx2 = (c_value(x + 1e-4, w) - 2.0 * c_value(x, w) + c_value(x - 1e-4, w)) / 1e-8;
        assert!(rel(d.c_xx, fxx2) < 1e-6);
    }

    #[test]
    fn singular_at_zero_variance() {
        let p = BsPoint::new(0.1, 0.0).unwrap();
        assert!(matches!(bs_derivs(p), Err(Error::Singular { .. })));
    }

    #[test]
    fn pde_residual() {
        for i in 0..21 {
            for j in 0..21 {
                let x = -1.0 + 0.1 * i as f64;
                let w = 0.01 + 0.99 * j as f64 / 20.0;
                let d = derivs_value(x, w);
                assert!((d.c_w - 0.5 * d.c_xx + 0.5 * d.c_x).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn f_derivatives() {
        let q = FPoint::new(0.1, 0.04, 0.05).unwrap();
        let f = |x: f64, wh: f64| f_func(FPoint::new(x, 0.04, wh).unwrap()).unwrap();
        let h = 1e-4;
        let fxw = (f(0.1 + h, 0.05 + h) - f(0.1 + h, 0.05 - h) - f(0.1 - h, 0.05 + h)
            + f(0.1 - h, 0.05 - h))
            / (4.0 * h * h);
        let fww = (f(0.1, 0.05 + h) - 2.0 * f(0.1, 0.05) + f(0.1, 0.05 - h)) / (h * h);
        assert!(rel(f_xw(q).unwrap(), fxw) < 1e-5);
        assert!(rel(f_ww(q).unwrap(), fww) < 1e-5);
    }

    #[test]
    fn f_definition_and_scaling() {
        let q = FPoint::new(0.3, 0.0, 0.2).unwrap();
        assert_eq!(f_func(q).unwrap(), c_value(0.3, 0.2) / 0.2f64.sqrt());
        let (x, w, wh, a) = (-0.1, 0.03, 0.07, 4.0);
        let lhs = f_func(FPoint::new(x, a * w, a * wh).unwrap()).unwrap();
        let rhs = c_value(x, a * wh) / (a * (w + wh)).sqrt();
        assert!(rel(lhs, rhs) < 1e-15);
        let zero = FPoint::new(0.0, 0.1, 0.0).unwrap();
        assert!(f_xw(zero).is_err());
        assert!(f_ww(zero).is_err());
        assert!(FPoint::new(0.0, 0.0, 0.0).is_err());
    }
}
