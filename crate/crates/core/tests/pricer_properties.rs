use fsabr::bsm::c_value;
use fsabr::mc::{mc_tvo_price, McConfig};
use fsabr::pricers::*;
use fsabr::quad::GaussLegendre;
use proptest::prelude::*;

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn table_params(set: usize) -> (ModelParams, Contract, usize) {
    // (T, σ̄, Y0, H, ν, ρ, steps)
    let rows = [
        (1.0, 0.3, 0.3, 0.1, 0.05, -0.7, 252),
        (0.5, 0.3, 0.2, 0.2, 0.1, 0.5, 126),
        (0.25, 0.1, 0.2, 0.2, 0.01, -0.1, 1000),
    ];
    let (t, sb, y0, h, nu, rho, n) = rows[set - 1];
    (
        ModelParams::new(100.0, y0, nu, rho, h).unwrap(),
        Contract::new(100.0, t, sb).unwrap(),
        n,
    )
}

fn mc_reference(set: usize) -> f64 {
    let (p, c, n) = table_params(set);
    let cfg = McConfig {
        n_steps: n,
        n_paths: 50_000,
        seed: 1,
        antithetic: true,
        ..McConfig::default()
    };
    mc_tvo_price(&c, &p, &cfg).unwrap().price
}

#[test]
fn m0_closed_forms() {
    let p = ModelParams::new(100.0, 0.25, 0.4, 0.0, 0.5).unwrap();
    let a = 2.0 * p.nu * p.nu;
    let want = p.y0 * p.y0 * ((a * 1.3f64).exp() - 1.0) / a;
    assert!(rel(m0(&p, 1.3).unwrap(), want) < 1e-12);

    let p = ModelParams::new(100.0, 0.3, 0.05, -0.7, 0.1).unwrap();
    let a = 2.0 * p.nu * p.nu;
    let gl = GaussLegendre::new(400);
    // t^{2H} has a weak singularity at 0; grade the nodes toward it
    let oracle = gl.integrate(
        |u| {
            let t = u.powi(8);
            8.0 * u.powi(7) * (a * t.powf(2.0 * p.h)).exp()
        },
        0.0,
        1.0,
    );
    assert!(rel(m0(&p, 1.0).unwrap(), p.y0 * p.y0 * oracle) < 1e-10);
}

#[test]
fn uncorrelated_dfa_drops_the_correlation_term() {
    let p = ModelParams::new(100.0, 0.2, 0.3, 0.0, 0.2).unwrap();
    let c = Contract::new(95.0, 1.0, 0.2).unwrap();
    let r = dfa_price(&c, &p).unwrap();
    assert_eq!(r.diagnostics["term_correlation"], 0.0);
    assert!(r.diagnostics["term_volvol"] != 0.0);
}

#[test]
fn dfa_variants_agree_for_small_volvol() {
    let c = Contract::new(100.0, 1.0, 0.3).unwrap();
    let p = ModelParams::new(100.0, 0.3, 1e-3, -0.7, 0.1).unwrap();
    let simple = dfa_price(&c, &p).unwrap();
    let full = dfa_full_price_t0(&c, &p, &DfaQuadConfig::default()).unwrap();
    for key in ["term_correlation", "term_volvol"] {
        let ratio = full.diagnostics[key] / simple.diagnostics[key];
        assert!((ratio - 1.0).abs() < 1e-3, "{key}: {ratio}");
    }
    assert!(rel(full.price, simple.price) < 1e-6);
}

#[test]
fn svve_quadrature_converges() {
    let (p, c, _) = table_params(1);
    let a = svve_quadrature(&c, &p, 64).unwrap().price;
    let b = svve_quadrature(&c, &p, 128).unwrap().price;
    assert!(rel(a, b) < 1e-8);
    assert!(svve_quadrature(&c, &p, 16).is_err());
}

#[test]
fn svve_evaluators_agree_on_the_sensitivity_box() {
    for h in [0.1, 0.3] {
        for nu in [0.01, 0.1] {
            for rho in [-0.7, 0.0, 0.5] {
                for k in [80.0, 100.0, 120.0] {
                    let p = ModelParams::new(100.0, 0.3, nu, rho, h).unwrap();
                    let c = Contract::new(k, 1.0, 0.3).unwrap();
                    let a = svve_price(&c, &p).unwrap().price;
                    let b = svve_quadrature(&c, &p, 64).unwrap().price;
                    let tol = if rho == 0.0 { 1e-8 } else { 1e-6 };
                    assert!(rel(a, b) < tol, "H={h} nu={nu} rho={rho} K={k}");
                }
            }
        }
    }
}

#[test]
fn vanilla_expansion_is_affine_in_volvol() {
    let c = Contract::new(100.0, 1.0, 0.2).unwrap();
    let price = |nu| {
        let p = ModelParams::new(100.0, 0.2, nu, -0.5, 0.5).unwrap();
        vanilla_svve_price(&c, &p).unwrap().price
    };
    let base = price(0.0);
    let s1 = (price(1e-4) - base) / 1e-4;
    let s2 = (price(2e-4) - base) / 2e-4;
    assert!(rel(s1, s2) < 1e-3);
}

#[test]
fn lemma_expectations_without_volvol() {
    let p = ModelParams::new(100.0, 0.3, 0.0, 0.2, 0.2).unwrap();
    assert!(rel(lemma41_e_y2(&p, 0.4).unwrap(), 0.09) < 1e-15);
    assert!(rel(lemma41_e_y_y2(&p, 0.2, 0.4).unwrap(), 0.027) < 1e-15);
    assert!(rel(lemma41_e_y2_cond_y2(&p, 0.2, 0.4, 0.9).unwrap(), 0.0081) < 1e-15);
    assert!(lemma41_e_y2_cond_y2(&p, 0.5, 0.4, 0.9).is_err());
    let q = ModelParams { nu: 0.3, ..p };
    let want = 0.09 * (2.0 * 0.09 * 0.4f64.powf(0.4)).exp();
    assert!(rel(lemma41_e_y2(&q, 0.4).unwrap(), want) < 1e-14);
}

#[test]
fn first_table_dfa_against_simulation() {
    let (p, c, _) = table_params(1);
    let mc = mc_reference(1);
    assert!(rel(dfa_price(&c, &p).unwrap().price, mc) < 0.02);
    assert!(rel(svve_quadrature(&c, &p, 64).unwrap().price, mc) < 0.01);
}

#[test]
fn second_table_full_dfa_against_simulation() {
    let (p, c, _) = table_params(2);
    let full = dfa_full_price_t0(&c, &p, &DfaQuadConfig::default()).unwrap();
    assert!(rel(full.price, mc_reference(2)) < 0.02);
}

#[test]
fn third_table_svve_against_simulation() {
    let (p, c, _) = table_params(3);
    assert!(rel(svve_price(&c, &p).unwrap().price, mc_reference(3)) < 0.01);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn homogeneous_in_spot_and_strike(
        m in 0.6f64..1.6, t in 0.1f64..2.0, y0 in 0.05f64..0.5, nu in 0.0f64..0.6,
        rho in -0.95f64..0.95, h in 0.02f64..0.98, lam in prop::sample::select(vec![2.0, 4.0, 0.5]),
    ) {
        let p = ModelParams::new(100.0, y0, nu, rho, h).unwrap();
        let c = Contract::new(100.0 * m, t, 0.2).unwrap();
        let ps = ModelParams { s0: lam * p.s0, ..p };
        let cs = Contract { k: lam * c.k, ..c };
        for (a, b) in [
            (dfa_price(&c, &p).unwrap().price, dfa_price(&cs, &ps).unwrap().price),
            (svve_price(&c, &p).unwrap().price, svve_price(&cs, &ps).unwrap().price),
            (svve_quadrature(&c, &p, 32).unwrap().price, svve_quadrature(&cs, &ps, 32).unwrap().price),
        ] {
            prop_assert!((b - lam * a).abs() <= 1e-12 * b.abs().max(1e-300));
        }
    }

    #[test]
    fn expected_variance_dominates_the_flat_one(
        y0 in 0.05f64..0.6, nu in 0.0f64..1.0, h in 0.02f64..0.98, t in 0.01f64..3.0,
    ) {
        let p = ModelParams::new(100.0, y0, nu, 0.0, h).unwrap();
        let v = m0(&p, t).unwrap();
        let flat = y0 * y0 * t;
        if nu == 0.0 {
            prop_assert_eq!(v, flat);
        } else {
            prop_assert!(v > flat);
        }
    }

    #[test]
    fn prices_are_nonnegative_and_collapse_without_volvol(
        m in 0.5f64..2.0, t in 0.05f64..2.0, y0 in 0.05f64..0.6, rho in -0.95f64..0.95, h in 0.02f64..0.98,
    ) {
        let p = ModelParams::new(100.0, y0, 0.0, rho, h).unwrap();
        let c = Contract::new(100.0 * m, t, 0.3).unwrap();
        let bs = c.k * c.sigma_bar / y0 * c_value(c.x0(&p), y0 * y0 * t);
        for v in [dfa_price(&c, &p).unwrap().price, svve_price(&c, &p).unwrap().price] {
            prop_assert!(v >= 0.0);
            prop_assert!((v - bs).abs() <= 1e-12 * bs.max(1e-300));
        }
    }
}
