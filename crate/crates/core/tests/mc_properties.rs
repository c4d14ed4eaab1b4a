mod common;

use common::*;
use fsabr::bsm::c_value;
use fsabr::fbm::Scheme;
use fsabr::mc::{mc_expectation, mc_tvo_price, mc_vanilla_price, simulate_fsabr, McConfig};
use fsabr::pricers::{vanilla_svve_price, Contract, ModelParams};

fn table1() -> (ModelParams, Contract) {
    (
        ModelParams::new(100.0, 0.3, 0.05, -0.7, 0.1).unwrap(),
        Contract::new(100.0, 1.0, 0.3).unwrap(),
    )
}

fn cfg(n_steps: usize, n_paths: usize, seed: u64) -> McConfig {
    McConfig {
        n_steps,
        n_paths,
        seed,
        antithetic: false,
        scheme: Scheme::Cholesky,
    }
}

#[test]
fn asset_is_a_martingale() {
    let (p, c) = table1();
    let e = mc_expectation(&p, &c, &cfg(252, 200_000, 7), |e| e.s_t).unwrap();
    assert!(
        (e.mean - p.s0).abs() < 3.0 * e.std_err,
        "{} ± {}",
        e.mean,
        e.std_err
    );
    assert_eq!(e.n_flagged, 0);
}

#[test]
fn hopeless_out_of_the_money() {
    let p = ModelParams::new(100.0, 0.2, 0.1, -0.3, 0.2).unwrap();
    let c = Contract::new(1000.0, 0.25, 0.2).unwrap();
    let r = mc_tvo_price(&c, &p, &cfg(64, 20_000, 1)).unwrap();
    assert!(r.price < 3.0 * r.std_err.unwrap().max(f64::MIN_POSITIVE));
}

#[test]
fn vanilla_without_volvol_is_black_scholes() {
    let p = ModelParams::new(100.0, 0.25, 0.0, 0.4, 0.2).unwrap();
    let c = Contract::new(110.0, 0.5, 0.2).unwrap();
    let r = mc_vanilla_price(&c, &p, &cfg(64, 200_000, 3)).unwrap();
    let want = c.k * c_value(c.x0(&p), p.y0 * p.y0 * c.t);
    assert!((r.price - want).abs() < 3.0 * r.std_err.unwrap());
}

#[test]
fn antithetic_pairs_reduce_the_error() {
    let p = ModelParams::new(100.0, 0.2, 0.0, 0.0, 0.3).unwrap();
    let c = Contract::new(100.0, 1.0, 0.2).unwrap();
    let plain = mc_vanilla_price(&c, &p, &cfg(32, 50_000, 9)).unwrap();
    let anti = mc_vanilla_price(
        &c,
        &p,
        &McConfig {
            antithetic: true,
            ..cfg(32, 50_000, 9)
        },
    )
    .unwrap();
    assert!(anti.std_err.unwrap() <= plain.std_err.unwrap());
}

#[test]
fn vanilla_price_decreases_in_strike() {
    let (p, _) = table1();
    let conf = cfg(64, 20_000, 5);
    let prices: Vec<f64> = [80.0, 90.0, 100.0, 110.0, 120.0]
        .iter()
        .map(|&k| {
            mc_vanilla_price(&Contract::new(k, 1.0, 0.3).unwrap(), &p, &conf)
                .unwrap()
                .price
        })
        .collect();
    assert!(prices.windows(2).all(|w| w[0] >= w[1]), "{prices:?}");
}

#[test]
fn uncorrelated_drivers_have_no_sample_correlation() {
    let p = ModelParams::new(100.0, 0.2, 0.4, 0.0, 0.2).unwrap();
    let c = Contract::new(100.0, 1.0, 0.2).unwrap();
    let b = simulate_fsabr(&p, &c, &cfg(16, 20_000, 13)).unwrap();
    let (s, y) = (b.s.as_ref().unwrap(), b.y.as_ref().unwrap());
    let sqrt_dt = b.grid.dt().sqrt();
    let k = 9;
    let db: Vec<f64> = b.db.column(k).to_vec();
    // with ρ = 0 the asset shock is entirely the orthogonal driver
    let dw: Vec<f64> = (0..b.n_paths())
        .map(|i| (s[[i, k + 1]] / s[[i, k]] - 1.0) / (y[[i, k]] * sqrt_dt))
        .collect();
    let (cv, se) = cov_se(&db, &dw);
    assert!(cv.abs() < 4.0 * se, "{cv} ({se})");
}

#[test]
fn conditional_representation_without_correlation() {
    // given the volatility path, the asset is lognormal with variance w_T
    let p = ModelParams::new(100.0, 0.2, 0.5, 0.0, 0.15).unwrap();
    let c = Contract::new(105.0, 1.0, 0.25).unwrap();
    let lev = c.sigma_bar * c.t.sqrt();
    let conf = cfg(128, 100_000, 21);
    let full = mc_tvo_price(&c, &p, &conf).unwrap();
    let x0 = c.x0(&p);
    let cond = mc_expectation(&p, &c, &McConfig { seed: 22, ..conf }, |e| {
        lev * c.k * c_value(x0, e.w_t) / e.w_t.sqrt()
    })
    .unwrap();
    let se = (full.std_err.unwrap().powi(2) + cond.std_err.powi(2)).sqrt();
    assert!(
        (full.price - cond.mean).abs() < 3.0 * se,
        "{} vs {}",
        full.price,
        cond.mean
    );
}

#[test]
fn brownian_vanilla_matches_expansion() {
    let p = ModelParams::new(100.0, 0.2, 0.1, -0.5, 0.5).unwrap();
    let c = Contract::new(100.0, 1.0, 0.2).unwrap();
    let mc = mc_vanilla_price(&c, &p, &cfg(252, 200_000, 8)).unwrap();
    let approx = vanilla_svve_price(&c, &p).unwrap().price;
    let se = mc.std_err.unwrap();
    assert!(
        (mc.price - approx).abs() < 3.0 * se,
        "{} vs {approx} (se {se})",
        mc.price
    );

    let p = ModelParams { nu: 0.05, ..p };
    let mc = mc_vanilla_price(&c, &p, &cfg(252, 100_000, 8)).unwrap();
    let approx = vanilla_svve_price(&c, &p).unwrap().price;
    let tol = (0.01 * approx).max(3.0 * mc.std_err.unwrap());
    assert!((mc.price - approx).abs() < tol);
}

#[test]
fn discretization_bias_is_within_noise() {
    let p = ModelParams::new(100.0, 0.1, 0.1, -0.7, 0.3).unwrap();
    let c = Contract::new(100.0, 0.5, 0.3).unwrap();
    let coarse = mc_tvo_price(&c, &p, &cfg(1000, 20_000, 41)).unwrap();
    let fine = mc_tvo_price(&c, &p, &cfg(2000, 20_000, 42)).unwrap();
    let se = (coarse.std_err.unwrap().powi(2) + fine.std_err.unwrap().powi(2)).sqrt();
    assert!((coarse.price - fine.price).abs() < 3.0 * se);
}

#[test]
fn seed_determinism_on_fine_grid() {
    let p = ModelParams::new(100.0, 0.1, 0.3, 0.8, 0.2).unwrap();
    let c = Contract::new(100.0, 0.33, 0.1).unwrap();
    let conf = cfg(1000, 5_000, 77);
    let a = mc_tvo_price(&c, &p, &conf).unwrap();
    let b = mc_tvo_price(&c, &p, &conf).unwrap();
    assert_eq!(a.price.to_bits(), b.price.to_bits());
    assert_eq!(a.std_err, b.std_err);
}

#[test]
fn path_dump_round_trips_through_csv() {
    let p = ModelParams::new(100.0, 0.2, 0.3, -0.4, 0.3).unwrap();
    let c = Contract::new(100.0, 0.5, 0.2).unwrap();
    let b = simulate_fsabr(&p, &c, &cfg(4, 3, 2)).unwrap();
    let mut buf = Vec::new();
    b.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "path_id,t,B,BH,Y,S,w");
    assert_eq!(lines.len(), 1 + 3 * 5);
    let last: Vec<f64> = lines[15].split(',').map(|x| x.parse().unwrap()).collect();
    assert_eq!(last[0], 2.0);
    assert_eq!(last[5], b.s.as_ref().unwrap()[[2, 4]]);
    assert_eq!(last[6], b.w.as_ref().unwrap()[[2, 4]]);
}
