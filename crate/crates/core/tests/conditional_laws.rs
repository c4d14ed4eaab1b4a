mod common;

use common::*;
use fsabr::fbm::{FbmSampler, HurstParams, Scheme, TimeGrid};
use fsabr::identities::{cond_ito_integral, cond_moment_bh};
use fsabr::pricers::{lemma41_e_y_y2, ModelParams};

const BINS: usize = 20;

#[test]
fn conditional_moments_given_terminal_brownian_value() {
    let horizon = 1.0;
    let grid = TimeGrid::new(horizon, 64).unwrap();
    for h in [0.1, 0.35] {
        let hp = HurstParams::new(h).unwrap();
        let sampler = FbmSampler::new(&hp, &grid, Scheme::Cholesky).unwrap();
        let node = 40;
        let t = grid.node(node);
        let s = conditional_sample(&sampler, node, 31, 60_000);
        for k in [1u32, 2, 3] {
            let resid: Vec<f64> = s
                .b_t
                .iter()
                .zip(&s.bh_k)
                .map(|(&b, &x)| x.powi(k as i32) - cond_moment_bh(k, t, horizon, b, &hp).unwrap())
                .collect();
            let z = worst_binned_z(&s.b_t, &resid, BINS);
            assert!(z < 4.0, "H={h} k={k}: worst bin at {z} SE");
        }
    }
}

#[test]
fn conditional_ito_integrals_given_terminal_brownian_value() {
    let horizon = 0.8;
    let grid = TimeGrid::new(horizon, 256).unwrap();
    // at H = 1/2 the O(1/n) bias of the left-point sum exceeds the sampling noise
    for h in [0.3, 0.7] {
        let hp = HurstParams::new(h).unwrap();
        let sampler = FbmSampler::new(&hp, &grid, Scheme::Cholesky).unwrap();
        let s = conditional_sample(&sampler, 1, 32, 60_000);
        for (k, ito) in [(1u32, &s.ito1), (2, &s.ito2)] {
            let resid: Vec<f64> = s
                .b_t
                .iter()
                .zip(ito.iter())
                .map(|(&b, &x)| x - cond_ito_integral(k, horizon, b, &hp).unwrap())
                .collect();
            let z = worst_binned_z(&s.b_t, &resid, BINS);
            assert!(z < 4.0, "H={h} k={k}: worst bin at {z} SE");
        }
    }
}

#[test]
fn conditional_time_integral_of_the_square() {
    let horizon = 1.2;
    let grid = TimeGrid::new(horizon, 256).unwrap();
    let h = 0.2;
    let hp = HurstParams::new(h).unwrap();
    let kappa = hp.kappa_h();
    let sampler = FbmSampler::new(&hp, &grid, Scheme::Cholesky).unwrap();
    let s = conditional_sample(&sampler, 1, 33, 50_000);
    // the mean part contributes κ² T^{2H} (B_T² - T)/(2H+2) besides the variance part
    let resid: Vec<f64> = s
        .b_t
        .iter()
        .zip(&s.time2)
        .map(|(&b, &x)| {
            x - horizon.powf(2.0 * h + 1.0) / (2.0 * h + 1.0)
                - kappa * kappa * horizon.powf(2.0 * h) * (b * b - horizon) / (2.0 * h + 2.0)
        })
        .collect();
    let z = worst_binned_z(&s.b_t, &resid, BINS);
    assert!(z < 4.0, "worst bin at {z} SE");
}

#[test]
fn volatility_cross_moment_against_simulation() {
    let p = ModelParams::new(100.0, 0.2, 0.3, 0.0, 0.2).unwrap();
    let hp = p.hurst().unwrap();
    let grid = TimeGrid::new(1.0, 10).unwrap();
    let sampler = FbmSampler::new(&hp, &grid, Scheme::Cholesky).unwrap();
    let vals: Vec<f64> = sampler
        .map_blocks(17, 100_000, false, false, |b| {
            (0..b.bh.nrows())
                .map(|i| {
                    let y_tau = p.y0 * (p.nu * b.bh[[i, 2]]).exp();
                    let y_r = p.y0 * (p.nu * b.bh[[i, 6]]).exp();
                    y_tau * y_r * y_r
                })
                .collect::<Vec<_>>()
        })
        .concat();
    let (m, se) = mean_se(&vals);
    let want = lemma41_e_y_y2(&p, 0.3, 0.7).unwrap();
    assert!((m - want).abs() < 4.0 * se, "{m} vs {want} (se {se})");
}
