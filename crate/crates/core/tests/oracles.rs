mod common;

use common::*;
use gldmfg::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_masses(rng: &mut ChaCha8Rng, n: usize, total: f64) -> Vec<f64> {
    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
    let s: f64 = raw.iter().sum();
    raw.iter().map(|v| v * total / s).collect()
}

#[test]
fn gld_step_matches_triple_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for &q in &[0.5, 0.8, 1.0, 1.2, 1.5] {
        let eta = 2.0;
        let grid = make_grid(8, 200, 1.0).unwrap();
        let mu = vec![random_masses(&mut rng, 8, 0.6), random_masses(&mut rng, 8, 0.4)];
        let u: Vec<Vec<f64>> = (0..2)
            .map(|_| (0..8).map(|_| rng.gen_range(-0.5..0.5)).collect())
            .collect();
        let got = gld_step(&mu, &u, &params(q, eta), &grid).unwrap();
        for i in 0..2 {
            let want = naive_transport(&mu[i], &u[i], q, eta, grid.dx(), grid.dt());
            let err = max_abs_diff(&got[i], &want);
            assert!(err <= 1e-14, "q={q} type {i}: {err:e}");
        }
    }
}

#[test]
fn fp_step_matches_triple_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for &q in &[0.7, 1.0, 1.3] {
        let eta = 1.5;
        let grid = make_grid(8, 100, 1.0).unwrap();
        let mu = random_masses(&mut rng, 8, 1.0);
        let phi: Vec<f64> = (0..8).map(|_| rng.gen_range(-0.4..0.4)).collect();
        let p = params(q, eta);
        let kernel = optimal_control_kernel(&phi, &p, &grid).unwrap();
        let got = fp_forward_step(&mu, &kernel, &p, &grid).unwrap();
        let want = naive_transport(&mu, &phi, q, eta, grid.dx(), grid.dt());
        assert!(max_abs_diff(&got, &want) <= 1e-14);
    }
}

#[test]
fn classical_kernel_is_softmax_logit() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let grid = make_grid(16, 1, 1.0).unwrap();
    let u: Vec<f64> = (0..16).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let eta = 0.3;
    let k = gld_transition_kernel(&u, &params(1.0, eta), &grid).unwrap();
    let logit = classical_logit(&u, eta, grid.dx());
    for (m, want) in logit.iter().enumerate() {
        for l in 0..16 {
            assert!((k.get(m, l) - want).abs() <= 1e-12 * want.max(1.0));
        }
    }
}

#[test]
fn exp_q_matches_definition() {
    for &q in &[0.25, 0.5, 0.8, 0.9, 1.1, 1.5, 2.0] {
        for i in -20..=20 {
            let z = i as f64 * 0.1;
            let p = params(q, 1.0);
            match exp_q(z, &p) {
                Ok(v) => {
                    let w = exp_q_naive(z, q);
                    assert!((v - w).abs() <= 1e-14 * w.max(1.0), "q={q} z={z}: {v} vs {w}");
                }
                Err(_) => assert!(q > 1.0 && 1.0 + (1.0 - q) * z <= 0.0),
            }
        }
    }
}

#[test]
fn hjb_step_matches_definition() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let grid = make_grid(8, 100, 1.0).unwrap();
    let (q, eta, delta) = (0.8, 0.5, 2.0);
    let phi: Vec<f64> = (0..8).map(|_| rng.gen_range(0.0..0.5)).collect();
    let u: Vec<f64> = (0..8).map(|_| rng.gen_range(0.0..0.5)).collect();
    let got = hjb_backward_step(&phi, &u, &params(q, eta), delta, &grid).unwrap();
    for l in 0..8 {
        let s: f64 = (0..8).map(|m| exp_q_naive((phi[m] - phi[l]) / eta, q) * grid.dx()).sum();
        let h = eta * (s.powf(1.0 - q) - 1.0) / (1.0 - q);
        let want = phi[l] + grid.dt() * (h - delta * phi[l] + delta * u[l]);
        assert!((got[l] - want).abs() <= 1e-14, "{l}");
    }
}
