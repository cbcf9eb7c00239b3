#![allow(dead_code)]

use std::result::Result;
use std::sync::Arc;

use gldmfg::*;
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

/// Deformed exponential straight from its definition.
pub fn exp_q_naive(z: f64, q: f64) -> f64 {
    if q == 1.0 {
        return z.exp();
    }
    let base = 1.0 + (1.0 - q) * z;
    if base <= 0.0 {
        0.0
    } else {
        base.powf(1.0 / (1.0 - q))
    }
}

/// One explicit step of the discrete logit dynamic for a single type,
/// evaluated with three nested loops.
pub fn naive_transport(mu: &[f64], w: &[f64], q: f64, eta: f64, dx: f64, dt: f64) -> Vec<f64> {
    let n = mu.len();
    let e = |a: usize, b: usize| exp_q_naive((w[a] - w[b]) / eta, q);
    let kernel = |m: usize, l: usize| {
        let mut d = 0.0;
        for o in 0..n {
            d += e(o, l) * dx;
        }
        e(m, l) / d
    };
    (0..n)
        .map(|l| {
            let mut inflow = 0.0;
            let mut outflow = 0.0;
            for m in 0..n {
                inflow += kernel(l, m).powf(q) * mu[m] * dx;
                outflow += kernel(m, l).powf(q) * dx;
            }
            mu[l] + dt * (inflow - outflow * mu[l])
        })
        .collect()
}

/// Logit choice probabilities at `q = 1`.
pub fn classical_logit(u: &[f64], eta: f64, dx: f64) -> Vec<f64> {
    let z: f64 = u.iter().map(|v| (v / eta).exp() * dx).sum();
    u.iter().map(|v| (v / eta).exp() / z).collect()
}

pub fn params(q: f64, eta: f64) -> TsallisParams {
    TsallisParams::new(q, eta).unwrap()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Mean-field dependent utility with `|U| <= bound`:
/// `U_i(x) = bound * tanh(a_i x + b_i + c_i * A_{1-i})` style couplings.
pub fn random_utility(bound: f64, coef: Vec<[f64; 3]>, nonneg: bool) -> Arc<GenericUtility> {
    let n = coef.len();
    let coef = Arc::new(coef);
    let c = coef.clone();
    Arc::new(
        GenericUtility::new(
            "random",
            n,
            bound,
            |j, x| 1.0 + (j as f64 + 1.0) * x,
            move |i, x, agg| {
                let [a, b, k] = c[i];
                let s: f64 = agg.iter().sum();
                let t = (a * x + b + k * s).tanh();
                if nonneg {
                    bound * 0.5 * (1.0 + t)
                } else {
                    bound * t
                }
            },
        )
        .with_nonnegative(nonneg),
    )
}

/// A small random configuration with an admissible utility and `dt` inside
/// the guaranteed limits.
#[derive(Debug, Clone)]
pub struct SmallCase {
    pub n_x: usize,
    pub q: f64,
    pub eta: f64,
    pub bound: f64,
    pub delta: f64,
    pub horizon: f64,
    pub masses: Vec<f64>,
    pub coef: Vec<[f64; 3]>,
    pub init: Vec<Vec<f64>>,
    pub nonneg: bool,
}

pub fn small_case() -> impl Strategy<Value = SmallCase> {
    (
        2usize..=16,
        1usize..=2,
        0.6f64..1.4,
        0.05f64..1.0,
        1.2f64..3.0,
        0.2f64..5.0,
        0.5f64..3.0,
        any::<bool>(),
    )
        .prop_flat_map(|(n_x, n_types, q, bound, slack, delta, horizon, nonneg)| {
            let coef = prop::collection::vec(
                (-3.0f64..3.0, -1.0f64..1.0, -2.0f64..2.0).prop_map(|(a, b, c)| [a, b, c]),
                n_types,
            );
            let init = prop::collection::vec(prop::collection::vec(0.0f64..1.0, n_x), n_types);
            let split = 0.1f64..0.9;
            (coef, init, split).prop_map(move |(coef, init, split)| {
                let masses = if n_types == 1 { vec![1.0] } else { vec![split, 1.0 - split] };
                let eta = bound * (2.0 * (1.0 - q).abs() * slack).max(1.0);
                SmallCase {
                    n_x,
                    q,
                    eta,
                    bound,
                    delta,
                    horizon,
                    masses,
                    coef,
                    init,
                    nonneg,
                }
            })
        })
}

pub struct Built {
    grid: GridSpec,
    pops: PopulationSpec,
    model: Arc<GenericUtility>,
    params: TsallisParams,
    init: TypeSlices,
}

pub fn build(c: &SmallCase) -> Built {
    let params = params(c.q, c.eta);
    let model = random_utility(c.bound, c.coef.clone(), c.nonneg);
    let limits = cfl_limits(model.as_ref(), &params, c.delta);
    let dt_max = limits.combined().expect("eta is large enough for a guaranteed step");
    let n_t = (c.horizon / (0.9 * dt_max)).ceil().max(2.0) as usize;
    let grid = make_grid(c.n_x, n_t, c.horizon).unwrap();
    assert!(grid.dt() <= dt_max);
    let pops = PopulationSpec::new(c.masses.clone()).unwrap();
    // Random nonnegative shape with at least one positive cell.
    let init: TypeSlices = c
        .init
        .iter()
        .zip(&c.masses)
        .map(|(w, m)| {
            let mut w: Vec<f64> = w.clone();
            w[0] += 1e-3;
            let s: f64 = w.iter().sum();
            w.iter().map(|v| v * m / s).collect()
        })
        .collect();
    Built { grid, pops, model, params, init }
}

/// Runs GLD and MFG on one small case and checks positivity, value bounds
/// and mass.
fn fail(e: Error) -> TestCaseError {
    TestCaseError::fail(e.to_string())
}

pub fn check_small_case(c: &SmallCase) -> Result<(), TestCaseError> {
    let b = build(c);
    prop_assert!(assumption2_holds(b.model.as_ref(), &b.params));

    // Logit dynamic over the whole horizon.
    let mut mu = b.init.clone();
    for _ in 0..b.grid.n_t() {
        let u = eval_utility_grid(b.model.as_ref(), &mu, &b.grid).map_err(fail)?;
        for s in &u {
            prop_assert!(s.iter().all(|v| v.abs() <= c.bound));
        }
        mu = gld_step(&mu, &u, &b.params, &b.grid).map_err(fail)?;
        prop_assert!(mu.iter().flatten().all(|&v| v >= 0.0));
        for (s, m) in mu.iter().zip(&c.masses) {
            prop_assert!((s.iter().sum::<f64>() - m).abs() < 1e-12);
        }
    }

    // Mean field game.
    let mut cfg = MfgConfig::new(b.params, b.grid, b.pops.clone(), b.model.clone(), c.delta).map_err(fail)?;
    prop_assert!(cfg.strict_cfl);
    cfg.iter_tol = 1e-9;
    cfg.max_iters = 2000;
    let sol = solve_mfg(&cfg, &b.init).map_err(fail)?;
    prop_assert!(sol.density.0.as_slice().iter().all(|&v| v >= 0.0));
    let (lo, hi) = sol.value.range();
    let floor = if c.nonneg { 0.0 } else { -c.bound };
    let slack = 1e-9 * c.bound.max(1.0);
    prop_assert!(lo >= floor - slack && hi <= c.bound + slack, "{lo} {hi}");
    prop_assert!(sol.density.max_mass_defect(&b.pops) < 1e-12);
    Ok(())
}
