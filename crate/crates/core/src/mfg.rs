//! Discounted mean-field game: explicit backward HJB sweep, closed-form
//! control, explicit forward Fokker-Planck sweep, coupled by a relaxed
//! alternating fixed-point iteration.

use std::sync::Arc;

use log::{debug, warn};

use crate::error::{Error, Result};
use crate::gld::{assumption2_holds, check_nonnegative, check_positivity_step, positivity_bound};
use crate::grid::{DensityField, GridSpec, PopulationSpec, TimeField, TypeSlices, ValueField};
use crate::kernel::{partition_sums, softmax_kernel, TransitionKernel, Transport};
use crate::tsallis::{ln_q_unchecked, TsallisParams};
use crate::utility::{UtilityGrid, UtilityModel};

pub const DEFAULT_RELAXATION: f64 = 0.5;
pub const DEFAULT_ITER_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITERS: usize = 200;

/// Relative slack on the `Phi` range assertion.
const VALUE_SLACK: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct MfgConfig {
    pub params: TsallisParams,
    pub grid: GridSpec,
    pub pops: PopulationSpec,
    pub model: Arc<dyn UtilityModel>,
    /// Discount rate; the utility weight equals it.
    pub delta: f64,
    pub relaxation: f64,
    pub iter_tol: f64,
    pub max_iters: usize,
    pub strict_cfl: bool,
    pub parallel: bool,
}

impl MfgConfig {
    pub fn new(
        params: TsallisParams,
        grid: GridSpec,
        pops: PopulationSpec,
        model: Arc<dyn UtilityModel>,
        delta: f64,
    ) -> Result<Self> {
        let strict_cfl = crate::gld::default_strict_cfl(model.as_ref(), &params);
        let config = Self {
            params,
            grid,
            pops,
            model,
            delta,
            relaxation: DEFAULT_RELAXATION,
            iter_tol: DEFAULT_ITER_TOL,
            max_iters: DEFAULT_MAX_ITERS,
            strict_cfl,
            parallel: false,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "delta must be positive, got {}",
                self.delta
            )));
        }
        if !(self.relaxation > 0.0 && self.relaxation <= 1.0) {
            return Err(Error::InvalidParams(format!(
                "relaxation must lie in (0, 1], got {}",
                self.relaxation
            )));
        }
        if !(self.iter_tol > 0.0) {
            return Err(Error::InvalidParams(format!(
                "iter_tol must be positive, got {}",
                self.iter_tol
            )));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidParams("max_iters must be positive".into()));
        }
        if self.pops.n_types() != self.model.n_types() {
            return Err(Error::ShapeMismatch {
                left: self.pops.n_types(),
                right: self.model.n_types(),
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct IterationLog {
    pub residuals: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

impl IterationLog {
    /// Least-squares slope of `log10(eps_r)` against `r` (1-based).
    pub fn log10_slope(&self) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self
            .residuals
            .iter()
            .enumerate()
            .filter(|(_, e)| **e > 0.0)
            .map(|(r, e)| ((r + 1) as f64, e.log10()))
            .collect();
        crate::experiments::least_squares(&pts).map(|(slope, _)| slope)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CflLimits {
    /// Bound keeping `Phi` within the utility range.
    pub dt_hjb: f64,
    /// Bound keeping `mu` nonnegative; `None` when no step is guaranteed.
    pub dt_fp: Option<f64>,
    pub assumption2_ok: bool,
}

impl CflLimits {
    pub fn combined(&self) -> Option<f64> {
        self.dt_fp.map(|b| b.min(self.dt_hjb))
    }
}

pub fn cfl_limits(model: &dyn UtilityModel, params: &TsallisParams, delta: f64) -> CflLimits {
    CflLimits {
        dt_hjb: 1.0 / (1.0 + delta),
        dt_fp: positivity_bound(model, params),
        assumption2_ok: assumption2_holds(model, params),
    }
}

/// `Phi_k` from `Phi_{k+1}` and `U_k` for one type.
pub fn hjb_backward_step(
    phi_next: &[f64],
    u: &[f64],
    params: &TsallisParams,
    delta: f64,
    grid: &GridSpec,
) -> Result<Vec<f64>> {
    if phi_next.len() != grid.n_x() || u.len() != grid.n_x() {
        return Err(Error::ShapeMismatch {
            left: phi_next.len().max(u.len()),
            right: grid.n_x(),
        });
    }
    let mut sums = vec![0.0; grid.n_x()];
    let mut out = vec![0.0; grid.n_x()];
    hjb_into(phi_next, u, params, delta, grid.dx(), grid.dt(), &mut sums, &mut out, false)?;
    if let Some(cell) = out.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteValue { type_index: 0, cell });
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn hjb_into(
    phi_next: &[f64],
    u: &[f64],
    params: &TsallisParams,
    delta: f64,
    dx: f64,
    dt: f64,
    sums: &mut [f64],
    out: &mut [f64],
    parallel: bool,
) -> Result<()> {
    partition_sums(params, phi_next, sums, parallel)?;
    let eta = params.eta();
    let q = params.q();
    for l in 0..out.len() {
        let h = eta * ln_q_unchecked(sums[l] * dx, q);
        out[l] = phi_next[l] + dt * (h - delta * phi_next[l] + delta * u[l]);
    }
    Ok(())
}

/// `phi*[m][l]` for one type's value slice.
pub fn optimal_control_kernel(
    phi: &[f64],
    params: &TsallisParams,
    grid: &GridSpec,
) -> Result<TransitionKernel> {
    if phi.len() != grid.n_x() {
        return Err(Error::ShapeMismatch {
            left: phi.len(),
            right: grid.n_x(),
        });
    }
    softmax_kernel(params, phi, grid.dx())
}

/// One forward step of the Fokker-Planck equation under a materialized
/// control kernel.
pub fn fp_forward_step(
    mu: &[f64],
    kernel: &TransitionKernel,
    params: &TsallisParams,
    grid: &GridSpec,
) -> Result<Vec<f64>> {
    let n = grid.n_x();
    if mu.len() != n || kernel.n() != n {
        return Err(Error::ShapeMismatch {
            left: mu.len().max(kernel.n()),
            right: n,
        });
    }
    let q = params.q();
    let pq = |v: f64| if q == 1.0 { v } else { v.powf(q) };
    let dx = grid.dx();
    let dt = grid.dt();
    let mut rate = vec![0.0; n];
    let mut inflow = vec![0.0; n];
    for (a, row) in kernel.rows().enumerate() {
        for (b, &v) in row.iter().enumerate() {
            let w = pq(v);
            rate[b] += w * dx;
            inflow[a] += w * mu[b] * dx;
        }
    }
    let out: Vec<f64> = (0..n)
        .map(|l| mu[l] * (1.0 - dt * rate[l]) + dt * inflow[l])
        .collect();
    check_nonnegative(0, &out)?;
    Ok(out)
}

/// Index of the `t = T/2` level (`n_t / 2`, rounded down when `n_t` is odd).
pub fn turnpike_index(grid: &GridSpec) -> usize {
    grid.n_t() / 2
}

/// Per-type slices at `t = T/2`.
pub fn extract_turnpike_slice(field: &TimeField, grid: &GridSpec) -> TypeSlices {
    field.level(turnpike_index(grid))
}

#[derive(Debug, Clone)]
pub struct MfgSolution {
    pub density: DensityField,
    pub value: ValueField,
    pub log: IterationLog,
    pub limits: CflLimits,
}

impl MfgSolution {
    pub fn turnpike_density(&self, grid: &GridSpec) -> TypeSlices {
        extract_turnpike_slice(&self.density.0, grid)
    }
}

/// Runs the relaxed alternating iteration from the default initial guess
/// (`mu` constant in time, `Phi = 0`).
pub fn solve_mfg(config: &MfgConfig, init: &[Vec<f64>]) -> Result<MfgSolution> {
    let guess_mu = DensityField(TimeField::constant_in_time(&init.to_vec(), &config.grid));
    let guess_phi = ValueField(TimeField::zeros(init.len(), &config.grid));
    solve_mfg_from(config, init, guess_mu, guess_phi)
}

/// As [`solve_mfg`], starting from the supplied iterate.
pub fn solve_mfg_from(
    config: &MfgConfig,
    init: &[Vec<f64>],
    guess_mu: DensityField,
    guess_phi: ValueField,
) -> Result<MfgSolution> {
    config.validate()?;
    let grid = &config.grid;
    let n = grid.n_x();
    let n_types = config.model.n_types();
    if init.len() != n_types {
        return Err(Error::ShapeMismatch {
            left: init.len(),
            right: n_types,
        });
    }
    for (i, s) in init.iter().enumerate() {
        if s.len() != n {
            return Err(Error::ShapeMismatch { left: s.len(), right: n });
        }
        check_nonnegative(i, s)?;
    }
    let expected = (n_types, grid.n_t() + 1, n);
    for f in [&guess_mu.0, &guess_phi.0] {
        if (f.n_types(), f.n_levels(), f.n_x()) != expected {
            return Err(Error::ShapeMismatch {
                left: f.as_slice().len(),
                right: n_types * (grid.n_t() + 1) * n,
            });
        }
    }

    let model = config.model.as_ref();
    let limits = cfl_limits(model, &config.params, config.delta);
    let dt = grid.dt();
    if dt > limits.dt_hjb {
        if config.strict_cfl {
            return Err(Error::CflViolation {
                dt,
                bound: limits.dt_hjb,
            });
        }
        warn!("mfg: dt = {dt} exceeds the value bound {}", limits.dt_hjb);
    }
    check_positivity_step(dt, limits.dt_fp, config.strict_cfl, "mfg")?;

    let mut sweeper = Sweeper::new(config);
    let mut old_mu = guess_mu.0;
    let mut old_phi = guess_phi.0;
    let mut new_mu = TimeField::zeros(n_types, grid);
    let mut new_phi = TimeField::zeros(n_types, grid);
    let mut log = IterationLog::default();
    let mut bound_warned = false;

    for r in 1..=config.max_iters {
        sweeper.backward(&old_mu, &mut new_phi)?;
        if let Some(err) = sweeper.value_bound_violation(&new_phi, dt <= limits.dt_hjb) {
            if config.strict_cfl {
                return Err(err);
            }
            if !bound_warned {
                warn!("mfg: {err}");
                bound_warned = true;
            }
        }
        sweeper.forward(init, &new_phi, &mut new_mu)?;

        let eps = max_abs_diff(new_phi.as_slice(), old_phi.as_slice())
            .max(max_abs_diff(new_mu.as_slice(), old_mu.as_slice()));
        log.residuals.push(eps);
        log.iterations = r;
        debug!("mfg iteration {r}: eps = {eps:e}");

        if eps <= config.iter_tol {
            log.converged = true;
            return Ok(MfgSolution {
                density: DensityField(new_mu),
                value: ValueField(new_phi),
                log,
                limits,
            });
        }
        relax(old_phi.as_mut_slice(), new_phi.as_slice(), config.relaxation);
        relax(old_mu.as_mut_slice(), new_mu.as_slice(), config.relaxation);
    }
    Err(Error::NotConverged {
        iterations: log.iterations,
        residual: log.residuals.last().copied().unwrap_or(f64::INFINITY),
        history: log.residuals,
    })
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// `old <- s * new + (1 - s) * old`.
fn relax(old: &mut [f64], new: &[f64], s: f64) {
    for (o, &v) in old.iter_mut().zip(new) {
        *o = s * v + (1.0 - s) * *o;
    }
}

/// Scratch state for the two sweeps.
struct Sweeper<'a> {
    config: &'a MfgConfig,
    evaluator: UtilityGrid,
    transport: Transport,
    level: TypeSlices,
    u: TypeSlices,
    sums: Vec<f64>,
}

impl<'a> Sweeper<'a> {
    fn new(config: &'a MfgConfig) -> Self {
        let n = config.grid.n_x();
        let n_types = config.model.n_types();
        Self {
            config,
            evaluator: UtilityGrid::new(config.model.as_ref(), &config.grid),
            transport: Transport::new(n),
            level: vec![vec![0.0; n]; n_types],
            u: vec![vec![0.0; n]; n_types],
            sums: vec![0.0; n],
        }
    }

    /// Fills `phi` from the terminal condition down to `k = 0`, with
    /// utilities from the densities in `mu`.
    fn backward(&mut self, mu: &TimeField, phi: &mut TimeField) -> Result<()> {
        let c = self.config;
        let grid = &c.grid;
        let n = grid.n_x();
        let n_t = grid.n_t();
        let mut next = vec![0.0; n];
        let mut cur = vec![0.0; n];
        for i in 0..mu.n_types() {
            phi.slice_mut(i, n_t).fill(0.0);
        }
        for k in (0..n_t).rev() {
            for (i, s) in self.level.iter_mut().enumerate() {
                s.copy_from_slice(mu.slice(i, k));
            }
            self.evaluator
                .eval_into(c.model.as_ref(), &self.level, &mut self.u)?;
            for i in 0..mu.n_types() {
                next.copy_from_slice(phi.slice(i, k + 1));
                hjb_into(
                    &next,
                    &self.u[i],
                    &c.params,
                    c.delta,
                    grid.dx(),
                    grid.dt(),
                    &mut self.sums,
                    &mut cur,
                    c.parallel,
                )?;
                if let Some(cell) = cur.iter().position(|v| !v.is_finite()) {
                    return Err(Error::NonFiniteValue { type_index: i, cell });
                }
                phi.slice_mut(i, k).copy_from_slice(&cur);
            }
        }
        Ok(())
    }

    /// Fills `mu` forward from `init`, with controls from `phi`.
    fn forward(&mut self, init: &[Vec<f64>], phi: &TimeField, mu: &mut TimeField) -> Result<()> {
        let c = self.config;
        let grid = &c.grid;
        let n = grid.n_x();
        let mut cur = vec![0.0; n];
        let mut out = vec![0.0; n];
        for (i, s) in init.iter().enumerate() {
            mu.slice_mut(i, 0).copy_from_slice(s);
            cur.copy_from_slice(s);
            for k in 0..grid.n_t() {
                self.transport.step(
                    &c.params,
                    phi.slice(i, k),
                    &cur,
                    grid.dx(),
                    grid.dt(),
                    &mut out,
                    c.parallel,
                )?;
                check_nonnegative(i, &out)?;
                mu.slice_mut(i, k + 1).copy_from_slice(&out);
                std::mem::swap(&mut cur, &mut out);
            }
        }
        Ok(())
    }

    /// `Phi` must stay in `[0, L]` for nonnegative utilities, `[-L, L]`
    /// otherwise. Only checked when the step bound guarantees it.
    fn value_bound_violation(&self, phi: &TimeField, guaranteed: bool) -> Option<Error> {
        if !guaranteed {
            return None;
        }
        let model = self.config.model.as_ref();
        let upper = model.bound();
        let lower = if model.nonnegative() { 0.0 } else { -upper };
        let slack = VALUE_SLACK * upper.max(1.0);
        for i in 0..phi.n_types() {
            for k in 0..phi.n_levels() {
                let s = phi.slice(i, k);
                if let Some(cell) = s.iter().position(|&v| v < lower - slack || v > upper + slack) {
                    return Some(Error::ValueBoundViolated {
                        type_index: i,
                        step: k,
                        cell,
                        value: s[cell],
                        lower,
                        upper,
                    });
                }
            }
        }
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{init_density, make_grid, InitProfile};
    use crate::tsallis::exp_q;
    use crate::utility::PolynomialUtility;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};

    fn p(q: f64, eta: f64) -> TsallisParams {
        TsallisParams::new(q, eta).unwrap()
    }

    /// Verbatim triple loop over the discrete Fokker-Planck update.
    fn naive_fp(mu: &[f64], phi: &[f64], q: f64, eta: f64, dx: f64, dt: f64) -> Vec<f64> {
        let params = p(q, eta);
        let n = mu.len();
        let e = |a: usize, b: usize| exp_q((phi[a] - phi[b]) / eta, &params).unwrap();
        let k = |m: usize, l: usize| {
            let mut d = 0.0;
            for o in 0..n {
                d += e(o, l) * dx;
            }
            e(m, l) / d
        };
        (0..n)
            .map(|l| {
                let mut inflow = 0.0;
                let mut out = 0.0;
                for m in 0..n {
                    inflow += k(l, m).powf(q) * mu[m] * dx;
                    out += k(m, l).powf(q) * dx;
                }
                mu[l] + dt * (inflow - out * mu[l])
            })
            .collect()
    }

    #[test]
    fn cfl_examples() {
        let model = PolynomialUtility::constant(1.0, 1);
        let lim = cfl_limits(&model, &p(1.0, 2.0), 1.0);
        assert_eq!(lim.dt_hjb, 0.5);
        assert_relative_eq!(lim.dt_fp.unwrap(), (-2.0f64).exp(), max_relative = 1e-14);
        assert!(lim.assumption2_ok);
    }

    #[test]
    fn hjb_fixed_point_and_terminal_step() {
        let grid = make_grid(7, 100, 1.0).unwrap();
        let params = p(0.8, 0.01);
        let out = hjb_backward_step(&[0.4; 7], &[0.4; 7], &params, 2.0, &grid).unwrap();
        for v in out {
            assert_relative_eq!(v, 0.4, epsilon = 1e-15);
        }
        let out = hjb_backward_step(&[0.0; 7], &[0.3; 7], &params, 2.0, &grid).unwrap();
        for v in out {
            assert_relative_eq!(v, 2.0 * grid.dt() * 0.3, epsilon = 1e-15);
        }
    }

    #[test]
    fn control_kernel_columns() {
        let grid = make_grid(9, 1, 1.0).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let phi: Vec<f64> = (0..9).map(|_| rng.gen_range(0.0..0.05)).collect();
        let k = optimal_control_kernel(&phi, &p(0.8, 0.01), &grid).unwrap();
        for m in k.column_masses(grid.dx()) {
            assert!((m - 1.0).abs() < 1e-13);
        }
        let k = optimal_control_kernel(&[0.2; 9], &p(0.8, 0.01), &grid).unwrap();
        assert!(k.rows().flatten().all(|&v| (v - 1.0).abs() < 1e-15));
    }

    #[test]
    fn fp_step_matches_oracle_and_fast_path() {
        let grid = make_grid(8, 50, 1.0).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        for q in [0.8, 1.0, 0.5] {
            let params = p(q, 0.05);
            let phi: Vec<f64> = (0..8).map(|_| rng.gen_range(0.0..0.02)).collect();
            let raw: Vec<f64> = (0..8).map(|_| rng.gen::<f64>()).collect();
            let s: f64 = raw.iter().sum();
            let mu: Vec<f64> = raw.iter().map(|v| 0.7 * v / s).collect();
            let slow = naive_fp(&mu, &phi, q, 0.05, grid.dx(), grid.dt());
            let k = optimal_control_kernel(&phi, &params, &grid).unwrap();
            let api = fp_forward_step(&mu, &k, &params, &grid).unwrap();
            let mut fast = vec![0.0; 8];
            Transport::new(8)
                .step(&params, &phi, &mu, grid.dx(), grid.dt(), &mut fast, false)
                .unwrap();
            for l in 0..8 {
                assert!((api[l] - slow[l]).abs() <= 1e-14);
                assert!((fast[l] - slow[l]).abs() <= 1e-14);
            }
        }
    }

    #[test]
    fn uniform_is_fixed_under_flat_control() {
        let grid = make_grid(6, 10, 1.0).unwrap();
        let params = p(0.8, 0.01);
        let k = optimal_control_kernel(&[0.0; 6], &params, &grid).unwrap();
        let mu = vec![0.3 / 6.0; 6];
        let out = fp_forward_step(&mu, &k, &params, &grid).unwrap();
        for (a, b) in out.iter().zip(&mu) {
            assert_relative_eq!(a, b, epsilon = 1e-17);
        }
    }

    #[test]
    fn constant_utility_mfg() {
        let c = 0.6;
        let grid = make_grid(8, 400, 20.0).unwrap();
        let pops = PopulationSpec::new(vec![0.4, 0.6]).unwrap();
        let init = init_density(&grid, &pops, &InitProfile::Uniform).unwrap();
        let model = Arc::new(PolynomialUtility::constant(c, 2));
        let config = MfgConfig::new(p(0.8, 0.05), grid, pops, model, 1.0).unwrap();
        let sol = solve_mfg(&config, &init).unwrap();
        assert!(sol.log.converged);
        let tp = sol.turnpike_density(&grid);
        for (i, s) in tp.iter().enumerate() {
            for v in s {
                assert!((v / grid.dx() - [0.4, 0.6][i]).abs() < 1e-8);
            }
        }
        // Phi approaches c over a few discount times before the horizon
        let k = grid.n_t() / 4;
        for v in sol.value.0.slice(0, k) {
            assert!((v - c).abs() < 1e-3, "{v}");
        }
    }

    #[test]
    fn relaxation_restart_is_idempotent() {
        let grid = make_grid(6, 120, 6.0).unwrap();
        let pops = PopulationSpec::new(vec![1.0]).unwrap();
        let init = init_density(&grid, &pops, &InitProfile::Tilted).unwrap();
        let model = Arc::new(PolynomialUtility::new(vec![vec![0.1, 0.5, -0.3]]).unwrap());
        let mut config = MfgConfig::new(p(1.0, 0.5), grid, pops, model, 1.0).unwrap();
        config.strict_cfl = false;
        let sol = solve_mfg(&config, &init).unwrap();
        config.relaxation = 1.0;
        let again = solve_mfg_from(&config, &init, sol.density, sol.value).unwrap();
        assert_eq!(again.log.iterations, 1);
        assert!(again.log.residuals[0] <= config.iter_tol);
    }

    #[test]
    fn one_iteration_cap_is_not_converged() {
        let grid = make_grid(6, 60, 6.0).unwrap();
        let pops = PopulationSpec::new(vec![1.0]).unwrap();
        let init = init_density(&grid, &pops, &InitProfile::Tilted).unwrap();
        let model = Arc::new(PolynomialUtility::new(vec![vec![0.1, 0.5]]).unwrap());
        let mut config = MfgConfig::new(p(1.0, 0.5), grid, pops, model, 1.0).unwrap();
        config.strict_cfl = false;
        config.max_iters = 1;
        match solve_mfg(&config, &init) {
            Err(Error::NotConverged { iterations, history, .. }) => {
                assert_eq!(iterations, 1);
                assert_eq!(history.len(), 1);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn turnpike_index_rounds_down() {
        assert_eq!(turnpike_index(&make_grid(150, 36000, 240.0).unwrap()), 18000);
        assert_eq!(turnpike_index(&make_grid(3, 7, 1.0).unwrap()), 3);
    }
}
