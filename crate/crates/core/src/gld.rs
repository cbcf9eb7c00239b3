//! Explicit time stepping of the generalized logit dynamic and detection of
//! its stationary state.

use std::sync::Arc;

use log::{debug, warn};

use crate::error::{Error, Result};
use crate::grid::{GridSpec, PopulationSpec, TypeSlices};
use crate::kernel::{softmax_kernel, TransitionKernel, Transport};
use crate::tsallis::{theta_bar, TsallisParams};
use crate::utility::{regularity_constant, UtilityGrid, UtilityModel};

pub const DEFAULT_STATIONARY_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_STEPS: usize = 1_000_000;

/// Largest time step with guaranteed nonnegativity, `1 / theta_bar(L)`.
/// `None` when no such step exists.
pub fn positivity_bound(model: &dyn UtilityModel, params: &TsallisParams) -> Option<f64> {
    let tb = theta_bar(model.bound(), params);
    (tb.is_finite() && tb > 0.0).then(|| 1.0 / tb)
}

/// Whether the margin `1 - 2|1-q| L / eta` is positive for the model's
/// value and Lipschitz constants.
pub fn assumption2_holds(model: &dyn UtilityModel, params: &TsallisParams) -> bool {
    !params.outside_guaranteed_regime(regularity_constant(model))
}

/// Strict guards are on by default only when the sufficient conditions hold.
pub fn default_strict_cfl(model: &dyn UtilityModel, params: &TsallisParams) -> bool {
    assumption2_holds(model, params)
}

/// Checks `dt` against the positivity bound. Strict mode turns a violation
/// (or a missing guarantee) into [`Error::CflViolation`]; otherwise it is
/// logged.
pub(crate) fn check_positivity_step(
    dt: f64,
    bound: Option<f64>,
    strict: bool,
    what: &str,
) -> Result<()> {
    let ok = bound.is_some_and(|b| dt <= b);
    if ok {
        return Ok(());
    }
    let b = bound.unwrap_or(0.0);
    if strict {
        return Err(Error::CflViolation { dt, bound: b });
    }
    match bound {
        Some(b) => warn!("{what}: dt = {dt} exceeds the positivity bound {b}; running unguarded"),
        None => warn!("{what}: no guaranteed time step for these parameters; running unguarded"),
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct GldConfig {
    pub params: TsallisParams,
    pub grid: GridSpec,
    pub pops: PopulationSpec,
    pub model: Arc<dyn UtilityModel>,
    pub stationary_tol: f64,
    pub max_steps: usize,
    pub strict_cfl: bool,
    /// Split kernel work across the rayon pool.
    pub parallel: bool,
    /// Record every `stride`-th level (plus the last); `None` keeps no trajectory.
    pub stride: Option<usize>,
    /// Judge stationarity in the average norm instead of the max norm.
    pub avg_norm: bool,
}

impl GldConfig {
    pub fn new(
        params: TsallisParams,
        grid: GridSpec,
        pops: PopulationSpec,
        model: Arc<dyn UtilityModel>,
    ) -> Result<Self> {
        if pops.n_types() != model.n_types() {
            return Err(Error::ShapeMismatch {
                left: pops.n_types(),
                right: model.n_types(),
            });
        }
        let strict_cfl = default_strict_cfl(model.as_ref(), &params);
        Ok(Self {
            params,
            grid,
            pops,
            model,
            stationary_tol: DEFAULT_STATIONARY_TOL,
            max_steps: DEFAULT_MAX_STEPS,
            strict_cfl,
            parallel: false,
            stride: None,
            avg_norm: false,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.stationary_tol > 0.0) {
            return Err(Error::InvalidParams(format!(
                "stationary_tol must be positive, got {}",
                self.stationary_tol
            )));
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidParams("max_steps must be positive".into()));
        }
        if self.stride == Some(0) {
            return Err(Error::InvalidParams("stride must be positive".into()));
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

/// One recorded time level of a trajectory (cell masses).
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySample {
    pub step: usize,
    pub time: f64,
    pub mu: TypeSlices,
}

#[derive(Debug, Clone)]
pub struct GldSolution {
    /// Cell masses at the stationary level.
    pub stationary: TypeSlices,
    pub steps: usize,
    /// Last successive-step difference on densities.
    pub residual: f64,
    pub trajectory: Vec<TrajectorySample>,
    /// Largest `|sum_l mu_{i,l} - m_i|` seen over all steps.
    pub max_mass_defect: f64,
    pub positivity_bound: Option<f64>,
    pub assumption2_ok: bool,
}

/// `phi_hat[m][l]` for one type's utility slice.
pub fn gld_transition_kernel(
    u: &[f64],
    params: &TsallisParams,
    grid: &GridSpec,
) -> Result<TransitionKernel> {
    if u.len() != grid.n_x() {
        return Err(Error::ShapeMismatch {
            left: u.len(),
            right: grid.n_x(),
        });
    }
    softmax_kernel(params, u, grid.dx())
}

/// Advances every type's cell masses by one explicit step under the given
/// utilities. Fails with [`Error::NonnegativityLost`] if a mass turns
/// negative.
pub fn gld_step(
    mu: &[Vec<f64>],
    u: &[Vec<f64>],
    params: &TsallisParams,
    grid: &GridSpec,
) -> Result<TypeSlices> {
    if mu.len() != u.len() {
        return Err(Error::ShapeMismatch {
            left: mu.len(),
            right: u.len(),
        });
    }
    let n = grid.n_x();
    let mut transport = Transport::new(n);
    let mut out = vec![vec![0.0; n]; mu.len()];
    for (i, ((m, v), o)) in mu.iter().zip(u).zip(out.iter_mut()).enumerate() {
        for s in [m.len(), v.len()] {
            if s != n {
                return Err(Error::ShapeMismatch { left: s, right: n });
            }
        }
        transport.step(params, v, m, grid.dx(), grid.dt(), o, false)?;
        check_nonnegative(i, o)?;
    }
    Ok(out)
}

pub(crate) fn check_nonnegative(type_index: usize, mu: &[f64]) -> Result<()> {
    match mu.iter().position(|&v| !(v >= 0.0)) {
        None => Ok(()),
        Some(cell) if mu[cell].is_nan() => Err(Error::NonFiniteValue { type_index, cell }),
        Some(cell) => Err(Error::NonnegativityLost {
            type_index,
            cell,
            value: mu[cell],
        }),
    }
}

/// Successive-step difference on densities: max over types of the max (or
/// average) cellwise gap, divided by `dx`.
fn step_residual(a: &[Vec<f64>], b: &[Vec<f64>], dx: f64, avg: bool) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let diffs = x.iter().zip(y).map(|(p, q)| (p - q).abs());
            if avg {
                diffs.sum::<f64>() / x.len() as f64
            } else {
                diffs.fold(0.0, f64::max)
            }
        })
        .fold(0.0, f64::max)
        / dx
}

fn mass_defect(mu: &[Vec<f64>], masses: &[f64]) -> f64 {
    mu.iter()
        .zip(masses)
        .map(|(s, m)| (s.iter().sum::<f64>() - m).abs())
        .fold(0.0, f64::max)
}

/// Iterates [`gld_step`], refreshing the utility each step, until the
/// successive-step density difference drops below `stationary_tol`.
pub fn solve_gld_stationary(config: &GldConfig, init: &[Vec<f64>]) -> Result<GldSolution> {
    config.validate()?;
    let grid = &config.grid;
    let n = grid.n_x();
    let dx = grid.dx();
    let dt = grid.dt();
    let model = config.model.as_ref();
    if init.len() != model.n_types() {
        return Err(Error::ShapeMismatch {
            left: init.len(),
            right: model.n_types(),
        });
    }
    for (i, s) in init.iter().enumerate() {
        if s.len() != n {
            return Err(Error::ShapeMismatch { left: s.len(), right: n });
        }
        check_nonnegative(i, s)?;
    }

    let bound = positivity_bound(model, &config.params);
    let a2 = assumption2_holds(model, &config.params);
    check_positivity_step(dt, bound, config.strict_cfl, "gld")?;

    let evaluator = UtilityGrid::new(model, grid);
    let mut transport = Transport::new(n);
    let mut mu: TypeSlices = init.to_vec();
    let mut next: TypeSlices = vec![vec![0.0; n]; mu.len()];
    let mut u: TypeSlices = vec![vec![0.0; n]; mu.len()];
    let masses = config.pops.masses();

    let mut trajectory = Vec::new();
    if config.stride.is_some() {
        trajectory.push(TrajectorySample {
            step: 0,
            time: 0.0,
            mu: mu.clone(),
        });
    }
    let mut max_defect = mass_defect(&mu, masses);
    let mut residual = f64::INFINITY;

    for step in 1..=config.max_steps {
        evaluator.eval_into(model, &mu, &mut u)?;
        for (i, ((m, v), o)) in mu.iter().zip(&u).zip(next.iter_mut()).enumerate() {
            transport.step(&config.params, v, m, dx, dt, o, config.parallel)?;
            check_nonnegative(i, o)?;
        }
        residual = step_residual(&mu, &next, dx, config.avg_norm);
        std::mem::swap(&mut mu, &mut next);
        max_defect = max_defect.max(mass_defect(&mu, masses));

        let done = residual < config.stationary_tol;
        if let Some(stride) = config.stride {
            if step % stride == 0 || done {
                trajectory.push(TrajectorySample {
                    step,
                    time: step as f64 * dt,
                    mu: mu.clone(),
                });
            }
        }
        if done {
            debug!("gld stationary after {step} steps (residual {residual:e})");
            return Ok(GldSolution {
                stationary: mu,
                steps: step,
                residual,
                trajectory,
                max_mass_defect: max_defect,
                positivity_bound: bound,
                assumption2_ok: a2,
            });
        }
    }
    Err(Error::NotConverged {
        iterations: config.max_steps,
        residual,
        history: Vec::new(),
    })
}

/// Cellwise balance `m_i L_i - theta_i mu_i` in density units, with
/// `L_i(l) = sum_w phi_{l,w}^q dx` and `theta_i = sum_{y,w} phi_{w,y}^q dx dx`.
/// At q = 1 it vanishes at a stationary state of the scheme.
pub fn stationary_residual(
    u: &[f64],
    mu: &[f64],
    mass: f64,
    params: &TsallisParams,
    grid: &GridSpec,
) -> Result<Vec<f64>> {
    if mu.len() != u.len() {
        return Err(Error::ShapeMismatch {
            left: mu.len(),
            right: u.len(),
        });
    }
    let k = gld_transition_kernel(u, params, grid)?;
    let dx = grid.dx();
    let q = params.q();
    let pq = |v: f64| if q == 1.0 { v } else { v.powf(q) };
    let logit: Vec<f64> = k
        .rows()
        .map(|row| row.iter().map(|&v| pq(v)).sum::<f64>() * dx)
        .collect();
    let theta = logit.iter().sum::<f64>() * dx;
    Ok(logit
        .iter()
        .zip(mu)
        .map(|(l, m)| mass * l - theta * m / dx)
        .collect())
}
