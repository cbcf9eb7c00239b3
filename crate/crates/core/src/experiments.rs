//! Grid-convergence tables, the discount sweep linking the MFG turnpike to
//! the GLD stationary state, and parameter scenario sweeps.

use std::fmt;
use std::sync::Arc;

use log::info;

use crate::error::{Error, Result};
use crate::gld::{solve_gld_stationary, GldConfig, GldSolution, DEFAULT_MAX_STEPS, DEFAULT_STATIONARY_TOL};
use crate::grid::{
    avg_norm_diff, downsample_cell_average, make_grid, max_norm_diff, GridSpec, InitProfile,
    PopulationSpec, TypeSlices,
};
use crate::mfg::{
    extract_turnpike_slice, solve_mfg, MfgConfig, MfgSolution, DEFAULT_ITER_TOL,
    DEFAULT_MAX_ITERS, DEFAULT_RELAXATION,
};
use crate::tsallis::TsallisParams;
use crate::utility::{
    fishing_utility, tourism_utility, FishingParams, PolynomialUtility, TourismParams,
    UtilityModel,
};

/// Utility family and its parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    Fishing(FishingParams),
    Tourism(TourismParams),
    /// Polynomial in `x`, one coefficient list per type.
    Custom(Vec<Vec<f64>>),
}

impl ModelSpec {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Fishing(_) => "fishing",
            Self::Tourism(_) => "tourism",
            Self::Custom(_) => "custom",
        }
    }
}

/// Everything needed to run either solver on one application.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub model: ModelSpec,
    pub params: TsallisParams,
    pub masses: Vec<f64>,
    pub n_x: usize,
    pub n_t: usize,
    pub horizon: f64,
    pub gld_init: InitProfile,
    pub mfg_init: InitProfile,
    pub delta: f64,
    pub relaxation: f64,
    pub iter_tol: f64,
    pub max_iters: usize,
    pub stationary_tol: f64,
    pub max_steps: usize,
    pub avg_norm: bool,
    /// `None` picks the default for the model and parameters.
    pub strict_cfl: Option<bool>,
    pub parallel: bool,
}

impl Scenario {
    fn base(model: ModelSpec, masses: Vec<f64>) -> Self {
        Self {
            model,
            params: TsallisParams::new(0.8, 0.01).expect("default parameters are valid"),
            masses,
            n_x: 150,
            n_t: 36000,
            horizon: 240.0,
            gld_init: InitProfile::Tilted,
            mfg_init: InitProfile::Uniform,
            delta: 1.0,
            relaxation: DEFAULT_RELAXATION,
            iter_tol: DEFAULT_ITER_TOL,
            max_iters: DEFAULT_MAX_ITERS,
            stationary_tol: DEFAULT_STATIONARY_TOL,
            max_steps: DEFAULT_MAX_STEPS,
            avg_norm: false,
            strict_cfl: None,
            parallel: false,
        }
    }

    pub fn fishing() -> Self {
        Self::base(ModelSpec::Fishing(FishingParams::default()), vec![0.7, 0.3])
    }

    pub fn tourism() -> Self {
        Self::base(ModelSpec::Tourism(TourismParams::default()), vec![0.8, 0.2])
    }

    pub fn custom(coefficients: Vec<Vec<f64>>) -> Self {
        let n = coefficients.len().max(1);
        Self::base(ModelSpec::Custom(coefficients), vec![1.0 / n as f64; n])
    }

    pub fn with_resolution(mut self, n_x: usize, n_t: usize) -> Self {
        self.n_x = n_x;
        self.n_t = n_t;
        self
    }

    pub fn grid(&self) -> Result<GridSpec> {
        make_grid(self.n_x, self.n_t, self.horizon)
    }

    pub fn pops(&self) -> Result<PopulationSpec> {
        PopulationSpec::new(self.masses.clone())
    }

    /// The utility model; fishing picks up the scenario masses.
    pub fn build_model(&self) -> Result<Arc<dyn UtilityModel>> {
        Ok(match &self.model {
            ModelSpec::Fishing(p) => {
                let masses: [f64; 2] = self.masses.as_slice().try_into().map_err(|_| {
                    Error::InvalidParams("fishing needs exactly two types".into())
                })?;
                Arc::new(fishing_utility(FishingParams { masses, ..*p })?)
            }
            ModelSpec::Tourism(p) => {
                if self.masses.len() != 2 {
                    return Err(Error::InvalidParams("tourism needs exactly two types".into()));
                }
                Arc::new(tourism_utility(*p)?)
            }
            ModelSpec::Custom(c) => Arc::new(PolynomialUtility::new(c.clone())?),
        })
    }

    pub fn gld_config(&self, grid: GridSpec) -> Result<GldConfig> {
        let mut c = GldConfig::new(self.params, grid, self.pops()?, self.build_model()?)?;
        c.stationary_tol = self.stationary_tol;
        c.max_steps = self.max_steps;
        c.avg_norm = self.avg_norm;
        c.parallel = self.parallel;
        if let Some(s) = self.strict_cfl {
            c.strict_cfl = s;
        }
        Ok(c)
    }

    pub fn mfg_config(&self, grid: GridSpec) -> Result<MfgConfig> {
        let mut c = MfgConfig::new(self.params, grid, self.pops()?, self.build_model()?, self.delta)?;
        c.relaxation = self.relaxation;
        c.iter_tol = self.iter_tol;
        c.max_iters = self.max_iters;
        c.parallel = self.parallel;
        if let Some(s) = self.strict_cfl {
            c.strict_cfl = s;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn run_gld_on(&self, grid: GridSpec, stride: Option<usize>) -> Result<GldSolution> {
        let mut config = self.gld_config(grid)?;
        config.stride = stride;
        let init = crate::grid::init_density(&grid, &config.pops, &self.gld_init)?;
        solve_gld_stationary(&config, &init)
    }

    pub fn run_mfg_on(&self, grid: GridSpec) -> Result<MfgSolution> {
        let config = self.mfg_config(grid)?;
        let init = crate::grid::init_density(&grid, &config.pops, &self.mfg_init)?;
        solve_mfg(&config, &init)
    }

    pub fn run_gld(&self) -> Result<GldSolution> {
        self.run_gld_on(self.grid()?, None)
    }

    pub fn run_mfg(&self) -> Result<MfgSolution> {
        self.run_mfg_on(self.grid()?)
    }
}

/// Cell masses to densities.
pub fn densities(mu: &[Vec<f64>], dx: f64) -> TypeSlices {
    mu.iter()
        .map(|s| s.iter().map(|v| v / dx).collect())
        .collect()
}

/// Ordinary least squares `y = slope x + intercept`; `None` for fewer than
/// two distinct abscissae.
pub fn least_squares(points: &[(f64, f64)]) -> Option<(f64, f64)> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return None;
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Target {
    Gld,
    Mfg,
}

impl fmt::Display for Target {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Gld => "gld",
            Self::Mfg => "mfg",
        })
    }
}

/// Error of one quantity at one coarse resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub m: usize,
    /// `p1`, `p2`, ... for densities, `phi1`, ... for value functions.
    pub quantity: String,
    pub max_err: f64,
    pub avg_err: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub target: Target,
    pub reference_n_x: usize,
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceReport {
    pub fn get(&self, m: usize, quantity: &str) -> Option<&ConvergenceRow> {
        self.rows.iter().find(|r| r.m == m && r.quantity == quantity)
    }
}

/// Time steps per unit `n_x` for the reference and coarse runs. With
/// `T = 240` the defaults give `(240 n, n)` and `(120 m, m)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergencePlan {
    pub coarse_ms: Vec<usize>,
    pub reference_n_x: usize,
    pub reference_steps_per_cell: usize,
    pub coarse_steps_per_cell: usize,
}

impl ConvergencePlan {
    pub fn new(coarse_ms: Vec<usize>, reference_n_x: usize) -> Self {
        Self {
            coarse_ms,
            reference_n_x,
            reference_steps_per_cell: 240,
            coarse_steps_per_cell: 120,
        }
    }
}

/// Quantities compared in a convergence study: densities, plus value
/// functions for the MFG.
fn comparison_slices(
    scenario: &Scenario,
    target: Target,
    grid: GridSpec,
) -> Result<Vec<(String, Vec<f64>)>> {
    let dx = grid.dx();
    let mut out = Vec::new();
    match target {
        Target::Gld => {
            let sol = scenario.run_gld_on(grid, None)?;
            for (i, p) in densities(&sol.stationary, dx).into_iter().enumerate() {
                out.push((format!("p{}", i + 1), p));
            }
        }
        Target::Mfg => {
            let sol = scenario.run_mfg_on(grid)?;
            let mu = extract_turnpike_slice(&sol.density.0, &grid);
            for (i, p) in densities(&mu, dx).into_iter().enumerate() {
                out.push((format!("p{}", i + 1), p));
            }
            let phi = extract_turnpike_slice(&sol.value.0, &grid);
            for (i, v) in phi.into_iter().enumerate() {
                out.push((format!("phi{}", i + 1), v));
            }
        }
    }
    Ok(out)
}

/// Runs the reference and every coarse resolution, then tabulates max and
/// average errors of the cell-averaged reference against each coarse run.
pub fn convergence_study(
    scenario: &Scenario,
    target: Target,
    plan: &ConvergencePlan,
) -> Result<ConvergenceReport> {
    let r = plan.reference_n_x;
    for &m in &plan.coarse_ms {
        if m == 0 || !r.is_multiple_of(m) {
            return Err(Error::IncompatibleResolution { fine: r, coarse: m });
        }
    }
    let ref_grid = make_grid(r, plan.reference_steps_per_cell * r, scenario.horizon)?;
    info!("convergence: reference run at n_x = {r}");
    let reference = comparison_slices(scenario, target, ref_grid)?;
    let mut rows = Vec::new();
    for &m in &plan.coarse_ms {
        info!("convergence: coarse run at n_x = {m}");
        let grid = make_grid(m, plan.coarse_steps_per_cell * m, scenario.horizon)?;
        let coarse = comparison_slices(scenario, target, grid)?;
        for ((name, fine), (_, c)) in reference.iter().zip(&coarse) {
            let down = downsample_cell_average(fine, m)?;
            rows.push(ConvergenceRow {
                m,
                quantity: name.clone(),
                max_err: max_norm_diff(&down, c)?,
                avg_err: avg_norm_diff(&down, c)?,
            });
        }
    }
    Ok(ConvergenceReport {
        target,
        reference_n_x: r,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeltaRow {
    pub delta: f64,
    /// Max-norm density distance per type.
    pub dist: Vec<f64>,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeltaSweepReport {
    pub rows: Vec<DeltaRow>,
    /// `(slope, intercept)` of `log10 dist` against `log10 delta`, per type.
    pub fits: Vec<Option<(f64, f64)>>,
}

impl DeltaSweepReport {
    /// Fitted slope for the first type.
    pub fn slope(&self) -> Option<f64> {
        self.fits.first().copied().flatten().map(|f| f.0)
    }
}

/// Solves the GLD once, then the MFG for every `delta`, and measures the
/// distance between the GLD stationary density and the MFG turnpike slice.
pub fn delta_sweep(
    scenario: &Scenario,
    deltas: &[f64],
    eta: Option<f64>,
) -> Result<DeltaSweepReport> {
    if deltas.is_empty() {
        return Err(Error::InvalidParams("delta list is empty".into()));
    }
    if deltas.iter().any(|d| !(*d > 0.0)) {
        return Err(Error::InvalidParams("deltas must be positive".into()));
    }
    if deltas.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidParams("deltas must be strictly increasing".into()));
    }
    let mut scenario = scenario.clone();
    if let Some(eta) = eta {
        scenario.params = TsallisParams::new(scenario.params.q(), eta)?;
    }
    let grid = scenario.grid()?;
    let gld = densities(&scenario.run_gld_on(grid, None)?.stationary, grid.dx());

    let mut rows = Vec::with_capacity(deltas.len());
    for &delta in deltas {
        info!("delta sweep: delta = {delta}");
        let mut s = scenario.clone();
        s.delta = delta;
        let sol = s.run_mfg_on(grid)?;
        let tp = densities(&extract_turnpike_slice(&sol.density.0, &grid), grid.dx());
        let dist = gld
            .iter()
            .zip(&tp)
            .map(|(a, b)| max_norm_diff(a, b))
            .collect::<Result<Vec<_>>>()?;
        rows.push(DeltaRow {
            delta,
            dist,
            iterations: sol.log.iterations,
        });
    }
    let n_types = gld.len();
    let fits = (0..n_types)
        .map(|i| {
            let pts: Vec<(f64, f64)> = rows
                .iter()
                .filter(|r| r.dist[i] > 0.0)
                .map(|r| (r.delta.log10(), r.dist[i].log10()))
                .collect();
            least_squares(&pts)
        })
        .collect();
    Ok(DeltaSweepReport { rows, fits })
}

#[derive(Debug, Clone, PartialEq)]
pub enum Sweep {
    /// First-type mass; the second type takes the remainder.
    Masses(Vec<f64>),
    /// Indicator smoothing of the tourism model.
    Epsilon(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioEntry {
    pub label: String,
    pub value: f64,
    /// Densities at the stationary (GLD) or turnpike (MFG) level.
    pub densities: TypeSlices,
}

/// Cellwise ratio statistics over cells where both densities exceed a floor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub cells: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwapRatio {
    pub m1: f64,
    pub swapped_m1: f64,
    /// `p1(m1) / p1(swapped)`.
    pub stats: RatioStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSweepReport {
    pub target: Target,
    pub x: Vec<f64>,
    pub entries: Vec<ScenarioEntry>,
    pub swap_ratios: Vec<SwapRatio>,
}

pub const RATIO_FLOOR: f64 = 1e-6;

/// `a_l / b_l` over cells with both values above `floor`.
pub fn density_ratio(a: &[f64], b: &[f64], floor: f64) -> Option<RatioStats> {
    let ratios: Vec<f64> = a
        .iter()
        .zip(b)
        .filter(|(x, y)| **x > floor && **y > floor)
        .map(|(x, y)| x / y)
        .collect();
    if ratios.is_empty() {
        return None;
    }
    Some(RatioStats {
        min: ratios.iter().copied().fold(f64::INFINITY, f64::min),
        max: ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        mean: ratios.iter().sum::<f64>() / ratios.len() as f64,
        cells: ratios.len(),
    })
}

/// Fraction of a mass slice lying in cells whose center satisfies `pred`.
pub fn mass_fraction(mu: &[f64], grid: &GridSpec, pred: impl Fn(f64) -> bool) -> f64 {
    let total: f64 = mu.iter().sum();
    let part: f64 = mu
        .iter()
        .enumerate()
        .filter(|(l, _)| pred(grid.center(*l)))
        .map(|(_, v)| v)
        .sum();
    part / total
}

/// Densities rescaled to unit mass.
pub fn normalized_shape(p: &[f64], dx: f64) -> Vec<f64> {
    let mass: f64 = p.iter().sum::<f64>() * dx;
    p.iter().map(|v| v / mass).collect()
}

pub fn scenario_sweep(
    base: &Scenario,
    target: Target,
    sweep: &Sweep,
) -> Result<ScenarioSweepReport> {
    let grid = base.grid()?;
    let variants: Vec<(String, f64, Scenario)> = match sweep {
        Sweep::Masses(list) => list
            .iter()
            .map(|&m1| {
                if base.masses.len() != 2 || !(m1 > 0.0 && m1 < 1.0) {
                    return Err(Error::InvalidParams(format!(
                        "mass sweep needs two types and m1 in (0, 1), got {m1}"
                    )));
                }
                let mut s = base.clone();
                s.masses = vec![m1, 1.0 - m1];
                Ok((format!("m1={m1}"), m1, s))
            })
            .collect::<Result<_>>()?,
        Sweep::Epsilon(list) => list
            .iter()
            .map(|&eps| {
                let ModelSpec::Tourism(p) = &base.model else {
                    return Err(Error::InvalidParams(
                        "epsilon sweep applies to the tourism model".into(),
                    ));
                };
                let mut s = base.clone();
                s.model = ModelSpec::Tourism(TourismParams { epsilon: eps, ..*p });
                Ok((format!("epsilon={eps}"), eps, s))
            })
            .collect::<Result<_>>()?,
    };

    let mut entries = Vec::with_capacity(variants.len());
    for (label, value, s) in variants {
        info!("scenario sweep: {label}");
        let mu = match target {
            Target::Gld => s.run_gld_on(grid, None)?.stationary,
            Target::Mfg => extract_turnpike_slice(&s.run_mfg_on(grid)?.density.0, &grid),
        };
        entries.push(ScenarioEntry {
            label,
            value,
            densities: densities(&mu, grid.dx()),
        });
    }

    let mut swap_ratios = Vec::new();
    if matches!(sweep, Sweep::Masses(_)) {
        for (a_idx, a) in entries.iter().enumerate() {
            for b in &entries[a_idx + 1..] {
                if (a.value + b.value - 1.0).abs() < 1e-12 {
                    if let Some(stats) =
                        density_ratio(&a.densities[0], &b.densities[0], RATIO_FLOOR)
                    {
                        swap_ratios.push(SwapRatio {
                            m1: a.value,
                            swapped_m1: b.value,
                            stats,
                        });
                    }
                }
            }
        }
    }
    Ok(ScenarioSweepReport {
        target,
        x: grid.centers(),
        entries,
        swap_ratios,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn least_squares_recovers_line() {
        let pts: Vec<(f64, f64)> = (0..5).map(|i| (i as f64, -0.5 * i as f64 + 2.0)).collect();
        let (s, c) = least_squares(&pts).unwrap();
        assert_relative_eq!(s, -0.5, epsilon = 1e-14);
        assert_relative_eq!(c, 2.0, epsilon = 1e-14);
        assert!(least_squares(&pts[..1]).is_none());
        assert!(least_squares(&[(1.0, 1.0), (1.0, 2.0)]).is_none());
    }

    #[test]
    fn density_ratio_respects_floor() {
        let s = density_ratio(&[4.0, 8.0, 1e-9], &[1.0, 2.0, 1e-9], 1e-6).unwrap();
        assert_eq!(s.cells, 2);
        assert_eq!(s.mean, 4.0);
        assert!(density_ratio(&[0.0], &[1.0], 1e-6).is_none());
    }

    fn small(model: Scenario) -> Scenario {
        let mut s = model.with_resolution(10, 200);
        s.horizon = 20.0;
        s.params = TsallisParams::new(0.8, 0.2).unwrap();
        s
    }

    #[test]
    fn convergence_against_itself_is_zero() {
        let s = small(Scenario::fishing());
        let plan = ConvergencePlan {
            coarse_ms: vec![10],
            reference_n_x: 10,
            reference_steps_per_cell: 20,
            coarse_steps_per_cell: 20,
        };
        let rep = convergence_study(&s, Target::Gld, &plan).unwrap();
        assert_eq!(rep.rows.len(), 2);
        for r in &rep.rows {
            assert_eq!(r.max_err, 0.0);
            assert_eq!(r.avg_err, 0.0);
        }
    }

    #[test]
    fn convergence_rejects_non_divisors() {
        let s = small(Scenario::fishing());
        let plan = ConvergencePlan::new(vec![3], 10);
        assert!(matches!(
            convergence_study(&s, Target::Gld, &plan),
            Err(Error::IncompatibleResolution { fine: 10, coarse: 3 })
        ));
    }

    #[test]
    fn single_delta_has_no_slope() {
        let s = small(Scenario::fishing());
        let rep = delta_sweep(&s, &[1.0], None).unwrap();
        assert_eq!(rep.rows.len(), 1);
        assert!(rep.slope().is_none());
        assert!(rep.rows[0].dist.iter().all(|d| *d >= 0.0));
    }

    #[test]
    fn mass_sweep_pairs_swaps() {
        let s = small(Scenario::tourism());
        let rep = scenario_sweep(&s, Target::Gld, &Sweep::Masses(vec![0.8, 0.2])).unwrap();
        assert_eq!(rep.entries.len(), 2);
        assert_eq!(rep.swap_ratios.len(), 1);
    }

    #[test]
    fn epsilon_sweep_needs_tourism() {
        let s = small(Scenario::fishing());
        assert!(scenario_sweep(&s, Target::Gld, &Sweep::Epsilon(vec![1.0])).is_err());
    }
}
