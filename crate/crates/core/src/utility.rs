//! Utilities of the generic mean-field form
//! `U_i(x, {mu}) = F_i(x, {sum_m G_j(x_m) mu_{j,m}}_j)` and the two shipped
//! applications: recreational fishing and sustainable tourism.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::{GridSpec, TypeSlices};

/// Relative slack on the runtime `|U| <= L` assertion.
const BOUND_SLACK: f64 = 1e-12;

/// A utility of the generic form. One aggregate per type: aggregate `j` is
/// `sum_m G_j(x_m) mu_{j,m}`.
pub trait UtilityModel: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;

    fn n_types(&self) -> usize;

    /// `G_j(x)`.
    fn aggregate_weight(&self, j: usize, x: f64) -> f64;

    /// `F_i(x, aggregates)`.
    fn evaluate(&self, i: usize, x: f64, aggregates: &[f64]) -> f64;

    /// Analytic bound `L` with `|U| <= L` on admissible densities.
    fn bound(&self) -> f64;

    /// Lipschitz constant in `x`, when it differs from [`Self::bound`].
    fn lipschitz_bound(&self) -> Option<f64> {
        None
    }

    /// Whether `U >= 0` on admissible densities.
    fn nonnegative(&self) -> bool {
        false
    }

    /// Potential functional evaluated with cell sums.
    fn potential(&self, _density: &[Vec<f64>], _grid: &GridSpec) -> Result<f64> {
        Err(Error::UnsupportedModel(self.name().to_string()))
    }
}

/// Constant used by the kernel-domain margin: the larger of the value and
/// Lipschitz bounds.
pub fn regularity_constant(model: &dyn UtilityModel) -> f64 {
    model
        .lipschitz_bound()
        .map_or(model.bound(), |lip| lip.max(model.bound()))
}

pub fn utility_bound_l(model: &dyn UtilityModel) -> f64 {
    model.bound()
}

/// Aggregates `sum_m G_j(x_m) mu_{j,m}`, summed in ascending cell order.
pub fn aggregates(model: &dyn UtilityModel, density: &[Vec<f64>], grid: &GridSpec) -> Vec<f64> {
    density
        .iter()
        .enumerate()
        .map(|(j, mu)| {
            mu.iter()
                .enumerate()
                .map(|(m, &v)| model.aggregate_weight(j, grid.center(m)) * v)
                .sum()
        })
        .collect()
}

/// `U_{i,l}` on the grid for one time level. Fails if any value exceeds the
/// model's bound.
pub fn eval_utility_grid(
    model: &dyn UtilityModel,
    density: &[Vec<f64>],
    grid: &GridSpec,
) -> Result<TypeSlices> {
    let mut out = vec![vec![0.0; grid.n_x()]; model.n_types()];
    UtilityGrid::new(model, grid).eval_into(model, density, &mut out)?;
    Ok(out)
}

/// Grid evaluator with the `G_j(x_m)` weights tabulated once.
#[derive(Debug, Clone)]
pub(crate) struct UtilityGrid {
    centers: Vec<f64>,
    weights: Vec<Vec<f64>>,
    limit: f64,
}

impl UtilityGrid {
    pub(crate) fn new(model: &dyn UtilityModel, grid: &GridSpec) -> Self {
        let centers = grid.centers();
        let weights = (0..model.n_types())
            .map(|j| centers.iter().map(|&x| model.aggregate_weight(j, x)).collect())
            .collect();
        Self {
            centers,
            weights,
            limit: model.bound() * (1.0 + BOUND_SLACK) + f64::EPSILON,
        }
    }

    pub(crate) fn eval_into(
        &self,
        model: &dyn UtilityModel,
        density: &[Vec<f64>],
        out: &mut [Vec<f64>],
    ) -> Result<()> {
        if density.len() != model.n_types() {
            return Err(Error::ShapeMismatch {
                left: density.len(),
                right: model.n_types(),
            });
        }
        let aggs: Vec<f64> = density
            .iter()
            .zip(&self.weights)
            .map(|(mu, w)| mu.iter().zip(w).map(|(a, b)| a * b).sum())
            .collect();
        for (i, row) in out.iter_mut().enumerate() {
            for (l, u) in row.iter_mut().enumerate() {
                let v = model.evaluate(i, self.centers[l], &aggs);
                if !v.is_finite() {
                    return Err(Error::Evaluation(format!(
                        "{} returned {v} at type {i}, cell {l}",
                        model.name()
                    )));
                }
                if v.abs() > self.limit {
                    return Err(Error::UtilityBoundViolated {
                        type_index: i,
                        cell: l,
                        value: v,
                        bound: model.bound(),
                    });
                }
                *u = v;
            }
        }
        Ok(())
    }
}

/// `(1 + tanh((x_hat - x) / epsilon)) / 2`.
pub fn smooth_indicator(x: f64, x_hat: f64, epsilon: f64) -> f64 {
    0.5 * (1.0 + ((x_hat - x) / epsilon).tanh())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FishingParams {
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
    /// Legal and illegal angler masses `(m_1, m_2)`.
    pub masses: [f64; 2],
}

impl Default for FishingParams {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            beta: 2.0,
            kappa: 0.1,
            masses: [0.7, 0.3],
        }
    }
}

impl FishingParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        if !(self.alpha > 0.0) {
            return bad(format!("alpha must be positive, got {}", self.alpha));
        }
        if !(self.beta > 0.0) {
            return bad(format!("beta must be positive, got {}", self.beta));
        }
        if !(self.kappa >= 0.0) {
            return bad(format!("kappa must be nonnegative, got {}", self.kappa));
        }
        if !(self.masses[0] > 0.0 && self.masses[1] > 0.0) {
            return bad("fishing masses must be positive".into());
        }
        Ok(())
    }

    /// Harvest-cost multiplier for type `i`: 1 for legal anglers,
    /// `1 + kappa m_1 / m_2` for illegal ones.
    pub fn penalty_factor(&self, i: usize) -> f64 {
        if i == 1 {
            1.0 + self.kappa * self.masses[0] / self.masses[1]
        } else {
            1.0
        }
    }
}

/// Legal (type 0) and illegal (type 1) anglers choosing an arrival
/// intensity; cost grows with the population's mean arrival.
#[derive(Debug, Clone)]
pub struct FishingUtility {
    params: FishingParams,
}

pub fn fishing_utility(params: FishingParams) -> Result<FishingUtility> {
    params.validate()?;
    Ok(FishingUtility { params })
}

impl FishingUtility {
    pub fn params(&self) -> &FishingParams {
        &self.params
    }
}

impl UtilityModel for FishingUtility {
    fn name(&self) -> &str {
        "fishing"
    }

    fn n_types(&self) -> usize {
        2
    }

    fn aggregate_weight(&self, _j: usize, x: f64) -> f64 {
        x
    }

    fn evaluate(&self, i: usize, x: f64, aggregates: &[f64]) -> f64 {
        let p = &self.params;
        let mean_arrival = aggregates[0] + aggregates[1];
        x.powf(p.alpha) - p.beta * x * p.penalty_factor(i) * mean_arrival
    }

    fn bound(&self) -> f64 {
        1.0 + self.params.beta * self.params.penalty_factor(1)
    }

    /// Not a potential game once `kappa > 0`; this uses the penalty on every
    /// quadratic term that involves the illegal population and is only a
    /// diagnostic.
    fn potential(&self, density: &[Vec<f64>], grid: &GridSpec) -> Result<f64> {
        let p = &self.params;
        let mut gain = 0.0;
        let mut arrival = [0.0; 2];
        for (j, mu) in density.iter().enumerate().take(2) {
            for (m, &v) in mu.iter().enumerate() {
                let x = grid.center(m);
                gain += x.powf(p.alpha) * v;
                arrival[j] += x * v;
            }
        }
        let (a, b) = (arrival[0], arrival[1]);
        let quad = a * a + p.penalty_factor(1) * (2.0 * a * b + b * b);
        Ok(gain - 0.5 * p.beta * quad)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TourismParams {
    pub theta: f64,
    /// Travel costs of residents and tourists, `gamma[0] < gamma[1]`.
    pub gamma: [f64; 2],
    pub x_hat: f64,
    pub epsilon: f64,
}

impl Default for TourismParams {
    fn default() -> Self {
        Self {
            theta: 1.0,
            gamma: [0.01, 0.1],
            x_hat: 0.65,
            epsilon: 1e-6,
        }
    }
}

impl TourismParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        if !(self.theta > 0.0) {
            return bad(format!("theta must be positive, got {}", self.theta));
        }
        if !(self.x_hat > 0.0 && self.x_hat < 1.0) {
            return bad(format!("x_hat must lie in (0, 1), got {}", self.x_hat));
        }
        if !(self.gamma[0] < self.gamma[1]) {
            return bad(format!(
                "gamma must be increasing, got {:?}",
                self.gamma
            ));
        }
        if !(self.epsilon > 0.0) {
            return bad(format!("epsilon must be positive, got {}", self.epsilon));
        }
        Ok(())
    }
}

/// Residents (type 0) and tourists (type 1); utility collapses above the
/// sustainability threshold as the population congests there.
#[derive(Debug, Clone)]
pub struct TourismUtility {
    params: TourismParams,
}

pub fn tourism_utility(params: TourismParams) -> Result<TourismUtility> {
    params.validate()?;
    Ok(TourismUtility { params })
}

impl TourismUtility {
    pub fn params(&self) -> &TourismParams {
        &self.params
    }

    fn indicator(&self, x: f64) -> f64 {
        smooth_indicator(x, self.params.x_hat, self.params.epsilon)
    }
}

impl UtilityModel for TourismUtility {
    fn name(&self) -> &str {
        "tourism"
    }

    fn n_types(&self) -> usize {
        2
    }

    fn aggregate_weight(&self, _j: usize, y: f64) -> f64 {
        1.0 - self.indicator(y)
    }

    fn evaluate(&self, i: usize, x: f64, aggregates: &[f64]) -> f64 {
        let congestion = aggregates[0] + aggregates[1];
        self.indicator(x) / (self.params.theta + congestion) - self.params.gamma[i] * x
    }

    fn bound(&self) -> f64 {
        1.0 / self.params.theta + self.params.gamma[0].abs().max(self.params.gamma[1].abs())
    }

    /// Slope of the smoothed indicator peaks at `1 / (2 epsilon)`.
    fn lipschitz_bound(&self) -> Option<f64> {
        let p = &self.params;
        Some(1.0 / (2.0 * p.epsilon * p.theta) + p.gamma[0].abs().max(p.gamma[1].abs()))
    }

    fn potential(&self, density: &[Vec<f64>], grid: &GridSpec) -> Result<f64> {
        let p = &self.params;
        let mut congestion = 0.0;
        let mut travel = 0.0;
        for (j, mu) in density.iter().enumerate().take(2) {
            for (m, &v) in mu.iter().enumerate() {
                let x = grid.center(m);
                congestion += (1.0 - self.indicator(x)) * v;
                travel += p.gamma[j] * x * v;
            }
        }
        Ok(-(p.theta + congestion).ln() - travel)
    }
}

/// Mean-field-free utility `U_i(x) = sum_k c_{i,k} x^k`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialUtility {
    coefficients: Vec<Vec<f64>>,
}

impl PolynomialUtility {
    pub fn new(coefficients: Vec<Vec<f64>>) -> Result<Self> {
        if coefficients.is_empty() || coefficients.iter().any(|c| c.is_empty()) {
            return Err(Error::InvalidParams(
                "polynomial utility needs at least one coefficient per type".into(),
            ));
        }
        if coefficients.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParams("coefficients must be finite".into()));
        }
        Ok(Self { coefficients })
    }

    pub fn constant(value: f64, n_types: usize) -> Self {
        Self {
            coefficients: vec![vec![value]; n_types],
        }
    }

    pub fn coefficients(&self) -> &[Vec<f64>] {
        &self.coefficients
    }
}

impl UtilityModel for PolynomialUtility {
    fn name(&self) -> &str {
        "polynomial"
    }

    fn n_types(&self) -> usize {
        self.coefficients.len()
    }

    fn aggregate_weight(&self, _j: usize, _x: f64) -> f64 {
        0.0
    }

    fn evaluate(&self, i: usize, x: f64, _aggregates: &[f64]) -> f64 {
        self.coefficients[i]
            .iter()
            .rev()
            .fold(0.0, |acc, c| acc * x + c)
    }

    fn bound(&self) -> f64 {
        self.coefficients
            .iter()
            .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    fn nonnegative(&self) -> bool {
        self.coefficients.iter().flatten().all(|&c| c >= 0.0)
    }
}

type WeightFn = dyn Fn(usize, f64) -> f64 + Send + Sync;
type EvalFn = dyn Fn(usize, f64, &[f64]) -> f64 + Send + Sync;

/// Closure-backed utility of the generic form, for user-defined models.
#[derive(Clone)]
pub struct GenericUtility {
    name: String,
    n_types: usize,
    weight: Arc<WeightFn>,
    eval: Arc<EvalFn>,
    bound: f64,
    nonnegative: bool,
}

impl fmt::Debug for GenericUtility {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GenericUtility")
            .field("name", &self.name)
            .field("n_types", &self.n_types)
            .field("bound", &self.bound)
            .finish()
    }
}

impl GenericUtility {
    pub fn new(
        name: impl Into<String>,
        n_types: usize,
        bound: f64,
        weight: impl Fn(usize, f64) -> f64 + Send + Sync + 'static,
        eval: impl Fn(usize, f64, &[f64]) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            n_types,
            weight: Arc::new(weight),
            eval: Arc::new(eval),
            bound,
            nonnegative: false,
        }
    }

    pub fn with_nonnegative(mut self, nonnegative: bool) -> Self {
        self.nonnegative = nonnegative;
        self
    }
}

impl UtilityModel for GenericUtility {
    fn name(&self) -> &str {
        &self.name
    }

    fn n_types(&self) -> usize {
        self.n_types
    }

    fn aggregate_weight(&self, j: usize, x: f64) -> f64 {
        (self.weight)(j, x)
    }

    fn evaluate(&self, i: usize, x: f64, aggregates: &[f64]) -> f64 {
        (self.eval)(i, x, aggregates)
    }

    fn bound(&self) -> f64 {
        self.bound
    }

    fn nonnegative(&self) -> bool {
        self.nonnegative
    }
}

/// Potential functional of a shipped application on one density level.
pub fn potential_value(
    model: &dyn UtilityModel,
    density: &[Vec<f64>],
    grid: &GridSpec,
) -> Result<f64> {
    model.potential(density, grid)
}
