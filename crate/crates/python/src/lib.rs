//! Python bindings for the `gldmfg` solvers.

use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;

use gldmfg::experiments::{densities, Scenario};
use gldmfg::{Error, TsallisParams};

create_exception!(gldmfg_py, SolverError, PyException);
create_exception!(gldmfg_py, NotConvergedError, SolverError);

fn to_py(e: Error) -> PyErr {
    match e {
        Error::NotConverged { .. } => NotConvergedError::new_err(e.to_string()),
        Error::InvalidParams(_)
        | Error::InvalidGrid(_)
        | Error::Domain(_)
        | Error::ShapeMismatch { .. }
        | Error::IncompatibleResolution { .. }
        | Error::NegativeDensity { .. } => PyValueError::new_err(e.to_string()),
        other => SolverError::new_err(other.to_string()),
    }
}

fn params(q: f64, eta: f64) -> PyResult<TsallisParams> {
    TsallisParams::new(q, eta).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (z, q, eta = 1.0))]
fn exp_q(z: f64, q: f64, eta: f64) -> PyResult<f64> {
    gldmfg::exp_q(z, &params(q, eta)?).map_err(to_py)
}

#[pyfunction]
#[pyo3(signature = (y, q, eta = 1.0))]
fn ln_q(y: f64, q: f64, eta: f64) -> PyResult<f64> {
    gldmfg::ln_q(y, &params(q, eta)?).map_err(to_py)
}

#[pyfunction]
fn phi_cost(u: f64, q: f64, eta: f64) -> PyResult<f64> {
    gldmfg::phi_cost(u, &params(q, eta)?).map_err(to_py)
}

/// Returns `inf` when no positive time step is guaranteed.
#[pyfunction]
fn theta_bar(bound: f64, q: f64, eta: f64) -> PyResult<f64> {
    Ok(gldmfg::theta_bar(bound, &params(q, eta)?))
}

/// Stationary state of the logit dynamic.
#[pyclass(module = "gldmfg_py", frozen)]
struct GldResult {
    #[pyo3(get)]
    x: Vec<f64>,
    /// Densities per type.
    #[pyo3(get)]
    density: Vec<Vec<f64>>,
    #[pyo3(get)]
    steps: usize,
    #[pyo3(get)]
    residual: f64,
    #[pyo3(get)]
    max_mass_defect: f64,
}

/// Mean field game solution, reduced to the turnpike slice and the
/// iteration log.
#[pyclass(module = "gldmfg_py", frozen)]
struct MfgResult {
    #[pyo3(get)]
    x: Vec<f64>,
    #[pyo3(get)]
    turnpike_density: Vec<Vec<f64>>,
    #[pyo3(get)]
    turnpike_value: Vec<Vec<f64>>,
    #[pyo3(get)]
    residuals: Vec<f64>,
    #[pyo3(get)]
    iterations: usize,
    #[pyo3(get)]
    max_mass_defect: f64,
}

#[pymethods]
impl MfgResult {
    /// Least-squares slope of log10 residual against iteration.
    fn log10_slope(&self) -> Option<f64> {
        gldmfg::IterationLog {
            residuals: self.residuals.clone(),
            converged: true,
            iterations: self.iterations,
        }
        .log10_slope()
    }
}

#[pyclass(name = "Scenario", module = "gldmfg_py")]
struct PyScenario {
    inner: Scenario,
}

#[pymethods]
impl PyScenario {
    #[staticmethod]
    fn fishing() -> Self {
        Self { inner: Scenario::fishing() }
    }

    #[staticmethod]
    fn tourism() -> Self {
        Self { inner: Scenario::tourism() }
    }

    /// Polynomial utility in x, one coefficient list per type.
    #[staticmethod]
    fn custom(coefficients: Vec<Vec<f64>>) -> Self {
        Self { inner: Scenario::custom(coefficients) }
    }

    /// Builds a scenario from TOML config text.
    #[staticmethod]
    fn from_config(text: &str) -> PyResult<Self> {
        let config = gldmfg::parse_config_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(Self {
            inner: config.to_scenario().map_err(to_py)?,
        })
    }

    fn set_grid(&mut self, n_x: usize, n_t: usize, horizon: f64) {
        self.inner.n_x = n_x;
        self.inner.n_t = n_t;
        self.inner.horizon = horizon;
    }

    fn set_tsallis(&mut self, q: f64, eta: f64) -> PyResult<()> {
        self.inner.params = params(q, eta)?;
        Ok(())
    }

    #[getter]
    fn masses(&self) -> Vec<f64> {
        self.inner.masses.clone()
    }

    #[setter]
    fn set_masses(&mut self, masses: Vec<f64>) {
        self.inner.masses = masses;
    }

    #[getter]
    fn delta(&self) -> f64 {
        self.inner.delta
    }

    #[setter]
    fn set_delta(&mut self, delta: f64) {
        self.inner.delta = delta;
    }

    #[getter]
    fn max_iters(&self) -> usize {
        self.inner.max_iters
    }

    #[setter]
    fn set_max_iters(&mut self, n: usize) {
        self.inner.max_iters = n;
    }

    #[setter]
    fn set_strict_cfl(&mut self, strict: Option<bool>) {
        self.inner.strict_cfl = strict;
    }

    fn run_gld(&self, py: Python<'_>) -> PyResult<GldResult> {
        let s = self.inner.clone();
        let (grid, sol) = py
            .detach(move || {
                let grid = s.grid()?;
                s.run_gld_on(grid, None).map(|sol| (grid, sol))
            })
            .map_err(to_py)?;
        Ok(GldResult {
            x: grid.centers(),
            density: densities(&sol.stationary, grid.dx()),
            steps: sol.steps,
            residual: sol.residual,
            max_mass_defect: sol.max_mass_defect,
        })
    }

    fn run_mfg(&self, py: Python<'_>) -> PyResult<MfgResult> {
        let s = self.inner.clone();
        let (grid, sol, defect) = py
            .detach(move || {
                let grid = s.grid()?;
                let pops = s.pops()?;
                let sol = s.run_mfg_on(grid)?;
                let defect = sol.density.max_mass_defect(&pops);
                Ok::<_, Error>((grid, sol, defect))
            })
            .map_err(to_py)?;
        Ok(MfgResult {
            x: grid.centers(),
            turnpike_density: densities(&sol.turnpike_density(&grid), grid.dx()),
            turnpike_value: gldmfg::extract_turnpike_slice(&sol.value.0, &grid),
            residuals: sol.log.residuals.clone(),
            iterations: sol.log.iterations,
            max_mass_defect: defect,
        })
    }

    fn __repr__(&self) -> String {
        format!(
            "Scenario({}, n_x={}, n_t={}, q={}, eta={}, delta={})",
            self.inner.model.name(),
            self.inner.n_x,
            self.inner.n_t,
            self.inner.params.q(),
            self.inner.params.eta(),
            self.inner.delta
        )
    }
}

#[pymodule]
fn gldmfg_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(exp_q, m)?)?;
    m.add_function(wrap_pyfunction!(ln_q, m)?)?;
    m.add_function(wrap_pyfunction!(phi_cost, m)?)?;
    m.add_function(wrap_pyfunction!(theta_bar, m)?)?;
    m.add_class::<PyScenario>()?;
    m.add_class::<GldResult>()?;
    m.add_class::<MfgResult>()?;
    m.add("SolverError", m.py().get_type::<SolverError>())?;
    m.add("NotConvergedError", m.py().get_type::<NotConvergedError>())?;
    Ok(())
}
