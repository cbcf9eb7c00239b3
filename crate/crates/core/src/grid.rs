//! Space-time grid, population masses, field containers, error norms and
//! reference downsampling.
//!
//! Cells are `C_l = [(l-1) dx, l dx)` with centers `x_l = (l - 1/2) dx`,
//! stored zero-based. Densities are carried as cell masses `mu`; the density
//! view is `p = mu / dx`.

use crate::error::{Error, Result};

/// Per-type cell values at one time level, indexed `[type][cell]`.
pub type TypeSlices = Vec<Vec<f64>>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    n_x: usize,
    n_t: usize,
    horizon: f64,
}

impl GridSpec {
    pub fn new(n_x: usize, n_t: usize, horizon: f64) -> Result<Self> {
        if n_x == 0 {
            return Err(Error::InvalidGrid("n_x must be positive".into()));
        }
        if n_t == 0 {
            return Err(Error::InvalidGrid("n_t must be positive".into()));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "horizon must be positive, got {horizon}"
            )));
        }
        Ok(Self { n_x, n_t, horizon })
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    pub fn n_t(&self) -> usize {
        self.n_t
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn dx(&self) -> f64 {
        1.0 / self.n_x as f64
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n_t as f64
    }

    pub fn center(&self, l: usize) -> f64 {
        (l as f64 + 0.5) * self.dx()
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.n_x).map(|l| self.center(l)).collect()
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt()
    }

    /// Same grid with a different number of time steps.
    pub fn with_n_t(&self, n_t: usize) -> Result<Self> {
        Self::new(self.n_x, n_t, self.horizon)
    }
}

/// Alias matching the operation name used in the CLI docs.
pub fn make_grid(n_x: usize, n_t: usize, horizon: f64) -> Result<GridSpec> {
    GridSpec::new(n_x, n_t, horizon)
}

/// Type masses `m_i`; positive and summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct PopulationSpec {
    masses: Vec<f64>,
}

impl PopulationSpec {
    pub const MASS_TOL: f64 = 1e-14;

    pub fn new(masses: Vec<f64>) -> Result<Self> {
        if masses.is_empty() {
            return Err(Error::InvalidParams("at least one type is required".into()));
        }
        if let Some(m) = masses.iter().find(|m| !(m.is_finite() && **m > 0.0)) {
            return Err(Error::InvalidParams(format!(
                "masses must be positive, got {m}"
            )));
        }
        let total: f64 = masses.iter().sum();
        if (total - 1.0).abs() > Self::MASS_TOL {
            let shown = (total * 1e12).round() / 1e12;
            return Err(Error::InvalidParams(format!("masses sum to {shown}")));
        }
        Ok(Self { masses })
    }

    pub fn n_types(&self) -> usize {
        self.masses.len()
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn mass(&self, i: usize) -> f64 {
        self.masses[i]
    }
}

/// Shape of an initial density profile on `[0, 1]`.
#[derive(Clone)]
pub enum InitProfile {
    Uniform,
    /// `m_i (1 + 0.25 (2x - 1))`.
    Tilted,
    /// Unnormalized density shape `f(i, x)`; rescaled to mass `m_i`.
    Custom(std::sync::Arc<dyn Fn(usize, f64) -> f64 + Send + Sync>),
}

impl std::fmt::Debug for InitProfile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Uniform => f.write_str("Uniform"),
            Self::Tilted => f.write_str("Tilted"),
            Self::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl InitProfile {
    fn shape(&self, i: usize, x: f64) -> f64 {
        match self {
            Self::Uniform => 1.0,
            Self::Tilted => 1.0 + 0.25 * (2.0 * x - 1.0),
            Self::Custom(f) => f(i, x),
        }
    }
}

/// Cell masses at `k = 0`: the profile sampled at cell centers times `dx`,
/// rescaled so each type carries exactly its mass.
pub fn init_density(
    grid: &GridSpec,
    pops: &PopulationSpec,
    profile: &InitProfile,
) -> Result<TypeSlices> {
    let dx = grid.dx();
    let mut out = Vec::with_capacity(pops.n_types());
    for (i, &m) in pops.masses().iter().enumerate() {
        let mut cells = Vec::with_capacity(grid.n_x());
        for l in 0..grid.n_x() {
            let x = grid.center(l);
            let value = profile.shape(i, x);
            if !(value >= 0.0) || !value.is_finite() {
                return Err(Error::NegativeDensity { x, value });
            }
            cells.push(value * dx);
        }
        let total: f64 = cells.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidParams(format!(
                "initial profile for type {i} has zero mass"
            )));
        }
        let scale = m / total;
        cells.iter_mut().for_each(|c| *c *= scale);
        out.push(cells);
    }
    Ok(out)
}

/// Cell masses to densities `p = mu / dx`.
pub fn to_density(masses: &[f64], grid: &GridSpec) -> Vec<f64> {
    let inv = grid.n_x() as f64;
    masses.iter().map(|m| m * inv).collect()
}

fn check_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(())
}

/// `max_l |a_l - b_l|`.
pub fn max_norm_diff(a: &[f64], b: &[f64]) -> Result<f64> {
    check_len(a, b)?;
    Ok(a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max))
}

/// `(1/N) sum_l |a_l - b_l|`.
pub fn avg_norm_diff(a: &[f64], b: &[f64]) -> Result<f64> {
    check_len(a, b)?;
    if a.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum();
    Ok(sum / a.len() as f64)
}

fn coarse_ratio(fine_len: usize, coarse_n_x: usize) -> Result<usize> {
    if coarse_n_x == 0 || fine_len % coarse_n_x != 0 {
        return Err(Error::IncompatibleResolution {
            fine: fine_len,
            coarse: coarse_n_x,
        });
    }
    Ok(fine_len / coarse_n_x)
}

/// Density view: each coarse value is the mean of the fine values it covers.
pub fn downsample_cell_average(fine: &[f64], coarse_n_x: usize) -> Result<Vec<f64>> {
    let r = coarse_ratio(fine.len(), coarse_n_x)?;
    Ok(fine
        .chunks_exact(r)
        .map(|c| c.iter().sum::<f64>() / r as f64)
        .collect())
}

/// Mass view: each coarse value is the sum of the fine masses it covers.
pub fn downsample_cell_sum(fine: &[f64], coarse_n_x: usize) -> Result<Vec<f64>> {
    let r = coarse_ratio(fine.len(), coarse_n_x)?;
    Ok(fine.chunks_exact(r).map(|c| c.iter().sum()).collect())
}

/// Values `[type][time][cell]` for all `k = 0..=n_t`, stored contiguously.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeField {
    n_types: usize,
    n_levels: usize,
    n_x: usize,
    data: Vec<f64>,
}

impl TimeField {
    pub fn zeros(n_types: usize, grid: &GridSpec) -> Self {
        let n_levels = grid.n_t() + 1;
        Self {
            n_types,
            n_levels,
            n_x: grid.n_x(),
            data: vec![0.0; n_types * n_levels * grid.n_x()],
        }
    }

    /// Every time level set to `slices`.
    pub fn constant_in_time(slices: &TypeSlices, grid: &GridSpec) -> Self {
        let mut field = Self::zeros(slices.len(), grid);
        for (i, s) in slices.iter().enumerate() {
            for k in 0..field.n_levels {
                field.slice_mut(i, k).copy_from_slice(s);
            }
        }
        field
    }

    pub fn n_types(&self) -> usize {
        self.n_types
    }

    /// Number of stored time levels (`n_t + 1`).
    pub fn n_levels(&self) -> usize {
        self.n_levels
    }

    pub fn n_x(&self) -> usize {
        self.n_x
    }

    #[inline]
    fn offset(&self, i: usize, k: usize) -> usize {
        (i * self.n_levels + k) * self.n_x
    }

    pub fn slice(&self, i: usize, k: usize) -> &[f64] {
        let o = self.offset(i, k);
        &self.data[o..o + self.n_x]
    }

    pub fn slice_mut(&mut self, i: usize, k: usize) -> &mut [f64] {
        let o = self.offset(i, k);
        &mut self.data[o..o + self.n_x]
    }

    /// All types at level `k`.
    pub fn level(&self, k: usize) -> TypeSlices {
        (0..self.n_types).map(|i| self.slice(i, k).to_vec()).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

/// Cell masses `mu[i][k][l]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField(pub TimeField);

/// Value functions `Phi[i][k][l]`; the terminal level is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueField(pub TimeField);

impl DensityField {
    /// Largest `|sum_l mu[i][k][l] - m_i|` over all types and levels.
    pub fn max_mass_defect(&self, pops: &PopulationSpec) -> f64 {
        let f = &self.0;
        let mut worst = 0.0f64;
        for i in 0..f.n_types() {
            for k in 0..f.n_levels() {
                let total: f64 = f.slice(i, k).iter().sum();
                worst = worst.max((total - pops.mass(i)).abs());
            }
        }
        worst
    }

    pub fn min_value(&self) -> f64 {
        self.0.as_slice().iter().copied().fold(f64::INFINITY, f64::min)
    }
}

impl ValueField {
    pub fn range(&self) -> (f64, f64) {
        self.0
            .as_slice()
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }
}
