//! TOML run configuration.
//!
//! Every section is optional; omitted keys take the defaults of the chosen
//! scenario. A fully resolved [`RunConfig`] serializes back to TOML that
//! parses to the same value.
//!
//! ```toml
//! spec_version = 1
//! solver = "gld"          # gld | mfg
//! scenario = "fishing"    # fishing | tourism | custom
//!
//! [grid]
//! n_x = 150
//! n_t = 36000
//! horizon = 240.0
//!
//! [tsallis]
//! q = 0.8
//! eta = 0.01
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::experiments::{ConvergencePlan, ModelSpec, Scenario, Sweep, Target};
use crate::grid::{make_grid, InitProfile, PopulationSpec};
use crate::tsallis::TsallisParams;
use crate::utility::{FishingParams, PolynomialUtility, TourismParams};

pub const SPEC_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("{}: cannot read config: {reason}", path.display())]
    Io { path: PathBuf, reason: String },

    #[error("{}parse error{}: {reason}", line_prefix(*line), key_suffix(key))]
    Parse {
        line: Option<usize>,
        key: Option<String>,
        reason: String,
    },

    #[error("{}invalid `{key}`: {reason}", line_prefix(*line))]
    Validation {
        line: Option<usize>,
        key: String,
        reason: String,
    },
}

fn line_prefix(line: Option<usize>) -> String {
    line.map(|l| format!("line {l}: ")).unwrap_or_default()
}

fn key_suffix(key: &Option<String>) -> String {
    key.as_ref().map(|k| format!(" at `{k}`")).unwrap_or_default()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverKind {
    Gld,
    Mfg,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioKind {
    Fishing,
    Tourism,
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProfileKind {
    Uniform,
    Tilted,
}

impl From<ProfileKind> for InitProfile {
    fn from(p: ProfileKind) -> Self {
        match p {
            ProfileKind::Uniform => InitProfile::Uniform,
            ProfileKind::Tilted => InitProfile::Tilted,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepKind {
    Masses,
    Epsilon,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridSection {
    pub n_x: usize,
    pub n_t: usize,
    pub horizon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TsallisSection {
    pub q: f64,
    pub eta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PopulationSection {
    pub masses: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FishingSection {
    pub alpha: f64,
    pub beta: f64,
    pub kappa: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TourismSection {
    pub theta: f64,
    pub gamma: Vec<f64>,
    pub x_hat: f64,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CustomSection {
    pub coefficients: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MfgSection {
    pub delta: f64,
    pub relaxation: f64,
    pub iter_tol: f64,
    pub max_iters: usize,
    pub init: ProfileKind,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GldSection {
    pub stationary_tol: f64,
    pub max_steps: usize,
    pub avg_norm: bool,
    pub init: ProfileKind,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverSection {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub strict_cfl: Option<bool>,
    pub parallel: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputSection {
    pub dir: PathBuf,
    pub stride: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentSection {
    pub target: SolverKind,
    pub coarse_ms: Vec<usize>,
    pub reference_n_x: usize,
    pub reference_steps_per_cell: usize,
    pub coarse_steps_per_cell: usize,
    pub deltas: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    pub sweep: SweepKind,
    pub sweep_values: Vec<f64>,
}

/// A validated configuration with every default filled in.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub spec_version: u32,
    pub solver: SolverKind,
    pub scenario: ScenarioKind,
    pub grid: GridSection,
    pub tsallis: TsallisSection,
    pub population: PopulationSection,
    pub fishing: FishingSection,
    pub tourism: TourismSection,
    pub custom: CustomSection,
    pub mfg: MfgSection,
    pub gld: GldSection,
    pub solver_options: SolverSection,
    pub output: OutputSection,
    pub experiment: ExperimentSection,
}

// Raw, partially specified input. Field names mirror the resolved sections.

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    spec_version: Option<u32>,
    solver: Option<SolverKind>,
    scenario: Option<ScenarioKind>,
    #[serde(default)]
    grid: RawGrid,
    #[serde(default)]
    tsallis: RawTsallis,
    #[serde(default)]
    population: RawPopulation,
    #[serde(default)]
    fishing: RawFishing,
    #[serde(default)]
    tourism: RawTourism,
    #[serde(default)]
    custom: RawCustom,
    #[serde(default)]
    mfg: RawMfg,
    #[serde(default)]
    gld: RawGld,
    #[serde(default)]
    solver_options: RawSolver,
    #[serde(default)]
    output: RawOutput,
    #[serde(default)]
    experiment: RawExperiment,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    n_x: Option<usize>,
    n_t: Option<usize>,
    horizon: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTsallis {
    q: Option<f64>,
    eta: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPopulation {
    masses: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFishing {
    alpha: Option<f64>,
    beta: Option<f64>,
    kappa: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTourism {
    theta: Option<f64>,
    gamma: Option<Vec<f64>>,
    x_hat: Option<f64>,
    epsilon: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCustom {
    coefficients: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMfg {
    delta: Option<f64>,
    relaxation: Option<f64>,
    iter_tol: Option<f64>,
    max_iters: Option<usize>,
    init: Option<ProfileKind>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGld {
    stationary_tol: Option<f64>,
    max_steps: Option<usize>,
    avg_norm: Option<bool>,
    init: Option<ProfileKind>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSolver {
    strict_cfl: Option<bool>,
    parallel: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    dir: Option<PathBuf>,
    stride: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExperiment {
    target: Option<SolverKind>,
    coarse_ms: Option<Vec<usize>>,
    reference_n_x: Option<usize>,
    reference_steps_per_cell: Option<usize>,
    coarse_steps_per_cell: Option<usize>,
    deltas: Option<Vec<f64>>,
    eta: Option<f64>,
    sweep: Option<SweepKind>,
    sweep_values: Option<Vec<f64>>,
}

/// 1-based line of `key = ...` inside `[section]` (top level when `section`
/// is empty).
fn find_line(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(rest) = line.strip_prefix('[') {
            current = rest.trim_end_matches(']').trim().to_string();
            continue;
        }
        if current == section {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim() == key {
                    return Some(idx + 1);
                }
            }
        }
    }
    None
}

/// Dotted key assigned on a 1-based line, qualified by its section.
fn key_at_line(text: &str, line: usize) -> Option<String> {
    let mut section = String::new();
    for (idx, raw) in text.lines().enumerate() {
        let t = raw.trim();
        if let Some(rest) = t.strip_prefix('[') {
            section = rest.trim_end_matches(']').trim().to_string();
        } else if idx + 1 == line {
            let (k, _) = t.split_once('=')?;
            let k = k.trim();
            return Some(if section.is_empty() {
                k.to_string()
            } else {
                format!("{section}.{k}")
            });
        }
    }
    None
}

fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

struct Ctx<'a> {
    text: &'a str,
}

impl Ctx<'_> {
    fn invalid(&self, section: &str, key: &str, reason: impl Into<String>) -> ConfigError {
        let full = if section.is_empty() {
            key.to_string()
        } else {
            format!("{section}.{key}")
        };
        ConfigError::Validation {
            line: find_line(self.text, section, key),
            key: full,
            reason: reason.into(),
        }
    }

    fn positive(&self, section: &str, key: &str, v: f64) -> Result<f64, ConfigError> {
        if v > 0.0 && v.is_finite() {
            Ok(v)
        } else {
            Err(self.invalid(section, key, format!("must be positive, got {v}")))
        }
    }

    fn nonzero(&self, section: &str, key: &str, v: usize) -> Result<usize, ConfigError> {
        if v > 0 {
            Ok(v)
        } else {
            Err(self.invalid(section, key, "must be positive"))
        }
    }
}

/// Parses and validates config text.
pub fn parse_config_str(text: &str) -> Result<RunConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| {
        let line = e.span().map(|s| line_of_offset(text, s.start));
        let key = line.and_then(|l| key_at_line(text, l));
        ConfigError::Parse {
            line,
            key,
            reason: e.message().to_string(),
        }
    })?;
    resolve(raw, &Ctx { text })
}

/// Reads and parses a config file.
pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    parse_config_str(&text)
}

/// TOML text for a resolved config.
pub fn serialize_config(config: &RunConfig) -> String {
    toml::to_string(config).expect("config serializes to TOML")
}

fn resolve(raw: RawConfig, cx: &Ctx) -> Result<RunConfig, ConfigError> {
    let spec_version = raw.spec_version.unwrap_or(SPEC_VERSION);
    if spec_version != SPEC_VERSION {
        return Err(cx.invalid(
            "",
            "spec_version",
            format!("unsupported version {spec_version}, expected {SPEC_VERSION}"),
        ));
    }
    let scenario = raw.scenario.unwrap_or(ScenarioKind::Fishing);
    let solver = raw.solver.unwrap_or(SolverKind::Gld);

    let n_x = cx.nonzero("grid", "n_x", raw.grid.n_x.unwrap_or(150))?;
    let horizon = cx.positive("grid", "horizon", raw.grid.horizon.unwrap_or(240.0))?;
    let default_n_t = (horizon * n_x as f64).round().max(1.0) as usize;
    let n_t = cx.nonzero("grid", "n_t", raw.grid.n_t.unwrap_or(default_n_t))?;
    let grid = GridSection { n_x, n_t, horizon };
    make_grid(n_x, n_t, horizon).map_err(|e| cx.invalid("grid", "n_x", e.to_string()))?;

    let q = raw.tsallis.q.unwrap_or(0.8);
    let eta = raw.tsallis.eta.unwrap_or(0.01);
    cx.positive("tsallis", "q", q)?;
    cx.positive("tsallis", "eta", eta)?;
    let tsallis = TsallisSection { q, eta };

    let fishing = FishingSection {
        alpha: raw.fishing.alpha.unwrap_or(0.5),
        beta: raw.fishing.beta.unwrap_or(2.0),
        kappa: raw.fishing.kappa.unwrap_or(0.1),
    };
    let tourism = TourismSection {
        theta: raw.tourism.theta.unwrap_or(1.0),
        gamma: raw.tourism.gamma.unwrap_or_else(|| vec![0.01, 0.1]),
        x_hat: raw.tourism.x_hat.unwrap_or(0.65),
        epsilon: raw.tourism.epsilon.unwrap_or(1e-6),
    };
    let custom = CustomSection {
        coefficients: raw.custom.coefficients.unwrap_or_else(|| vec![vec![0.0]]),
    };

    let default_masses = match scenario {
        ScenarioKind::Fishing => vec![0.7, 0.3],
        ScenarioKind::Tourism => vec![0.8, 0.2],
        ScenarioKind::Custom => {
            let n = custom.coefficients.len().max(1);
            vec![1.0 / n as f64; n]
        }
    };
    let population = PopulationSection {
        masses: raw.population.masses.unwrap_or(default_masses),
    };
    PopulationSpec::new(population.masses.clone())
        .map_err(|e| cx.invalid("population", "masses", strip_prefix(&e.to_string())))?;

    match scenario {
        ScenarioKind::Fishing => {
            if population.masses.len() != 2 {
                return Err(cx.invalid("population", "masses", "fishing needs two types"));
            }
            cx.positive("fishing", "alpha", fishing.alpha)?;
            cx.positive("fishing", "beta", fishing.beta)?;
            if !(fishing.kappa >= 0.0) {
                return Err(cx.invalid("fishing", "kappa", "must be nonnegative"));
            }
        }
        ScenarioKind::Tourism => {
            if population.masses.len() != 2 {
                return Err(cx.invalid("population", "masses", "tourism needs two types"));
            }
            if tourism.gamma.len() != 2 {
                return Err(cx.invalid("tourism", "gamma", "needs two entries"));
            }
            let p = tourism_params(&tourism);
            p.validate().map_err(|e| {
                let key = if !(p.theta > 0.0) {
                    "theta"
                } else if !(p.x_hat > 0.0 && p.x_hat < 1.0) {
                    "x_hat"
                } else if !(p.gamma[0] < p.gamma[1]) {
                    "gamma"
                } else {
                    "epsilon"
                };
                cx.invalid("tourism", key, strip_prefix(&e.to_string()))
            })?;
        }
        ScenarioKind::Custom => {
            if custom.coefficients.len() != population.masses.len() {
                return Err(cx.invalid(
                    "custom",
                    "coefficients",
                    format!(
                        "{} coefficient lists for {} types",
                        custom.coefficients.len(),
                        population.masses.len()
                    ),
                ));
            }
            PolynomialUtility::new(custom.coefficients.clone())
                .map_err(|e| cx.invalid("custom", "coefficients", strip_prefix(&e.to_string())))?;
        }
    }

    let mfg = MfgSection {
        delta: cx.positive("mfg", "delta", raw.mfg.delta.unwrap_or(1.0))?,
        relaxation: raw.mfg.relaxation.unwrap_or(0.5),
        iter_tol: cx.positive("mfg", "iter_tol", raw.mfg.iter_tol.unwrap_or(1e-10))?,
        max_iters: cx.nonzero("mfg", "max_iters", raw.mfg.max_iters.unwrap_or(200))?,
        init: raw.mfg.init.unwrap_or(ProfileKind::Uniform),
    };
    if !(mfg.relaxation > 0.0 && mfg.relaxation <= 1.0) {
        return Err(cx.invalid("mfg", "relaxation", "must lie in (0, 1]"));
    }
    let gld = GldSection {
        stationary_tol: cx.positive("gld", "stationary_tol", raw.gld.stationary_tol.unwrap_or(1e-10))?,
        max_steps: cx.nonzero("gld", "max_steps", raw.gld.max_steps.unwrap_or(1_000_000))?,
        avg_norm: raw.gld.avg_norm.unwrap_or(false),
        init: raw.gld.init.unwrap_or(ProfileKind::Tilted),
    };
    let solver_options = SolverSection {
        strict_cfl: raw.solver_options.strict_cfl,
        parallel: raw.solver_options.parallel.unwrap_or(false),
    };
    let output = OutputSection {
        dir: raw.output.dir.unwrap_or_else(|| PathBuf::from("out")),
        stride: cx.nonzero("output", "stride", raw.output.stride.unwrap_or(150))?,
    };

    let e = raw.experiment;
    let experiment = ExperimentSection {
        target: e.target.unwrap_or(SolverKind::Gld),
        coarse_ms: e.coarse_ms.unwrap_or_else(|| vec![50, 100, 150]),
        reference_n_x: cx.nonzero("experiment", "reference_n_x", e.reference_n_x.unwrap_or(300))?,
        reference_steps_per_cell: cx.nonzero(
            "experiment",
            "reference_steps_per_cell",
            e.reference_steps_per_cell.unwrap_or(240),
        )?,
        coarse_steps_per_cell: cx.nonzero(
            "experiment",
            "coarse_steps_per_cell",
            e.coarse_steps_per_cell.unwrap_or(120),
        )?,
        deltas: e
            .deltas
            .unwrap_or_else(|| vec![1.0, 5.0, 10.0, 25.0, 50.0, 100.0]),
        eta: e.eta,
        sweep: e.sweep.unwrap_or(SweepKind::Masses),
        sweep_values: e.sweep_values.unwrap_or_else(|| match scenario {
            ScenarioKind::Tourism => vec![0.8, 0.2],
            _ => vec![0.5, 0.7, 0.9],
        }),
    };
    for &m in &experiment.coarse_ms {
        if m == 0 || !experiment.reference_n_x.is_multiple_of(m) {
            return Err(cx.invalid(
                "experiment",
                "coarse_ms",
                format!("{m} does not divide reference_n_x = {}", experiment.reference_n_x),
            ));
        }
    }
    if experiment.deltas.is_empty() || experiment.deltas.iter().any(|d| !(*d > 0.0)) {
        return Err(cx.invalid("experiment", "deltas", "must be a nonempty list of positive values"));
    }
    if experiment.deltas.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(cx.invalid("experiment", "deltas", "must be strictly increasing"));
    }
    if let Some(eta) = experiment.eta {
        cx.positive("experiment", "eta", eta)?;
    }

    Ok(RunConfig {
        spec_version,
        solver,
        scenario,
        grid,
        tsallis,
        population,
        fishing,
        tourism,
        custom,
        mfg,
        gld,
        solver_options,
        output,
        experiment,
    })
}

fn strip_prefix(msg: &str) -> String {
    msg.strip_prefix("invalid parameters: ").unwrap_or(msg).to_string()
}

fn tourism_params(t: &TourismSection) -> TourismParams {
    TourismParams {
        theta: t.theta,
        gamma: [t.gamma[0], t.gamma[1]],
        x_hat: t.x_hat,
        epsilon: t.epsilon,
    }
}

impl RunConfig {
    /// Defaults for a scenario, as if parsed from an empty file.
    pub fn defaults(scenario: ScenarioKind) -> Self {
        let raw = RawConfig {
            scenario: Some(scenario),
            ..Default::default()
        };
        resolve(raw, &Ctx { text: "" }).expect("defaults are valid")
    }

    pub fn to_scenario(&self) -> crate::Result<Scenario> {
        let model = match self.scenario {
            ScenarioKind::Fishing => ModelSpec::Fishing(FishingParams {
                alpha: self.fishing.alpha,
                beta: self.fishing.beta,
                kappa: self.fishing.kappa,
                masses: [self.population.masses[0], self.population.masses[1]],
            }),
            ScenarioKind::Tourism => ModelSpec::Tourism(tourism_params(&self.tourism)),
            ScenarioKind::Custom => ModelSpec::Custom(self.custom.coefficients.clone()),
        };
        let mut s = match self.scenario {
            ScenarioKind::Fishing => Scenario::fishing(),
            ScenarioKind::Tourism => Scenario::tourism(),
            ScenarioKind::Custom => Scenario::custom(self.custom.coefficients.clone()),
        };
        s.model = model;
        s.params = TsallisParams::new(self.tsallis.q, self.tsallis.eta)?;
        s.masses = self.population.masses.clone();
        s.n_x = self.grid.n_x;
        s.n_t = self.grid.n_t;
        s.horizon = self.grid.horizon;
        s.gld_init = self.gld.init.into();
        s.mfg_init = self.mfg.init.into();
        s.delta = self.mfg.delta;
        s.relaxation = self.mfg.relaxation;
        s.iter_tol = self.mfg.iter_tol;
        s.max_iters = self.mfg.max_iters;
        s.stationary_tol = self.gld.stationary_tol;
        s.max_steps = self.gld.max_steps;
        s.avg_norm = self.gld.avg_norm;
        s.strict_cfl = self.solver_options.strict_cfl;
        s.parallel = self.solver_options.parallel;
        Ok(s)
    }

    pub fn convergence_plan(&self) -> ConvergencePlan {
        ConvergencePlan {
            coarse_ms: self.experiment.coarse_ms.clone(),
            reference_n_x: self.experiment.reference_n_x,
            reference_steps_per_cell: self.experiment.reference_steps_per_cell,
            coarse_steps_per_cell: self.experiment.coarse_steps_per_cell,
        }
    }

    pub fn experiment_target(&self) -> Target {
        match self.experiment.target {
            SolverKind::Gld => Target::Gld,
            SolverKind::Mfg => Target::Mfg,
        }
    }

    pub fn sweep(&self) -> Sweep {
        match self.experiment.sweep {
            SweepKind::Masses => Sweep::Masses(self.experiment.sweep_values.clone()),
            SweepKind::Epsilon => Sweep::Epsilon(self.experiment.sweep_values.clone()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_config_is_default_fishing() {
        let c = parse_config_str("").unwrap();
        assert_eq!(c, RunConfig::defaults(ScenarioKind::Fishing));
        assert_eq!((c.grid.n_x, c.grid.n_t, c.grid.horizon), (150, 36000, 240.0));
        assert_eq!((c.tsallis.q, c.tsallis.eta), (0.8, 0.01));
        assert_eq!(c.population.masses, vec![0.7, 0.3]);
        assert_eq!((c.mfg.delta, c.mfg.relaxation, c.mfg.iter_tol), (1.0, 0.5, 1e-10));
        let s = c.to_scenario().unwrap();
        assert_eq!(s.model, ModelSpec::Fishing(FishingParams::default()));
    }

    #[test]
    fn tourism_defaults() {
        let c = parse_config_str("scenario = \"tourism\"").unwrap();
        assert_eq!(c.population.masses, vec![0.8, 0.2]);
        assert_eq!(tourism_params(&c.tourism), TourismParams::default());
    }

    #[test]
    fn bad_mass_sum_names_key_and_line() {
        let text = "scenario = \"fishing\"\n\n[population]\nmasses = [0.6, 0.3]\n";
        match parse_config_str(text) {
            Err(ConfigError::Validation { line, key, reason }) => {
                assert_eq!(line, Some(4));
                assert_eq!(key, "population.masses");
                assert!(reason.contains("masses sum to 0.9"), "{reason}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn q_zero_is_rejected() {
        let err = parse_config_str("[tsallis]\nq = 0\n").unwrap_err();
        assert!(matches!(err, ConfigError::Validation { ref key, line: Some(2), .. } if key == "tsallis.q"));
    }

    #[test]
    fn syntax_and_unknown_keys_are_parse_errors() {
        assert!(matches!(
            parse_config_str("[grid]\nn_x = \n"),
            Err(ConfigError::Parse { line: Some(2), .. })
        ));
        let err = parse_config_str("[grid]\nnx = 3\n").unwrap_err();
        assert!(matches!(err, ConfigError::Parse { line: Some(2), .. }), "{err:?}");
        let err = parse_config_str("[grid]\nn_x = \"many\"\n").unwrap_err();
        match err {
            ConfigError::Parse { key, .. } => assert_eq!(key.as_deref(), Some("grid.n_x")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn divisibility_is_checked() {
        let err = parse_config_str("[experiment]\nreference_n_x = 300\ncoarse_ms = [70]\n").unwrap_err();
        assert!(matches!(err, ConfigError::Validation { ref key, .. } if key == "experiment.coarse_ms"));
    }

    #[test]
    fn round_trip_defaults() {
        for s in [ScenarioKind::Fishing, ScenarioKind::Tourism, ScenarioKind::Custom] {
            let c = RunConfig::defaults(s);
            assert_eq!(parse_config_str(&serialize_config(&c)).unwrap(), c);
        }
    }

    proptest! {
        #[test]
        fn round_trip_random(
            n_x in 1usize..400,
            n_t in 1usize..100_000,
            q in 0.05f64..3.0,
            eta in 1e-4f64..10.0,
            m1 in 0.01f64..0.99,
            delta in 0.01f64..200.0,
            strict in proptest::option::of(any::<bool>()),
            eta_override in proptest::option::of(1e-4f64..1.0),
            tourism in any::<bool>(),
        ) {
            let mut c = RunConfig::defaults(if tourism { ScenarioKind::Tourism } else { ScenarioKind::Fishing });
            c.grid.n_x = n_x;
            c.grid.n_t = n_t;
            c.tsallis = TsallisSection { q, eta };
            c.population.masses = vec![m1, 1.0 - m1];
            c.mfg.delta = delta;
            c.solver_options.strict_cfl = strict;
            c.experiment.eta = eta_override;
            c.experiment.coarse_ms = vec![1];
            let back = parse_config_str(&serialize_config(&c));
            prop_assume!(back.is_ok() || PopulationSpec::new(c.population.masses.clone()).is_err());
            if let Ok(back) = back {
                prop_assert_eq!(back, c);
            }
        }
    }
}
