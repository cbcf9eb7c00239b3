//! Mean-field games and generalized logit dynamics driven by Tsallis
//! deformed-softmax kernels on the unit interval.

pub mod cli;
pub mod config;
pub mod error;
pub mod experiments;
pub mod gld;
pub mod grid;
pub mod kernel;
pub mod mfg;
pub mod output;
pub mod tsallis;
pub mod utility;

pub use error::{Error, Result};
pub use grid::{
    avg_norm_diff, downsample_cell_average, downsample_cell_sum, init_density, make_grid,
    max_norm_diff, to_density, DensityField, GridSpec, InitProfile, PopulationSpec, TimeField,
    TypeSlices, ValueField,
};
pub use kernel::{softmax_kernel, TransitionKernel};
pub use tsallis::{exp_q, ln_q, phi_cost, theta_bar, TsallisParams};
pub use utility::{
    aggregates, eval_utility_grid, fishing_utility, potential_value, regularity_constant,
    smooth_indicator, tourism_utility, utility_bound_l, FishingParams, FishingUtility,
    GenericUtility, PolynomialUtility, TourismParams, TourismUtility, UtilityModel,
};
pub use gld::{
    assumption2_holds, default_strict_cfl, gld_step, gld_transition_kernel, positivity_bound, solve_gld_stationary, stationary_residual,
    GldConfig, GldSolution, TrajectorySample,
};
pub use mfg::{
    cfl_limits, extract_turnpike_slice, fp_forward_step, hjb_backward_step,
    optimal_control_kernel, solve_mfg, solve_mfg_from, turnpike_index, CflLimits, IterationLog,
    MfgConfig, MfgSolution,
};
pub use experiments::{
    convergence_study, delta_sweep, scenario_sweep, ConvergencePlan, ConvergenceReport,
    DeltaSweepReport, ModelSpec, Scenario, ScenarioSweepReport, Sweep, Target,
};
pub use config::{parse_config, parse_config_str, serialize_config, ConfigError, RunConfig};
