//! Run configuration and the defaults table.
//!
//! | setting                      | default                                   |
//! |------------------------------|-------------------------------------------|
//! | frequency grid               | 0.1 ..= 5, 200 points                     |
//! | lag grid                     | 0 ..= 50, 501 points                      |
//! | time grid (zq)               | 0 ..= 50, 51 points                       |
//! | counting-field grid          | −2 ..= 2, 81 points                       |
//! | noise times / lags           | 0 ..= 20, 21 points / 0.5 ..= 20, 40      |
//! | oracle modes per bath        | 200                                       |
//! | oracle layout                | graded, dense to 40, 90 %, tail to 5000   |
//! | plateau layout               | graded, dense to 10, 85 %, tail to 5000   |
//! | initial oscillator state     | coherent, ⟨Q⟩ = 1, ⟨P⟩ = 0                |
//! | plateau initial state        | thermal, T = 1                            |
//! | tolerances                   | see [`Tolerances::default`]               |

use std::path::PathBuf;

use oscfluct::genfunc::MomentState;
use oscfluct::oracle::ModeLayout;
use oscfluct::scenario::ScenarioSpec;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// The only configuration schema this build understands.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: u32,
    pub scenario: ScenarioSpec,
    pub task: Task,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

/// Evenly spaced grid including both ends.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub start: f64,
    pub stop: f64,
    pub points: usize,
}

impl Grid {
    pub const fn new(start: f64, stop: f64, points: usize) -> Self {
        Self { start, stop, points }
    }

    pub fn values(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.start];
        }
        let step = (self.stop - self.start) / (self.points - 1) as f64;
        (0..self.points).map(|k| self.start + step * k as f64).collect()
    }

    fn check(&self, field: &str) -> Result<(), CliError> {
        if self.points == 0 || !self.start.is_finite() || !self.stop.is_finite() || self.stop < self.start {
            return Err(CliError::Config(format!(
                "{field}: need finite start <= stop and at least one point, got {self:?}"
            )));
        }
        Ok(())
    }

    fn check_positive(&self, field: &str) -> Result<(), CliError> {
        self.check(field)?;
        if self.start.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
            return Err(CliError::Config(format!(
                "{field}: frequencies must be > 0, got start {}",
                self.start
            )));
        }
        Ok(())
    }

    fn check_nonnegative(&self, field: &str) -> Result<(), CliError> {
        self.check(field)?;
        if self.start < 0.0 {
            return Err(CliError::Config(format!(
                "{field}: values must be >= 0, got start {}",
                self.start
            )));
        }
        Ok(())
    }
}

/// Initial Gaussian state of the central oscillator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialState {
    /// Minimum-uncertainty state of the bare oscillator displaced to (q, p).
    Coherent {
        q: f64,
        p: f64,
    },
    Thermal {
        temperature: f64,
    },
    Explicit {
        mean: [f64; 2],
        cov: [[f64; 2]; 2],
    },
}

impl Default for InitialState {
    fn default() -> Self {
        Self::Coherent { q: 1.0, p: 0.0 }
    }
}

impl InitialState {
    pub fn build(&self, omega0: f64) -> Result<MomentState, CliError> {
        let s = match *self {
            Self::Coherent { q, p } => Ok(MomentState::coherent(omega0, q, p)),
            Self::Thermal { temperature } => MomentState::thermal(omega0, temperature),
            Self::Explicit { mean, cov } => MomentState::new(mean, cov),
        };
        s.map_err(|e| CliError::Config(format!("task.initial: {e}")))
    }
}

fn default_omegas() -> Grid {
    Grid::new(0.1, 5.0, 200)
}
fn default_lags() -> Grid {
    Grid::new(0.0, 50.0, 501)
}
fn default_times() -> Grid {
    Grid::new(0.0, 50.0, 51)
}
fn default_xi() -> Grid {
    Grid::new(-2.0, 2.0, 81)
}
fn default_noise_times() -> Grid {
    Grid::new(0.0, 20.0, 21)
}
fn default_noise_lags() -> Grid {
    Grid::new(0.5, 20.0, 40)
}
fn default_modes() -> usize {
    200
}
fn default_samples() -> usize {
    41
}
fn default_oracle_layout() -> ModeLayout {
    ModeLayout::Graded {
        dense_max: 40.0,
        dense_fraction: 0.9,
        omega_max: 5000.0,
    }
}
fn default_plateau_initial() -> InitialState {
    InitialState::Thermal { temperature: 1.0 }
}
fn default_plateau_layout() -> ModeLayout {
    ModeLayout::Graded {
        dense_max: 10.0,
        dense_fraction: 0.85,
        omega_max: 5000.0,
    }
}

/// Exactly one task per run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Task {
    /// Spectra Ψ(ω), Φ(ω)/i and the generalized fluctuation-dissipation relation.
    Fdt {
        #[serde(default = "default_omegas")]
        omegas: Grid,
    },
    /// Stationary lag correlations and their spectra.
    Correlations {
        #[serde(default = "default_lags")]
        lags: Grid,
        #[serde(default = "default_omegas")]
        omegas: Grid,
    },
    /// Moment trajectory and the position generating function.
    Zq {
        #[serde(default = "default_times")]
        times: Grid,
        #[serde(default = "default_xi")]
        xi: Grid,
        #[serde(default)]
        initial: InitialState,
    },
    /// Steady energy current, optionally swept over left-bath temperatures
    /// T_l = T_r + ΔT when both baths are thermal.
    Current {
        #[serde(default)]
        delta_t: Vec<f64>,
    },
    /// Cumulant generating function on a line of counting fields.
    Cgf {
        #[serde(default = "default_xi")]
        xi: Grid,
        #[serde(default)]
        xi_imag: f64,
        #[serde(default = "default_omegas")]
        affinity_omegas: Grid,
    },
    /// Fluctuating force of one bath.
    Noise {
        #[serde(default)]
        bath: usize,
        #[serde(default = "default_noise_times")]
        times: Grid,
        #[serde(default = "default_noise_lags")]
        lags: Grid,
    },
    /// Continuum results against a finite-mode brute-force solution.
    OracleCompare {
        #[serde(default = "default_modes")]
        modes: usize,
        #[serde(default = "default_oracle_layout")]
        layout: ModeLayout,
        #[serde(default = "default_samples")]
        samples: usize,
        #[serde(default)]
        initial: InitialState,
        /// Also compare the energy-current plateau; needs two baths.
        #[serde(default)]
        plateau: bool,
        #[serde(default = "default_plateau_layout")]
        plateau_layout: ModeLayout,
        /// Oscillator state for the plateau run; a displaced start biases
        /// the current window with its own relaxation.
        #[serde(default = "default_plateau_initial")]
        plateau_initial: InitialState,
    },
}

impl Task {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Fdt { .. } => "fdt",
            Self::Correlations { .. } => "correlations",
            Self::Zq { .. } => "zq",
            Self::Current { .. } => "current",
            Self::Cgf { .. } => "cgf",
            Self::Noise { .. } => "noise",
            Self::OracleCompare { .. } => "oracle-compare",
        }
    }

    pub fn needs_two_baths(&self) -> bool {
        matches!(self, Self::Current { .. } | Self::Cgf { .. })
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub fdt_equilibrium: f64,
    pub fdt_generalized: f64,
    pub zq_symmetry: f64,
    pub gallavotti_cohen: f64,
    pub cumulants: f64,
    pub current_paths: f64,
    pub noise_homogeneity: f64,
    pub oracle: f64,
    pub plateau: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            fdt_equilibrium: 1e-8,
            fdt_generalized: 1e-10,
            zq_symmetry: 1e-12,
            gallavotti_cohen: 1e-8,
            cumulants: 1e-6,
            current_paths: 1e-8,
            noise_homogeneity: 1e-10,
            oracle: 1e-3,
            plateau: 2e-2,
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))?;
        if cfg.schema != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "schema: unsupported version {}, expected {SCHEMA_VERSION}",
                cfg.schema
            )));
        }
        cfg.check_grids()?;
        Ok(cfg)
    }

    fn check_grids(&self) -> Result<(), CliError> {
        match &self.task {
            Task::Fdt { omegas } => omegas.check_positive("task.omegas"),
            Task::Correlations { lags, omegas } => {
                lags.check("task.lags")?;
                omegas.check_positive("task.omegas")
            }
            Task::Zq { times, xi, .. } => {
                times.check_nonnegative("task.times")?;
                xi.check("task.xi")
            }
            Task::Current { delta_t } => {
                if let Some(d) = delta_t.iter().find(|d| !d.is_finite()) {
                    return Err(CliError::Config(format!("task.delta_t: non-finite entry {d}")));
                }
                Ok(())
            }
            Task::Cgf {
                xi,
                xi_imag,
                affinity_omegas,
            } => {
                xi.check("task.xi")?;
                if !xi_imag.is_finite() {
                    return Err(CliError::Config("task.xi_imag: must be finite".into()));
                }
                affinity_omegas.check_positive("task.affinity_omegas")
            }
            Task::Noise { times, lags, .. } => {
                times.check_nonnegative("task.times")?;
                lags.check("task.lags")
            }
            Task::OracleCompare { modes, samples, .. } => {
                if *modes == 0 || *samples < 2 {
                    return Err(CliError::Config(format!(
                        "task: oracle-compare needs modes >= 1 and samples >= 2, got {modes} and {samples}"
                    )));
                }
                Ok(())
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids_include_both_ends() {
        assert_eq!(Grid::new(0.0, 1.0, 3).values(), vec![0.0, 0.5, 1.0]);
        assert_eq!(Grid::new(2.0, 2.0, 1).values(), vec![2.0]);
        assert!(Grid::new(1.0, 0.0, 4).check("g").is_err());
    }

    #[test]
    fn defaults_fill_task_fields() {
        let cfg = RunConfig::parse(
            r#"{"schema": 1,
                "scenario": {"omega0": 1.0, "baths": []},
                "task": {"kind": "oracle-compare"}}"#,
        )
        .unwrap();
        match cfg.task {
            Task::OracleCompare { modes, layout, .. } => {
                assert_eq!(modes, 200);
                assert_eq!(layout, default_oracle_layout());
            }
            other => panic!("unexpected task {other:?}"),
        }
        assert_eq!(cfg.tolerances.fdt_equilibrium, 1e-8);
    }

    #[test]
    fn wrong_schema_is_rejected() {
        let err =
            RunConfig::parse(r#"{"schema": 9, "scenario": {"omega0": 1.0, "baths": []}, "task": {"kind": "fdt"}}"#)
                .unwrap_err();
        assert!(err.to_string().contains("schema"));
    }
}
