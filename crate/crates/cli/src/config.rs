//! Run configuration: one TOML file, one task.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use twistlab_core::evolution::Scheme;
use twistlab_core::spectral::AxialGridPolicy;
use twistlab_core::{CrossSection, EigOptions, TubeSpec, TwistProfile};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Modes,
    MuCurve,
    Hardy,
    LambdaSweep,
    Evolve,
    Fit,
    #[serde(rename = "oracle-1d")]
    Oracle1d,
    EnergyOde,
    Inequalities,
    Stability,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Modes => "modes",
            Task::MuCurve => "mu-curve",
            Task::Hardy => "hardy",
            Task::LambdaSweep => "lambda-sweep",
            Task::Evolve => "evolve",
            Task::Fit => "fit",
            Task::Oracle1d => "oracle-1d",
            Task::EnergyOde => "energy-ode",
            Task::Inequalities => "inequalities",
            Task::Stability => "stability",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TubeConfig {
    pub section: CrossSection,
    #[serde(default = "zero_twist")]
    pub twist: TwistProfile,
    pub half_length: f64,
}

fn zero_twist() -> TwistProfile {
    TwistProfile::Zero
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    /// Cross-section spacing h'.
    pub section_h: f64,
    /// Far-field axial spacing.
    pub h_coarse: f64,
    /// Axial spacing on the twist support; equal to `h_coarse` gives a uniform grid.
    #[serde(default)]
    pub h_fine: Option<f64>,
    #[serde(default)]
    pub ratio: Option<f64>,
}

/// Task parameters; each task reads the fields it needs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    /// Self-similar times for `mu-curve`.
    pub s: Option<Vec<f64>>,
    /// Half-widths ε of I_ε for `lambda-sweep`.
    pub eps: Option<Vec<f64>>,
    /// Potential strengths for `stability`.
    pub eps_pot: Option<Vec<f64>>,
    pub interval: Option<[f64; 2]>,
    pub interval_cells: Option<usize>,
    /// Half-length of the self-similar or 1D problem.
    pub y_half_length: Option<f64>,
    pub cells: Option<usize>,
    pub t_end: Option<f64>,
    pub dt: Option<f64>,
    /// Geometric step growth: dt ≤ rel (1 + t).
    pub rel: Option<f64>,
    pub scheme: Option<Scheme>,
    pub record_every: Option<usize>,
    /// Gaussian index n of the initial datum exp(-x₁²/n) 𝒥₁.
    pub gaussian_n: Option<f64>,
    pub window: Option<[f64; 2]>,
    pub c_h: Option<f64>,
    pub a0: Option<f64>,
    pub b0: Option<f64>,
    pub seeds: Option<usize>,
    /// Repeat with doubled truncation length and report the change.
    pub l_doubling: Option<bool>,
    /// Repeat with halved section spacing and report the change.
    pub h_halving: Option<bool>,
    pub eig_tol: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub task: Task,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    /// Worker threads for sweeps.
    #[serde(default)]
    pub workers: Option<usize>,
    pub tube: TubeConfig,
    pub grid: GridConfig,
    #[serde(default)]
    pub params: Params,
}

fn default_seed() -> u64 {
    EigOptions::default().seed
}

pub const OUT_ENV: &str = "TWISTLAB_OUT";

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::ConfigInvalid(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let invalid = |m: String| CliError::ConfigInvalid(m);
        self.tube_spec().map_err(|e| invalid(e.to_string()))?;
        let g = &self.grid;
        if !(g.section_h > 0.0 && g.h_coarse > 0.0) {
            return Err(invalid("grid spacings must be positive".into()));
        }
        if let Some(h) = g.h_fine {
            if !(h > 0.0) {
                return Err(invalid("grid.h_fine must be positive".into()));
            }
        }
        if let Some(r) = g.ratio {
            if !(r > 1.0 && r <= twistlab_core::discretize::MAX_GRADING) {
                return Err(invalid(format!("grid.ratio {r} outside (1, 1.2]")));
            }
        }
        let p = &self.params;
        if let Some(s) = &p.s {
            if s.windows(2).any(|w| w[1] <= w[0]) || s.iter().any(|v| *v < 0.0) {
                return Err(invalid("params.s must be nonnegative and strictly increasing".into()));
            }
        }
        if let Some([a, b]) = p.interval {
            if !(a < b) {
                return Err(invalid("params.interval must be increasing".into()));
            }
        }
        if let Some([a, b]) = p.window {
            if !(a < b) {
                return Err(invalid("params.window must be increasing".into()));
            }
        }
        if self.workers == Some(0) {
            return Err(invalid("workers must be positive".into()));
        }
        Ok(())
    }

    pub fn tube_spec(&self) -> twistlab_core::Result<TubeSpec> {
        TubeSpec::new(
            self.tube.section,
            self.tube.twist.clone(),
            self.tube.half_length,
        )
    }

    pub fn axial_policy(&self, half_length: f64) -> AxialGridPolicy {
        let mut p = AxialGridPolicy::new(
            half_length,
            self.grid.h_coarse,
            self.grid.h_fine.unwrap_or(self.grid.h_coarse),
        );
        if let Some(r) = self.grid.ratio {
            p.ratio = r;
        }
        p
    }

    pub fn eig_options(&self) -> EigOptions {
        let mut o = EigOptions {
            seed: self.seed,
            ..EigOptions::default()
        };
        if let Some(t) = self.params.eig_tol {
            o.tol = t;
        }
        o
    }

    /// `TWISTLAB_OUT`, then `output`, then `twistlab-out/<task>`.
    pub fn output_dir(&self) -> PathBuf {
        if let Some(dir) = std::env::var_os(OUT_ENV) {
            return PathBuf::from(dir);
        }
        self.output
            .clone()
            .unwrap_or_else(|| PathBuf::from("twistlab-out").join(self.task.name()))
    }

    /// Canonical serialization used for hashing.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
