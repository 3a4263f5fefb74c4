//! Run configuration: a TOML schema with explicit units in key names
//! (energies in eV, times in 1/eV, hbar = k_B = 1). Unknown keys are
//! rejected so typos cannot silently change a run.

use serde::{Deserialize, Serialize};

use crate::baths::{BathModel, BathSpec, CellRule, OuterGrid, SpectralDensity};
use crate::propagation::BathSetup;

#[derive(Debug, Clone, thiserror::Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("{field}: {message}")]
    Invalid { field: String, message: String },
    #[error("sweep path `{0}` does not resolve to a scalar field")]
    BadSweepPath(String),
}

fn bad(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field: field.to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Tempo,
    Polaron,
    Rc,
    FourLevel,
    DenseOracle,
    SingleModeEd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingOp {
    /// Diagonal coupling through the excited-state projector.
    SigmaZProj,
    /// Transition coupling through `sigma_x`.
    SigmaX,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialState {
    Ground,
    Excited,
    Mixed,
    Plus,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemBlock {
    /// Emitter splitting `delta_P` in eV.
    pub splitting_ev: f64,
    #[serde(default = "default_initial")]
    pub initial: InitialState,
}

fn default_initial() -> InitialState {
    InitialState::Excited
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "snake_case")]
pub enum SpectralBlock {
    PowerLawExp {
        alpha: f64,
        p: f64,
        cutoff_ev: f64,
    },
    Underdamped {
        alpha: f64,
        omega0_ev: f64,
        width_ev: f64,
    },
    Mode {
        omega_ev: f64,
        g_ev: f64,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "snake_case")]
pub struct BathNumerics {
    /// History cell size in fine steps (`delta_h / delta_p`).
    #[serde(default = "default_ratio")]
    pub ratio: usize,
    /// Memory cutoff in fine steps; 0 keeps all history.
    #[serde(default)]
    pub memory_steps: usize,
    #[serde(default = "default_rule")]
    pub rule: RuleChoice,
    #[serde(default = "default_outer")]
    pub outer: OuterChoice,
}

fn default_ratio() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleChoice {
    Exact,
    Midpoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OuterChoice {
    Fine,
    Coarse,
}

fn default_rule() -> RuleChoice {
    RuleChoice::Exact
}

fn default_outer() -> OuterChoice {
    OuterChoice::Fine
}

impl Default for BathNumerics {
    fn default() -> Self {
        Self {
            ratio: 1,
            memory_steps: 0,
            rule: default_rule(),
            outer: default_outer(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BathBlock {
    pub coupling: CouplingOp,
    pub temperature_ev: f64,
    pub spectral: SpectralBlock,
    #[serde(default)]
    pub numerics: BathNumerics,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericsBlock {
    /// Propagation timestep in 1/eV.
    pub delta_p_inv_ev: f64,
    pub steps: usize,
    #[serde(default)]
    pub chi: f64,
    /// Mode truncation for the RC and single-mode methods.
    #[serde(default = "default_fock")]
    pub fock_levels: usize,
    #[serde(default = "default_window")]
    pub steady_window: usize,
    #[serde(default = "default_steady_tol")]
    pub steady_tol: f64,
    /// Sideband quantum count for the four-level method.
    #[serde(default = "default_sideband")]
    pub sideband: usize,
    /// Sample the dynamical map every this many steps; larger strides
    /// skip expensive chain caps and stabilise the steady-state estimate.
    #[serde(default = "default_stride")]
    pub map_stride: usize,
}

fn default_fock() -> usize {
    10
}
fn default_window() -> usize {
    40
}
fn default_steady_tol() -> f64 {
    1e-6
}
fn default_sideband() -> usize {
    1
}
fn default_stride() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepBlock {
    /// Dotted path, e.g. `bath.0.spectral.alpha` or `system.splitting_ev`.
    pub path: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    pub trajectory_csv: Option<String>,
    pub summary: Option<String>,
    pub kernel_csv: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub method: Method,
    pub system: SystemBlock,
    #[serde(rename = "bath")]
    pub baths: Vec<BathBlock>,
    pub numerics: NumericsBlock,
    pub sweep: Option<SweepBlock>,
    #[serde(default)]
    pub output: OutputBlock,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.baths.is_empty() {
            return Err(bad("bath", "at least one bath is required"));
        }
        if self.numerics.delta_p_inv_ev <= 0.0 {
            return Err(bad("numerics.delta_p_inv_ev", "must be positive"));
        }
        if self.numerics.steps == 0 {
            return Err(bad("numerics.steps", "must be positive"));
        }
        if self.numerics.chi < 0.0 {
            return Err(bad("numerics.chi", "must be non-negative"));
        }
        if self.numerics.map_stride == 0 {
            return Err(bad("numerics.map_stride", "must be >= 1"));
        }
        if self.numerics.fock_levels < 2 {
            return Err(bad("numerics.fock_levels", "need at least 2 levels"));
        }
        for (i, b) in self.baths.iter().enumerate() {
            let field = format!("bath.{i}");
            if b.temperature_ev < 0.0 {
                return Err(bad(&format!("{field}.temperature_ev"), "must be >= 0"));
            }
            if b.numerics.ratio == 0 {
                return Err(bad(&format!("{field}.numerics.ratio"), "must be >= 1"));
            }
            b.to_setup(i)
                .map_err(|e| bad(&format!("{field}.spectral"), e.to_string()))?;
        }
        if let Some(sweep) = &self.sweep {
            if sweep.values.is_empty() {
                return Err(bad("sweep.values", "must be non-empty"));
            }
            let mut probe = self.clone();
            probe.sweep = None;
            probe.apply_sweep_value(&sweep.path, sweep.values[0])?;
        }
        Ok(())
    }

    /// Set the scalar named by a dotted sweep `path` to `value`.
    pub fn apply_sweep_value(&mut self, path: &str, value: f64) -> Result<(), ConfigError> {
        let parts: Vec<&str> = path.split('.').collect();
        let miss = || ConfigError::BadSweepPath(path.to_string());
        match parts.as_slice() {
            ["system", "splitting_ev"] => self.system.splitting_ev = value,
            ["numerics", "delta_p_inv_ev"] => self.numerics.delta_p_inv_ev = value,
            ["numerics", "chi"] => self.numerics.chi = value,
            ["numerics", "steady_tol"] => self.numerics.steady_tol = value,
            ["bath", idx, rest @ ..] => {
                let i: usize = idx.parse().map_err(|_| miss())?;
                let b = self.baths.get_mut(i).ok_or_else(miss)?;
                match rest {
                    ["temperature_ev"] => b.temperature_ev = value,
                    ["spectral", field] => match (&mut b.spectral, *field) {
                        (SpectralBlock::PowerLawExp { alpha, .. }, "alpha") => *alpha = value,
                        (SpectralBlock::PowerLawExp { p, .. }, "p") => *p = value,
                        (SpectralBlock::PowerLawExp { cutoff_ev, .. }, "cutoff_ev") => {
                            *cutoff_ev = value
                        }
                        (SpectralBlock::Underdamped { alpha, .. }, "alpha") => *alpha = value,
                        (SpectralBlock::Underdamped { omega0_ev, .. }, "omega0_ev") => {
                            *omega0_ev = value
                        }
                        (SpectralBlock::Underdamped { width_ev, .. }, "width_ev") => {
                            *width_ev = value
                        }
                        (SpectralBlock::Mode { omega_ev, .. }, "omega_ev") => *omega_ev = value,
                        (SpectralBlock::Mode { g_ev, .. }, "g_ev") => *g_ev = value,
                        _ => return Err(miss()),
                    },
                    _ => return Err(miss()),
                }
            }
            _ => return Err(miss()),
        }
        self.validate()
    }
}

impl BathBlock {
    pub fn to_spec(&self, coupling_index: usize) -> Result<BathSpec<f64>, crate::baths::BathError> {
        let model = match &self.spectral {
            SpectralBlock::PowerLawExp {
                alpha,
                p,
                cutoff_ev,
            } => BathModel::Continuum(SpectralDensity::PowerLawExp {
                a: *alpha,
                p: *p,
                cutoff: *cutoff_ev,
            }),
            SpectralBlock::Underdamped {
                alpha,
                omega0_ev,
                width_ev,
            } => BathModel::Continuum(SpectralDensity::Underdamped {
                a: *alpha,
                omega0: *omega0_ev,
                width: *width_ev,
            }),
            SpectralBlock::Mode { omega_ev, g_ev } => BathModel::Mode {
                omega: *omega_ev,
                g: *g_ev,
            },
        };
        let spec = BathSpec {
            model,
            temperature: self.temperature_ev,
            coupling_index,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_setup(&self, coupling_index: usize) -> Result<BathSetup<f64>, crate::baths::BathError> {
        Ok(BathSetup {
            spec: self.to_spec(coupling_index)?,
            ratio: self.numerics.ratio,
            memory: match self.numerics.memory_steps {
                0 => None,
                k => Some(k),
            },
            rule: match self.numerics.rule {
                RuleChoice::Exact => CellRule::Exact,
                RuleChoice::Midpoint => CellRule::Midpoint,
            },
            outer: match self.numerics.outer {
                OuterChoice::Fine => OuterGrid::Fine,
                OuterChoice::Coarse => OuterGrid::Coarse,
            },
        })
    }
}
