//! Declarative experiment configuration (JSON).
//!
//! The file carries the model data as compact sequence generators, the
//! Galerkin levels, the reference dimension, the functionals to test, Monte
//! Carlo settings and the master seed. Unknown keys are rejected so a typo
//! cannot silently change an experiment.

use crate::fem::Discretization;
use crate::levy::LevyMeasureSpec;
use crate::mild::ModelSpec;
use crate::spectral::SpectralVector;
use crate::{Result, SpdeError};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub levy: LevyConfig,
    pub discretizations: Vec<DiscretizationConfig>,
    pub ref_dim: usize,
    pub functionals: Vec<FunctionalConfig>,
    pub mc_samples: u64,
    pub seed: u64,
    pub mode: Mode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub x0: SequenceSpec,
    pub f: SequenceSpec,
    pub g: SequenceSpec,
    pub horizon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevyConfig {
    pub intensity: f64,
    /// Nonnegative weights, normalized to probabilities by the loader.
    pub mode_probs: SequenceSpec,
    pub jump_scales: SequenceSpec,
}

/// Compact generator for per-mode coefficient sequences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SequenceSpec {
    /// `coeff * k^exponent` for `k = 1..=len`.
    Power { coeff: f64, exponent: f64, len: usize },
    Constant { value: f64, len: usize },
    Zero { len: usize },
    Values { values: Vec<f64> },
}

impl SequenceSpec {
    pub fn realize(&self) -> Result<Vec<f64>> {
        let out = match self {
            Self::Power { coeff, exponent, len } => {
                (1..=*len).map(|k| coeff * (k as f64).powf(*exponent)).collect()
            }
            Self::Constant { value, len } => vec![*value; *len],
            Self::Zero { len } => vec![0.0; *len],
            Self::Values { values } => values.clone(),
        };
        if out.is_empty() {
            return Err(SpdeError::Config("sequence must have at least one entry".into()));
        }
        if out.iter().any(|x| !x.is_finite()) {
            return Err(SpdeError::Config("sequence contains a non-finite value".into()));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DiscretizationConfig {
    Spectral { modes: usize },
    Fem { interior_nodes: usize },
}

impl From<DiscretizationConfig> for Discretization {
    fn from(c: DiscretizationConfig) -> Self {
        match c {
            DiscretizationConfig::Spectral { modes } => Discretization::SpectralTruncation { modes },
            DiscretizationConfig::Fem { interior_nodes } => Discretization::FemMesh { interior_nodes },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FunctionalConfig {
    SquaredNorm,
    Linear { psi: SequenceSpec },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Analytic,
    Mc,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Mode::Analytic => write!(f, "analytic"),
            Mode::Mc => write!(f, "mc"),
        }
    }
}

/// A test functional of the solution at the final time.
#[derive(Debug, Clone)]
pub enum Functional {
    SquaredNorm,
    Linear { psi: SpectralVector },
}

impl Functional {
    pub fn label(&self, index: usize) -> String {
        match self {
            Functional::SquaredNorm => "squared_norm".into(),
            Functional::Linear { .. } => format!("linear_{index}"),
        }
    }
}

/// Fully realized experiment, validated and ready to run.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub model: ModelSpec,
    pub discretizations: Vec<Discretization>,
    pub ref_dim: usize,
    pub functionals: Vec<Functional>,
    pub mc_samples: u64,
    pub seed: u64,
    pub mode: Mode,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| {
            SpdeError::Config(format!("line {} column {}: {e}", e.line(), e.column()))
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialization cannot fail")
    }

    pub fn realize(&self) -> Result<Experiment> {
        let x0 = SpectralVector::new(self.model.x0.realize()?)
            .map_err(|e| SpdeError::Config(format!("model.x0: {e}")))?;
        let f = SpectralVector::new(self.model.f.realize()?)
            .map_err(|e| SpdeError::Config(format!("model.f: {e}")))?;
        let g = self.model.g.realize()?;
        let levy = LevyMeasureSpec::from_weights(
            self.levy.intensity,
            self.levy.mode_probs.realize()?,
            self.levy.jump_scales.realize()?,
        )
        .map_err(|e| SpdeError::Config(format!("levy: {e}")))?;
        let model = ModelSpec::new(x0, f, g, self.model.horizon, levy)
            .map_err(|e| SpdeError::Config(format!("model: {e}")))?;

        if self.discretizations.len() < 3 {
            return Err(SpdeError::Config(format!(
                "need at least 3 discretization levels for a rate fit, got {}",
                self.discretizations.len()
            )));
        }
        let discretizations: Vec<Discretization> =
            self.discretizations.iter().map(|d| Discretization::from(*d)).collect();
        for d in &discretizations {
            d.validate().map_err(|e| SpdeError::Config(e.to_string()))?;
        }
        for w in discretizations.windows(2) {
            if !(w[0].mesh_width() > w[1].mesh_width()) {
                return Err(SpdeError::Config(
                    "discretization levels must be sorted by strictly decreasing mesh width".into(),
                ));
            }
        }
        let max_resolved = discretizations.iter().map(|d| d.resolved_dim()).max().unwrap();
        if self.ref_dim < 4 * max_resolved {
            return Err(SpdeError::Config(format!(
                "ref_dim {} must be at least 4x the finest resolved dimension {max_resolved}",
                self.ref_dim
            )));
        }
        if self.ref_dim < model.num_modes() {
            return Err(SpdeError::Config(format!(
                "ref_dim {} does not resolve all {} model modes; the reference would be biased",
                self.ref_dim,
                model.num_modes()
            )));
        }

        if self.functionals.is_empty() {
            return Err(SpdeError::Config("at least one functional is required".into()));
        }
        let functionals = self
            .functionals
            .iter()
            .map(|f| -> Result<Functional> {
                Ok(match f {
                    FunctionalConfig::SquaredNorm => Functional::SquaredNorm,
                    FunctionalConfig::Linear { psi } => Functional::Linear {
                        psi: SpectralVector::new(psi.realize()?)
                            .map_err(|e| SpdeError::Config(format!("functional psi: {e}")))?,
                    },
                })
            })
            .collect::<Result<Vec<_>>>()?;

        if self.mode == Mode::Mc && self.mc_samples < 2 {
            return Err(SpdeError::Config("mc mode needs mc_samples >= 2".into()));
        }

        Ok(Experiment {
            model,
            discretizations,
            ref_dim: self.ref_dim,
            functionals,
            mc_samples: self.mc_samples,
            seed: self.seed,
            mode: self.mode,
        })
    }
}

/// The stock experiment: `T = 1`, smooth data `x0_k = f_k = k^{-3}`, flat
/// noise multipliers `g = 1`, covariance `q_k` proportional to `k^{-1}`
/// normalized to unit trace (rough noise, so the discretization error is
/// noise dominated), spectral levels `N = 4..64` against a reference at 2048
/// modes.
pub fn default_config() -> ExperimentConfig {
    let modes = 2048;
    ExperimentConfig {
        model: ModelConfig {
            x0: SequenceSpec::Power { coeff: 1.0, exponent: -3.0, len: modes },
            f: SequenceSpec::Power { coeff: 1.0, exponent: -3.0, len: modes },
            g: SequenceSpec::Constant { value: 1.0, len: modes },
            horizon: 1.0,
        },
        levy: LevyConfig {
            intensity: 50.0,
            mode_probs: SequenceSpec::Power { coeff: 1.0, exponent: -1.0, len: modes },
            // trace(Q) = intensity * a^2 = 1 with a = 1/sqrt(50)
            jump_scales: SequenceSpec::Constant { value: 0.1414213562373095, len: modes },
        },
        discretizations: vec![
            DiscretizationConfig::Spectral { modes: 4 },
            DiscretizationConfig::Spectral { modes: 8 },
            DiscretizationConfig::Spectral { modes: 16 },
            DiscretizationConfig::Spectral { modes: 32 },
            DiscretizationConfig::Spectral { modes: 64 },
        ],
        ref_dim: modes,
        functionals: vec![
            FunctionalConfig::SquaredNorm,
            FunctionalConfig::Linear {
                psi: SequenceSpec::Power { coeff: 1.0, exponent: -1.0, len: modes },
            },
        ],
        mc_samples: 10_000,
        seed: 42,
        mode: Mode::Analytic,
    }
}
