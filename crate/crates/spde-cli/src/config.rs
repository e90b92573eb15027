//! One JSON document drives every subcommand; the CLI can override seed and
//! replica count. Unknown fields are rejected so a typo surfaces as a parse
//! error naming the field, and the resolved struct serializes back to the
//! exact document the run used.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use spde_core::conv::KernelRule;
use spde_core::grid::GridSpec;
use spde_core::levy::LevyModel;
use spde_core::measure::{SignedMeasure, WeightMeasure};
use spde_core::norms::{NormParams, TimeRule};
use spde_core::picard::SigmaSpec;
use spde_core::{Result, SpdeError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    Young,
    Lipschitz,
    Orthogonality,
    Isometry,
}

fn d_k() -> f64 {
    2.0
}

fn d_beta() -> f64 {
    2.0
}

/// Norm block with spelled-out defaults: k = 2, beta = 2, Lebesgue weight,
/// no shift supremum, right-point time rule.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormConfig {
    #[serde(default = "d_k")]
    pub k: f64,
    #[serde(default = "d_beta")]
    pub beta: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<WeightMeasure>,
    #[serde(default)]
    pub shift_half_width: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub time_rule: Option<TimeRule>,
}

impl Default for NormConfig {
    fn default() -> Self {
        NormConfig {
            k: d_k(),
            beta: d_beta(),
            eta: None,
            shift_half_width: 0.0,
            time_horizon: None,
            time_rule: None,
        }
    }
}

impl NormConfig {
    pub fn to_params(&self) -> NormParams {
        NormParams {
            k: self.k,
            beta: self.beta,
            eta: self.eta.unwrap_or(WeightMeasure::Lebesgue),
            shift_half_width: self.shift_half_width,
            time_horizon: self.time_horizon,
            time_rule: self.time_rule.unwrap_or(TimeRule::RightPoint),
        }
    }
}

fn d_seed() -> u64 {
    1
}

fn d_replicas() -> usize {
    256
}

fn d_tol() -> f64 {
    1e-6
}

fn d_max_iter() -> usize {
    25
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<LevyModel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<SigmaSpec>,
    /// Initial position measure; delta at the origin when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<SignedMeasure>,
    /// Initial velocity measure for the wave subcommand.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v0: Option<SignedMeasure>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub norm: NormConfig,
    #[serde(default = "d_seed")]
    pub seed: u64,
    #[serde(default = "d_replicas")]
    pub replicas: usize,
    #[serde(default = "d_tol")]
    pub tol: f64,
    #[serde(default = "d_max_iter")]
    pub max_iter: usize,
    /// Analytic subcommands read beta here before falling back to norm.beta.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<f64>,
    /// Gate Lipschitz bound; defaults to the configured sigma's constant.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lip_sigma: Option<f64>,
    /// Multiplier for the anderson subcommand.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel_rule: Option<KernelRule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub check: Option<CheckKind>,
    /// Picard sweeps for the orthogonality check.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweeps: Option<usize>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<ExperimentConfig> {
        let text = fs::read_to_string(path).map_err(|e| {
            SpdeError::parameter(format!("cannot read config {}: {e}", path.display()))
        })?;
        serde_json::from_str(&text).map_err(|e| {
            SpdeError::parameter(format!("invalid config {}: {e}", path.display()))
        })
    }

    pub fn require_model(&self) -> Result<&LevyModel> {
        self.model
            .as_ref()
            .ok_or_else(|| SpdeError::parameter("config needs a \"model\" block"))
    }

    pub fn require_grid(&self) -> Result<&GridSpec> {
        self.grid
            .as_ref()
            .ok_or_else(|| SpdeError::parameter("config needs a \"grid\" block"))
    }

    pub fn require_sigma(&self) -> Result<&SigmaSpec> {
        self.sigma
            .as_ref()
            .ok_or_else(|| SpdeError::parameter("config needs a \"sigma\" block"))
    }

    pub fn norm_params(&self) -> NormParams {
        self.norm.to_params()
    }

    pub fn mu_or_delta(&self) -> SignedMeasure {
        self.mu.clone().unwrap_or_else(SignedMeasure::delta)
    }

    pub fn v0_or_zero(&self) -> SignedMeasure {
        self.v0.clone().unwrap_or_else(SignedMeasure::zero)
    }

    pub fn beta(&self) -> f64 {
        self.beta.unwrap_or(self.norm.beta)
    }

    pub fn k(&self) -> f64 {
        self.k.unwrap_or(self.norm.k)
    }

    pub fn lip_sigma(&self) -> Result<f64> {
        if let Some(l) = self.lip_sigma {
            return Ok(l);
        }
        if let Some(s) = &self.sigma {
            return Ok(s.lip());
        }
        Err(SpdeError::parameter(
            "config needs \"lip_sigma\" or a \"sigma\" block",
        ))
    }

    /// Cell-averaged kernel where the closed form exists, node sampling
    /// otherwise.
    pub fn kernel_rule_for(&self, model: &LevyModel) -> KernelRule {
        self.kernel_rule.unwrap_or(match model {
            LevyModel::Gaussian { .. } => KernelRule::CellRms,
            _ => KernelRule::Node,
        })
    }
}
