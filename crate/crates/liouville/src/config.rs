//! Experiment configuration files (TOML). Unknown keys are rejected and all
//! physical preconditions are checked before anything is computed.

use std::path::Path;

use serde::{Deserialize, Serialize};

use liouville_core::mollifier::{check_resolved, MollifierSpec};
use liouville_core::punctures::{seiberg_check, Puncture, Surface};

use crate::solver::{check_mode, Flavor, ModelParams, SolverSurface, ThresholdMode};
use crate::{Error, Result, TorusGrid};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub n_space: usize,
    pub n_time: usize,
    /// Defaults to `dx^2`.
    pub dt: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PunctureEntry {
    pub position: [f64; 2],
    pub alpha: f64,
}

fn one() -> f64 {
    1.0
}

fn exp_flavor() -> Flavor {
    Flavor::Exp
}

fn torus() -> SolverSurface {
    SolverSurface::Torus
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub gamma: f64,
    #[serde(default = "one")]
    pub mu: f64,
    #[serde(default = "exp_flavor")]
    pub flavor: Flavor,
    #[serde(default)]
    pub punctures: Vec<PunctureEntry>,
    #[serde(default = "torus")]
    pub surface: SolverSurface,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MollifierKind {
    Bump,
}

fn bump() -> MollifierKind {
    MollifierKind::Bump
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub seed: u64,
    pub epsilon: f64,
    #[serde(default = "bump")]
    pub mollifier: MollifierKind,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub horizon: Option<f64>,
    pub mode: Option<ThresholdMode>,
    pub replicas: Option<usize>,
    pub radii: Option<Vec<f64>>,
    pub q_list: Option<Vec<f64>>,
    pub output: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub grid: GridSection,
    pub model: ModelSection,
    pub noise: NoiseSection,
    #[serde(default)]
    pub run: RunSection,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let c: ExperimentConfig = toml::from_str(text).map_err(|e| Error::InvalidParameter(format!("config: {e}")))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidParameter(format!("config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Canonical text, used for the provenance hash.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("serializable")
    }

    pub fn grid(&self) -> Result<TorusGrid> {
        let n = self.grid.n_space;
        TorusGrid::new(n, self.grid.n_time, self.grid.dt.unwrap_or(1.0 / (n * n) as f64))
    }

    pub fn mollifier(&self) -> MollifierSpec {
        match self.noise.mollifier {
            MollifierKind::Bump => MollifierSpec::bump(self.noise.epsilon),
        }
    }

    pub fn punctures(&self) -> Vec<Puncture> {
        self.model.punctures.iter().map(|p| Puncture { position: p.position, alpha: p.alpha }).collect()
    }

    pub fn model_params(&self) -> ModelParams {
        ModelParams {
            gamma: self.model.gamma,
            mu: self.model.mu,
            flavor: self.model.flavor,
            punctures: self.punctures(),
            surface: self.model.surface,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let g = self.grid()?;
        check_resolved(&self.mollifier(), &g)?;
        let params = self.model_params();
        params.validate()?;
        if !params.punctures.is_empty() {
            seiberg_check(params.gamma, &params.punctures, Surface::Torus)?;
        }
        if let Some(mode) = self.run.mode {
            check_mode(&params, mode)?;
        }
        if let Some(h) = self.run.horizon {
            if !(h > 0.0) {
                return Err(Error::InvalidParameter(format!("horizon must be positive, got {h}")));
            }
        }
        if self.run.replicas == Some(0) {
            return Err(Error::InvalidParameter("replicas must be >= 1".into()));
        }
        if let Some(r) = &self.run.radii {
            if r.windows(2).any(|w| !(w[1] < w[0])) || r.iter().any(|&x| !(x > 0.0)) {
                return Err(Error::InvalidParameter("radii must be positive and strictly decreasing".into()));
            }
        }
        Ok(())
    }
}
