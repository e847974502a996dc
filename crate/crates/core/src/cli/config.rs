use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cmada::SimulationSettings;
use crate::depth_completion::CompletionParams;
use crate::dual_bilateral::FilterParams;
use crate::error::{Error, Result};
use crate::fog_synthesis::FogConfig;
use crate::imaging::CameraModel;

/// Shared configuration for every subcommand, read from JSON. Missing
/// fields take their defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToolConfig {
    pub camera: CameraModel,
    pub fog: FogConfig,
    pub completion: CompletionParams,
    pub filter: FilterParams,
    pub density_model: Option<PathBuf>,
    /// Worker threads; all cores when unset.
    pub parallelism: Option<usize>,
    /// Seeds every randomized step.
    pub seed: u64,
}

impl ToolConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: Self = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        if let Some(m) = cfg.density_model.as_mut().filter(|m| m.is_relative()) {
            *m = path.parent().unwrap_or(Path::new("")).join(&*m);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.camera.validate()?;
        self.fog.validate()?;
        self.completion.validate()?;
        self.filter.validate()?;
        if let Some(m) = &self.density_model {
            if !m.is_file() {
                return Err(Error::InvalidParameter(format!("density model {} does not exist", m.display())));
            }
        }
        if self.parallelism == Some(0) {
            return Err(Error::InvalidParameter("parallelism must be >= 1".into()));
        }
        Ok(())
    }

    /// Simulation settings with the global seed applied.
    pub fn simulation(&self) -> SimulationSettings {
        SimulationSettings {
            camera: self.camera,
            fog: self.fog.clone(),
            completion: CompletionParams { seed: self.seed, ..self.completion.clone() },
            filter: self.filter.clone(),
        }
    }
}
