use std::path::{Path, PathBuf};

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};
use sgw_core::simulation::{GeometryConfig, SweepConfig};

use crate::error::CliError;

/// Everything a run needs: surface, frame, forward model, scenarios and
/// solvers.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize, JsonSchema)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: GeometryConfig,
    pub sweep: SweepConfig,
    pub master_seed: u64,
    /// Run directory; `--out` takes precedence.
    pub output_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        for file in self.geometry.referenced_files() {
            if !file.is_file() {
                return Err(CliError::Config(format!(
                    "referenced file {} does not exist",
                    file.display()
                )));
            }
        }
        self.sweep.validate()?;
        Ok(())
    }
}

pub fn schema() -> serde_json::Value {
    serde_json::to_value(schemars::schema_for!(RunConfig)).expect("schema serializes")
}
