use std::path::Path;

use serde::{Deserialize, Serialize};
use vair_core::eval::EvalConfig;
use vair_core::glo::GloConfig;
use vair_core::pipeline::PipelineConfig;
use vair_core::simfix::{SimConfig, SweepConfig};
use vair_core::synthgen::SynthConfig;

use crate::CliError;

/// Everything a command may read, one section per stage. Flags override
/// file values; unknown keys anywhere are rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads; `None` uses every core.
    pub threads: Option<usize>,
    pub synth: SynthConfig,
    pub glo: GloConfig,
    pub pipeline: PipelineConfig,
    pub sim: SimConfig,
    pub sweep: SweepConfig,
    pub eval: EvalConfig,
}

/// A parsed config file plus the sections it actually set.
#[derive(Debug, Clone, Default)]
pub struct Loaded {
    pub config: RunConfig,
    pub has_glo: bool,
}

pub fn load(path: Option<&Path>) -> Result<Loaded, CliError> {
    let Some(path) = path else {
        return Ok(Loaded::default());
    };
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
    let has_glo = value.get("glo").is_some();
    let config = serde_json::from_value(value).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
    Ok(Loaded { config, has_glo })
}
