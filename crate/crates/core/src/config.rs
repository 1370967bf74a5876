//! Experiment configuration files (TOML).
//!
//! ```toml
//! seed = 42
//! profile = "openwhisk_like"
//! variants = ["none", "developer_driven", "platform_supported"]
//!
//! [workload]
//! records = 150
//! requests = 100
//!
//! [tracing.sampling]
//! kind = "probability_based"
//! probability = 1.0
//!
//! [faults]
//! mode = "probabilistic"
//! specs = [{ scenario = "F1", target = "insert_products", probability = 0.1 }]
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::faults::{plan_faults, FaultConfig};
use crate::harness::{build_bulk_import, BulkImportWorkload, CostParams, ExperimentSetup, HarnessError, Variant};
use crate::platform::{CompositionFile, PlatformParams, ProfileName};
use crate::trace::TracingConfig;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("invalid config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Harness(#[from] HarnessError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub profile: ProfileName,
    pub variants: Vec<Variant>,
    pub workload: BulkImportWorkload,
    pub tracing: TracingConfig,
    pub costs: CostParams,
    pub platform: PlatformParams,
    pub faults: FaultConfig,
    /// Replaces the bulk-import composition when present.
    pub composition: Option<CompositionFile>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 42,
            profile: ProfileName::OpenwhiskLike,
            variants: Variant::ALL.to_vec(),
            workload: BulkImportWorkload::default(),
            tracing: TracingConfig::default(),
            costs: CostParams::default(),
            platform: PlatformParams::default(),
            faults: FaultConfig::default(),
            composition: None,
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.tracing.validate().map_err(ConfigError::Invalid)?;
        if self.variants.is_empty() {
            return Err(ConfigError::Invalid("no variants selected".into()));
        }
        if self.workload.images_per_record == 0 {
            return Err(ConfigError::Invalid("images_per_record must be at least 1".into()));
        }
        if self.costs.execution_unit_mb == 0 {
            return Err(ConfigError::Invalid("execution_unit_mb must be positive".into()));
        }
        Ok(())
    }

    /// Resolves the composition and fault plan into a runnable setup.
    pub fn setup(&self) -> Result<ExperimentSetup, ConfigError> {
        self.validate()?;
        let (composition, profile) = match &self.composition {
            Some(file) => {
                let profile = file.profile.unwrap_or(self.profile);
                let spec = file.clone().into_spec().map_err(HarnessError::from)?;
                (spec, profile)
            }
            None => (build_bulk_import(), self.profile),
        };
        let faults = plan_faults(&self.faults, self.seed).map_err(HarnessError::from)?;
        faults.validate_for(&composition).map_err(HarnessError::from)?;
        Ok(ExperimentSetup {
            seed: self.seed,
            profile,
            composition,
            workload: self.workload,
            tracing: self.tracing.clone(),
            faults,
            params: self.platform.clone(),
            costs: self.costs,
        })
    }
}
