//! Run configuration shared by the CLI subcommands.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::area::AreaCoefficients;
use crate::error::{Error, Result};
use crate::explorer::HardwareSpace;
use crate::tiles::TileSearchBounds;
use crate::time_model::MachineConstants;
use crate::workload::WorkloadSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Workload file; relative paths resolve against the config file.
    pub workload: PathBuf,
    #[serde(default)]
    pub hardware: HardwareSpace,
    #[serde(default)]
    pub machine: MachineConstants,
    #[serde(default)]
    pub bounds: TileSearchBounds,
    /// Coefficient file; the Maxwell set when absent.
    #[serde(default)]
    pub coefficients: Option<PathBuf>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default = "default_jobs")]
    pub jobs: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_jobs() -> usize {
    1
}

impl RunConfig {
    pub fn new(workload: PathBuf) -> Self {
        RunConfig {
            workload,
            hardware: HardwareSpace::default(),
            machine: MachineConstants::default(),
            bounds: TileSearchBounds::default(),
            coefficients: None,
            output_dir: None,
            jobs: default_jobs(),
            seed: 0,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg: RunConfig = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.workload = resolve(base, &cfg.workload);
        cfg.coefficients = cfg.coefficients.map(|p| resolve(base, &p));
        cfg.output_dir = cfg.output_dir.map(|p| resolve(base, &p));
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.jobs < 1 {
            return Err(Error::InvalidConfig("jobs must be >= 1".into()));
        }
        self.hardware.validate()?;
        self.machine.validate()?;
        self.bounds.validate()
    }

    pub fn load_workload(&self) -> Result<WorkloadSpec> {
        WorkloadSpec::load(&self.workload)
    }

    pub fn load_coefficients(&self) -> Result<AreaCoefficients> {
        match &self.coefficients {
            Some(p) => AreaCoefficients::load(p),
            None => Ok(AreaCoefficients::default()),
        }
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}
