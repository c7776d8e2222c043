//! Pipeline configuration: TOML file layered under command-line flags.

use std::path::{Path, PathBuf};

use anyhow::Context;
use scenforge_core::bev::RasterParams;
use scenforge_core::conditioner::{ClipOptions, SizeTable, Task};
use scenforge_core::gateway::GatewayConfig;
use scenforge_core::hdmap::SynthParams;
use scenforge_core::kernel::KernelParams;
use scenforge_core::post::CameraRig;
use serde::{Deserialize, Serialize};

use crate::UsageError;

/// Everything `gen` needs besides its input. Unset tables take defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub kernel: KernelParams,
    pub raster: RasterParams,
    pub map: SynthParams,
    pub clip: ClipOptions,
    pub gateway: GatewayConfig,
    /// Camera rig JSON; the built-in six-camera rig when unset.
    pub rig: Option<PathBuf>,
    /// Category size table JSON; built-in sizes when unset.
    pub sizes: Option<PathBuf>,
    pub task: Task,
    /// Output directory; falls back to the scenario's first `save` path, then `out`.
    pub out: Option<PathBuf>,
    /// Forces the offline intent matcher for prompts.
    pub offline: bool,
    /// Replaces the scenario seed.
    pub seed: Option<u64>,
    /// BEV binarization threshold for polyline recovery.
    pub threshold: u8,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            kernel: KernelParams::default(),
            raster: RasterParams::default(),
            map: SynthParams::default(),
            clip: ClipOptions::default(),
            gateway: GatewayConfig::default(),
            rig: None,
            sizes: None,
            task: Task::FullGeneration,
            out: None,
            offline: false,
            seed: None,
            threshold: 128,
        }
    }
}

impl PipelineConfig {
    /// Parses a TOML file. Relative `rig`, `sizes` and `out` paths resolve
    /// against the file's directory.
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| UsageError(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg: Self = toml::from_str(&text).map_err(|e| UsageError(format!("invalid config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.rig, &mut cfg.sizes, &mut cfg.out].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    /// Referenced files exist and parameters are in range.
    pub fn validate(&self) -> anyhow::Result<()> {
        for (what, p) in [("rig", &self.rig), ("size table", &self.sizes)] {
            if let Some(p) = p {
                if !p.is_file() {
                    return Err(UsageError(format!("{what} file {} does not exist", p.display())).into());
                }
            }
        }
        self.kernel.validate().map_err(|e| UsageError(e.to_string()))?;
        self.raster.validate().map_err(|e| UsageError(e.to_string()))?;
        if self.clip.frames == 0 {
            return Err(UsageError("clip.frames must be at least 1".into()).into());
        }
        if let Some(out) = &self.out {
            if out.exists() && !out.is_dir() {
                return Err(UsageError(format!("output path {} exists and is not a directory", out.display())).into());
            }
        }
        Ok(())
    }

    pub fn load_rig(&self) -> anyhow::Result<CameraRig> {
        match &self.rig {
            Some(p) => CameraRig::load(p).with_context(|| format!("loading rig {}", p.display())),
            None => Ok(CameraRig::default()),
        }
    }

    pub fn load_sizes(&self) -> anyhow::Result<SizeTable> {
        match &self.sizes {
            Some(p) => SizeTable::load(p).with_context(|| format!("loading size table {}", p.display())),
            None => Ok(SizeTable::default()),
        }
    }
}
