//! Pipeline configuration, read from TOML.
//!
//! Every key is optional; missing keys keep their defaults.
//!
//! ```toml
//! patch_size = 40
//! selection_mode = "mmse"
//! refine = "blockmatch"
//! working_scale = 0.25
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::align::{BlockMatchParams, Refinement};
use crate::error::{Error, Result};
use crate::mrf::{BpOptions, MrfParams, SelectionMode};
use crate::transfer::TransferParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RefineMode {
    #[default]
    Off,
    Blockmatch,
}

impl std::str::FromStr for RefineMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "off" => Ok(RefineMode::Off),
            "blockmatch" => Ok(RefineMode::Blockmatch),
            _ => Err(Error::InvalidArgument(format!("unknown refinement {s:?}"))),
        }
    }
}

impl RefineMode {
    pub fn refinement(self) -> Refinement {
        match self {
            RefineMode::Off => Refinement::Off,
            RefineMode::Blockmatch => Refinement::BlockMatch(BlockMatchParams::default()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub patch_size: usize,
    pub stride: usize,
    pub stack_depth: usize,
    pub alpha: f64,
    pub sigma_d: f64,
    pub sigma_c: f64,
    pub eps_remap: f64,
    pub gain_max: f64,
    pub bp_iters: usize,
    pub bp_tol: f64,
    pub gf_radius: usize,
    pub gf_eps: f64,
    pub selection_mode: SelectionMode,
    pub refine: RefineMode,
    pub dump_intermediate: bool,
    pub working_scale: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            patch_size: 40,
            stride: 20,
            stack_depth: 5,
            alpha: 0.8,
            sigma_d: 0.5,
            sigma_c: 1.0,
            eps_remap: 1e-4,
            gain_max: 10.0,
            bp_iters: 10,
            bp_tol: 1e-6,
            gf_radius: 60,
            gf_eps: 0.02,
            selection_mode: SelectionMode::Argmax,
            refine: RefineMode::Off,
            dump_intermediate: false,
            working_scale: 1.0,
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} must be positive, got {v}")))
    }
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: PipelineConfig =
            toml::from_str(text).map_err(|e| Error::InvalidArgument(format!("config: {}", e.message())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| Error::format(path, e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.patch_size == 0 || self.stride == 0 {
            return Err(Error::InvalidArgument("patch_size and stride must be >= 1".into()));
        }
        if self.stride > self.patch_size {
            return Err(Error::InvalidArgument(format!(
                "stride {} exceeds patch_size {}",
                self.stride, self.patch_size
            )));
        }
        if self.stack_depth < 2 {
            return Err(Error::InvalidArgument("stack_depth must be >= 2".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidArgument(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        positive("sigma_d", self.sigma_d)?;
        positive("sigma_c", self.sigma_c)?;
        positive("eps_remap", self.eps_remap)?;
        positive("gain_max", self.gain_max)?;
        positive("bp_tol", self.bp_tol)?;
        positive("working_scale", self.working_scale)?;
        if self.bp_iters == 0 {
            return Err(Error::InvalidArgument("bp_iters must be >= 1".into()));
        }
        if self.gf_radius == 0 {
            return Err(Error::InvalidArgument("gf_radius must be >= 1".into()));
        }
        if !(self.gf_eps >= 0.0 && self.gf_eps.is_finite()) {
            return Err(Error::InvalidArgument(format!("gf_eps must be >= 0, got {}", self.gf_eps)));
        }
        Ok(())
    }

    fn scaled(&self, v: usize, min: usize) -> usize {
        ((v as f64 * self.working_scale).round() as usize).max(min)
    }

    /// Patch size in working-resolution pixels.
    pub fn working_patch(&self) -> usize {
        self.scaled(self.patch_size, 2)
    }

    pub fn working_stride(&self) -> usize {
        self.scaled(self.stride, 1).min(self.working_patch())
    }

    pub fn working_gf_radius(&self) -> usize {
        self.scaled(self.gf_radius, 1)
    }

    pub fn mrf_params(&self) -> MrfParams {
        MrfParams {
            alpha: self.alpha,
            sigma_d: self.sigma_d,
            sigma_c: self.sigma_c,
        }
    }

    pub fn bp_options(&self) -> BpOptions {
        BpOptions {
            max_iters: self.bp_iters,
            tol: self.bp_tol,
        }
    }

    pub fn transfer_params(&self) -> TransferParams {
        TransferParams {
            depth: self.stack_depth,
            eps: self.eps_remap,
            gain_max: self.gain_max,
            keep_gains: self.dump_intermediate,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_documented_values() {
        let c = PipelineConfig::default();
        assert_eq!((c.patch_size, c.stride, c.stack_depth), (40, 20, 5));
        assert_eq!((c.alpha, c.sigma_d, c.sigma_c), (0.8, 0.5, 1.0));
        assert_eq!((c.eps_remap, c.gain_max), (1e-4, 10.0));
        assert_eq!((c.bp_iters, c.bp_tol), (10, 1e-6));
        assert_eq!((c.gf_radius, c.gf_eps), (60, 0.02));
        assert_eq!(c.selection_mode, SelectionMode::Argmax);
        assert_eq!(c.refine, RefineMode::Off);
        assert!(!c.dump_intermediate);
        assert_eq!(c.working_scale, 1.0);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn partial_toml_keeps_defaults() {
        let c = PipelineConfig::from_toml_str(
            "selection_mode = \"mmse\"\nrefine = \"blockmatch\"\nworking_scale = 0.25\n",
        )
        .unwrap();
        assert_eq!(c.selection_mode, SelectionMode::Mmse);
        assert_eq!(c.refine, RefineMode::Blockmatch);
        assert_eq!(c.patch_size, 40);
        assert_eq!((c.working_patch(), c.working_stride(), c.working_gf_radius()), (10, 5, 15));
    }

    #[test]
    fn rejects_bad_values_and_keys() {
        assert!(PipelineConfig::from_toml_str("stride = 50").is_err());
        assert!(PipelineConfig::from_toml_str("stack_depth = 1").is_err());
        assert!(PipelineConfig::from_toml_str("sigma_d = 0.0").is_err());
        assert!(PipelineConfig::from_toml_str("working_scale = -1.0").is_err());
        assert!(PipelineConfig::from_toml_str("selection_mode = \"median\"").is_err());
        assert!(PipelineConfig::from_toml_str("patchsize = 4").is_err());
    }

    #[test]
    fn tiny_scale_keeps_usable_grid() {
        let c = PipelineConfig {
            working_scale: 0.01,
            ..Default::default()
        };
        assert_eq!((c.working_patch(), c.working_stride(), c.working_gf_radius()), (2, 1, 1));
    }
}
