//! Run configuration shared by all commands. Loaded from JSON and then
//! overridden by command-line flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{ApMode, EvalConfig};
use crate::experts::{DEFAULT_CAP, DEFAULT_DELTA};
use crate::suppression::SuppressionConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SynthPreset {
    /// Each detector strong on its own block of classes.
    #[default]
    Complementary,
    /// One detector reproducing the ground truth exactly.
    Oracle,
}

impl std::str::FromStr for SynthPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "complementary" => Ok(SynthPreset::Complementary),
            "oracle" => Ok(SynthPreset::Oracle),
            other => Err(Error::InvalidConfig(format!("unknown preset {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub manifest: Option<PathBuf>,
    pub ground_truth: Option<PathBuf>,
    pub output_dir: PathBuf,
    /// Precomputed ranking matrix CSV; computed from ground truth otherwise.
    pub ranking: Option<PathBuf>,
    /// JSON array of image-id lists, one per fold. All images form one fold
    /// when absent.
    pub folds: Option<PathBuf>,
    pub iou_thresholds: Vec<f64>,
    pub ap_mode: ApMode,
    pub delta: f64,
    pub deltas: Vec<f64>,
    pub similarity_thresholds: Vec<f64>,
    pub suppression: SuppressionConfig,
    /// Box budget per class per image.
    pub cap: usize,
    pub seed: u64,
    pub preset: SynthPreset,
    pub num_images: usize,
    pub threads: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            manifest: None,
            ground_truth: None,
            output_dir: PathBuf::from("out"),
            ranking: None,
            folds: None,
            iou_thresholds: vec![0.5],
            ap_mode: ApMode::AllPoint,
            delta: DEFAULT_DELTA,
            deltas: vec![0.0, 0.03, 0.05, 0.1],
            similarity_thresholds: vec![0.0, 0.25, 0.5, 0.75, 1.0],
            suppression: SuppressionConfig::default(),
            cap: DEFAULT_CAP,
            seed: 2017,
            preset: SynthPreset::Complementary,
            num_images: 200,
            threads: None,
        }
    }
}

impl RunConfig {
    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            iou_thresholds: self.iou_thresholds.clone(),
            mode: self.ap_mode,
            cap: Some(self.cap),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.eval_config().validate()?;
        self.suppression.validate()?;
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{name} {v} outside [0, 1]")))
            }
        };
        unit("delta", self.delta)?;
        for &d in &self.deltas {
            unit("delta", d)?;
        }
        for &t in &self.similarity_thresholds {
            unit("similarity threshold", t)?;
        }
        if self.cap == 0 {
            return Err(Error::InvalidConfig("cap must be at least 1".into()));
        }
        if self.num_images == 0 {
            return Err(Error::InvalidConfig("num_images must be at least 1".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::InvalidConfig("threads must be at least 1".into()));
        }
        Ok(())
    }

    pub fn require_manifest(&self) -> Result<&Path> {
        self.manifest
            .as_deref()
            .ok_or_else(|| Error::InvalidConfig("a pool manifest is required (--manifest)".into()))
    }

    pub fn require_ground_truth(&self) -> Result<&Path> {
        self.ground_truth
            .as_deref()
            .ok_or_else(|| Error::InvalidConfig("ground truth is required (--gt)".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_json_keeps_defaults() {
        let cfg: RunConfig =
            serde_json::from_str(r#"{"delta": 0.1, "suppression": {"method": "hard"}}"#).unwrap();
        assert_eq!(cfg.delta, 0.1);
        assert_eq!(cfg.cap, 300);
        assert_eq!(cfg.suppression.sigma, 0.5);
        cfg.validate().unwrap();
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"detla": 0.1}"#).is_err());
        let cfg = RunConfig {
            delta: 2.0,
            ..RunConfig::default()
        };
        assert!(cfg.validate().unwrap_err().is_usage());
    }
}
