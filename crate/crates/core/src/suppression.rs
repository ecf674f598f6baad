//! Hard NMS and Soft-NMS over the detections of one class in one image.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{canonical_cmp, iou, sort_canonical, Detection};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SuppressionMethod {
    Hard,
    SoftLinear,
    #[default]
    SoftGaussian,
}

impl FromStr for SuppressionMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hard" => Ok(SuppressionMethod::Hard),
            "soft-linear" | "linear" => Ok(SuppressionMethod::SoftLinear),
            "soft-gaussian" | "gaussian" => Ok(SuppressionMethod::SoftGaussian),
            other => Err(Error::InvalidConfig(format!(
                "unknown suppression method {other:?}"
            ))),
        }
    }
}

impl fmt::Display for SuppressionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SuppressionMethod::Hard => "hard",
            SuppressionMethod::SoftLinear => "soft-linear",
            SuppressionMethod::SoftGaussian => "soft-gaussian",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuppressionConfig {
    pub method: SuppressionMethod,
    /// Overlap cutoff Nt for hard and linear suppression.
    pub iou_cutoff: f64,
    /// Gaussian width; decay is exp(-iou^2 / sigma).
    pub sigma: f64,
    /// Detections whose score drops below this are discarded.
    pub score_floor: f64,
}

impl Default for SuppressionConfig {
    fn default() -> Self {
        SuppressionConfig {
            method: SuppressionMethod::SoftGaussian,
            iou_cutoff: 0.3,
            sigma: 0.5,
            score_floor: 0.001,
        }
    }
}

impl SuppressionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.iou_cutoff > 0.0 && self.iou_cutoff < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "iou_cutoff {} outside (0, 1)",
                self.iou_cutoff
            )));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "sigma {} must be positive",
                self.sigma
            )));
        }
        if self.score_floor.is_nan() || self.score_floor >= 1.0 {
            return Err(Error::InvalidConfig(format!(
                "score_floor {} must be below 1",
                self.score_floor
            )));
        }
        Ok(())
    }

    /// Multiplier applied to a box overlapping the current maximum by `overlap`.
    /// `None` means the box is removed outright.
    fn decay(&self, overlap: f64) -> Option<f64> {
        match self.method {
            SuppressionMethod::Hard if overlap > self.iou_cutoff => None,
            SuppressionMethod::Hard => Some(1.0),
            SuppressionMethod::SoftLinear if overlap > self.iou_cutoff => Some(1.0 - overlap),
            SuppressionMethod::SoftLinear => Some(1.0),
            SuppressionMethod::SoftGaussian => Some((-overlap * overlap / self.sigma).exp()),
        }
    }
}

/// Suppresses one (class, image) cell.
///
/// Repeatedly takes the highest-scored remaining detection (canonical order)
/// and decays or removes the rest according to their overlap with it. Decay
/// compounds across iterations. The result is sorted canonically by final
/// score; geometry is never modified.
pub fn suppress(dets: &[Detection], cfg: &SuppressionConfig) -> Result<Vec<Detection>> {
    cfg.validate()?;
    if let Some(first) = dets.first() {
        if dets
            .iter()
            .any(|d| d.class_id != first.class_id || d.image_id != first.image_id)
        {
            return Err(Error::Precondition(
                "suppression input must share one class and one image".into(),
            ));
        }
    }
    Ok(suppress_cell(dets.to_vec(), cfg))
}

/// Same as [`suppress`] without validation; callers guarantee one cell.
pub(crate) fn suppress_cell(
    mut pending: Vec<Detection>,
    cfg: &SuppressionConfig,
) -> Vec<Detection> {
    let mut kept = Vec::with_capacity(pending.len());
    pending.retain(|d| d.score >= cfg.score_floor);
    while !pending.is_empty() {
        let top = pending
            .iter()
            .enumerate()
            .min_by(|a, b| canonical_cmp(a.1, b.1))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let best = pending.swap_remove(top);
        pending.retain_mut(|d| match cfg.decay(iou(&best.bbox, &d.bbox)) {
            None => false,
            Some(w) => {
                d.score *= w;
                d.score >= cfg.score_floor
            }
        });
        kept.push(best);
    }
    sort_canonical(&mut kept);
    kept
}
