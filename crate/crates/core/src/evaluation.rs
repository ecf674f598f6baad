//! Detection-to-ground-truth matching, precision/recall curves, per-class
//! average precision and the per-class AP ranking matrix.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    canonical_cmp, cap_cells, iou, Detection, DetectionSet, GroundTruthBox, GroundTruthDataset,
    PoolManifest,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchFlag {
    TruePositive,
    FalsePositive,
    /// Matched an ignore-flagged ground truth; neither TP nor FP.
    Ignored,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchEntry {
    /// Index into the detection slice passed to the matcher.
    pub detection: usize,
    pub flag: MatchFlag,
    /// Index into the ground-truth slice, if matched.
    pub ground_truth: Option<usize>,
}

/// Matching outcome, one entry per detection in canonical order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MatchResult {
    pub entries: Vec<MatchEntry>,
}

impl MatchResult {
    pub fn flags(&self) -> Vec<MatchFlag> {
        self.entries.iter().map(|e| e.flag).collect()
    }
}

fn check_threshold(iou_threshold: f64) -> Result<()> {
    if !(iou_threshold > 0.0 && iou_threshold <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "IoU threshold {iou_threshold} outside (0, 1]"
        )));
    }
    Ok(())
}

/// Greedy one-to-one matching of one class in one image.
///
/// Detections are visited in canonical order. Each takes the unmatched
/// non-ignored ground truth with the highest IoU at or above the threshold;
/// failing that, an unmatched ignored one (making the detection `Ignored`);
/// otherwise it is a false positive.
pub fn match_class_image(
    dets: &[Detection],
    gts: &[GroundTruthBox],
    iou_threshold: f64,
) -> Result<MatchResult> {
    check_threshold(iou_threshold)?;
    let key = dets
        .first()
        .map(|d| (d.class_id, d.image_id.as_str()))
        .or_else(|| gts.first().map(|g| (g.class_id, g.image_id.as_str())));
    if let Some((class_id, image_id)) = key {
        let ok = dets
            .iter()
            .all(|d| d.class_id == class_id && d.image_id == image_id)
            && gts
                .iter()
                .all(|g| g.class_id == class_id && g.image_id == image_id);
        if !ok {
            return Err(Error::Precondition(
                "matching inputs must share one class and one image".into(),
            ));
        }
    }
    let dets: Vec<&Detection> = dets.iter().collect();
    let gts: Vec<&GroundTruthBox> = gts.iter().collect();
    Ok(MatchResult {
        entries: match_refs(&dets, &gts, iou_threshold),
    })
}

fn match_refs(dets: &[&Detection], gts: &[&GroundTruthBox], thr: f64) -> Vec<MatchEntry> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| canonical_cmp(dets[a], dets[b]));
    let mut taken = vec![false; gts.len()];

    order
        .into_iter()
        .map(|di| {
            let d = dets[di];
            let mut best: [Option<(usize, f64)>; 2] = [None, None];
            for (gi, g) in gts.iter().enumerate() {
                if taken[gi] {
                    continue;
                }
                let o = iou(&d.bbox, &g.bbox);
                if o < thr {
                    continue;
                }
                let slot = &mut best[g.ignore as usize];
                if slot.is_none_or(|(_, b)| o > b) {
                    *slot = Some((gi, o));
                }
            }
            match best {
                [Some((gi, _)), _] => {
                    taken[gi] = true;
                    MatchEntry {
                        detection: di,
                        flag: MatchFlag::TruePositive,
                        ground_truth: Some(gi),
                    }
                }
                [None, Some((gi, _))] => {
                    taken[gi] = true;
                    MatchEntry {
                        detection: di,
                        flag: MatchFlag::Ignored,
                        ground_truth: Some(gi),
                    }
                }
                [None, None] => MatchEntry {
                    detection: di,
                    flag: MatchFlag::FalsePositive,
                    ground_truth: None,
                },
            }
        })
        .collect()
}

/// Precision/recall points, one per non-ignored detection prefix.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PrCurve {
    pub recall: Vec<f64>,
    pub precision: Vec<f64>,
    pub num_gt: usize,
}

impl PrCurve {
    /// A class with no ground truth has no meaningful AP.
    pub fn is_defined(&self) -> bool {
        self.num_gt > 0
    }

    pub fn len(&self) -> usize {
        self.recall.len()
    }

    pub fn is_empty(&self) -> bool {
        self.recall.is_empty()
    }
}

/// Builds the curve from flags already in global canonical order.
pub fn precision_recall(flags: &[MatchFlag], num_gt: usize) -> PrCurve {
    if num_gt == 0 {
        return PrCurve::default();
    }
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut curve = PrCurve {
        num_gt,
        ..PrCurve::default()
    };
    for flag in flags {
        match flag {
            MatchFlag::TruePositive => tp += 1,
            MatchFlag::FalsePositive => fp += 1,
            MatchFlag::Ignored => continue,
        }
        curve.recall.push(tp as f64 / num_gt as f64);
        curve.precision.push(tp as f64 / (tp + fp) as f64);
    }
    curve
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ApMode {
    /// Area under the monotone precision envelope.
    #[default]
    AllPoint,
    /// VOC2007 11-point interpolation.
    ElevenPoint,
}

impl FromStr for ApMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all-point" => Ok(ApMode::AllPoint),
            "eleven-point" | "11-point" => Ok(ApMode::ElevenPoint),
            other => Err(Error::InvalidConfig(format!("unknown AP mode {other:?}"))),
        }
    }
}

impl fmt::Display for ApMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ApMode::AllPoint => "all-point",
            ApMode::ElevenPoint => "eleven-point",
        })
    }
}

/// AP of a curve; `None` when the class has no ground truth.
pub fn average_precision(curve: &PrCurve, mode: ApMode) -> Option<f64> {
    if !curve.is_defined() {
        return None;
    }
    if curve.is_empty() {
        return Some(0.0);
    }
    let mut envelope = curve.precision.clone();
    for i in (0..envelope.len() - 1).rev() {
        envelope[i] = envelope[i].max(envelope[i + 1]);
    }
    let ap = match mode {
        ApMode::AllPoint => {
            let mut prev = 0.0;
            let mut area = 0.0;
            for (&r, &p) in curve.recall.iter().zip(&envelope) {
                area += (r - prev) * p;
                prev = r;
            }
            area
        }
        ApMode::ElevenPoint => {
            // envelope is non-increasing, so the first point reaching the
            // sample recall carries the max precision beyond it
            let total: f64 = (0..=10)
                .map(|t| {
                    let level = t as f64 / 10.0;
                    curve
                        .recall
                        .iter()
                        .position(|&r| r >= level)
                        .map_or(0.0, |i| envelope[i])
                })
                .sum();
            total / 11.0
        }
    };
    Some(ap.clamp(0.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    /// AP is computed at each threshold and averaged.
    pub iou_thresholds: Vec<f64>,
    pub mode: ApMode,
    /// Box budget per (image, class) applied before matching.
    pub cap: Option<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            iou_thresholds: vec![0.5],
            mode: ApMode::AllPoint,
            cap: Some(300),
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iou_thresholds.is_empty() {
            return Err(Error::InvalidConfig("no IoU thresholds given".into()));
        }
        for &t in &self.iou_thresholds {
            check_threshold(t)?;
        }
        if self.cap == Some(0) {
            return Err(Error::InvalidConfig("cap must be at least 1".into()));
        }
        Ok(())
    }
}

/// Per-class AP for one detector on one fold.
#[derive(Debug, Clone, PartialEq)]
pub struct ApReport {
    pub detector_id: usize,
    /// `None` where the class has no (non-ignored) ground truth.
    pub ap: Vec<Option<f64>>,
    pub num_gt: Vec<usize>,
    pub map: f64,
    pub iou_thresholds: Vec<f64>,
    pub fold: usize,
}

/// Mean over defined entries; 0 when nothing is defined.
pub fn mean_defined(values: &[Option<f64>]) -> f64 {
    let defined: Vec<f64> = values.iter().flatten().copied().collect();
    if defined.is_empty() {
        0.0
    } else {
        defined.iter().sum::<f64>() / defined.len() as f64
    }
}

/// Incremental mean; exact when every value is the same, so K identical
/// folds reproduce the single-fold matrix bit for bit.
fn running_mean(values: &[f64]) -> f64 {
    values
        .iter()
        .enumerate()
        .fold(0.0, |m, (k, &v)| m + (v - m) / (k + 1) as f64)
}

/// Per-class AP of an arbitrary detection list (which may mix detectors, as
/// ensemble output does). Detections on images without ground truth count
/// as false positives.
pub fn evaluate_detections(
    dets: &[Detection],
    gt: &GroundTruthDataset,
    num_classes: usize,
    cfg: &EvalConfig,
) -> Result<(Vec<Option<f64>>, Vec<usize>)> {
    cfg.validate()?;
    for d in dets {
        if d.class_id >= num_classes {
            return Err(Error::UnknownClass {
                class_id: d.class_id,
                num_classes,
            });
        }
    }
    for g in gt.boxes() {
        if g.class_id >= num_classes {
            return Err(Error::UnknownClass {
                class_id: g.class_id,
                num_classes,
            });
        }
    }
    let capped;
    let dets = match cfg.cap {
        Some(limit) => {
            capped = cap_cells(dets, limit);
            &capped[..]
        }
        None => dets,
    };

    let mut det_cells: BTreeMap<(usize, &str), Vec<&Detection>> = BTreeMap::new();
    for d in dets {
        det_cells
            .entry((d.class_id, d.image_id.as_str()))
            .or_default()
            .push(d);
    }
    let gt_cells = gt.cells();
    let num_gt = gt.class_counts(num_classes);

    let ap = (0..num_classes)
        .into_par_iter()
        .map(|class_id| {
            if num_gt[class_id] == 0 {
                return None;
            }
            let cells: Vec<(&Vec<&Detection>, &[&GroundTruthBox])> = det_cells
                .range((class_id, "")..(class_id + 1, ""))
                .map(|(&(_, image), ds)| {
                    let gts = gt_cells
                        .get(&(class_id, image))
                        .map_or(&[][..], |v| v.as_slice());
                    (ds, gts)
                })
                .collect();
            let per_threshold: Vec<f64> = cfg
                .iou_thresholds
                .iter()
                .map(|&thr| {
                    let mut scored: Vec<(&Detection, MatchFlag)> = Vec::new();
                    for (ds, gts) in &cells {
                        for e in match_refs(ds, gts, thr) {
                            scored.push((ds[e.detection], e.flag));
                        }
                    }
                    scored.sort_by(|a, b| canonical_cmp(a.0, b.0));
                    let flags: Vec<MatchFlag> = scored.into_iter().map(|(_, f)| f).collect();
                    average_precision(&precision_recall(&flags, num_gt[class_id]), cfg.mode)
                        .unwrap_or(0.0)
                })
                .collect();
            Some(per_threshold.iter().sum::<f64>() / per_threshold.len() as f64)
        })
        .collect();
    Ok((ap, num_gt))
}

pub fn evaluate_detector(
    dets: &DetectionSet,
    gt: &GroundTruthDataset,
    manifest: &PoolManifest,
    cfg: &EvalConfig,
    fold: usize,
) -> Result<ApReport> {
    let (ap, num_gt) = evaluate_detections(dets.detections(), gt, manifest.num_classes(), cfg)?;
    Ok(ApReport {
        detector_id: dets.detector_id(),
        map: mean_defined(&ap),
        ap,
        num_gt,
        iou_thresholds: cfg.iou_thresholds.clone(),
        fold,
    })
}

/// C x N matrix of fold-averaged per-class AP.
#[derive(Debug, Clone, PartialEq)]
pub struct RankingMatrix {
    num_classes: usize,
    num_detectors: usize,
    /// Row-major, class-by-detector; undefined entries hold 0.
    values: Vec<f64>,
    defined: Vec<bool>,
    labels: Vec<String>,
    class_names: Vec<String>,
    folds: usize,
}

impl RankingMatrix {
    /// Builds a matrix from per-class rows of optional AP values.
    pub fn from_rows(
        rows: Vec<Vec<Option<f64>>>,
        labels: Vec<String>,
        class_names: Vec<String>,
        folds: usize,
    ) -> Result<Self> {
        let num_classes = rows.len();
        let num_detectors = labels.len();
        if class_names.len() != num_classes {
            return Err(Error::Precondition(format!(
                "{} class names for {} rows",
                class_names.len(),
                num_classes
            )));
        }
        let mut values = Vec::with_capacity(num_classes * num_detectors);
        let mut defined = Vec::with_capacity(num_classes * num_detectors);
        for (j, row) in rows.iter().enumerate() {
            if row.len() != num_detectors {
                return Err(Error::Precondition(format!(
                    "row {j} has {} entries, expected {num_detectors}",
                    row.len()
                )));
            }
            for v in row {
                if let Some(v) = v {
                    if !(0.0..=1.0).contains(v) {
                        return Err(Error::Precondition(format!(
                            "AP value {v} in row {j} outside [0, 1]"
                        )));
                    }
                }
                values.push(v.unwrap_or(0.0));
                defined.push(v.is_some());
            }
        }
        Ok(RankingMatrix {
            num_classes,
            num_detectors,
            values,
            defined,
            labels,
            class_names,
            folds,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn num_detectors(&self) -> usize {
        self.num_detectors
    }

    pub fn folds(&self) -> usize {
        self.folds
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn get(&self, class_id: usize, detector_id: usize) -> Option<f64> {
        let k = class_id * self.num_detectors + detector_id;
        self.defined[k].then_some(self.values[k])
    }

    /// Raw stored value, 0 for undefined entries.
    pub fn value(&self, class_id: usize, detector_id: usize) -> f64 {
        self.values[class_id * self.num_detectors + detector_id]
    }

    pub fn row(&self, class_id: usize) -> Vec<Option<f64>> {
        (0..self.num_detectors)
            .map(|i| self.get(class_id, i))
            .collect()
    }

    pub fn rows(&self) -> Vec<Vec<Option<f64>>> {
        (0..self.num_classes).map(|j| self.row(j)).collect()
    }

    /// Column `detector_id` with undefined entries as 0.
    pub fn column(&self, detector_id: usize) -> Vec<f64> {
        (0..self.num_classes)
            .map(|j| self.value(j, detector_id))
            .collect()
    }

    /// A detector's mAP: mean of its defined entries.
    pub fn detector_map(&self, detector_id: usize) -> f64 {
        let col: Vec<Option<f64>> = (0..self.num_classes)
            .map(|j| self.get(j, detector_id))
            .collect();
        mean_defined(&col)
    }

    pub fn detector_maps(&self) -> Vec<f64> {
        (0..self.num_detectors)
            .map(|i| self.detector_map(i))
            .collect()
    }
}

/// Averages each detector's per-class AP over its K fold reports.
/// Entries undefined in some folds average over the defined ones only.
pub fn build_ranking_matrix(
    reports: &[ApReport],
    manifest: &PoolManifest,
) -> Result<RankingMatrix> {
    let n = manifest.num_detectors();
    let c = manifest.num_classes();
    let mut by_detector: Vec<Vec<&ApReport>> = vec![Vec::new(); n];
    for r in reports {
        if r.detector_id >= n {
            return Err(Error::UnknownDetector(r.detector_id));
        }
        if r.ap.len() != c {
            return Err(Error::Precondition(format!(
                "report for detector {} has {} classes, manifest has {c}",
                r.detector_id,
                r.ap.len()
            )));
        }
        by_detector[r.detector_id].push(r);
    }
    let folds = by_detector.first().map_or(0, Vec::len);
    if folds == 0 {
        return Err(Error::FoldMismatch("no fold reports given".into()));
    }
    if let Some((i, v)) = by_detector
        .iter()
        .enumerate()
        .find(|(_, v)| v.len() != folds)
    {
        return Err(Error::FoldMismatch(format!(
            "detector {i} has {} fold reports, detector 0 has {folds}",
            v.len()
        )));
    }

    let rows = (0..c)
        .map(|j| {
            by_detector
                .iter()
                .map(|reports| {
                    let defined: Vec<f64> = reports.iter().filter_map(|r| r.ap[j]).collect();
                    (!defined.is_empty()).then(|| running_mean(&defined))
                })
                .collect()
        })
        .collect();
    RankingMatrix::from_rows(
        rows,
        manifest.labels(),
        manifest.class_names().to_vec(),
        folds,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::BoundingBox;

    fn bx(x1: f64, y1: f64, x2: f64, y2: f64) -> BoundingBox {
        BoundingBox::new(x1, y1, x2, y2).unwrap()
    }

    fn gt(b: BoundingBox) -> GroundTruthBox {
        GroundTruthBox {
            bbox: b,
            class_id: 0,
            image_id: "img".into(),
            ignore: false,
        }
    }

    fn det(b: BoundingBox, score: f64) -> Detection {
        Detection::new(b, score, 0, "img", 0)
    }

    use MatchFlag::*;

    #[test]
    fn perfect_match() {
        let b = bx(0.0, 0.0, 10.0, 10.0);
        let m = match_class_image(&[det(b, 0.9)], &[gt(b)], 0.5).unwrap();
        assert_eq!(m.flags(), vec![TruePositive]);
        assert_eq!(m.entries[0].ground_truth, Some(0));
    }

    #[test]
    fn duplicate_cannot_reuse_ground_truth() {
        let g = bx(0.0, 0.0, 10.0, 10.0);
        // 10x8 inside 10x10 -> IoU 0.8
        let near = bx(0.0, 0.0, 10.0, 8.0);
        assert!((iou(&g, &near) - 0.8).abs() < 1e-12);
        let m = match_class_image(&[det(near, 0.7), det(g, 0.9)], &[gt(g)], 0.5).unwrap();
        assert_eq!(m.flags(), vec![TruePositive, FalsePositive]);
        assert_eq!(m.entries[0].detection, 1);
    }

    #[test]
    fn below_threshold_is_false_positive() {
        let g = bx(0.0, 0.0, 10.0, 10.0);
        let d = bx(0.0, 0.0, 10.0, 4.0);
        assert!((iou(&g, &d) - 0.4).abs() < 1e-12);
        let m = match_class_image(&[det(d, 0.9)], &[gt(g)], 0.5).unwrap();
        assert_eq!(m.flags(), vec![FalsePositive]);
    }

    #[test]
    fn prefers_regular_over_ignored_ground_truth() {
        let g = bx(0.0, 0.0, 10.0, 10.0);
        let mut hard = gt(g);
        hard.ignore = true;
        let near = gt(bx(0.0, 0.0, 10.0, 8.0));
        let m = match_class_image(&[det(g, 0.9)], &[hard, near], 0.5).unwrap();
        assert_eq!(m.flags(), vec![TruePositive]);
        assert_eq!(m.entries[0].ground_truth, Some(1));
    }

    #[test]
    fn ignored_ground_truth_yields_ignored_flag() {
        let g = bx(0.0, 0.0, 10.0, 10.0);
        let mut hard = gt(g);
        hard.ignore = true;
        let m = match_class_image(&[det(g, 0.9), det(g, 0.8)], &[hard], 0.5).unwrap();
        assert_eq!(m.flags(), vec![Ignored, FalsePositive]);
    }

    #[test]
    fn mixed_images_rejected() {
        let b = bx(0.0, 0.0, 1.0, 1.0);
        let mut other = det(b, 0.5);
        other.image_id = "other".into();
        assert!(matches!(
            match_class_image(&[det(b, 0.9), other], &[], 0.5),
            Err(Error::Precondition(_))
        ));
        assert!(match_class_image(&[det(b, 0.9)], &[], 0.0).is_err());
    }

    #[test]
    fn pr_curve_examples() {
        let c = precision_recall(&[TruePositive], 1);
        assert_eq!(
            (c.recall.clone(), c.precision.clone()),
            (vec![1.0], vec![1.0])
        );

        let c = precision_recall(&[TruePositive, FalsePositive, TruePositive], 2);
        assert_eq!(c.recall, vec![0.5, 0.5, 1.0]);
        assert_eq!(c.precision[..2], [1.0, 0.5]);
        assert!((c.precision[2] - 2.0 / 3.0).abs() < 1e-15);

        let c = precision_recall(&[], 3);
        assert!(c.is_empty() && c.is_defined());

        let c = precision_recall(&[TruePositive], 0);
        assert!(!c.is_defined());

        let c = precision_recall(&[Ignored, TruePositive], 1);
        assert_eq!(c.len(), 1);
    }

    #[test]
    fn ap_examples() {
        let perfect = precision_recall(&[TruePositive], 1);
        assert_eq!(average_precision(&perfect, ApMode::AllPoint), Some(1.0));
        assert_eq!(average_precision(&perfect, ApMode::ElevenPoint), Some(1.0));

        let c = precision_recall(&[TruePositive, FalsePositive, TruePositive], 2);
        let ap = average_precision(&c, ApMode::AllPoint).unwrap();
        assert!((ap - 5.0 / 6.0).abs() < 1e-12);
        // 11-point: levels 0..=0.5 see precision 1, 0.6..=1.0 see 2/3
        let ap11 = average_precision(&c, ApMode::ElevenPoint).unwrap();
        assert!((ap11 - (6.0 + 5.0 * 2.0 / 3.0) / 11.0).abs() < 1e-12);

        let empty = precision_recall(&[], 3);
        assert_eq!(average_precision(&empty, ApMode::AllPoint), Some(0.0));
        assert_eq!(
            average_precision(&PrCurve::default(), ApMode::AllPoint),
            None
        );
    }

    fn single_class_manifest() -> PoolManifest {
        PoolManifest::synthetic(1, 2)
    }

    #[test]
    fn oracle_detector_scores_one() {
        let boxes = vec![
            gt(bx(0.0, 0.0, 10.0, 10.0)),
            GroundTruthBox {
                bbox: bx(5.0, 5.0, 20.0, 20.0),
                class_id: 1,
                image_id: "b".into(),
                ignore: false,
            },
        ];
        let dets = boxes
            .iter()
            .map(|g| Detection::new(g.bbox, 1.0, g.class_id, g.image_id.clone(), 0))
            .collect();
        let set = DetectionSet::new(0, dets).unwrap();
        let gtd = GroundTruthDataset::new(boxes);
        let r = evaluate_detector(
            &set,
            &gtd,
            &single_class_manifest(),
            &EvalConfig::default(),
            0,
        )
        .unwrap();
        assert_eq!(r.ap, vec![Some(1.0), Some(1.0)]);
        assert_eq!(r.map, 1.0);

        let empty = evaluate_detector(
            &DetectionSet::empty(0),
            &gtd,
            &single_class_manifest(),
            &EvalConfig::default(),
            0,
        )
        .unwrap();
        assert_eq!(empty.map, 0.0);
    }

    #[test]
    fn unknown_images_are_false_positives_and_bad_classes_fail() {
        let g = bx(0.0, 0.0, 10.0, 10.0);
        let gtd = GroundTruthDataset::new(vec![gt(g)]);
        let stray = Detection::new(g, 0.95, 0, "nowhere", 0);
        let set = DetectionSet::new(0, vec![stray, det(g, 0.9)]).unwrap();
        let r = evaluate_detector(
            &set,
            &gtd,
            &single_class_manifest(),
            &EvalConfig::default(),
            0,
        )
        .unwrap();
        // [FP, TP] with G=1 -> envelope 0.5 over the single recall step
        assert_eq!(r.ap[0], Some(0.5));
        assert_eq!(r.ap[1], None);
        assert_eq!(r.map, 0.5);

        let bad = DetectionSet::new(0, vec![Detection::new(g, 0.9, 7, "img", 0)]).unwrap();
        assert!(matches!(
            evaluate_detector(
                &bad,
                &gtd,
                &single_class_manifest(),
                &EvalConfig::default(),
                0
            ),
            Err(Error::UnknownClass { .. })
        ));
    }

    #[test]
    fn multi_threshold_averages() {
        let g = bx(0.0, 0.0, 10.0, 10.0);
        let d = bx(0.0, 0.0, 10.0, 6.0); // IoU 0.6
        let gtd = GroundTruthDataset::new(vec![gt(g)]);
        let set = DetectionSet::new(0, vec![det(d, 0.9)]).unwrap();
        let cfg = EvalConfig {
            iou_thresholds: vec![0.5, 0.75],
            ..EvalConfig::default()
        };
        let r = evaluate_detector(&set, &gtd, &single_class_manifest(), &cfg, 0).unwrap();
        assert_eq!(r.ap[0], Some(0.5));
    }

    fn report(detector_id: usize, fold: usize, ap: Vec<Option<f64>>) -> ApReport {
        ApReport {
            detector_id,
            map: mean_defined(&ap),
            num_gt: vec![1; ap.len()],
            ap,
            iou_thresholds: vec![0.5],
            fold,
        }
    }

    #[test]
    fn ranking_matrix_single_fold_is_verbatim() {
        let m = PoolManifest::synthetic(2, 2);
        let reports = vec![
            report(0, 0, vec![Some(0.3), None]),
            report(1, 0, vec![Some(0.9), Some(0.1)]),
        ];
        let r = build_ranking_matrix(&reports, &m).unwrap();
        assert_eq!(r.folds(), 1);
        assert_eq!(
            r.rows(),
            vec![vec![Some(0.3), Some(0.9)], vec![None, Some(0.1)]]
        );
    }

    #[test]
    fn ranking_matrix_fold_mean() {
        let m = PoolManifest::synthetic(1, 1);
        let reports = vec![report(0, 0, vec![Some(0.6)]), report(0, 1, vec![Some(0.8)])];
        let r = build_ranking_matrix(&reports, &m).unwrap();
        assert!((r.get(0, 0).unwrap() - 0.7).abs() < 1e-12);
    }

    #[test]
    fn ranking_matrix_three_detectors_two_folds() {
        // hand-averaged oracle
        let m = PoolManifest::synthetic(3, 2);
        let reports = vec![
            report(0, 0, vec![Some(0.50), Some(0.20)]),
            report(0, 1, vec![Some(0.70), None]),
            report(1, 0, vec![Some(0.10), Some(0.40)]),
            report(1, 1, vec![Some(0.30), Some(0.60)]),
            report(2, 0, vec![None, None]),
            report(2, 1, vec![Some(1.00), None]),
        ];
        let r = build_ranking_matrix(&reports, &m).unwrap();
        let expect = [
            [Some(0.6), Some(0.2), Some(1.0)],
            [Some(0.2), Some(0.5), None],
        ];
        for (j, row) in expect.iter().enumerate() {
            for (i, e) in row.iter().enumerate() {
                match (r.get(j, i), e) {
                    (Some(a), Some(b)) => assert!((a - b).abs() < 1e-12, "({j},{i})"),
                    (a, b) => assert_eq!(a, *b, "({j},{i})"),
                }
            }
        }
        assert_eq!(r.folds(), 2);
    }

    #[test]
    fn ranking_matrix_rejects_unequal_folds() {
        let m = PoolManifest::synthetic(2, 1);
        let reports = vec![
            report(0, 0, vec![Some(0.6)]),
            report(0, 1, vec![Some(0.8)]),
            report(1, 0, vec![Some(0.8)]),
        ];
        assert!(matches!(
            build_ranking_matrix(&reports, &m),
            Err(Error::FoldMismatch(_))
        ));
    }
}
