//! Class-wise expert selection and ensemble inference.
//!
//! Each row of the ranking matrix is sorted by AP; for every class the
//! detectors within `delta` of the best AP become that class's experts. At
//! inference the experts' raw detections are pooled per (class, image) and
//! suppressed together, then capped.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::evaluation::{evaluate_detections, mean_defined, EvalConfig, RankingMatrix};
use crate::model::{cap_cells, Detection, DetectionSet, GroundTruthDataset};
use crate::suppression::{suppress_cell, SuppressionConfig};

/// Delta that gave the best reported mAP on both benchmarks.
pub const DEFAULT_DELTA: f64 = 0.03;

/// Per-class box budget after suppression.
pub const DEFAULT_CAP: usize = 300;

/// The ranking matrix with every row sorted by descending AP.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedMatrix {
    /// `values[j][rank]`; undefined entries hold 0 and sort last.
    pub values: Vec<Vec<f64>>,
    /// `perm[j][rank]` is the detector id at that rank.
    pub perm: Vec<Vec<usize>>,
    pub defined: Vec<Vec<bool>>,
}

impl RankedMatrix {
    pub fn num_classes(&self) -> usize {
        self.values.len()
    }

    /// Best defined AP of a class.
    pub fn top(&self, class_id: usize) -> Option<f64> {
        self.defined[class_id]
            .first()
            .copied()
            .filter(|&d| d)
            .map(|_| self.values[class_id][0])
    }
}

/// Sorts each row descending; ties go to the lower detector id.
pub fn rank_rows(matrix: &RankingMatrix) -> RankedMatrix {
    let n = matrix.num_detectors();
    let mut ranked = RankedMatrix {
        values: Vec::with_capacity(matrix.num_classes()),
        perm: Vec::with_capacity(matrix.num_classes()),
        defined: Vec::with_capacity(matrix.num_classes()),
    };
    for j in 0..matrix.num_classes() {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| match (matrix.get(j, a), matrix.get(j, b)) {
            (Some(x), Some(y)) => y.total_cmp(&x).then(a.cmp(&b)),
            (Some(_), None) => std::cmp::Ordering::Less,
            (None, Some(_)) => std::cmp::Ordering::Greater,
            (None, None) => a.cmp(&b),
        });
        ranked
            .values
            .push(order.iter().map(|&i| matrix.value(j, i)).collect());
        ranked
            .defined
            .push(order.iter().map(|&i| matrix.get(j, i).is_some()).collect());
        ranked.perm.push(order);
    }
    ranked
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassSelection {
    /// Admission threshold `best AP - delta`; `None` when the row has no
    /// defined AP.
    pub threshold: Option<f64>,
    /// Selected detector ids in rank order.
    pub experts: Vec<usize>,
    /// AP of each selected expert, aligned with `experts`.
    pub aps: Vec<Option<f64>>,
    /// Set when no AP evidence existed and every detector was taken.
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExpertSelection {
    /// `None` for selections not produced by the delta rule.
    pub delta: Option<f64>,
    pub classes: Vec<ClassSelection>,
}

impl ExpertSelection {
    /// The same detector subset for every class.
    pub fn uniform(detectors: &[usize], num_classes: usize) -> Self {
        ExpertSelection {
            delta: None,
            classes: (0..num_classes)
                .map(|_| ClassSelection {
                    threshold: None,
                    experts: detectors.to_vec(),
                    aps: vec![None; detectors.len()],
                    fallback: false,
                })
                .collect(),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn experts(&self, class_id: usize) -> &[usize] {
        &self.classes[class_id].experts
    }

    /// Sum over classes of the number of experts.
    pub fn total_selected(&self) -> usize {
        self.classes.iter().map(|c| c.experts.len()).sum()
    }

    /// How many classes each detector serves.
    pub fn per_detector_counts(&self, num_detectors: usize) -> Vec<usize> {
        let mut counts = vec![0; num_detectors];
        for c in &self.classes {
            for &i in &c.experts {
                if i < num_detectors {
                    counts[i] += 1;
                }
            }
        }
        counts
    }

    /// `hist[n - 1]` is the number of classes using exactly n experts.
    pub fn expert_count_histogram(&self, num_detectors: usize) -> Vec<usize> {
        let mut hist = vec![0; num_detectors];
        for c in &self.classes {
            let n = c.experts.len();
            if (1..=num_detectors).contains(&n) {
                hist[n - 1] += 1;
            }
        }
        hist
    }
}

/// Selects, per class, every detector whose AP is at least
/// `best AP - delta` (inclusive). Rows without any defined AP fall back to
/// the whole pool and are flagged.
pub fn select_experts(ranked: &RankedMatrix, delta: f64) -> Result<ExpertSelection> {
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::InvalidConfig(format!(
            "delta {delta} outside [0, 1]"
        )));
    }
    let classes = (0..ranked.num_classes())
        .map(|j| match ranked.top(j) {
            None => ClassSelection {
                threshold: None,
                experts: ranked.perm[j].clone(),
                aps: vec![None; ranked.perm[j].len()],
                fallback: true,
            },
            Some(best) => {
                let threshold = best - delta;
                let (experts, aps) = ranked.perm[j]
                    .iter()
                    .zip(&ranked.values[j])
                    .zip(&ranked.defined[j])
                    .take_while(|((_, &v), &d)| d && v >= threshold)
                    .map(|((&i, &v), _)| (i, Some(v)))
                    .unzip();
                ClassSelection {
                    threshold: Some(threshold),
                    experts,
                    aps,
                    fallback: false,
                }
            }
        })
        .collect();
    Ok(ExpertSelection {
        delta: Some(delta),
        classes,
    })
}

/// Detections surviving in one (class, image) cell.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleCell {
    pub class_id: usize,
    pub image_id: String,
    /// Canonical order; each keeps the id of the detector that produced it.
    pub detections: Vec<Detection>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSettings {
    pub delta: Option<f64>,
    pub suppression: SuppressionConfig,
    pub cap: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleOutput {
    /// Sorted by (class, image).
    pub cells: Vec<EnsembleCell>,
    pub settings: EnsembleSettings,
}

impl EnsembleOutput {
    /// Every final detection, cell by cell.
    pub fn detections(&self) -> Vec<Detection> {
        self.cells
            .iter()
            .flat_map(|c| c.detections.iter().cloned())
            .collect()
    }

    pub fn total_boxes(&self) -> usize {
        self.cells.iter().map(|c| c.detections.len()).sum()
    }
}

/// Pools each class's expert detections per image, suppresses the union
/// once and applies the box budget.
///
/// Suppression runs only after pooling; suppressing each detector first
/// would let false positives survive that another expert's boxes would have
/// decayed.
pub fn ensemble_infer(
    pool: &[DetectionSet],
    selection: &ExpertSelection,
    suppression: &SuppressionConfig,
    cap: usize,
) -> Result<EnsembleOutput> {
    suppression.validate()?;
    if cap == 0 {
        return Err(Error::InvalidConfig("cap must be at least 1".into()));
    }
    let by_id: BTreeMap<usize, &DetectionSet> = pool.iter().map(|s| (s.detector_id(), s)).collect();
    let num_classes = selection.num_classes();

    for set in pool {
        if let Some(d) = set.detections().iter().find(|d| d.class_id >= num_classes) {
            return Err(Error::UnknownClass {
                class_id: d.class_id,
                num_classes,
            });
        }
    }

    let mut cells: BTreeMap<(usize, &str), Vec<Detection>> = BTreeMap::new();
    for (class_id, class_sel) in selection.classes.iter().enumerate() {
        for &i in &class_sel.experts {
            let set = by_id.get(&i).ok_or(Error::UnknownDetector(i))?;
            for d in set.of_class(class_id) {
                cells
                    .entry((class_id, d.image_id.as_str()))
                    .or_default()
                    .push(d.clone());
            }
        }
    }

    let cells = cells
        .into_par_iter()
        .map(|((class_id, image_id), union)| {
            let image_id = image_id.to_string();
            let survivors = suppress_cell(union, suppression);
            let detections = cap_cells(&survivors, cap);
            EnsembleCell {
                class_id,
                image_id,
                detections,
            }
        })
        .filter(|c| !c.detections.is_empty())
        .collect();

    Ok(EnsembleOutput {
        cells,
        settings: EnsembleSettings {
            delta: selection.delta,
            suppression: *suppression,
            cap,
        },
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub delta: f64,
    pub map: f64,
    pub per_class_ap: Vec<Option<f64>>,
    /// Sum over classes of the number of experts.
    pub total_selected: usize,
    /// `expert_histogram[n - 1]`: classes using exactly n experts.
    pub expert_histogram: Vec<usize>,
    /// Number of classes each detector was selected for.
    pub selection_counts: Vec<usize>,
    pub is_default: bool,
}

/// Runs selection, inference and evaluation for each delta.
pub fn delta_sweep(
    matrix: &RankingMatrix,
    pool: &[DetectionSet],
    gt: &GroundTruthDataset,
    deltas: &[f64],
    suppression: &SuppressionConfig,
    cap: usize,
    eval: &EvalConfig,
) -> Result<Vec<SweepRow>> {
    let ranked = rank_rows(matrix);
    let n = matrix.num_detectors();
    deltas
        .iter()
        .map(|&delta| {
            let selection = select_experts(&ranked, delta)?;
            let output = ensemble_infer(pool, &selection, suppression, cap)?;
            let (per_class_ap, _) =
                evaluate_detections(&output.detections(), gt, matrix.num_classes(), eval)?;
            Ok(SweepRow {
                delta,
                map: mean_defined(&per_class_ap),
                per_class_ap,
                total_selected: selection.total_selected(),
                expert_histogram: selection.expert_count_histogram(n),
                selection_counts: selection.per_detector_counts(n),
                is_default: delta == DEFAULT_DELTA,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::BoundingBox;
    use crate::suppression::SuppressionMethod;

    fn matrix(rows: Vec<Vec<Option<f64>>>) -> RankingMatrix {
        let n = rows.first().map_or(0, Vec::len);
        let c = rows.len();
        RankingMatrix::from_rows(
            rows,
            (0..n).map(|i| format!("d{i}")).collect(),
            (0..c).map(|j| format!("c{j}")).collect(),
            1,
        )
        .unwrap()
    }

    #[test]
    fn rank_rows_examples() {
        let r = rank_rows(&matrix(vec![vec![Some(0.2), Some(0.9), Some(0.5)]]));
        assert_eq!(r.values[0], vec![0.9, 0.5, 0.2]);
        assert_eq!(r.perm[0], vec![1, 2, 0]);

        let r = rank_rows(&matrix(vec![vec![Some(0.9), Some(0.5), Some(0.2)]]));
        assert_eq!(r.perm[0], vec![0, 1, 2]);

        let r = rank_rows(&matrix(vec![vec![Some(0.7), Some(0.7)]]));
        assert_eq!(r.perm[0], vec![0, 1]);
    }

    #[test]
    fn undefined_entries_sort_last() {
        let r = rank_rows(&matrix(vec![vec![None, Some(0.1), None, Some(0.3)]]));
        assert_eq!(r.perm[0], vec![3, 1, 0, 2]);
        assert_eq!(r.defined[0], vec![true, true, false, false]);
    }

    #[test]
    fn select_examples() {
        let ranked = rank_rows(&matrix(vec![vec![Some(0.80), Some(0.79), Some(0.70)]]));
        let s = select_experts(&ranked, 0.03).unwrap();
        assert_eq!(s.experts(0), &[0, 1]);
        assert!((s.classes[0].threshold.unwrap() - 0.77).abs() < 1e-12);

        assert_eq!(select_experts(&ranked, 0.0).unwrap().experts(0), &[0]);
        assert_eq!(select_experts(&ranked, 1.0).unwrap().experts(0), &[0, 1, 2]);
        assert!(select_experts(&ranked, 1.5).is_err());
    }

    #[test]
    fn delta_one_skips_undefined_and_empty_rows_fall_back() {
        let ranked = rank_rows(&matrix(vec![
            vec![Some(0.5), None, Some(0.0)],
            vec![None, None, None],
        ]));
        let s = select_experts(&ranked, 1.0).unwrap();
        assert_eq!(s.experts(0), &[0, 2]);
        assert!(s.classes[1].fallback);
        assert_eq!(s.experts(1), &[0, 1, 2]);
    }

    fn bx(x1: f64, y1: f64, x2: f64, y2: f64) -> BoundingBox {
        BoundingBox::new(x1, y1, x2, y2).unwrap()
    }

    #[test]
    fn duplicate_outputs_decay_once() {
        let b = bx(0.0, 0.0, 10.0, 10.0);
        let pool: Vec<DetectionSet> = (0..2)
            .map(|i| DetectionSet::new(i, vec![Detection::new(b, 0.8, 0, "img", i)]).unwrap())
            .collect();
        let sel = ExpertSelection::uniform(&[0, 1], 1);
        let out = ensemble_infer(&pool, &sel, &SuppressionConfig::default(), 300).unwrap();
        let dets = out.detections();
        assert_eq!(dets.len(), 2);
        assert_eq!(dets[0].score, 0.8);
        assert_eq!(dets[0].detector_id, 0);
        assert!((dets[1].score - 0.8 * (-1.0f64 / 0.5).exp()).abs() < 1e-12);
    }

    #[test]
    fn unknown_detector_is_an_error() {
        let pool = vec![DetectionSet::empty(0)];
        let sel = ExpertSelection::uniform(&[0, 4], 1);
        assert!(matches!(
            ensemble_infer(&pool, &sel, &SuppressionConfig::default(), 300),
            Err(Error::UnknownDetector(4))
        ));
    }

    #[test]
    fn cap_applies_after_suppression() {
        let dets: Vec<Detection> = (0..5)
            .map(|k| {
                let x = 20.0 * k as f64;
                Detection::new(
                    bx(x, 0.0, x + 10.0, 10.0),
                    0.5 + 0.1 * k as f64,
                    0,
                    "img",
                    0,
                )
            })
            .collect();
        let pool = vec![DetectionSet::new(0, dets).unwrap()];
        let sel = ExpertSelection::uniform(&[0], 1);
        let cfg = SuppressionConfig {
            method: SuppressionMethod::Hard,
            ..SuppressionConfig::default()
        };
        let out = ensemble_infer(&pool, &sel, &cfg, 2).unwrap();
        let scores: Vec<f64> = out.detections().iter().map(|d| d.score).collect();
        assert_eq!(scores.len(), 2);
        assert!((scores[0] - 0.9).abs() < 1e-12 && (scores[1] - 0.8).abs() < 1e-12);
    }

    #[test]
    fn histogram_and_counts() {
        let sel = ExpertSelection {
            delta: Some(0.1),
            classes: vec![
                ClassSelection {
                    threshold: Some(0.5),
                    experts: vec![1],
                    aps: vec![Some(0.6)],
                    fallback: false,
                },
                ClassSelection {
                    threshold: Some(0.5),
                    experts: vec![0, 1],
                    aps: vec![Some(0.6), Some(0.55)],
                    fallback: false,
                },
            ],
        };
        assert_eq!(sel.total_selected(), 3);
        assert_eq!(sel.per_detector_counts(3), vec![1, 2, 0]);
        assert_eq!(sel.expert_count_histogram(3), vec![1, 1, 0]);
    }
}
