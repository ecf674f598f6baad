//! Boxes, detections, ground truth and detector-pool identity.
//!
//! Boxes use the continuous corner convention: `(x1, y1)` is the top-left
//! corner, `(x2, y2)` the bottom-right, and the area is
//! `(x2 - x1) * (y2 - y1)` with no +1 pixel correction.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use crate::error::{Error, Result};

/// Axis-aligned box in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

impl BoundingBox {
    /// Builds a validated box. Zero-area boxes are allowed; inverted or
    /// non-finite corners are rejected.
    pub fn new(x1: f64, y1: f64, x2: f64, y2: f64) -> Result<Self> {
        let reject = |reason| Error::InvalidBox {
            x1,
            y1,
            x2,
            y2,
            reason,
        };
        if ![x1, y1, x2, y2].iter().all(|v| v.is_finite()) {
            return Err(reject("coordinates must be finite"));
        }
        if x1 > x2 || y1 > y2 {
            return Err(reject("negative extent"));
        }
        Ok(BoundingBox { x1, y1, x2, y2 })
    }

    pub fn width(&self) -> f64 {
        self.x2 - self.x1
    }

    pub fn height(&self) -> f64 {
        self.y2 - self.y1
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }

    pub fn iou(&self, other: &BoundingBox) -> f64 {
        iou(self, other)
    }
}

/// Intersection over union. Returns 0 when the union is empty, so two
/// degenerate boxes never produce NaN.
pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let iw = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(0.0);
    let ih = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(0.0);
    let inter = iw * ih;
    let union = a.area() + b.area() - inter;
    if union <= 0.0 || inter <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// One detector output for one object.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub bbox: BoundingBox,
    pub score: f64,
    pub class_id: usize,
    pub image_id: String,
    pub detector_id: usize,
}

impl Detection {
    pub fn new(
        bbox: BoundingBox,
        score: f64,
        class_id: usize,
        image_id: impl Into<String>,
        detector_id: usize,
    ) -> Self {
        Detection {
            bbox,
            score,
            class_id,
            image_id: image_id.into(),
            detector_id,
        }
    }

    pub fn order_key(&self) -> CanonicalKey<'_> {
        canonical_order_key(self)
    }
}

/// Sort key giving detections a total order: score descending, then
/// detector id, image id and box corners ascending.
#[derive(Debug, Clone, Copy)]
pub struct CanonicalKey<'a> {
    score: f64,
    detector_id: usize,
    image_id: &'a str,
    corners: [f64; 4],
}

pub fn canonical_order_key(d: &Detection) -> CanonicalKey<'_> {
    CanonicalKey {
        score: d.score,
        detector_id: d.detector_id,
        image_id: &d.image_id,
        corners: d.bbox.as_array(),
    }
}

impl Ord for CanonicalKey<'_> {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .score
            .total_cmp(&self.score)
            .then_with(|| self.detector_id.cmp(&other.detector_id))
            .then_with(|| self.image_id.cmp(other.image_id))
            .then_with(|| {
                self.corners
                    .iter()
                    .zip(other.corners.iter())
                    .map(|(a, b)| a.total_cmp(b))
                    .find(|o| o.is_ne())
                    .unwrap_or(Ordering::Equal)
            })
    }
}

impl PartialOrd for CanonicalKey<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for CanonicalKey<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for CanonicalKey<'_> {}

pub fn canonical_cmp(a: &Detection, b: &Detection) -> Ordering {
    canonical_order_key(a).cmp(&canonical_order_key(b))
}

/// Stable sort into canonical order.
pub fn sort_canonical(dets: &mut [Detection]) {
    dets.sort_by(canonical_cmp);
}

/// All detections produced by one pool entry.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionSet {
    detector_id: usize,
    detections: Vec<Detection>,
}

impl DetectionSet {
    /// Fails if any detection carries a different detector id.
    pub fn new(detector_id: usize, detections: Vec<Detection>) -> Result<Self> {
        if let Some(d) = detections.iter().find(|d| d.detector_id != detector_id) {
            return Err(Error::Precondition(format!(
                "detection from detector {} placed in set of detector {}",
                d.detector_id, detector_id
            )));
        }
        Ok(DetectionSet {
            detector_id,
            detections,
        })
    }

    pub fn empty(detector_id: usize) -> Self {
        DetectionSet {
            detector_id,
            detections: Vec::new(),
        }
    }

    pub fn detector_id(&self) -> usize {
        self.detector_id
    }

    pub fn detections(&self) -> &[Detection] {
        &self.detections
    }

    pub fn into_detections(self) -> Vec<Detection> {
        self.detections
    }

    /// Number of detections (M).
    pub fn len(&self) -> usize {
        self.detections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.detections.is_empty()
    }

    pub fn of_class(&self, class_id: usize) -> impl Iterator<Item = &Detection> {
        self.detections
            .iter()
            .filter(move |d| d.class_id == class_id)
    }

    /// Keeps the top `limit` detections of `class_id` across the whole set.
    /// Other classes and the relative order of survivors are untouched.
    pub fn cap_per_class(&self, class_id: usize, limit: usize) -> DetectionSet {
        let limit = limit.max(1);
        let mut ranked: Vec<(usize, &Detection)> = self
            .detections
            .iter()
            .enumerate()
            .filter(|(_, d)| d.class_id == class_id)
            .collect();
        if ranked.len() <= limit {
            return self.clone();
        }
        ranked.sort_by(|a, b| canonical_cmp(a.1, b.1));
        let dropped: BTreeSet<usize> = ranked[limit..].iter().map(|(i, _)| *i).collect();
        let detections = self
            .detections
            .iter()
            .enumerate()
            .filter(|(i, _)| !dropped.contains(i))
            .map(|(_, d)| d.clone())
            .collect();
        DetectionSet {
            detector_id: self.detector_id,
            detections,
        }
    }

    /// Applies the box budget to every (image, class) cell: at most `limit`
    /// detections per class per image survive.
    pub fn cap_per_image(&self, limit: usize) -> DetectionSet {
        DetectionSet {
            detector_id: self.detector_id,
            detections: cap_cells(&self.detections, limit),
        }
    }
}

/// Keeps the top `limit` detections of each (image, class) cell, preserving
/// input order among survivors.
pub fn cap_cells(dets: &[Detection], limit: usize) -> Vec<Detection> {
    let limit = limit.max(1);
    let mut cells: BTreeMap<(&str, usize), Vec<usize>> = BTreeMap::new();
    for (i, d) in dets.iter().enumerate() {
        cells.entry((&d.image_id, d.class_id)).or_default().push(i);
    }
    let mut keep = vec![true; dets.len()];
    for idx in cells.values_mut() {
        if idx.len() > limit {
            idx.sort_by(|&a, &b| canonical_cmp(&dets[a], &dets[b]));
            for &i in &idx[limit..] {
                keep[i] = false;
            }
        }
    }
    dets.iter()
        .zip(keep)
        .filter(|(_, k)| *k)
        .map(|(d, _)| d.clone())
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthBox {
    pub bbox: BoundingBox,
    pub class_id: usize,
    pub image_id: String,
    /// Excluded from recall and never penalised ("difficult").
    pub ignore: bool,
}

/// Labelled boxes for a set of images.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroundTruthDataset {
    boxes: Vec<GroundTruthBox>,
}

impl GroundTruthDataset {
    pub fn new(boxes: Vec<GroundTruthBox>) -> Self {
        GroundTruthDataset { boxes }
    }

    pub fn boxes(&self) -> &[GroundTruthBox] {
        &self.boxes
    }

    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    pub fn image_ids(&self) -> BTreeSet<&str> {
        self.boxes.iter().map(|g| g.image_id.as_str()).collect()
    }

    /// Count of non-ignored boxes per class, for `num_classes` classes.
    pub fn class_counts(&self, num_classes: usize) -> Vec<usize> {
        let mut counts = vec![0; num_classes];
        for g in self.boxes.iter().filter(|g| !g.ignore) {
            if g.class_id < num_classes {
                counts[g.class_id] += 1;
            }
        }
        counts
    }

    /// Boxes grouped by (class, image).
    pub fn cells(&self) -> BTreeMap<(usize, &str), Vec<&GroundTruthBox>> {
        let mut cells: BTreeMap<(usize, &str), Vec<&GroundTruthBox>> = BTreeMap::new();
        for g in &self.boxes {
            cells.entry((g.class_id, &g.image_id)).or_default().push(g);
        }
        cells
    }

    /// Subset restricted to the given images.
    pub fn restrict_to(&self, images: &BTreeSet<String>) -> GroundTruthDataset {
        GroundTruthDataset {
            boxes: self
                .boxes
                .iter()
                .filter(|g| images.contains(&g.image_id))
                .cloned()
                .collect(),
        }
    }
}

/// One detector configuration in the pool, e.g. a (model, test scale) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolEntry {
    pub detector_id: usize,
    pub label: String,
    pub scale: Option<String>,
    pub training_set: Option<String>,
}

/// Ordered detector pool plus the class-name table.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolManifest {
    entries: Vec<PoolEntry>,
    class_names: Vec<String>,
}

impl PoolManifest {
    /// Detector ids must be exactly `0..N` in order; class names unique.
    pub fn new(entries: Vec<PoolEntry>, class_names: Vec<String>) -> Result<Self> {
        for (i, e) in entries.iter().enumerate() {
            if e.detector_id != i {
                return Err(Error::Precondition(format!(
                    "pool entry {i} has detector_id {} (ids must be dense 0..N in order)",
                    e.detector_id
                )));
            }
        }
        let mut seen = BTreeSet::new();
        for name in &class_names {
            if !seen.insert(name.as_str()) {
                return Err(Error::Precondition(format!(
                    "duplicate class name {name:?}"
                )));
            }
        }
        Ok(PoolManifest {
            entries,
            class_names,
        })
    }

    /// Convenience constructor for tests and synthetic pools.
    pub fn synthetic(num_detectors: usize, num_classes: usize) -> Self {
        let entries = (0..num_detectors)
            .map(|i| PoolEntry {
                detector_id: i,
                label: format!("det{i}"),
                scale: None,
                training_set: None,
            })
            .collect();
        let class_names = (0..num_classes).map(|j| format!("class{j}")).collect();
        PoolManifest {
            entries,
            class_names,
        }
    }

    pub fn entries(&self) -> &[PoolEntry] {
        &self.entries
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    /// N
    pub fn num_detectors(&self) -> usize {
        self.entries.len()
    }

    /// C
    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn labels(&self) -> Vec<String> {
        self.entries.iter().map(|e| e.label.clone()).collect()
    }

    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.class_names.iter().position(|n| n == name)
    }
}
