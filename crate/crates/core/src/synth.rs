//! Seeded synthetic ground truth and detector pools, plus a brute-force AP
//! oracle used to cross-check the evaluation code.
//!
//! Every generator draws from a `ChaCha8Rng` seeded with
//! `SeedableRng::seed_from_u64(seed)`; draws happen in a fixed order
//! (images in lexicographic id order, boxes in dataset order), so a seed
//! always reproduces the same files byte for byte.

use std::collections::BTreeMap;

use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::error::{Error, Result};
use crate::evaluation::ApMode;
use crate::model::{
    canonical_cmp, iou, BoundingBox, Detection, DetectionSet, GroundTruthBox, GroundTruthDataset,
    PoolEntry, PoolManifest,
};

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthSpec {
    pub num_images: usize,
    pub num_classes: usize,
    /// Inclusive range of boxes per image.
    pub boxes_per_image: (usize, usize),
    /// Image width and height in pixels.
    pub image_size: (f64, f64),
    pub seed: u64,
}

impl Default for GroundTruthSpec {
    fn default() -> Self {
        GroundTruthSpec {
            num_images: 200,
            num_classes: 8,
            boxes_per_image: (1, 4),
            image_size: (640.0, 480.0),
            seed: 7,
        }
    }
}

pub fn image_name(index: usize) -> String {
    format!("img{index:05}")
}

fn random_box(rng: &mut ChaCha8Rng, (w, h): (f64, f64)) -> BoundingBox {
    let bw = w * rng.random_range(0.1..0.4);
    let bh = h * rng.random_range(0.1..0.4);
    let x1 = rng.random_range(0.0..(w - bw));
    let y1 = rng.random_range(0.0..(h - bh));
    BoundingBox {
        x1,
        y1,
        x2: x1 + bw,
        y2: y1 + bh,
    }
}

/// Random boxes with uniformly drawn classes.
pub fn generate_ground_truth(spec: &GroundTruthSpec) -> Result<GroundTruthDataset> {
    let (lo, hi) = spec.boxes_per_image;
    if spec.num_images == 0 || spec.num_classes == 0 || lo == 0 || lo > hi {
        return Err(Error::InvalidConfig(format!(
            "bad ground-truth spec: {} images, {} classes, {lo}..={hi} boxes per image",
            spec.num_images, spec.num_classes
        )));
    }
    if !(spec.image_size.0 > 0.0 && spec.image_size.1 > 0.0) {
        return Err(Error::InvalidConfig("image size must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut boxes = Vec::new();
    for img in 0..spec.num_images {
        let count = rng.random_range(lo..=hi);
        for _ in 0..count {
            let class_id = rng.random_range(0..spec.num_classes);
            let bbox = random_box(&mut rng, spec.image_size);
            boxes.push(GroundTruthBox {
                bbox,
                class_id,
                image_id: image_name(img),
                ignore: false,
            });
        }
    }
    Ok(GroundTruthDataset::new(boxes))
}

/// Per-class behaviour of a simulated detector.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorProfile {
    /// Probability of emitting a detection for each ground-truth box.
    pub recall: Vec<f64>,
    /// Std-dev of the per-corner jitter, in pixels.
    pub noise: Vec<f64>,
    /// Expected false positives per image.
    pub fp_rate: Vec<f64>,
    pub tp_score: f64,
    pub fp_score: f64,
    /// Std-dev of scores around their means.
    pub score_spread: f64,
    pub image_size: (f64, f64),
    pub seed: u64,
}

impl DetectorProfile {
    /// Uniform profile over `num_classes` classes.
    pub fn uniform(num_classes: usize, recall: f64, noise: f64, fp_rate: f64, seed: u64) -> Self {
        DetectorProfile {
            recall: vec![recall; num_classes],
            noise: vec![noise; num_classes],
            fp_rate: vec![fp_rate; num_classes],
            tp_score: 0.8,
            fp_score: 0.4,
            score_spread: 0.15,
            image_size: GroundTruthSpec::default().image_size,
            seed,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.recall.len()
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.recall.len();
        if self.noise.len() != c || self.fp_rate.len() != c {
            return Err(Error::InvalidConfig(
                "profile vectors must have one entry per class".into(),
            ));
        }
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !self.recall.iter().all(|&r| unit(r)) {
            return Err(Error::InvalidConfig(
                "recall targets must lie in [0, 1]".into(),
            ));
        }
        if !self.noise.iter().all(|&n| n >= 0.0 && n.is_finite()) {
            return Err(Error::InvalidConfig("noise scales must be >= 0".into()));
        }
        if !self.fp_rate.iter().all(|&f| f >= 0.0 && f.is_finite()) {
            return Err(Error::InvalidConfig(
                "false-positive rates must be >= 0".into(),
            ));
        }
        if !unit(self.tp_score)
            || !unit(self.fp_score)
            || self.score_spread.is_nan()
            || self.score_spread < 0.0
        {
            return Err(Error::InvalidConfig("bad score calibration".into()));
        }
        Ok(())
    }
}

fn sample_score(rng: &mut ChaCha8Rng, mean: f64, spread: f64) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    (mean + spread * z).clamp(0.0, 1.0)
}

/// Simulates one detector against `gt`.
pub fn generate_detector(
    gt: &GroundTruthDataset,
    profile: &DetectorProfile,
    detector_id: usize,
) -> Result<DetectionSet> {
    profile.validate()?;
    let c = profile.num_classes();
    let (w, h) = profile.image_size;
    let mut rng = ChaCha8Rng::seed_from_u64(profile.seed);

    let mut by_image: BTreeMap<&str, Vec<&GroundTruthBox>> = BTreeMap::new();
    for g in gt.boxes() {
        by_image.entry(&g.image_id).or_default().push(g);
    }

    let mut dets = Vec::new();
    for (image, boxes) in by_image {
        for g in boxes {
            if g.class_id >= c {
                return Err(Error::UnknownClass {
                    class_id: g.class_id,
                    num_classes: c,
                });
            }
            if !rng.random_bool(profile.recall[g.class_id]) {
                continue;
            }
            let noise = profile.noise[g.class_id];
            let mut corner = |v: f64, max: f64| {
                let z: f64 = StandardNormal.sample(&mut rng);
                (v + noise * z).clamp(0.0, max)
            };
            let (x1, y1) = (corner(g.bbox.x1, w), corner(g.bbox.y1, h));
            let (x2, y2) = (corner(g.bbox.x2, w), corner(g.bbox.y2, h));
            let bbox = BoundingBox::new(x1.min(x2), y1.min(y2), x1.max(x2), y1.max(y2))?;
            let score = sample_score(&mut rng, profile.tp_score, profile.score_spread);
            dets.push(Detection::new(bbox, score, g.class_id, image, detector_id));
        }
        for class_id in 0..c {
            let rate = profile.fp_rate[class_id];
            if rate <= 0.0 {
                continue;
            }
            let poisson = Poisson::new(rate)
                .map_err(|e| Error::InvalidConfig(format!("false-positive rate {rate}: {e}")))?;
            let count = poisson.sample(&mut rng) as usize;
            for _ in 0..count {
                let bbox = random_box(&mut rng, (w, h));
                let score = sample_score(&mut rng, profile.fp_score, profile.score_spread);
                dets.push(Detection::new(bbox, score, class_id, image, detector_id));
            }
        }
    }
    DetectionSet::new(detector_id, dets)
}

/// A generated pool with its ground truth.
#[derive(Debug, Clone)]
pub struct SyntheticPool {
    pub ground_truth: GroundTruthDataset,
    pub manifest: PoolManifest,
    pub profiles: Vec<DetectorProfile>,
    pub pool: Vec<DetectionSet>,
}

pub fn build_pool(
    spec: &GroundTruthSpec,
    profiles: Vec<DetectorProfile>,
    labels: Vec<String>,
) -> Result<SyntheticPool> {
    let ground_truth = generate_ground_truth(spec)?;
    let pool = profiles
        .iter()
        .enumerate()
        .map(|(i, p)| generate_detector(&ground_truth, p, i))
        .collect::<Result<Vec<_>>>()?;
    let entries = labels
        .into_iter()
        .enumerate()
        .map(|(i, label)| PoolEntry {
            detector_id: i,
            label,
            scale: None,
            training_set: None,
        })
        .collect();
    let classes = (0..spec.num_classes).map(|j| format!("class{j}")).collect();
    Ok(SyntheticPool {
        ground_truth,
        manifest: PoolManifest::new(entries, classes)?,
        profiles,
        pool,
    })
}

/// Knobs of the complementary pool: each detector is strong on its own
/// block of classes and weak on the rest.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplementarySpec {
    pub num_detectors: usize,
    pub classes_per_detector: usize,
    pub strong_recall: f64,
    pub weak_recall: f64,
    pub noise: f64,
    pub strong_fp_rate: f64,
    pub weak_fp_rate: f64,
    pub num_images: usize,
    pub seed: u64,
}

impl Default for ComplementarySpec {
    fn default() -> Self {
        ComplementarySpec {
            num_detectors: 4,
            classes_per_detector: 2,
            strong_recall: 0.95,
            weak_recall: 0.2,
            noise: 2.0,
            strong_fp_rate: 0.05,
            weak_fp_rate: 0.5,
            num_images: 200,
            seed: 2017,
        }
    }
}

pub fn complementary_pool(spec: &ComplementarySpec) -> Result<SyntheticPool> {
    let num_classes = spec.num_detectors * spec.classes_per_detector;
    let gt_spec = GroundTruthSpec {
        num_images: spec.num_images,
        num_classes,
        seed: spec.seed,
        ..GroundTruthSpec::default()
    };
    let profiles = (0..spec.num_detectors)
        .map(|d| {
            let strong = |j: usize| j / spec.classes_per_detector == d;
            let mut p = DetectorProfile::uniform(
                num_classes,
                spec.weak_recall,
                spec.noise,
                spec.weak_fp_rate,
                spec.seed.wrapping_add(1 + d as u64),
            );
            for j in (0..num_classes).filter(|&j| strong(j)) {
                p.recall[j] = spec.strong_recall;
                p.fp_rate[j] = spec.strong_fp_rate;
            }
            p.image_size = gt_spec.image_size;
            p
        })
        .collect();
    let labels = (0..spec.num_detectors)
        .map(|d| format!("expert{d}"))
        .collect();
    build_pool(&gt_spec, profiles, labels)
}

/// Detections that reproduce the ground truth exactly at score 1.
pub fn oracle_profile(num_classes: usize, image_size: (f64, f64), seed: u64) -> DetectorProfile {
    DetectorProfile {
        recall: vec![1.0; num_classes],
        noise: vec![0.0; num_classes],
        fp_rate: vec![0.0; num_classes],
        tp_score: 1.0,
        fp_score: 0.0,
        score_spread: 0.0,
        image_size,
        seed,
    }
}

pub const ORACLE_MAX_DETECTIONS: usize = 20;
pub const ORACLE_MAX_GROUND_TRUTH: usize = 10;

type Q = Ratio<i128>;

/// AP by explicit enumeration with exact rational arithmetic.
///
/// Treats every input as one class; boxes only match within the same image.
/// Returns `None` when there is no non-ignored ground truth.
pub fn oracle_ap(
    dets: &[Detection],
    gts: &[GroundTruthBox],
    iou_threshold: f64,
    mode: ApMode,
) -> Result<Option<f64>> {
    if dets.len() > ORACLE_MAX_DETECTIONS || gts.len() > ORACLE_MAX_GROUND_TRUTH {
        return Err(Error::OracleBound {
            detections: dets.len(),
            ground_truth: gts.len(),
        });
    }
    let total = gts.iter().filter(|g| !g.ignore).count() as i128;
    if total == 0 {
        return Ok(None);
    }

    let mut ranked: Vec<&Detection> = dets.iter().collect();
    ranked.sort_by(|a, b| canonical_cmp(a, b));

    // (true positive?) per counted detection; ignored matches are dropped
    let mut outcomes: Vec<bool> = Vec::new();
    let mut used = vec![false; gts.len()];
    for d in ranked {
        let mut candidates: Vec<(bool, f64, usize)> = gts
            .iter()
            .enumerate()
            .filter(|(k, g)| !used[*k] && g.image_id == d.image_id)
            .map(|(k, g)| (g.ignore, iou(&d.bbox, &g.bbox), k))
            .filter(|&(_, o, _)| o >= iou_threshold)
            .collect();
        candidates.sort_by(|a, b| a.0.cmp(&b.0).then(b.1.total_cmp(&a.1)).then(a.2.cmp(&b.2)));
        match candidates.first() {
            Some(&(ignored, _, k)) => {
                used[k] = true;
                if !ignored {
                    outcomes.push(true);
                }
            }
            None => outcomes.push(false),
        }
    }

    let mut points: Vec<(Q, Q)> = Vec::new();
    let mut tp = 0i128;
    for (seen, &hit) in outcomes.iter().enumerate() {
        tp += hit as i128;
        let precision = Q::new(tp, seen as i128 + 1);
        let recall = Q::new(tp, total);
        points.push((recall, precision));
    }
    let best_precision_from = |level: Q| -> Q {
        points
            .iter()
            .filter(|(r, _)| *r >= level)
            .map(|(_, p)| *p)
            .max()
            .unwrap_or_else(|| Q::from_integer(0))
    };

    let ap = match mode {
        // each recall step of 1/G weighted by the best precision reachable
        // at or beyond it
        ApMode::AllPoint => (1..=total)
            .map(|t| best_precision_from(Q::new(t, total)) * Q::new(1, total))
            .fold(Q::from_integer(0), |acc, x| acc + x),
        ApMode::ElevenPoint => {
            (0..=10)
                .map(|t| best_precision_from(Q::new(t, 10)))
                .fold(Q::from_integer(0), |acc, x| acc + x)
                / Q::from_integer(11)
        }
    };
    Ok(Some(*ap.numer() as f64 / *ap.denom() as f64))
}
