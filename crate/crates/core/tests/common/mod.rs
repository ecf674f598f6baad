#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use roe_core::evaluation::RankingMatrix;
use roe_core::model::{BoundingBox, Detection, GroundTruthBox};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn bx(x1: f64, y1: f64, x2: f64, y2: f64) -> BoundingBox {
    BoundingBox::new(x1, y1, x2, y2).unwrap()
}

/// Boxes on a coarse grid so that overlaps around common IoU thresholds
/// are frequent.
pub fn grid_box(r: &mut ChaCha8Rng) -> BoundingBox {
    let x = r.random_range(0..8) as f64 * 2.0;
    let y = r.random_range(0..8) as f64 * 2.0;
    let w = r.random_range(2..8) as f64 * 2.0;
    let h = r.random_range(2..8) as f64 * 2.0;
    bx(x, y, x + w, y + h)
}

/// A small one-class instance spread over up to three images. Scores are
/// quantised so ties occur.
pub struct Instance {
    pub detections: Vec<Detection>,
    pub ground_truth: Vec<GroundTruthBox>,
    pub iou_threshold: f64,
}

pub fn random_instance(r: &mut ChaCha8Rng) -> Instance {
    let images = r.random_range(1..=3);
    let image = |r: &mut ChaCha8Rng| format!("im{}", r.random_range(0..images));
    let n_gt = r.random_range(0..=10);
    let ground_truth: Vec<GroundTruthBox> = (0..n_gt)
        .map(|_| GroundTruthBox {
            bbox: grid_box(r),
            class_id: 0,
            image_id: image(r),
            ignore: r.random_bool(0.15),
        })
        .collect();
    let n_det = r.random_range(0..=20);
    let detections = (0..n_det)
        .map(|_| {
            let bbox = match ground_truth.get(r.random_range(0..ground_truth.len().max(1))) {
                Some(g) if r.random_bool(0.6) => {
                    let d = r.random_range(0..3) as f64;
                    bx(g.bbox.x1 + d, g.bbox.y1, g.bbox.x2 + d, g.bbox.y2)
                }
                _ => grid_box(r),
            };
            let img = if r.random_bool(0.7) && !ground_truth.is_empty() {
                ground_truth[r.random_range(0..ground_truth.len())]
                    .image_id
                    .clone()
            } else {
                image(r)
            };
            let score = r.random_range(1..=10) as f64 / 10.0;
            Detection::new(bbox, score, 0, img, 0)
        })
        .collect();
    let iou_threshold = [0.3, 0.5, 0.75][r.random_range(0..3)];
    Instance {
        detections,
        ground_truth,
        iou_threshold,
    }
}

/// Detections of one (class, image) cell with random scores.
pub fn random_cell(r: &mut ChaCha8Rng, max_len: usize) -> Vec<Detection> {
    let n = r.random_range(0..=max_len);
    (0..n)
        .map(|i| {
            let score = r.random_range(1..=100) as f64 / 100.0;
            Detection::new(grid_box(r), score, 0, "im", i % 3)
        })
        .collect()
}

pub fn shuffled<T: Clone>(items: &[T], r: &mut ChaCha8Rng) -> Vec<T> {
    let mut v = items.to_vec();
    v.shuffle(r);
    v
}

/// A ranking matrix with values on a coarse grid (so ties happen) and an
/// occasional undefined entry or fully undefined row.
pub fn random_matrix(r: &mut ChaCha8Rng) -> RankingMatrix {
    let c = r.random_range(1..=6);
    let n = r.random_range(1..=6);
    let rows = (0..c)
        .map(|_| {
            let empty_row = r.random_bool(0.05);
            (0..n)
                .map(|_| {
                    if empty_row || r.random_bool(0.1) {
                        None
                    } else {
                        Some(r.random_range(0..=50) as f64 / 50.0)
                    }
                })
                .collect()
        })
        .collect();
    RankingMatrix::from_rows(
        rows,
        (0..n).map(|i| format!("d{i}")).collect(),
        (0..c).map(|j| format!("c{j}")).collect(),
        1,
    )
    .unwrap()
}

/// Two detectors, one class. Detector A finds g1; detector B puts a box
/// shifted 4px off g1 (a false positive at IoU 0.5) above its hit on g2.
pub fn suppression_order_instance() -> (Vec<Detection>, Vec<Detection>, Vec<GroundTruthBox>) {
    let g1 = bx(0.0, 0.0, 10.0, 10.0);
    let g2 = bx(100.0, 100.0, 110.0, 110.0);
    let a = vec![Detection::new(g1, 0.9, 0, "im", 0)];
    let b = vec![
        Detection::new(bx(4.0, 0.0, 14.0, 10.0), 0.85, 0, "im", 1),
        Detection::new(g2, 0.8, 0, "im", 1),
    ];
    let gt = [g1, g2]
        .into_iter()
        .map(|bbox| GroundTruthBox {
            bbox,
            class_id: 0,
            image_id: "im".into(),
            ignore: false,
        })
        .collect();
    (a, b, gt)
}
