//! Whole-model ensembling baseline: greedily take the best models by mAP,
//! skipping any candidate whose per-class AP vector is too similar to one
//! already taken, then pool the chosen models for every class.

use crate::error::{Error, Result};
use crate::evaluation::RankingMatrix;
use crate::experts::{ensemble_infer, EnsembleOutput, ExpertSelection};
use crate::model::DetectionSet;
use crate::suppression::SuppressionConfig;

/// Pairwise cosine similarity of detectors' AP vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    n: usize,
    values: Vec<f64>,
    /// Detectors whose AP vector is all zeros.
    zero_norm: Vec<bool>,
}

impl SimilarityMatrix {
    pub fn from_values(n: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n * n {
            return Err(Error::Precondition(format!(
                "{} similarity values for {n} detectors",
                values.len()
            )));
        }
        let zero_norm = (0..n).map(|i| values[i * n + i] == 0.0).collect();
        Ok(SimilarityMatrix {
            n,
            values,
            zero_norm,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.values[a * self.n + b]
    }

    pub fn is_zero_norm(&self, i: usize) -> bool {
        self.zero_norm[i]
    }
}

/// Cosine similarity between the columns of `matrix` (undefined AP as 0).
/// A zero column has similarity 0 with everything, itself included.
pub fn cosine_similarity_matrix(matrix: &RankingMatrix) -> SimilarityMatrix {
    let n = matrix.num_detectors();
    let columns: Vec<Vec<f64>> = (0..n).map(|i| matrix.column(i)).collect();
    let norms: Vec<f64> = columns
        .iter()
        .map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let mut values = vec![0.0; n * n];
    for a in 0..n {
        for b in a..n {
            let s = if norms[a] == 0.0 || norms[b] == 0.0 {
                0.0
            } else if a == b {
                1.0
            } else {
                let dot: f64 = columns[a].iter().zip(&columns[b]).map(|(x, y)| x * y).sum();
                (dot / (norms[a] * norms[b])).clamp(-1.0, 1.0)
            };
            values[a * n + b] = s;
            values[b * n + a] = s;
        }
    }
    SimilarityMatrix {
        n,
        values,
        zero_norm: norms.iter().map(|&v| v == 0.0).collect(),
    }
}

/// Visits detectors by descending mAP (ties to the lower id) and accepts a
/// candidate only if its similarity to every accepted detector is at most
/// `threshold`. The best detector is always accepted.
pub fn greedy_select(sim: &SimilarityMatrix, maps: &[f64], threshold: f64) -> Result<Vec<usize>> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(Error::InvalidConfig(format!(
            "similarity threshold {threshold} outside [0, 1]"
        )));
    }
    if maps.len() != sim.len() {
        return Err(Error::Precondition(format!(
            "{} mAP values for {} detectors",
            maps.len(),
            sim.len()
        )));
    }
    let mut order: Vec<usize> = (0..maps.len()).collect();
    order.sort_by(|&a, &b| maps[b].total_cmp(&maps[a]).then(a.cmp(&b)));
    let mut accepted: Vec<usize> = Vec::new();
    for cand in order {
        if accepted.iter().all(|&a| sim.get(a, cand) <= threshold) {
            accepted.push(cand);
        }
    }
    Ok(accepted)
}

/// Pools the same detector subset for every class, then suppresses and caps
/// exactly like the class-wise ensemble.
pub fn baseline_infer(
    pool: &[DetectionSet],
    subset: &[usize],
    num_classes: usize,
    suppression: &SuppressionConfig,
    cap: usize,
) -> Result<EnsembleOutput> {
    if subset.is_empty() {
        return Err(Error::Precondition("baseline subset is empty".into()));
    }
    ensemble_infer(
        pool,
        &ExpertSelection::uniform(subset, num_classes),
        suppression,
        cap,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix(cols: &[&[f64]]) -> RankingMatrix {
        let c = cols[0].len();
        let rows = (0..c)
            .map(|j| cols.iter().map(|col| Some(col[j])).collect())
            .collect();
        RankingMatrix::from_rows(
            rows,
            (0..cols.len()).map(|i| format!("d{i}")).collect(),
            (0..c).map(|j| format!("c{j}")).collect(),
            1,
        )
        .unwrap()
    }

    #[test]
    fn cosine_examples() {
        let s = cosine_similarity_matrix(&matrix(&[&[0.3, 0.4], &[0.3, 0.4]]));
        assert!((s.get(0, 1) - 1.0).abs() < 1e-12);

        let s = cosine_similarity_matrix(&matrix(&[&[1.0, 0.0], &[0.0, 1.0]]));
        assert_eq!(s.get(0, 1), 0.0);

        let s = cosine_similarity_matrix(&matrix(&[&[1.0, 0.0], &[1.0, 1.0]]));
        assert!((s.get(0, 1) - 1.0 / 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn zero_columns_flagged() {
        let s = cosine_similarity_matrix(&matrix(&[&[0.0, 0.0], &[1.0, 1.0]]));
        assert!(s.is_zero_norm(0) && !s.is_zero_norm(1));
        assert_eq!(s.get(0, 0), 0.0);
        assert_eq!(s.get(0, 1), 0.0);
        assert_eq!(s.get(1, 1), 1.0);
    }

    fn three() -> SimilarityMatrix {
        SimilarityMatrix::from_values(3, vec![1.0, 0.9, 0.3, 0.9, 1.0, 0.2, 0.3, 0.2, 1.0]).unwrap()
    }

    #[test]
    fn greedy_examples() {
        let maps = [0.6, 0.5, 0.4];
        assert_eq!(greedy_select(&three(), &maps, 1.0).unwrap(), vec![0, 1, 2]);
        assert_eq!(greedy_select(&three(), &maps, 0.0).unwrap(), vec![0]);
        assert_eq!(greedy_select(&three(), &maps, 0.5).unwrap(), vec![0, 2]);
        assert!(greedy_select(&three(), &maps, 1.1).is_err());
    }

    #[test]
    fn greedy_orders_by_map() {
        let maps = [0.1, 0.5, 0.3];
        assert_eq!(greedy_select(&three(), &maps, 1.0).unwrap(), vec![1, 2, 0]);
    }

    #[test]
    fn empty_subset_rejected() {
        assert!(baseline_infer(&[], &[], 1, &SuppressionConfig::default(), 300).is_err());
    }
}
