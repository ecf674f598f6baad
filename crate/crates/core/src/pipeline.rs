//! The commands behind the `roe` binary. Each reads its inputs from the
//! paths in a [`RunConfig`], writes its artifacts under `output_dir` and
//! returns what it computed.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use crate::baseline::{baseline_infer, cosine_similarity_matrix, greedy_select};
use crate::config::{RunConfig, SynthPreset};
use crate::error::{Error, Result};
use crate::evaluation::{
    build_ranking_matrix, evaluate_detections, evaluate_detector, mean_defined, ApReport,
    RankingMatrix,
};
use crate::experts::{
    delta_sweep, ensemble_infer, rank_rows, select_experts, EnsembleOutput, ExpertSelection,
    DEFAULT_DELTA,
};
use crate::formats::{self, ComparisonRow, ManifestDetector, ManifestFile, SweepRecord};
use crate::model::{DetectionSet, GroundTruthDataset, PoolManifest};
use crate::synth::{
    build_pool, complementary_pool, oracle_profile, ComplementarySpec, GroundTruthSpec,
};

/// Manifest plus every pool entry's detections.
#[derive(Debug, Clone)]
pub struct LoadedPool {
    pub manifest: PoolManifest,
    pub pool: Vec<DetectionSet>,
    pub clamped_scores: usize,
}

pub fn load_pool(manifest_path: &Path) -> Result<LoadedPool> {
    let loaded = formats::read_manifest(manifest_path)?;
    let mut pool = Vec::with_capacity(loaded.files.len());
    let mut clamped_scores = 0;
    for (i, file) in loaded.files.iter().enumerate() {
        let d = formats::read_detections(file, i, loaded.manifest.class_names())?;
        clamped_scores += d.clamped_scores;
        pool.push(d.set);
    }
    Ok(LoadedPool {
        manifest: loaded.manifest,
        pool,
        clamped_scores,
    })
}

fn load_inputs(cfg: &RunConfig) -> Result<(LoadedPool, Option<GroundTruthDataset>)> {
    cfg.validate()?;
    let loaded = load_pool(cfg.require_manifest()?)?;
    let gt = cfg
        .ground_truth
        .as_deref()
        .map(|p| formats::read_ground_truth(p, loaded.manifest.class_names()))
        .transpose()?;
    Ok((loaded, gt))
}

fn out_path(cfg: &RunConfig, name: &str) -> PathBuf {
    cfg.output_dir.join(name)
}

fn ap_file_name(detector_id: usize) -> String {
    format!("ap_{detector_id:03}.csv")
}

/// Per-detector AP over the whole ground truth; one CSV per detector.
pub fn cmd_eval(cfg: &RunConfig) -> Result<Vec<ApReport>> {
    let (loaded, gt) = load_inputs(cfg)?;
    let gt = gt.ok_or_else(|| Error::InvalidConfig("eval needs ground truth (--gt)".into()))?;
    let eval = cfg.eval_config();
    let reports = loaded
        .pool
        .iter()
        .map(|set| evaluate_detector(set, &gt, &loaded.manifest, &eval, 0))
        .collect::<Result<Vec<_>>>()?;
    for r in &reports {
        formats::write_file(
            &out_path(cfg, &ap_file_name(r.detector_id)),
            &formats::ap_report_to_csv(r, loaded.manifest.class_names()),
        )?;
    }
    Ok(reports)
}

/// Fold-averaged ranking matrix from the pool and ground truth.
pub fn compute_ranking(
    cfg: &RunConfig,
    loaded: &LoadedPool,
    gt: &GroundTruthDataset,
) -> Result<(RankingMatrix, Vec<ApReport>)> {
    let eval = cfg.eval_config();
    let folds: Vec<BTreeSet<String>> = match &cfg.folds {
        Some(path) => formats::read_folds(path)?
            .into_iter()
            .map(|f| f.into_iter().collect())
            .collect(),
        None => vec![gt.image_ids().into_iter().map(str::to_string).collect()],
    };
    let mut reports = Vec::new();
    for (k, images) in folds.iter().enumerate() {
        let fold_gt = gt.restrict_to(images);
        for set in &loaded.pool {
            let dets = set
                .detections()
                .iter()
                .filter(|d| images.contains(&d.image_id))
                .cloned()
                .collect();
            let fold_set = DetectionSet::new(set.detector_id(), dets)?;
            reports.push(evaluate_detector(
                &fold_set,
                &fold_gt,
                &loaded.manifest,
                &eval,
                k,
            )?);
        }
    }
    Ok((build_ranking_matrix(&reports, &loaded.manifest)?, reports))
}

fn check_matrix_fits(m: &RankingMatrix, manifest: &PoolManifest) -> Result<()> {
    if m.num_detectors() != manifest.num_detectors() || m.num_classes() != manifest.num_classes() {
        return Err(Error::Precondition(format!(
            "ranking matrix is {}x{} but the pool has {} classes and {} detectors",
            m.num_classes(),
            m.num_detectors(),
            manifest.num_classes(),
            manifest.num_detectors()
        )));
    }
    Ok(())
}

fn ranking_for(
    cfg: &RunConfig,
    loaded: &LoadedPool,
    gt: Option<&GroundTruthDataset>,
) -> Result<RankingMatrix> {
    let m = match (&cfg.ranking, gt) {
        (Some(path), _) => formats::read_ranking_matrix(path)?,
        (None, Some(gt)) => compute_ranking(cfg, loaded, gt)?.0,
        (None, None) => {
            return Err(Error::InvalidConfig(
                "either a ranking matrix (--ranking) or ground truth (--gt) is required".into(),
            ))
        }
    };
    check_matrix_fits(&m, &loaded.manifest)?;
    Ok(m)
}

/// Writes `ranking_matrix.csv` and `ranked.csv`.
pub fn cmd_rank(cfg: &RunConfig) -> Result<RankingMatrix> {
    let (loaded, gt) = load_inputs(cfg)?;
    let gt = gt.ok_or_else(|| Error::InvalidConfig("rank needs ground truth (--gt)".into()))?;
    let (matrix, _) = compute_ranking(cfg, &loaded, &gt)?;
    formats::write_file(
        &out_path(cfg, "ranking_matrix.csv"),
        &formats::ranking_matrix_to_csv(&matrix),
    )?;
    formats::write_file(
        &out_path(cfg, "ranked.csv"),
        &formats::ranked_matrix_to_csv(&rank_rows(&matrix)),
    )?;
    Ok(matrix)
}

fn capped_pool(cfg: &RunConfig, loaded: &LoadedPool) -> Vec<DetectionSet> {
    loaded
        .pool
        .iter()
        .map(|s| s.cap_per_image(cfg.cap))
        .collect()
}

fn evaluate_output(
    output: &EnsembleOutput,
    gt: &GroundTruthDataset,
    num_classes: usize,
    cfg: &RunConfig,
) -> Result<f64> {
    let (ap, _) = evaluate_detections(&output.detections(), gt, num_classes, &cfg.eval_config())?;
    Ok(mean_defined(&ap))
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSummary {
    pub delta: f64,
    pub map: Option<f64>,
    pub total_boxes: usize,
    pub selection: ExpertSelection,
}

impl EnsembleSummary {
    pub fn line(&self) -> String {
        format!(
            "delta={}{} map={} total_boxes={}",
            self.delta,
            if self.delta == DEFAULT_DELTA {
                " (default)"
            } else {
                ""
            },
            self.map
                .map(|m| format!("{m:.6}"))
                .unwrap_or_else(|| "n/a".into()),
            self.total_boxes
        )
    }
}

/// Selects experts, fuses the pool and writes `ensemble.json`,
/// `selection.csv` and `summary.txt`. Evaluates when ground truth is given.
pub fn cmd_ensemble(cfg: &RunConfig) -> Result<EnsembleSummary> {
    let (loaded, gt) = load_inputs(cfg)?;
    let matrix = ranking_for(cfg, &loaded, gt.as_ref())?;
    let selection = select_experts(&rank_rows(&matrix), cfg.delta)?;
    let output = ensemble_infer(
        &capped_pool(cfg, &loaded),
        &selection,
        &cfg.suppression,
        cfg.cap,
    )?;
    let map = gt
        .as_ref()
        .map(|gt| evaluate_output(&output, gt, loaded.manifest.num_classes(), cfg))
        .transpose()?;

    formats::write_detections(&out_path(cfg, "ensemble.json"), &output.detections(), true)?;
    formats::write_file(
        &out_path(cfg, "selection.csv"),
        &formats::selection_to_csv(&selection),
    )?;
    let summary = EnsembleSummary {
        delta: cfg.delta,
        map,
        total_boxes: output.total_boxes(),
        selection,
    };
    let s = &cfg.suppression;
    let text = format!(
        "{}\nsuppression={} iou_cutoff={} sigma={} score_floor={}\ncap={}\n",
        summary.line(),
        s.method,
        s.iou_cutoff,
        s.sigma,
        s.score_floor,
        cfg.cap
    );
    formats::write_file(&out_path(cfg, "summary.txt"), &text)?;
    Ok(summary)
}

pub fn roe_detections_name(delta: f64) -> String {
    format!("roe_delta_{delta}.json")
}

pub fn baseline_detections_name(threshold: f64) -> String {
    format!("baseline_threshold_{threshold}.json")
}

/// Sweeps delta for the class-wise method and the similarity threshold for
/// the greedy baseline. Writes `comparison.csv`, `similarity.csv` and the
/// fused detections of every setting under `detections/`.
pub fn cmd_compare(cfg: &RunConfig) -> Result<Vec<ComparisonRow>> {
    let (loaded, gt) = load_inputs(cfg)?;
    let gt = gt.ok_or_else(|| Error::InvalidConfig("compare needs ground truth (--gt)".into()))?;
    let matrix = ranking_for(cfg, &loaded, Some(&gt))?;
    let pool = capped_pool(cfg, &loaded);
    let c = loaded.manifest.num_classes();
    let n = loaded.manifest.num_detectors();
    let ranked = rank_rows(&matrix);
    let mut rows = Vec::new();

    for &delta in &cfg.deltas {
        let selection = select_experts(&ranked, delta)?;
        let output = ensemble_infer(&pool, &selection, &cfg.suppression, cfg.cap)?;
        formats::write_detections(
            &out_path(cfg, &format!("detections/{}", roe_detections_name(delta))),
            &output.detections(),
            true,
        )?;
        rows.push(ComparisonRow {
            method: "rank-of-experts".into(),
            knob: delta,
            models_selected: selection
                .per_detector_counts(n)
                .iter()
                .filter(|&&k| k > 0)
                .count(),
            map: evaluate_output(&output, &gt, c, cfg)?,
        });
    }

    let sim = cosine_similarity_matrix(&matrix);
    formats::write_file(
        &out_path(cfg, "similarity.csv"),
        &formats::similarity_to_csv(&sim, matrix.labels()),
    )?;
    let maps = matrix.detector_maps();
    for &threshold in &cfg.similarity_thresholds {
        let subset = greedy_select(&sim, &maps, threshold)?;
        let output = baseline_infer(&pool, &subset, c, &cfg.suppression, cfg.cap)?;
        formats::write_detections(
            &out_path(
                cfg,
                &format!("detections/{}", baseline_detections_name(threshold)),
            ),
            &output.detections(),
            true,
        )?;
        rows.push(ComparisonRow {
            method: "baseline".into(),
            knob: threshold,
            models_selected: subset.len(),
            map: evaluate_output(&output, &gt, c, cfg)?,
        });
    }
    formats::write_file(
        &out_path(cfg, "comparison.csv"),
        &formats::comparison_to_csv(&rows),
    )?;
    Ok(rows)
}

/// Delta sweep with per-detector selection counts; writes `sweep.csv`.
pub fn cmd_sweep(cfg: &RunConfig) -> Result<Vec<SweepRecord>> {
    let (loaded, gt) = load_inputs(cfg)?;
    let gt = gt.ok_or_else(|| Error::InvalidConfig("sweep needs ground truth (--gt)".into()))?;
    let matrix = ranking_for(cfg, &loaded, Some(&gt))?;
    let rows = delta_sweep(
        &matrix,
        &capped_pool(cfg, &loaded),
        &gt,
        &cfg.deltas,
        &cfg.suppression,
        cfg.cap,
        &cfg.eval_config(),
    )?;
    let records: Vec<SweepRecord> = rows
        .into_iter()
        .map(|r| SweepRecord {
            delta: r.delta,
            is_default: r.is_default,
            map: r.map,
            total_selected: r.total_selected,
            expert_histogram: r.expert_histogram,
            selection_counts: r.selection_counts,
        })
        .collect();
    formats::write_file(
        &out_path(cfg, "sweep.csv"),
        &formats::sweep_to_csv(&records, matrix.labels(), DEFAULT_DELTA),
    )?;
    Ok(records)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSummary {
    pub manifest_path: PathBuf,
    pub ground_truth_path: PathBuf,
    pub detectors: usize,
    pub ground_truth_boxes: usize,
}

/// Writes `gt.json`, one `det_XX.json` per detector and `manifest.json`.
pub fn cmd_synth(cfg: &RunConfig) -> Result<SynthSummary> {
    cfg.validate()?;
    let sp = match cfg.preset {
        SynthPreset::Complementary => complementary_pool(&ComplementarySpec {
            num_images: cfg.num_images,
            seed: cfg.seed,
            ..ComplementarySpec::default()
        })?,
        SynthPreset::Oracle => {
            let spec = GroundTruthSpec {
                num_images: cfg.num_images,
                seed: cfg.seed,
                ..GroundTruthSpec::default()
            };
            build_pool(
                &spec,
                vec![oracle_profile(spec.num_classes, spec.image_size, cfg.seed)],
                vec!["oracle".into()],
            )?
        }
    };
    let gt_path = out_path(cfg, "gt.json");
    formats::write_ground_truth(&gt_path, &sp.ground_truth)?;
    let mut detectors = Vec::new();
    for (entry, set) in sp.manifest.entries().iter().zip(&sp.pool) {
        let file = PathBuf::from(format!("det_{:02}.json", entry.detector_id));
        formats::write_detections(&cfg.output_dir.join(&file), set.detections(), false)?;
        detectors.push(ManifestDetector {
            detector_id: entry.detector_id,
            label: entry.label.clone(),
            file,
            scale: entry.scale.clone(),
            training_set: entry.training_set.clone(),
        });
    }
    let manifest_path = out_path(cfg, "manifest.json");
    formats::write_manifest(
        &manifest_path,
        &ManifestFile {
            classes: sp.manifest.class_names().to_vec(),
            detectors,
        },
    )?;
    Ok(SynthSummary {
        manifest_path,
        ground_truth_path: gt_path,
        detectors: sp.pool.len(),
        ground_truth_boxes: sp.ground_truth.len(),
    })
}
