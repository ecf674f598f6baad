//! On-disk formats.
//!
//! JSON: detection files, ground truth, the pool manifest and fold lists.
//! CSV: AP reports, ranking matrices, selections and sweep tables. CSV is
//! written with `.` decimals, shortest round-trip float formatting and LF
//! line endings; undefined values are empty cells. Metadata that does not
//! fit a table goes into a leading `# key=value; ...` comment line.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baseline::SimilarityMatrix;
use crate::error::{Error, Result};
use crate::evaluation::{ApReport, RankingMatrix};
use crate::experts::{ClassSelection, ExpertSelection, RankedMatrix};
use crate::model::{
    BoundingBox, Detection, DetectionSet, GroundTruthBox, GroundTruthDataset, PoolEntry,
    PoolManifest,
};

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn json_error(path: &Path, e: serde_json::Error) -> Error {
    Error::Json {
        path: path.to_path_buf(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    }
}

fn parse_json<T: for<'de> Deserialize<'de>>(path: &Path, text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| json_error(path, e))
}

/// One record per line inside a top-level array.
fn json_lines<T: Serialize>(records: &[T]) -> String {
    let mut out = String::from("[");
    for (k, r) in records.iter().enumerate() {
        out.push_str(if k == 0 { "\n" } else { ",\n" });
        out.push_str(&serde_json::to_string(r).expect("records serialize"));
    }
    out.push_str(if records.is_empty() { "]\n" } else { "\n]\n" });
    out
}

/// Class given either as an index or as a name from the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ClassRef {
    Id(usize),
    Name(String),
}

impl ClassRef {
    fn resolve(&self, class_names: &[String]) -> Result<usize> {
        match self {
            ClassRef::Id(id) if *id < class_names.len() => Ok(*id),
            ClassRef::Id(id) => Err(Error::UnknownClass {
                class_id: *id,
                num_classes: class_names.len(),
            }),
            ClassRef::Name(name) => class_names
                .iter()
                .position(|n| n == name)
                .ok_or_else(|| Error::UnknownClassName(name.clone())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub image_id: String,
    pub class_id: ClassRef,
    pub score: f64,
    #[serde(rename = "box")]
    pub bbox: [f64; 4],
    /// Provenance; written for ensemble output only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detector_id: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthRecord {
    pub image_id: String,
    pub class_id: ClassRef,
    #[serde(rename = "box")]
    pub bbox: [f64; 4],
    #[serde(default)]
    pub ignore: bool,
}

fn record_box(path: &Path, index: usize, b: [f64; 4]) -> Result<BoundingBox> {
    BoundingBox::new(b[0], b[1], b[2], b[3])
        .map_err(|e| Error::parse(path, format!("record {index}: {e}")))
}

fn record_class(path: &Path, index: usize, c: &ClassRef, names: &[String]) -> Result<usize> {
    c.resolve(names).map_err(|e| match e {
        Error::UnknownClassName(_) => e,
        other => Error::parse(path, format!("record {index}: {other}")),
    })
}

/// A parsed detection file and how many scores had to be clamped.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedDetections {
    pub set: DetectionSet,
    pub clamped_scores: usize,
}

/// Reads a pool entry's detections; any `detector_id` field in the file is
/// overridden by `detector_id`. Scores outside [0, 1] are clamped and
/// counted; NaN scores are errors.
pub fn parse_detections(
    path: &Path,
    text: &str,
    detector_id: usize,
    class_names: &[String],
) -> Result<LoadedDetections> {
    let records: Vec<DetectionRecord> = parse_json(path, text)?;
    let mut clamped_scores = 0;
    let mut dets = Vec::with_capacity(records.len());
    for (k, r) in records.into_iter().enumerate() {
        if r.score.is_nan() {
            return Err(Error::parse(path, format!("record {k}: score is NaN")));
        }
        let score = r.score.clamp(0.0, 1.0);
        if score != r.score {
            clamped_scores += 1;
        }
        let bbox = record_box(path, k, r.bbox)?;
        let class_id = record_class(path, k, &r.class_id, class_names)?;
        dets.push(Detection {
            bbox,
            score,
            class_id,
            image_id: r.image_id,
            detector_id,
        });
    }
    if clamped_scores > 0 {
        log::warn!(
            "{}: clamped {clamped_scores} score(s) into [0, 1]",
            path.display()
        );
    }
    Ok(LoadedDetections {
        set: DetectionSet::new(detector_id, dets)?,
        clamped_scores,
    })
}

pub fn read_detections(
    path: &Path,
    detector_id: usize,
    class_names: &[String],
) -> Result<LoadedDetections> {
    parse_detections(path, &read_text(path)?, detector_id, class_names)
}

/// Parses a detection file keeping each record's own `detector_id`
/// (falling back to `default_detector`), as written for ensemble output.
pub fn parse_detection_list(
    path: &Path,
    text: &str,
    default_detector: usize,
    class_names: &[String],
) -> Result<Vec<Detection>> {
    let records: Vec<DetectionRecord> = parse_json(path, text)?;
    records
        .into_iter()
        .enumerate()
        .map(|(k, r)| {
            Ok(Detection {
                bbox: record_box(path, k, r.bbox)?,
                score: r.score.clamp(0.0, 1.0),
                class_id: record_class(path, k, &r.class_id, class_names)?,
                image_id: r.image_id,
                detector_id: r.detector_id.unwrap_or(default_detector),
            })
        })
        .collect()
}

pub fn read_detection_list(
    path: &Path,
    default_detector: usize,
    class_names: &[String],
) -> Result<Vec<Detection>> {
    parse_detection_list(path, &read_text(path)?, default_detector, class_names)
}

pub fn detections_to_json(dets: &[Detection], with_provenance: bool) -> String {
    let records: Vec<DetectionRecord> = dets
        .iter()
        .map(|d| DetectionRecord {
            image_id: d.image_id.clone(),
            class_id: ClassRef::Id(d.class_id),
            score: d.score,
            bbox: d.bbox.as_array(),
            detector_id: with_provenance.then_some(d.detector_id),
        })
        .collect();
    json_lines(&records)
}

pub fn write_detections(path: &Path, dets: &[Detection], with_provenance: bool) -> Result<()> {
    write_text(path, &detections_to_json(dets, with_provenance))
}

pub fn parse_ground_truth(
    path: &Path,
    text: &str,
    class_names: &[String],
) -> Result<GroundTruthDataset> {
    let records: Vec<GroundTruthRecord> = parse_json(path, text)?;
    let boxes = records
        .into_iter()
        .enumerate()
        .map(|(k, r)| {
            Ok(GroundTruthBox {
                bbox: record_box(path, k, r.bbox)?,
                class_id: record_class(path, k, &r.class_id, class_names)?,
                image_id: r.image_id,
                ignore: r.ignore,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GroundTruthDataset::new(boxes))
}

pub fn read_ground_truth(path: &Path, class_names: &[String]) -> Result<GroundTruthDataset> {
    parse_ground_truth(path, &read_text(path)?, class_names)
}

pub fn ground_truth_to_json(gt: &GroundTruthDataset) -> String {
    let records: Vec<GroundTruthRecord> = gt
        .boxes()
        .iter()
        .map(|g| GroundTruthRecord {
            image_id: g.image_id.clone(),
            class_id: ClassRef::Id(g.class_id),
            bbox: g.bbox.as_array(),
            ignore: g.ignore,
        })
        .collect();
    json_lines(&records)
}

pub fn write_ground_truth(path: &Path, gt: &GroundTruthDataset) -> Result<()> {
    write_text(path, &ground_truth_to_json(gt))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestDetector {
    pub detector_id: usize,
    pub label: String,
    /// Detection file, relative to the manifest's directory.
    pub file: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub training_set: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestFile {
    pub classes: Vec<String>,
    pub detectors: Vec<ManifestDetector>,
}

impl ManifestFile {
    pub fn to_manifest(&self) -> Result<PoolManifest> {
        let entries = self
            .detectors
            .iter()
            .map(|d| PoolEntry {
                detector_id: d.detector_id,
                label: d.label.clone(),
                scale: d.scale.clone(),
                training_set: d.training_set.clone(),
            })
            .collect();
        PoolManifest::new(entries, self.classes.clone())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }
}

/// The manifest plus each detector file resolved against its directory.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedManifest {
    pub manifest: PoolManifest,
    pub files: Vec<PathBuf>,
}

pub fn read_manifest(path: &Path) -> Result<LoadedManifest> {
    let file: ManifestFile = parse_json(path, &read_text(path)?)?;
    let manifest = file
        .to_manifest()
        .map_err(|e| Error::parse(path, e.to_string()))?;
    let base = path.parent().unwrap_or(Path::new(""));
    let files = file.detectors.iter().map(|d| base.join(&d.file)).collect();
    Ok(LoadedManifest { manifest, files })
}

pub fn write_manifest(path: &Path, file: &ManifestFile) -> Result<()> {
    write_text(path, &file.to_json())
}

/// Fold list: a JSON array of arrays of image ids.
pub fn read_folds(path: &Path) -> Result<Vec<Vec<String>>> {
    let folds: Vec<Vec<String>> = parse_json(path, &read_text(path)?)?;
    if folds.is_empty() {
        return Err(Error::FoldMismatch(format!(
            "{}: fold list is empty",
            path.display()
        )));
    }
    Ok(folds)
}

pub fn folds_to_json(folds: &[Vec<String>]) -> String {
    let mut s = serde_json::to_string(folds).expect("folds serialize");
    s.push('\n');
    s
}

fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn csv_writer() -> csv::Writer<Vec<u8>> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new())
}

fn finish(meta: Option<String>, w: csv::Writer<Vec<u8>>) -> String {
    let body = String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf8 csv");
    match meta {
        Some(m) => format!("# {m}\n{body}"),
        None => body,
    }
}

fn row<I, S>(w: &mut csv::Writer<Vec<u8>>, fields: I)
where
    I: IntoIterator<Item = S>,
    S: AsRef<[u8]>,
{
    w.write_record(fields).expect("in-memory writer");
}

/// Parsed CSV: metadata pairs from the leading comment plus header and rows.
struct CsvTable {
    meta: BTreeMap<String, String>,
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

fn parse_csv(path: &Path, text: &str) -> Result<CsvTable> {
    let mut meta = BTreeMap::new();
    for line in text.lines().take_while(|l| l.starts_with('#')) {
        for pair in line.trim_start_matches('#').split(';') {
            if let Some((k, v)) = pair.split_once('=') {
                meta.insert(k.trim().to_string(), v.trim().to_string());
            }
        }
    }
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .flexible(true)
        .from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| Error::parse(path, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    let rows = reader
        .records()
        .map(|r| {
            r.map(|rec| rec.iter().map(str::to_string).collect())
                .map_err(|e| Error::parse(path, e.to_string()))
        })
        .collect::<Result<Vec<Vec<String>>>>()?;
    Ok(CsvTable { meta, header, rows })
}

fn cell<'a>(path: &Path, row: &'a [String], k: usize) -> Result<&'a str> {
    row.get(k)
        .map(String::as_str)
        .ok_or_else(|| Error::parse(path, format!("row {row:?} has no column {k}")))
}

fn num<T: std::str::FromStr>(path: &Path, s: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| Error::parse(path, format!("cannot parse {s:?} as a number")))
}

fn opt_num(path: &Path, s: &str) -> Result<Option<f64>> {
    if s.trim().is_empty() {
        Ok(None)
    } else {
        num(path, s).map(Some)
    }
}

fn meta_num<T: std::str::FromStr>(
    path: &Path,
    meta: &BTreeMap<String, String>,
    key: &str,
) -> Result<T> {
    let v = meta
        .get(key)
        .ok_or_else(|| Error::parse(path, format!("missing metadata key {key:?}")))?;
    num(path, v)
}

/// Rows `class_id,class_name,ap,num_gt` and a closing `mAP` row.
pub fn ap_report_to_csv(report: &ApReport, class_names: &[String]) -> String {
    let thresholds: Vec<String> = report.iou_thresholds.iter().map(|&t| fmt_f64(t)).collect();
    let meta = format!(
        "detector_id={}; fold={}; iou_thresholds={}",
        report.detector_id,
        report.fold,
        thresholds.join(" ")
    );
    let mut w = csv_writer();
    row(&mut w, ["class_id", "class_name", "ap", "num_gt"]);
    for (j, (ap, n)) in report.ap.iter().zip(&report.num_gt).enumerate() {
        let name = class_names.get(j).cloned().unwrap_or_default();
        row(&mut w, [j.to_string(), name, fmt_opt(*ap), n.to_string()]);
    }
    let total: usize = report.num_gt.iter().sum();
    row(
        &mut w,
        [
            "mAP".into(),
            String::new(),
            fmt_f64(report.map),
            total.to_string(),
        ],
    );
    finish(Some(meta), w)
}

pub fn parse_ap_report(path: &Path, text: &str) -> Result<ApReport> {
    let t = parse_csv(path, text)?;
    let iou_thresholds = t
        .meta
        .get("iou_thresholds")
        .map(|s| s.split_whitespace().map(|v| num(path, v)).collect())
        .transpose()?
        .unwrap_or_default();
    let mut report = ApReport {
        detector_id: meta_num(path, &t.meta, "detector_id")?,
        fold: meta_num(path, &t.meta, "fold")?,
        iou_thresholds,
        ap: Vec::new(),
        num_gt: Vec::new(),
        map: 0.0,
    };
    for r in &t.rows {
        if cell(path, r, 0)? == "mAP" {
            report.map = num(path, cell(path, r, 2)?)?;
            continue;
        }
        report.ap.push(opt_num(path, cell(path, r, 2)?)?);
        report.num_gt.push(num(path, cell(path, r, 3)?)?);
    }
    Ok(report)
}

/// C rows, one column per detector, headed by detector labels.
pub fn ranking_matrix_to_csv(m: &RankingMatrix) -> String {
    let mut w = csv_writer();
    let mut header = vec!["class_id".to_string(), "class_name".to_string()];
    header.extend(m.labels().iter().cloned());
    row(&mut w, &header);
    for j in 0..m.num_classes() {
        let mut r = vec![j.to_string(), m.class_names()[j].clone()];
        r.extend(m.row(j).into_iter().map(fmt_opt));
        row(&mut w, &r);
    }
    finish(Some(format!("folds={}", m.folds())), w)
}

pub fn parse_ranking_matrix(path: &Path, text: &str) -> Result<RankingMatrix> {
    let t = parse_csv(path, text)?;
    if t.header.len() < 2 {
        return Err(Error::parse(path, "ranking matrix header too short"));
    }
    let labels = t.header[2..].to_vec();
    let mut names = Vec::new();
    let mut rows = Vec::new();
    for r in &t.rows {
        names.push(cell(path, r, 1)?.to_string());
        rows.push(
            (0..labels.len())
                .map(|i| opt_num(path, cell(path, r, 2 + i)?))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    RankingMatrix::from_rows(rows, labels, names, meta_num(path, &t.meta, "folds")?)
        .map_err(|e| Error::parse(path, e.to_string()))
}

pub fn read_ranking_matrix(path: &Path) -> Result<RankingMatrix> {
    parse_ranking_matrix(path, &read_text(path)?)
}

/// Rows `class_id,rank,detector_id,ap`; rank starts at 1.
pub fn ranked_matrix_to_csv(r: &RankedMatrix) -> String {
    let mut w = csv_writer();
    row(&mut w, ["class_id", "rank", "detector_id", "ap"]);
    for j in 0..r.num_classes() {
        for k in 0..r.perm[j].len() {
            let ap = r.defined[j][k].then_some(r.values[j][k]);
            row(
                &mut w,
                [
                    j.to_string(),
                    (k + 1).to_string(),
                    r.perm[j][k].to_string(),
                    fmt_opt(ap),
                ],
            );
        }
    }
    finish(None, w)
}

pub fn parse_ranked_matrix(path: &Path, text: &str) -> Result<RankedMatrix> {
    let t = parse_csv(path, text)?;
    let mut ranked = RankedMatrix {
        values: Vec::new(),
        perm: Vec::new(),
        defined: Vec::new(),
    };
    for r in &t.rows {
        let j: usize = num(path, cell(path, r, 0)?)?;
        while ranked.perm.len() <= j {
            ranked.values.push(Vec::new());
            ranked.perm.push(Vec::new());
            ranked.defined.push(Vec::new());
        }
        let ap = opt_num(path, cell(path, r, 3)?)?;
        ranked.perm[j].push(num(path, cell(path, r, 2)?)?);
        ranked.values[j].push(ap.unwrap_or(0.0));
        ranked.defined[j].push(ap.is_some());
    }
    Ok(ranked)
}

/// Rows `class_id,rank,detector_id,ap,threshold,fallback`.
pub fn selection_to_csv(sel: &ExpertSelection) -> String {
    let meta = format!(
        "delta={}; classes={}",
        fmt_opt(sel.delta),
        sel.num_classes()
    );
    let mut w = csv_writer();
    row(
        &mut w,
        [
            "class_id",
            "rank",
            "detector_id",
            "ap",
            "threshold",
            "fallback",
        ],
    );
    for (j, c) in sel.classes.iter().enumerate() {
        for (k, (&i, &ap)) in c.experts.iter().zip(&c.aps).enumerate() {
            row(
                &mut w,
                [
                    j.to_string(),
                    (k + 1).to_string(),
                    i.to_string(),
                    fmt_opt(ap),
                    fmt_opt(c.threshold),
                    c.fallback.to_string(),
                ],
            );
        }
    }
    finish(Some(meta), w)
}

pub fn parse_selection(path: &Path, text: &str) -> Result<ExpertSelection> {
    let t = parse_csv(path, text)?;
    let delta = opt_num(path, t.meta.get("delta").map_or("", String::as_str))?;
    let classes: usize = meta_num(path, &t.meta, "classes")?;
    let mut sel = ExpertSelection {
        delta,
        classes: vec![
            ClassSelection {
                threshold: None,
                experts: Vec::new(),
                aps: Vec::new(),
                fallback: false,
            };
            classes
        ],
    };
    for r in &t.rows {
        let j: usize = num(path, cell(path, r, 0)?)?;
        let c = sel
            .classes
            .get_mut(j)
            .ok_or_else(|| Error::parse(path, format!("class {j} beyond class count")))?;
        c.experts.push(num(path, cell(path, r, 2)?)?);
        c.aps.push(opt_num(path, cell(path, r, 3)?)?);
        c.threshold = opt_num(path, cell(path, r, 4)?)?;
        c.fallback = cell(path, r, 5)? == "true";
    }
    Ok(sel)
}

/// Square matrix headed by detector labels.
pub fn similarity_to_csv(sim: &SimilarityMatrix, labels: &[String]) -> String {
    let mut w = csv_writer();
    let mut header = vec!["detector".to_string()];
    header.extend(labels.iter().cloned());
    row(&mut w, &header);
    for a in 0..sim.len() {
        let mut r = vec![labels.get(a).cloned().unwrap_or_else(|| a.to_string())];
        r.extend((0..sim.len()).map(|b| fmt_f64(sim.get(a, b))));
        row(&mut w, &r);
    }
    finish(None, w)
}

pub fn parse_similarity(path: &Path, text: &str) -> Result<SimilarityMatrix> {
    let t = parse_csv(path, text)?;
    let n = t.rows.len();
    let mut values = Vec::with_capacity(n * n);
    for r in &t.rows {
        for b in 0..n {
            values.push(num(path, cell(path, r, 1 + b)?)?);
        }
    }
    SimilarityMatrix::from_values(n, values).map_err(|e| Error::parse(path, e.to_string()))
}

/// One setting of either ensembling method.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    /// `rank-of-experts` or `baseline`.
    pub method: String,
    /// Delta for the class-wise method, similarity threshold for the baseline.
    pub knob: f64,
    /// Distinct detectors used by at least one class.
    pub models_selected: usize,
    pub map: f64,
}

pub fn comparison_to_csv(rows: &[ComparisonRow]) -> String {
    let mut w = csv_writer();
    row(&mut w, ["method", "knob", "models_selected", "map"]);
    for r in rows {
        row(
            &mut w,
            [
                r.method.clone(),
                fmt_f64(r.knob),
                r.models_selected.to_string(),
                fmt_f64(r.map),
            ],
        );
    }
    finish(None, w)
}

pub fn parse_comparison(path: &Path, text: &str) -> Result<Vec<ComparisonRow>> {
    parse_csv(path, text)?
        .rows
        .iter()
        .map(|r| {
            Ok(ComparisonRow {
                method: cell(path, r, 0)?.to_string(),
                knob: num(path, cell(path, r, 1)?)?,
                models_selected: num(path, cell(path, r, 2)?)?,
                map: num(path, cell(path, r, 3)?)?,
            })
        })
        .collect()
}

/// One delta of a sweep as stored on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRecord {
    pub delta: f64,
    pub is_default: bool,
    pub map: f64,
    pub total_selected: usize,
    /// Classes using exactly 1, 2, ..., N experts.
    pub expert_histogram: Vec<usize>,
    /// Classes each detector was chosen for.
    pub selection_counts: Vec<usize>,
}

/// Header carries the default delta; columns `n1..nN` are the expert-count
/// histogram and `sel_<label>` the per-detector selection counts.
pub fn sweep_to_csv(rows: &[SweepRecord], labels: &[String], default_delta: f64) -> String {
    let mut w = csv_writer();
    let mut header: Vec<String> = ["delta", "default", "map", "total_selected"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    header.extend((1..=labels.len()).map(|n| format!("n{n}")));
    header.extend(labels.iter().map(|l| format!("sel_{l}")));
    row(&mut w, &header);
    for r in rows {
        let mut fields = vec![
            fmt_f64(r.delta),
            r.is_default.to_string(),
            fmt_f64(r.map),
            r.total_selected.to_string(),
        ];
        fields.extend(r.expert_histogram.iter().map(|v| v.to_string()));
        fields.extend(r.selection_counts.iter().map(|v| v.to_string()));
        row(&mut w, &fields);
    }
    finish(Some(format!("default_delta={}", fmt_f64(default_delta))), w)
}

pub fn parse_sweep(path: &Path, text: &str) -> Result<Vec<SweepRecord>> {
    let t = parse_csv(path, text)?;
    let n = t.header.iter().filter(|h| h.starts_with("sel_")).count();
    t.rows
        .iter()
        .map(|r| {
            let ints = |from: usize| -> Result<Vec<usize>> {
                (from..from + n)
                    .map(|k| num(path, cell(path, r, k)?))
                    .collect()
            };
            Ok(SweepRecord {
                delta: num(path, cell(path, r, 0)?)?,
                is_default: cell(path, r, 1)? == "true",
                map: num(path, cell(path, r, 2)?)?,
                total_selected: num(path, cell(path, r, 3)?)?,
                expert_histogram: ints(4)?,
                selection_counts: ints(4 + n)?,
            })
        })
        .collect()
}

pub fn write_file(path: &Path, text: &str) -> Result<()> {
    write_text(path, text)
}

pub fn read_file(path: &Path) -> Result<String> {
    read_text(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names() -> Vec<String> {
        vec!["cat".into(), "dog".into()]
    }

    #[test]
    fn detection_json_shape() {
        let d = Detection::new(
            BoundingBox::new(1.0, 2.0, 3.5, 4.0).unwrap(),
            0.25,
            1,
            "a",
            0,
        );
        assert_eq!(
            detections_to_json(std::slice::from_ref(&d), false),
            "[\n{\"image_id\":\"a\",\"class_id\":1,\"score\":0.25,\"box\":[1.0,2.0,3.5,4.0]}\n]\n"
        );
        assert!(detections_to_json(&[d], true).contains("\"detector_id\":0"));
        assert_eq!(detections_to_json(&[], false), "[]\n");
    }

    #[test]
    fn clamps_noisy_scores() {
        let text = r#"[{"image_id":"a","class_id":0,"score":1.0000001,"box":[0,0,1,1]},
                       {"image_id":"a","class_id":"dog","score":-0.0001,"box":[0,0,1,1]}]"#;
        let loaded = parse_detections(Path::new("d.json"), text, 3, &names()).unwrap();
        assert_eq!(loaded.clamped_scores, 2);
        let d = loaded.set.detections();
        assert_eq!((d[0].score, d[1].score), (1.0, 0.0));
        assert_eq!(d[1].class_id, 1);
        assert_eq!(d[0].detector_id, 3);
    }

    #[test]
    fn parse_errors_carry_location() {
        let text = "[\n{\"image_id\": \"a\", \"class_id\": 0,\n \"score\": oops}]";
        match parse_detections(Path::new("d.json"), text, 0, &names()) {
            Err(Error::Json { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let bad_box = r#"[{"image_id":"a","class_id":0,"score":0.5,"box":[2,0,1,1]}]"#;
        assert!(matches!(
            parse_detections(Path::new("d.json"), bad_box, 0, &names()),
            Err(Error::Parse { .. })
        ));
        let bad_name = r#"[{"image_id":"a","class_id":"cow","score":0.5,"box":[0,0,1,1]}]"#;
        assert!(matches!(
            parse_detections(Path::new("d.json"), bad_name, 0, &names()),
            Err(Error::UnknownClassName(_))
        ));
    }

    #[test]
    fn ground_truth_ignore_defaults_false() {
        let text = r#"[{"image_id":"a","class_id":1,"box":[0,0,1,1]},
                       {"image_id":"a","class_id":0,"box":[0,0,1,1],"ignore":true}]"#;
        let gt = parse_ground_truth(Path::new("g.json"), text, &names()).unwrap();
        assert!(!gt.boxes()[0].ignore && gt.boxes()[1].ignore);
    }

    #[test]
    fn ap_csv_layout() {
        let r = ApReport {
            detector_id: 2,
            ap: vec![Some(0.5), None],
            num_gt: vec![4, 0],
            map: 0.5,
            iou_thresholds: vec![0.5],
            fold: 0,
        };
        assert_eq!(
            ap_report_to_csv(&r, &names()),
            "# detector_id=2; fold=0; iou_thresholds=0.5\n\
             class_id,class_name,ap,num_gt\n0,cat,0.5,4\n1,dog,,0\nmAP,,0.5,4\n"
        );
    }
}
