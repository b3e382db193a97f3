//! Full sweeps over (detector, θ, QP delta, QP base) and their reports.
//!
//! Output layout under the sweep directory:
//!
//! ```text
//! result.json
//! cells/<detector>/<theta>/<delta>/<qp_base>/{bits.txt, qpmap/<id>.txt, decoded/<id>.pgm}
//! cells/anchor/<qp_base>/...
//! cache/<sha256>/{bits.txt, decoded.pgm}
//! tables/*.csv, curves/*.{csv,svg}      (written by the report functions)
//! ```

mod cache;
mod config;
mod corpus;
mod proxy;
mod report;
pub mod synth;

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use config::{DetectorSource, QualitySource, SweepConfig};
pub use corpus::{detector_sources, Corpus, CorpusImage};
pub use proxy::DegradedGtProxy;
pub use report::{report_curves, report_tables, CurveSelection};

use crate::bdrate::{bd_rate, RdCurve, RdPoint};
use crate::error::{Error, Result};
use crate::geometry::{decide_saliency, CtuGrid};
use crate::ingest::load_ground_truth;
use crate::metrics::{weighted_ap, InstanceSet};
use crate::qpmap::{assign_qps, QpDelta, QpMap};

pub const RESULT_FILE: &str = "result.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub qp_base: u8,
    /// Mean bits per image.
    pub rate: f64,
    /// Weighted AP; `None` while predictions are missing.
    pub quality: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "reason", rename_all = "lowercase")]
pub enum CellStatus {
    Complete,
    Pending(String),
    Invalid(String),
}

impl CellStatus {
    pub fn is_complete(&self) -> bool {
        matches!(self, CellStatus::Complete)
    }

    /// Short marker used in tables.
    pub fn marker(&self) -> &'static str {
        match self {
            CellStatus::Complete => "complete",
            CellStatus::Pending(_) => "pending",
            CellStatus::Invalid(_) => "invalid",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorResult {
    pub points: Vec<OperatingPoint>,
    pub status: CellStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub detector: String,
    pub theta: f64,
    pub qp_delta: QpDelta,
    /// One per qp_base, in config order.
    pub points: Vec<OperatingPoint>,
    pub status: CellStatus,
    /// BD-rate against the anchor in percent, when both curves are complete.
    pub bdr: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub detectors: Vec<String>,
    pub thetas: Vec<f64>,
    pub qp_deltas: Vec<QpDelta>,
    pub qp_bases: Vec<u8>,
    pub images: Vec<String>,
    pub codec: String,
    pub rate_unit: String,
    /// Weighted AP on uncompressed images, when known.
    pub uncompressed_quality: Option<f64>,
    pub anchor: AnchorResult,
    /// Detector-major, then theta, then delta, in config order.
    pub cells: Vec<CellResult>,
}

fn rd_curve(name: &str, points: &[OperatingPoint]) -> Result<RdCurve> {
    let pts = points
        .iter()
        .map(|p| {
            p.quality
                .map(|q| RdPoint::new(p.qp_base.to_string(), p.rate, q))
                .ok_or_else(|| Error::InsufficientData(format!("{name}: qp_base {} has no quality", p.qp_base)))
        })
        .collect::<Result<Vec<_>>>()?;
    RdCurve::new(name, pts)
}

impl AnchorResult {
    pub fn curve(&self) -> Result<RdCurve> {
        rd_curve("anchor", &self.points)
    }
}

impl CellResult {
    pub fn name(&self) -> String {
        format!("{} theta={} delta={}", self.detector, self.theta, self.qp_delta)
    }

    pub fn curve(&self) -> Result<RdCurve> {
        rd_curve(&self.name(), &self.points)
    }
}

impl SweepResult {
    pub fn cell(&self, detector: &str, theta: f64, qp_delta: QpDelta) -> Option<&CellResult> {
        self.cells
            .iter()
            .find(|c| c.detector == detector && c.theta == theta && c.qp_delta == qp_delta)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("sweep result serializes") + "\n"
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path.display().to_string(), e))
    }
}

/// Directory name of a θ value, e.g. `0`, `0.025`.
pub fn theta_dir(theta: f64) -> String {
    format!("{theta}")
}

/// `<root>/<detector>/<theta>/<delta>/<qp_base>`, or `<root>/anchor/<qp_base>`
/// for the anchor. Used for both cell artifacts and external predictions.
pub fn operating_point_dir(root: &Path, cell: Option<(&str, f64, QpDelta)>, qp_base: u8) -> PathBuf {
    match cell {
        Some((det, theta, delta)) => root
            .join(det)
            .join(theta_dir(theta))
            .join(delta.to_string())
            .join(qp_base.to_string()),
        None => root.join("anchor").join(qp_base.to_string()),
    }
}

/// Counters from one run; not part of the deterministic result.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SweepStats {
    pub encodes: usize,
    pub reused: usize,
}

#[derive(Clone, Copy)]
struct CellSpec<'a> {
    detector_idx: usize,
    detector: &'a str,
    theta: f64,
    delta: QpDelta,
}

struct Job<'a> {
    cell: Option<CellSpec<'a>>,
    base_idx: usize,
    image_idx: usize,
}

struct JobOutput {
    bits: f64,
    predictions: Option<InstanceSet>,
    reused: bool,
}

pub fn run_sweep(cfg: &SweepConfig, corpus_dir: &Path, out: &Path) -> Result<SweepResult> {
    run_sweep_with_stats(cfg, corpus_dir, out).map(|(r, _)| r)
}

pub fn run_sweep_with_stats(cfg: &SweepConfig, corpus_dir: &Path, out: &Path) -> Result<(SweepResult, SweepStats)> {
    cfg.validate()?;
    let corpus = Corpus::load(corpus_dir, cfg)?;
    let classes = cfg.class_map.eval_classes().to_vec();
    let gts: Vec<InstanceSet> = corpus.images.iter().map(|c| c.ground_truth.clone()).collect();
    // fail before encoding anything if AP is undefined for this corpus
    weighted_ap(&[], &gts, &classes, &cfg.iou_thresholds)?;

    let grids = corpus
        .images
        .iter()
        .map(|c| CtuGrid::new(c.image.width(), c.image.height(), cfg.ctu_size))
        .collect::<Result<Vec<_>>>()?;
    let digests: Vec<[u8; 32]> = corpus.images.iter().map(|c| cache::image_digest(&c.image)).collect();

    let mut cells = Vec::new();
    for (detector_idx, detector) in corpus.detectors.iter().enumerate() {
        for &theta in &cfg.thetas {
            for &delta in &cfg.qp_deltas {
                cells.push(CellSpec {
                    detector_idx,
                    detector,
                    theta,
                    delta,
                });
            }
        }
    }
    let n_img = corpus.images.len();
    let n_base = cfg.qp_bases.len();
    let mut jobs = Vec::with_capacity((cells.len() + 1) * n_base * n_img);
    for cell in std::iter::once(None).chain(cells.iter().copied().map(Some)) {
        for base_idx in 0..n_base {
            for image_idx in 0..n_img {
                jobs.push(Job {
                    cell,
                    base_idx,
                    image_idx,
                });
            }
        }
    }

    let cells_root = out.join("cells");
    let cache_root = out.join("cache");
    let work_root = out.join("work");
    let proxy = DegradedGtProxy::default();
    let mock_quality = cfg.quality == QualitySource::Mock;

    let run_job = |job: &Job| -> Result<JobOutput> {
        let item = &corpus.images[job.image_idx];
        let grid = grids[job.image_idx];
        let qp_base = cfg.qp_bases[job.base_idx];
        let (map, dir) = match job.cell {
            None => (
                QpMap::constant(item.id.clone(), grid, qp_base)?,
                operating_point_dir(&cells_root, None, qp_base),
            ),
            Some(c) => {
                let boxes = item.detections[c.detector_idx].boxes();
                let mask = decide_saliency(&grid, &boxes, c.theta)?;
                (
                    assign_qps(&item.id, &mask, qp_base as i64, c.delta)?,
                    operating_point_dir(&cells_root, Some((c.detector, c.theta, c.delta)), qp_base),
                )
            }
        };
        let enc = cache::encode_cached(&cache_root, &work_root, &cfg.codec, &item.image, &digests[job.image_idx], &map)?;
        cache::write_atomic(&dir.join("qpmap").join(format!("{}.txt", item.id)), map.to_sidecar().as_bytes())?;
        cache::link_or_copy(
            &enc.entry.join("decoded.pgm"),
            &dir.join("decoded").join(format!("{}.pgm", item.id)),
        )?;
        let predictions = if mock_quality {
            Some(proxy.predict(&item.ground_truth, &item.image, &enc.decoded)?)
        } else {
            None
        };
        Ok(JobOutput {
            bits: enc.bits,
            predictions,
            reused: enc.reused,
        })
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs.unwrap_or(0))
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let outputs: Vec<JobOutput> = pool.install(|| jobs.par_iter().map(run_job).collect::<Result<Vec<_>>>())?;
    let _ = fs::remove_dir_all(&work_root);

    let mut stats = SweepStats::default();
    for o in &outputs {
        if o.reused {
            stats.reused += 1;
        } else {
            stats.encodes += 1;
        }
    }

    // single-threaded reduction, in job order
    let mut chunks = outputs.chunks(n_img);
    let mut curve_points = |cell: Option<CellSpec>| -> Result<Vec<OperatingPoint>> {
        let mut points = Vec::with_capacity(n_base);
        for &qp_base in &cfg.qp_bases {
            let chunk = chunks.next().expect("one chunk per operating point");
            let total: f64 = chunk.iter().map(|o| o.bits).sum();
            let rate = total / n_img as f64;
            let dir = operating_point_dir(&cells_root, cell.map(|c| (c.detector, c.theta, c.delta)), qp_base);
            let mut bits_txt = String::new();
            for (item, o) in corpus.images.iter().zip(chunk) {
                bits_txt.push_str(&format!("{} {}\n", item.id, o.bits));
            }
            bits_txt.push_str(&format!("mean {rate}\n"));
            cache::write_atomic(&dir.join("bits.txt"), bits_txt.as_bytes())?;

            let quality = match &cfg.quality {
                QualitySource::Mock => {
                    let preds: Vec<InstanceSet> = chunk.iter().filter_map(|o| o.predictions.clone()).collect();
                    Some(weighted_ap(&preds, &gts, &classes, &cfg.iou_thresholds)?.weighted_ap)
                }
                QualitySource::External(root) => {
                    let pred_dir = operating_point_dir(root, cell.map(|c| (c.detector, c.theta, c.delta)), qp_base);
                    if pred_dir.is_dir() {
                        let preds = load_ground_truth(&pred_dir)?;
                        Some(weighted_ap(&preds, &gts, &classes, &cfg.iou_thresholds)?.weighted_ap)
                    } else {
                        None
                    }
                }
            };
            points.push(OperatingPoint { qp_base, rate, quality });
        }
        Ok(points)
    };

    let anchor_points = curve_points(None)?;
    let anchor_status = curve_status(&anchor_points, || rd_curve("anchor", &anchor_points));
    let anchor = AnchorResult {
        points: anchor_points,
        status: anchor_status,
    };
    let anchor_curve = anchor.curve().ok();

    let mut cell_results = Vec::with_capacity(cells.len());
    for cs in &cells {
        let points = curve_points(Some(*cs))?;
        let mut cell = CellResult {
            detector: cs.detector.to_string(),
            theta: cs.theta,
            qp_delta: cs.delta,
            points,
            status: CellStatus::Complete,
            bdr: None,
        };
        cell.status = curve_status(&cell.points, || cell.curve());
        if cell.status.is_complete() {
            match (&anchor.status, &anchor_curve) {
                (CellStatus::Complete, Some(a)) => match cell.curve().and_then(|c| bd_rate(&c, a)) {
                    Ok(v) => cell.bdr = Some(v),
                    Err(e) => cell.status = CellStatus::Invalid(e.to_string()),
                },
                (CellStatus::Pending(r), _) => cell.status = CellStatus::Pending(format!("anchor: {r}")),
                (status, _) => cell.status = CellStatus::Invalid(format!("anchor: {}", reason(status))),
            }
        }
        cell_results.push(cell);
    }

    let uncompressed_quality = match (cfg.uncompressed_quality, &cfg.quality) {
        (Some(q), _) => Some(q),
        (None, QualitySource::Mock) => {
            let preds = corpus
                .images
                .iter()
                .map(|c| proxy.predict(&c.ground_truth, &c.image, &c.image))
                .collect::<Result<Vec<_>>>()?;
            Some(weighted_ap(&preds, &gts, &classes, &cfg.iou_thresholds)?.weighted_ap)
        }
        (None, QualitySource::External(root)) => {
            let dir = root.join("uncompressed");
            if dir.is_dir() {
                let preds = load_ground_truth(&dir)?;
                Some(weighted_ap(&preds, &gts, &classes, &cfg.iou_thresholds)?.weighted_ap)
            } else {
                None
            }
        }
    };

    let result = SweepResult {
        detectors: corpus.detectors.clone(),
        thetas: cfg.thetas.clone(),
        qp_deltas: cfg.qp_deltas.clone(),
        qp_bases: cfg.qp_bases.clone(),
        images: corpus.images.iter().map(|c| c.id.clone()).collect(),
        codec: cfg.codec.fingerprint(),
        rate_unit: "bits/image".into(),
        uncompressed_quality,
        anchor,
        cells: cell_results,
    };
    cache::write_atomic(&out.join(RESULT_FILE), result.to_json().as_bytes())?;
    Ok((result, stats))
}

fn reason(status: &CellStatus) -> &str {
    match status {
        CellStatus::Pending(r) | CellStatus::Invalid(r) => r,
        CellStatus::Complete => "curve unavailable",
    }
}

fn curve_status(points: &[OperatingPoint], curve: impl FnOnce() -> Result<RdCurve>) -> CellStatus {
    let missing: Vec<String> = points
        .iter()
        .filter(|p| p.quality.is_none())
        .map(|p| p.qp_base.to_string())
        .collect();
    if !missing.is_empty() {
        return CellStatus::Pending(format!("no predictions for qp_base {}", missing.join(", ")));
    }
    match curve() {
        Ok(_) => CellStatus::Complete,
        Err(e) => CellStatus::Invalid(e.to_string()),
    }
}

#[cfg(test)]
mod tests;
