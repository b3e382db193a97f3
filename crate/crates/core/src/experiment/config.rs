//! Sweep configuration.
//!
//! Read from a TOML file; every key is optional and defaults to the grid
//! used for the published tables:
//!
//! ```toml
//! thetas = [0.0, 0.025, 0.05, 0.1]
//! qp_deltas = [5, 10, 20, "max"]
//! qp_bases = [12, 17, 22, 27]
//! ctu_size = 128
//! min_score = 0.0
//! codec = "mock"                 # or "template:<file>"
//! quality = "mock"               # or "external:<predictions dir>"
//! anchor = "constant-qp"
//! classes = ["bicycle", "bus", "car", "motorcycle", "person", "rider", "train", "truck"]
//! class_map = "classes.txt"      # optional detector label mapping
//! uncompressed_quality = 0.37    # optional reference line for curve plots
//! curve_theta = 0.0              # operating point drawn in curve reports
//! curve_delta = "max"
//! jobs = 8
//!
//! [detectors]                    # default: every directory in <corpus>/detections
//! yolo = "detections/yolo"
//! ```
//!
//! Detector paths are relative to the corpus directory; `template:`,
//! `external:` and `class_map` paths are relative to the config file.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::codec::{Codec, CommandTemplate};
use crate::error::{Error, Result};
use crate::ingest::{ClassMap, CITYSCAPES_CLASSES};
use crate::metrics::default_iou_thresholds;
use crate::qpmap::{QpDelta, MAX_QP};

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorSource {
    pub name: String,
    /// Relative paths are resolved against the corpus directory.
    pub path: PathBuf,
}

/// Where weighted AP for each operating point comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum QualitySource {
    /// Degraded-ground-truth proxy evaluated on the decoded images. Test and
    /// smoke-run use only; see [`super::DegradedGtProxy`].
    Mock,
    /// Instance predictions produced offline by a segmenter, one directory
    /// per operating point: `<dir>/<detector>/<theta>/<delta>/<qp_base>/`
    /// and `<dir>/anchor/<qp_base>/`.
    External(PathBuf),
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub thetas: Vec<f64>,
    pub qp_deltas: Vec<QpDelta>,
    pub qp_bases: Vec<u8>,
    /// Empty means "discover from the corpus".
    pub detectors: Vec<DetectorSource>,
    pub codec: Codec,
    pub quality: QualitySource,
    pub ctu_size: u32,
    pub min_score: f64,
    pub class_map: ClassMap,
    pub iou_thresholds: Vec<f64>,
    pub uncompressed_quality: Option<f64>,
    pub curve_theta: Option<f64>,
    pub curve_delta: Option<QpDelta>,
    /// Worker threads; `None` uses every available core.
    pub jobs: Option<usize>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            thetas: vec![0.0, 0.025, 0.05, 0.1],
            qp_deltas: vec![
                QpDelta::Offset(5),
                QpDelta::Offset(10),
                QpDelta::Offset(20),
                QpDelta::Max,
            ],
            qp_bases: vec![12, 17, 22, 27],
            detectors: Vec::new(),
            codec: Codec::Mock,
            quality: QualitySource::Mock,
            ctu_size: crate::geometry::DEFAULT_CTU_SIZE,
            min_score: 0.0,
            class_map: ClassMap::cityscapes(),
            iou_thresholds: default_iou_thresholds(),
            uncompressed_quality: None,
            curve_theta: None,
            curve_delta: None,
            jobs: None,
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    thetas: Option<Vec<f64>>,
    qp_deltas: Option<Vec<QpDelta>>,
    qp_bases: Option<Vec<i64>>,
    ctu_size: Option<u32>,
    min_score: Option<f64>,
    codec: Option<String>,
    quality: Option<String>,
    anchor: Option<String>,
    classes: Option<Vec<String>>,
    class_map: Option<PathBuf>,
    iou_thresholds: Option<Vec<f64>>,
    uncompressed_quality: Option<f64>,
    curve_theta: Option<f64>,
    curve_delta: Option<QpDelta>,
    jobs: Option<usize>,
    detectors: Option<BTreeMap<String, PathBuf>>,
}

impl SweepConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base)
    }

    /// Parses config text; relative file references resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::parse("sweep config", e))?;
        let mut cfg = SweepConfig::default();
        if let Some(v) = raw.thetas {
            cfg.thetas = v;
        }
        if let Some(v) = raw.qp_deltas {
            cfg.qp_deltas = v;
        }
        if let Some(v) = raw.qp_bases {
            cfg.qp_bases = v
                .into_iter()
                .map(|q| {
                    u8::try_from(q)
                        .ok()
                        .filter(|&q| q <= MAX_QP)
                        .ok_or_else(|| Error::Range(format!("qp_base {q} outside [0, {MAX_QP}]")))
                })
                .collect::<Result<_>>()?;
        }
        if let Some(v) = raw.ctu_size {
            cfg.ctu_size = v;
        }
        if let Some(v) = raw.min_score {
            cfg.min_score = v;
        }
        if let Some(codec) = raw.codec {
            cfg.codec = match codec.as_str() {
                "mock" => Codec::Mock,
                other => match other.strip_prefix("template:") {
                    Some(p) => Codec::External(CommandTemplate::load(&base.join(p))?),
                    None => return Err(Error::Config(format!("unknown codec {other:?}"))),
                },
            };
        }
        if let Some(q) = raw.quality {
            cfg.quality = match q.as_str() {
                "mock" => QualitySource::Mock,
                other => match other.strip_prefix("external:") {
                    Some(p) => QualitySource::External(base.join(p)),
                    None => return Err(Error::Config(format!("unknown quality provider {other:?}"))),
                },
            };
        }
        if let Some(anchor) = raw.anchor {
            if anchor != "constant-qp" {
                return Err(Error::Config(format!("unsupported anchor {anchor:?}")));
            }
        }
        let classes = raw
            .classes
            .unwrap_or_else(|| CITYSCAPES_CLASSES.iter().map(|s| s.to_string()).collect());
        cfg.class_map = match (&raw.class_map, classes == CITYSCAPES_CLASSES) {
            (Some(p), _) => ClassMap::load(&base.join(p), &classes)?,
            (None, true) => ClassMap::cityscapes(),
            (None, false) => ClassMap::new(&classes),
        };
        if let Some(v) = raw.iou_thresholds {
            cfg.iou_thresholds = v;
        }
        cfg.uncompressed_quality = raw.uncompressed_quality;
        cfg.curve_theta = raw.curve_theta;
        cfg.curve_delta = raw.curve_delta;
        cfg.jobs = raw.jobs;
        if let Some(dets) = raw.detectors {
            cfg.detectors = dets
                .into_iter()
                .map(|(name, path)| DetectorSource { name, path })
                .collect();
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.thetas.is_empty() || self.qp_deltas.is_empty() || self.qp_bases.is_empty() {
            return Err(Error::Config("thetas, qp_deltas and qp_bases must be nonempty".into()));
        }
        if let Some(t) = self.thetas.iter().find(|t| !(0.0..1.0).contains(*t)) {
            return Err(Error::Range(format!("theta {t} not in [0, 1)")));
        }
        if let Some(q) = self.qp_bases.iter().find(|&&q| q > MAX_QP) {
            return Err(Error::Range(format!("qp_base {q} outside [0, {MAX_QP}]")));
        }
        if self.ctu_size == 0 {
            return Err(Error::Config("ctu_size must be positive".into()));
        }
        if self.iou_thresholds.is_empty() || self.iou_thresholds.iter().any(|t| !(0.0..=1.0).contains(t)) {
            return Err(Error::Config("iou_thresholds must be nonempty values in [0, 1]".into()));
        }
        for d in &self.detectors {
            if d.name.is_empty() || d.name == "anchor" || d.name.contains(['/', '\\']) || d.name.starts_with('.') {
                return Err(Error::Config(format!("invalid detector name {:?}", d.name)));
            }
        }
        if self.jobs == Some(0) {
            return Err(Error::Config("jobs must be at least 1".into()));
        }
        for (what, n) in [
            ("thetas", dedup_len_f64(&self.thetas)),
            ("qp_deltas", dedup_len(&self.qp_deltas)),
            ("qp_bases", dedup_len(&self.qp_bases)),
        ] {
            if n.0 != n.1 {
                return Err(Error::Config(format!("{what} contains duplicates")));
            }
        }
        Ok(())
    }
}

fn dedup_len<T: Ord + Clone>(v: &[T]) -> (usize, usize) {
    let mut s = v.to_vec();
    s.sort();
    s.dedup();
    (v.len(), s.len())
}

fn dedup_len_f64(v: &[f64]) -> (usize, usize) {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s.dedup();
    (v.len(), s.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_the_published_grid() {
        let cfg = SweepConfig::parse("", Path::new(".")).unwrap();
        assert_eq!(cfg.thetas, vec![0.0, 0.025, 0.05, 0.1]);
        assert_eq!(cfg.qp_bases, vec![12, 17, 22, 27]);
        assert_eq!(
            cfg.qp_deltas,
            vec![QpDelta::Offset(5), QpDelta::Offset(10), QpDelta::Offset(20), QpDelta::Max]
        );
        assert_eq!(cfg.ctu_size, 128);
        assert_eq!(cfg.codec, Codec::Mock);
        assert_eq!(cfg.quality, QualitySource::Mock);
    }

    #[test]
    fn full_config() {
        let text = r#"
            thetas = [0.0]
            qp_deltas = [0, "max"]
            qp_bases = [22, 27, 32, 37]
            ctu_size = 64
            quality = "external:preds"
            curve_delta = "max"
            jobs = 2
            [detectors]
            yolo = "detections/yolo"
        "#;
        let cfg = SweepConfig::parse(text, Path::new("/cfg")).unwrap();
        assert_eq!(cfg.qp_deltas, vec![QpDelta::Offset(0), QpDelta::Max]);
        assert_eq!(cfg.quality, QualitySource::External(PathBuf::from("/cfg/preds")));
        assert_eq!(cfg.detectors[0].name, "yolo");
        assert_eq!(cfg.curve_delta, Some(QpDelta::Max));
    }

    #[test]
    fn rejections() {
        let p = Path::new(".");
        assert!(SweepConfig::parse("thetas = [1.0]", p).is_err());
        assert!(SweepConfig::parse("qp_bases = [64]", p).is_err());
        assert!(SweepConfig::parse("qp_deltas = [-5]", p).is_err());
        assert!(SweepConfig::parse("bogus = 1", p).is_err());
        assert!(SweepConfig::parse("codec = \"x265\"", p).is_err());
        assert!(SweepConfig::parse("anchor = \"qpa\"", p).is_err());
        assert!(SweepConfig::parse("thetas = []", p).is_err());
        assert!(SweepConfig::parse("qp_bases = [22, 22]", p).is_err());
        assert!(SweepConfig::parse("[detectors]\nanchor = \"x\"", p).is_err());
    }
}
