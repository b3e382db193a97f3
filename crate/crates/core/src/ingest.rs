//! Detection and instance-set file parsing, detector-to-evaluation class
//! mapping and detection filtering.
//!
//! Both file kinds hold either one JSON object or an array of them; a
//! directory path loads every `*.json` file inside it in name order.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Rect;
use crate::metrics::{Instance, InstanceMask, InstanceSet};

pub const DETECTION_SCHEMA: &str = "vcm-det/1";
pub const INSTANCE_SCHEMA: &str = "vcm-inst/1";

/// Road-user classes of the default evaluation set.
pub const CITYSCAPES_CLASSES: [&str; 8] = [
    "bicycle",
    "bus",
    "car",
    "motorcycle",
    "person",
    "rider",
    "train",
    "truck",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub class_label: String,
    pub score: f64,
    pub bbox: Rect,
    pub mask: Option<InstanceMask>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageRecord {
    pub image_id: String,
    pub width: u32,
    pub height: u32,
    pub detections: Vec<Detection>,
}

impl ImageRecord {
    pub fn boxes(&self) -> Vec<Rect> {
        self.detections.iter().map(|d| d.bbox).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ClassTarget {
    Class(String),
    Ignore,
}

/// Maps detector labels onto a fixed evaluation class set.
///
/// Evaluation class names always map to themselves; labels without an entry
/// are dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassMap {
    eval_classes: Vec<String>,
    entries: BTreeMap<String, ClassTarget>,
}

impl ClassMap {
    /// Identity map over `eval_classes`.
    pub fn new<S: AsRef<str>>(eval_classes: &[S]) -> Self {
        let eval_classes: Vec<String> = eval_classes.iter().map(|c| c.as_ref().to_string()).collect();
        let entries = eval_classes
            .iter()
            .map(|c| (c.clone(), ClassTarget::Class(c.clone())))
            .collect();
        ClassMap {
            eval_classes,
            entries,
        }
    }

    /// Cityscapes road-user classes, plus the darknet COCO spelling
    /// `motorbike`.
    pub fn cityscapes() -> Self {
        let mut map = Self::new(&CITYSCAPES_CLASSES);
        map.entries.insert(
            "motorbike".into(),
            ClassTarget::Class("motorcycle".into()),
        );
        map
    }

    /// Parses `detector_label evaluation_class` lines on top of the identity
    /// map. `#` starts a comment; `ignore` as target drops the label.
    pub fn parse<S: AsRef<str>>(text: &str, eval_classes: &[S]) -> Result<Self> {
        let mut map = Self::new(eval_classes);
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let [label, target] = fields[..] else {
                return Err(Error::parse(
                    format!("class map line {}", n + 1),
                    format!("expected two columns, got {:?}", line),
                ));
            };
            let target = if target == "ignore" {
                ClassTarget::Ignore
            } else if map.eval_classes.iter().any(|c| c == target) {
                ClassTarget::Class(target.to_string())
            } else {
                return Err(Error::Validation(format!(
                    "class map line {}: {target:?} is not an evaluation class",
                    n + 1
                )));
            };
            if map.eval_classes.iter().any(|c| c == label)
                && target != ClassTarget::Class(label.to_string())
            {
                return Err(Error::Validation(format!(
                    "class map line {}: evaluation class {label:?} must map to itself",
                    n + 1
                )));
            }
            map.entries.insert(label.to_string(), target);
        }
        Ok(map)
    }

    pub fn load<S: AsRef<str>>(path: &Path, eval_classes: &[S]) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, eval_classes)
    }

    pub fn eval_classes(&self) -> &[String] {
        &self.eval_classes
    }

    /// Evaluation class for `label`, or `None` if it is ignored or unknown.
    pub fn map(&self, label: &str) -> Option<&str> {
        match self.entries.get(label) {
            Some(ClassTarget::Class(c)) => Some(c),
            _ => None,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct DetectionFile {
    schema: String,
    image_id: String,
    width: u32,
    height: u32,
    detections: Vec<RawDetection>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawDetection {
    class: String,
    score: f64,
    bbox: [f64; 4],
}

#[derive(Debug, Serialize, Deserialize)]
struct InstanceFile {
    schema: String,
    image_id: String,
    width: u32,
    height: u32,
    instances: Vec<RawInstance>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RawInstance {
    id: u64,
    class: String,
    #[serde(default = "default_score")]
    score: f64,
    rle: Vec<u64>,
}

fn default_score() -> f64 {
    1.0
}

fn json_files(path: &Path) -> Result<Vec<PathBuf>> {
    if !path.is_dir() {
        return Ok(vec![path.to_path_buf()]);
    }
    let mut files = Vec::new();
    for entry in fs::read_dir(path).map_err(|e| Error::io(path, e))? {
        let p = entry.map_err(|e| Error::io(path, e))?.path();
        if p.extension().is_some_and(|e| e == "json") {
            files.push(p);
        }
    }
    files.sort();
    Ok(files)
}

/// Parses one file into its top-level objects, checking the schema tag.
fn read_objects<T: serde::de::DeserializeOwned>(path: &Path, schema: &'static str) -> Result<Vec<T>> {
    let ctx = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| {
        Error::parse(format!("{ctx}:{}:{}", e.line(), e.column()), e)
    })?;
    let items = match value {
        serde_json::Value::Array(items) => items,
        other => vec![other],
    };
    items
        .into_iter()
        .enumerate()
        .map(|(i, item)| {
            let found = item.get("schema").and_then(|s| s.as_str()).unwrap_or("");
            if found != schema {
                return Err(Error::Version {
                    found: found.to_string(),
                    expected: schema,
                });
            }
            serde_json::from_value(item).map_err(|e| Error::parse(format!("{ctx} object {i}"), e))
        })
        .collect()
}

/// Clips `[x, y, w, h]` to the image. `None` if nothing remains inside.
fn clip_box(bbox: [f64; 4], width: u32, height: u32) -> Option<Rect> {
    let [x, y, w, h] = bbox;
    let x0 = x.max(0.0);
    let y0 = y.max(0.0);
    let x1 = (x + w).min(width as f64);
    let y1 = (y + h).min(height as f64);
    if x1 <= x0 || y1 <= y0 {
        return None;
    }
    Some(Rect {
        x: x0,
        y: y0,
        w: x1 - x0,
        h: y1 - y0,
    })
}

fn parse_record(file: DetectionFile, ctx: &str) -> Result<ImageRecord> {
    if file.schema != DETECTION_SCHEMA {
        return Err(Error::Version {
            found: file.schema,
            expected: DETECTION_SCHEMA,
        });
    }
    let mut detections = Vec::with_capacity(file.detections.len());
    for (i, raw) in file.detections.into_iter().enumerate() {
        if !raw.bbox.iter().all(|v| v.is_finite()) || !raw.score.is_finite() {
            return Err(Error::parse(
                format!("{ctx} image {} detection {i}", file.image_id),
                "non-finite value",
            ));
        }
        if !(0.0..=1.0).contains(&raw.score) {
            return Err(Error::Range(format!(
                "{ctx} image {} detection {i}: score {} not in [0, 1]",
                file.image_id, raw.score
            )));
        }
        if raw.bbox[2] <= 0.0 || raw.bbox[3] <= 0.0 {
            return Err(Error::DegenerateDetection(format!(
                "{ctx} image {} detection {i}: bbox {:?}",
                file.image_id, raw.bbox
            )));
        }
        if let Some(bbox) = clip_box(raw.bbox, file.width, file.height) {
            detections.push(Detection {
                class_label: raw.class,
                score: raw.score,
                bbox,
                mask: None,
            });
        }
    }
    Ok(ImageRecord {
        image_id: file.image_id,
        width: file.width,
        height: file.height,
        detections,
    })
}

/// Maps classes and drops low-score or unmapped detections. Idempotent.
pub fn filter_detections(records: &[ImageRecord], class_map: &ClassMap, min_score: f64) -> Vec<ImageRecord> {
    records
        .iter()
        .map(|r| ImageRecord {
            image_id: r.image_id.clone(),
            width: r.width,
            height: r.height,
            detections: r
                .detections
                .iter()
                .filter(|d| d.score >= min_score)
                .filter_map(|d| {
                    class_map.map(&d.class_label).map(|c| Detection {
                        class_label: c.to_string(),
                        ..d.clone()
                    })
                })
                .collect(),
        })
        .collect()
}

/// Reads detection records without class or score filtering (boxes are
/// clipped to the image, fully outside boxes dropped).
pub fn read_detections(path: &Path) -> Result<Vec<ImageRecord>> {
    let mut records = Vec::new();
    for file in json_files(path)? {
        let ctx = file.display().to_string();
        for obj in read_objects::<DetectionFile>(&file, DETECTION_SCHEMA)? {
            records.push(parse_record(obj, &ctx)?);
        }
    }
    Ok(records)
}

/// Reads detection records and applies [`filter_detections`].
pub fn load_detections(path: &Path, class_map: &ClassMap, min_score: f64) -> Result<Vec<ImageRecord>> {
    Ok(filter_detections(&read_detections(path)?, class_map, min_score))
}

/// Reads instance sets (ground truth or predictions).
pub fn load_ground_truth(path: &Path) -> Result<Vec<InstanceSet>> {
    let mut sets = Vec::new();
    for file in json_files(path)? {
        let ctx = file.display().to_string();
        for obj in read_objects::<InstanceFile>(&file, INSTANCE_SCHEMA)? {
            let mut instances = Vec::with_capacity(obj.instances.len());
            let mut ids = HashSet::new();
            for raw in obj.instances {
                if !ids.insert(raw.id) {
                    return Err(Error::Integrity(format!(
                        "{ctx}: instance id {} appears twice in image {}",
                        raw.id, obj.image_id
                    )));
                }
                let mask = InstanceMask::from_rle(obj.width, obj.height, &raw.rle).map_err(|e| {
                    Error::Format(format!("{ctx} image {} instance {}: {e}", obj.image_id, raw.id))
                })?;
                if mask.pixel_count() == 0 {
                    return Err(Error::Format(format!(
                        "{ctx} image {} instance {}: empty mask",
                        obj.image_id, raw.id
                    )));
                }
                instances.push(Instance {
                    id: raw.id,
                    class: raw.class,
                    score: raw.score,
                    mask,
                });
            }
            sets.push(InstanceSet::new(obj.image_id, obj.width, obj.height, instances)?);
        }
    }
    Ok(sets)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::parse(path.display().to_string(), e))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Writes one detection record in the `vcm-det/1` schema.
pub fn write_detections(path: &Path, record: &ImageRecord) -> Result<()> {
    let file = DetectionFile {
        schema: DETECTION_SCHEMA.into(),
        image_id: record.image_id.clone(),
        width: record.width,
        height: record.height,
        detections: record
            .detections
            .iter()
            .map(|d| RawDetection {
                class: d.class_label.clone(),
                score: d.score,
                bbox: [d.bbox.x, d.bbox.y, d.bbox.w, d.bbox.h],
            })
            .collect(),
    };
    write_json(path, &file)
}

/// Writes one instance set in the `vcm-inst/1` schema.
pub fn write_instances(path: &Path, set: &InstanceSet) -> Result<()> {
    let file = InstanceFile {
        schema: INSTANCE_SCHEMA.into(),
        image_id: set.image_id.clone(),
        width: set.width,
        height: set.height,
        instances: set
            .instances
            .iter()
            .map(|i| RawInstance {
                id: i.id,
                class: i.class.clone(),
                score: i.score,
                rle: i.mask.runs().iter().map(|&r| r as u64).collect(),
            })
            .collect(),
    };
    write_json(path, &file)
}
