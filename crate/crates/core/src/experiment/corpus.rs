//! Corpus directory layout:
//!
//! ```text
//! <corpus>/images/<image_id>.pgm
//! <corpus>/gt/*.json                    vcm-inst/1, one or more sets per file
//! <corpus>/detections/<detector>/*.json vcm-det/1
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use super::config::{DetectorSource, SweepConfig};
use crate::codec::{read_pgm, Image};
use crate::error::{Error, Result};
use crate::ingest::{load_detections, load_ground_truth, ImageRecord};
use crate::metrics::InstanceSet;

#[derive(Debug, Clone)]
pub struct CorpusImage {
    pub id: String,
    pub image: Image,
    pub ground_truth: InstanceSet,
    /// One filtered record per detector, in detector order.
    pub detections: Vec<ImageRecord>,
}

#[derive(Debug, Clone)]
pub struct Corpus {
    pub detectors: Vec<String>,
    /// Sorted by image id.
    pub images: Vec<CorpusImage>,
}

/// Detector sources from the config, or every subdirectory of
/// `<corpus>/detections` when none are configured.
pub fn detector_sources(corpus: &Path, cfg: &SweepConfig) -> Result<Vec<DetectorSource>> {
    if !cfg.detectors.is_empty() {
        return Ok(cfg
            .detectors
            .iter()
            .map(|d| DetectorSource {
                name: d.name.clone(),
                path: corpus.join(&d.path),
            })
            .collect());
    }
    let dir = corpus.join("detections");
    let mut found = Vec::new();
    for entry in fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))? {
        let entry = entry.map_err(|e| Error::io(&dir, e))?;
        if entry.path().is_dir() {
            let name = entry.file_name().to_string_lossy().into_owned();
            if !name.starts_with('.') {
                found.push(DetectorSource { name, path: entry.path() });
            }
        }
    }
    found.sort_by(|a, b| a.name.cmp(&b.name));
    if found.is_empty() {
        return Err(Error::Config(format!("no detector directories in {}", dir.display())));
    }
    Ok(found)
}

fn by_id<T>(items: Vec<T>, id: impl Fn(&T) -> &str, what: &str) -> Result<BTreeMap<String, T>> {
    let mut map = BTreeMap::new();
    for item in items {
        let key = id(&item).to_string();
        if map.insert(key.clone(), item).is_some() {
            return Err(Error::Integrity(format!("{what}: image {key} appears twice")));
        }
    }
    Ok(map)
}

impl Corpus {
    pub fn load(dir: &Path, cfg: &SweepConfig) -> Result<Self> {
        let img_dir = dir.join("images");
        let mut images = BTreeMap::new();
        for entry in fs::read_dir(&img_dir).map_err(|e| Error::io(&img_dir, e))? {
            let path = entry.map_err(|e| Error::io(&img_dir, e))?.path();
            if path.extension().is_some_and(|e| e == "pgm") {
                let id = path.file_stem().unwrap_or_default().to_string_lossy().into_owned();
                images.insert(id, read_pgm(&path)?);
            }
        }
        if images.is_empty() {
            return Err(Error::Validation(format!("no .pgm images in {}", img_dir.display())));
        }

        let mut gt = by_id(load_ground_truth(&dir.join("gt"))?, |s| &s.image_id, "ground truth")?;
        let sources = detector_sources(dir, cfg)?;
        let mut dets = Vec::with_capacity(sources.len());
        for src in &sources {
            let records = load_detections(&src.path, &cfg.class_map, cfg.min_score)?;
            dets.push(by_id(records, |r| &r.image_id, &src.name)?);
        }

        let check_extra = |ids: Vec<&String>, what: &str| match ids.into_iter().find(|id| !images.contains_key(*id)) {
            Some(id) => Err(Error::Validation(format!("{what} has image {id} which is not in the corpus"))),
            None => Ok(()),
        };
        check_extra(gt.keys().collect(), "ground truth")?;
        for (src, d) in sources.iter().zip(&dets) {
            check_extra(d.keys().collect(), &format!("detector {}", src.name))?;
        }

        let mut out = Vec::with_capacity(images.len());
        for (id, image) in images {
            let dims = (image.width(), image.height());
            let ground_truth = gt
                .remove(&id)
                .ok_or_else(|| Error::Validation(format!("image {id} has no ground truth")))?;
            if (ground_truth.width, ground_truth.height) != dims {
                return Err(Error::Dimension(format!(
                    "image {id} is {}x{} but its ground truth is {}x{}",
                    dims.0, dims.1, ground_truth.width, ground_truth.height
                )));
            }
            let mut detections = Vec::with_capacity(dets.len());
            for (src, d) in sources.iter().zip(dets.iter_mut()) {
                let rec = d.remove(&id).ok_or_else(|| {
                    Error::Validation(format!("detector {} has no record for image {id}", src.name))
                })?;
                if (rec.width, rec.height) != dims {
                    return Err(Error::Dimension(format!(
                        "image {id} is {}x{} but detector {} says {}x{}",
                        dims.0, dims.1, src.name, rec.width, rec.height
                    )));
                }
                detections.push(rec);
            }
            out.push(CorpusImage {
                id,
                image,
                ground_truth,
                detections,
            });
        }
        Ok(Corpus {
            detectors: sources.into_iter().map(|s| s.name).collect(),
            images: out,
        })
    }
}
