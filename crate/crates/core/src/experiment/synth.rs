//! Seeded synthetic corpora for tests and smoke runs.
//!
//! Images are textured gradients with a few textured elliptical objects.
//! Ground truth holds the ellipse masks; two detectors are emitted:
//! `tight` (near-exact boxes, plus an out-of-vocabulary label that the class
//! map drops) and `loose` (inflated boxes, one missed object when there are
//! three, one low-score false positive).

use std::fs;
use std::path::Path;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::codec::{write_pgm, Image};
use crate::error::{Error, Result};
use crate::geometry::Rect;
use crate::ingest::{write_detections, write_instances, Detection, ImageRecord};
use crate::metrics::{Instance, InstanceMask, InstanceSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthOptions {
    pub images: usize,
    pub width: u32,
    pub height: u32,
    pub seed: u64,
}

impl Default for SynthOptions {
    fn default() -> Self {
        SynthOptions {
            images: 4,
            width: 512,
            height: 384,
            seed: 7,
        }
    }
}

const CLASSES: [&str; 5] = ["car", "person", "bicycle", "truck", "motorcycle"];

struct Object {
    class: &'static str,
    x: u32,
    y: u32,
    w: u32,
    h: u32,
}

impl Object {
    fn inside(&self, px: u32, py: u32) -> bool {
        let cx = self.x as f64 + self.w as f64 / 2.0;
        let cy = self.y as f64 + self.h as f64 / 2.0;
        let dx = (px as f64 + 0.5 - cx) / (self.w as f64 / 2.0);
        let dy = (py as f64 + 0.5 - cy) / (self.h as f64 / 2.0);
        dx * dx + dy * dy <= 1.0
    }

    fn overlaps(&self, o: &Object, margin: u32) -> bool {
        self.x < o.x + o.w + margin && o.x < self.x + self.w + margin && self.y < o.y + o.h + margin && o.y < self.y + self.h + margin
    }

    fn rect(&self) -> Rect {
        Rect::new(self.x as f64, self.y as f64, self.w as f64, self.h as f64).expect("finite box")
    }
}

fn place_objects(rng: &mut ChaCha8Rng, width: u32, height: u32) -> Vec<Object> {
    let target = rng.random_range(2..=3usize);
    let max_side = (width.min(height) / 3).max(8);
    let min_side = (max_side / 2).max(4);
    let mut objects: Vec<Object> = Vec::new();
    for _ in 0..200 {
        if objects.len() == target {
            break;
        }
        let w = rng.random_range(min_side..=max_side);
        let h = rng.random_range(min_side..=max_side);
        let obj = Object {
            class: CLASSES[rng.random_range(0..CLASSES.len())],
            x: rng.random_range(0..=width - w),
            y: rng.random_range(0..=height - h),
            w,
            h,
        };
        if objects.iter().all(|o| !o.overlaps(&obj, 4)) {
            objects.push(obj);
        }
    }
    objects
}

fn clipped(x0: f64, y0: f64, x1: f64, y1: f64, width: u32, height: u32) -> Rect {
    let x0 = x0.clamp(0.0, width as f64 - 1.0);
    let y0 = y0.clamp(0.0, height as f64 - 1.0);
    let x1 = x1.clamp(x0 + 1.0, width as f64);
    let y1 = y1.clamp(y0 + 1.0, height as f64);
    Rect::new(x0, y0, x1 - x0, y1 - y0).expect("finite box")
}

fn detector_label(class: &str) -> String {
    // darknet spelling, mapped back by the default class map
    if class == "motorcycle" { "motorbike".into() } else { class.into() }
}

/// Writes `images/`, `gt/` and `detections/{tight,loose}/` under `dir`.
/// Returns the image ids.
pub fn write_synthetic_corpus(dir: &Path, opts: &SynthOptions) -> Result<Vec<String>> {
    if opts.width < 32 || opts.height < 32 || opts.images == 0 {
        return Err(Error::Config("synthetic corpus needs at least one image of 32x32 or more".into()));
    }
    for sub in ["images", "gt", "detections/tight", "detections/loose"] {
        let p = dir.join(sub);
        fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
    }
    let (w, h) = (opts.width, opts.height);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut ids = Vec::with_capacity(opts.images);

    for i in 0..opts.images {
        let id = format!("img{i:03}");
        let objects = place_objects(&mut rng, w, h);

        let mut luma = Vec::with_capacity((w * h) as usize);
        for y in 0..h {
            for x in 0..w {
                let base = 60.0 + 80.0 * x as f64 / w as f64 + 40.0 * y as f64 / h as f64;
                let v = base + rng.random_range(-24.0..24.0);
                luma.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
        let mut instances = Vec::new();
        for (n, obj) in objects.iter().enumerate() {
            let fill = rng.random_range(90.0..200.0);
            let mut on = Vec::new();
            for y in obj.y..obj.y + obj.h {
                for x in obj.x..obj.x + obj.w {
                    if obj.inside(x, y) {
                        let idx = (y * w + x) as usize;
                        luma[idx] = (fill + rng.random_range(-45.0..45.0f64)).round().clamp(0.0, 255.0) as u8;
                        on.push(idx);
                    }
                }
            }
            instances.push(Instance {
                id: n as u64 + 1,
                class: obj.class.to_string(),
                score: 1.0,
                mask: InstanceMask::from_indices(w, h, &on)?,
            });
        }
        let image = Image::gray(w, h, luma)?;
        write_pgm(&image, &dir.join("images").join(format!("{id}.pgm")))?;
        write_instances(&dir.join("gt").join(format!("{id}.json")), &InstanceSet::new(id.clone(), w, h, instances)?)?;

        let mut tight = Vec::new();
        for obj in &objects {
            let j = |rng: &mut ChaCha8Rng| rng.random_range(-3.0..=3.0f64);
            let r = obj.rect();
            tight.push(Detection {
                class_label: detector_label(obj.class),
                score: rng.random_range(0.5..0.99),
                bbox: clipped(r.x + j(&mut rng), r.y + j(&mut rng), r.right() + j(&mut rng), r.bottom() + j(&mut rng), w, h),
                mask: None,
            });
        }
        let side = (w.min(h) / 8).max(4) as f64;
        let (dx, dy) = (rng.random_range(0.0..w as f64 - side), rng.random_range(0.0..h as f64 - side));
        tight.push(Detection {
            class_label: "dog".into(),
            score: 0.9,
            bbox: clipped(dx, dy, dx + side, dy + side, w, h),
            mask: None,
        });

        let mut loose = Vec::new();
        let kept = if objects.len() >= 3 { objects.len() - 1 } else { objects.len() };
        for obj in &objects[..kept] {
            let r = obj.rect();
            let (mx, my) = (0.15 * r.w, 0.15 * r.h);
            loose.push(Detection {
                class_label: detector_label(obj.class),
                score: rng.random_range(0.4..0.9),
                bbox: clipped(r.x - mx, r.y - my, r.right() + mx, r.bottom() + my, w, h),
                mask: None,
            });
        }
        let (fx, fy) = (rng.random_range(0.0..w as f64 - side), rng.random_range(0.0..h as f64 - side));
        loose.push(Detection {
            class_label: "car".into(),
            score: 0.3,
            bbox: clipped(fx, fy, fx + side, fy + side, w, h),
            mask: None,
        });

        for (name, detections) in [("tight", tight), ("loose", loose)] {
            let record = ImageRecord {
                image_id: id.clone(),
                width: w,
                height: h,
                detections,
            };
            write_detections(&dir.join("detections").join(name).join(format!("{id}.json")), &record)?;
        }
        ids.push(id);
    }
    Ok(ids)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{load_detections, load_ground_truth, ClassMap};

    #[test]
    fn deterministic_and_loadable() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let opts = SynthOptions {
            images: 2,
            width: 200,
            height: 150,
            seed: 3,
        };
        let ids = write_synthetic_corpus(a.path(), &opts).unwrap();
        write_synthetic_corpus(b.path(), &opts).unwrap();
        for id in &ids {
            for sub in ["images", "gt", "detections/tight", "detections/loose"] {
                let ext = if sub == "images" { "pgm" } else { "json" };
                let f = format!("{sub}/{id}.{ext}");
                assert_eq!(fs::read(a.path().join(&f)).unwrap(), fs::read(b.path().join(&f)).unwrap());
            }
        }
        let gt = load_ground_truth(&a.path().join("gt")).unwrap();
        assert_eq!(gt.len(), 2);
        assert!(gt.iter().all(|s| s.instances.len() >= 2));
        let dets = load_detections(&a.path().join("detections/tight"), &ClassMap::cityscapes(), 0.0).unwrap();
        // the out-of-vocabulary label is gone, every object is still there
        for (d, g) in dets.iter().zip(&gt) {
            assert_eq!(d.detections.len(), g.instances.len());
        }
    }
}
