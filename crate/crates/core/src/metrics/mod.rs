//! Pixel-accurate instance segmentation AP and the instance-count weighted AP
//! used as the quality axis of rate-accuracy curves.

mod ap;
mod mask;

use std::collections::HashSet;

pub use ap::{class_ap, default_iou_thresholds, weighted_ap, ApReport};
pub use mask::{mask_iou, InstanceMask};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub id: u64,
    pub class: String,
    pub score: f64,
    pub mask: InstanceMask,
}

/// Instances (ground truth or predictions) of one image.
#[derive(Debug, Clone, PartialEq)]
pub struct InstanceSet {
    pub image_id: String,
    pub width: u32,
    pub height: u32,
    pub instances: Vec<Instance>,
}

impl InstanceSet {
    /// Validates unique ids, scores in `[0, 1]` and mask dimensions.
    pub fn new(
        image_id: impl Into<String>,
        width: u32,
        height: u32,
        instances: Vec<Instance>,
    ) -> Result<Self> {
        let image_id = image_id.into();
        let mut ids = HashSet::new();
        for inst in &instances {
            if !ids.insert(inst.id) {
                return Err(Error::Integrity(format!(
                    "instance id {} appears twice in image {image_id}",
                    inst.id
                )));
            }
            if !(0.0..=1.0).contains(&inst.score) {
                return Err(Error::Range(format!(
                    "instance {} score {} not in [0, 1]",
                    inst.id, inst.score
                )));
            }
            if (inst.mask.width(), inst.mask.height()) != (width, height) {
                return Err(Error::Dimension(format!(
                    "instance {} mask is {}x{}, image {image_id} is {width}x{height}",
                    inst.id,
                    inst.mask.width(),
                    inst.mask.height()
                )));
            }
        }
        Ok(InstanceSet {
            image_id,
            width,
            height,
            instances,
        })
    }

    pub fn empty(image_id: impl Into<String>, width: u32, height: u32) -> Self {
        InstanceSet {
            image_id: image_id.into(),
            width,
            height,
            instances: Vec::new(),
        }
    }
}
