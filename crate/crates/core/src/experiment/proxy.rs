//! Hermetic stand-in for a segmenter run on decoded images.
//!
//! Each ground-truth instance "survives" coding to the degree its pixels
//! survive: a pixel with reconstruction error `e` contributes
//! `k / (k + e^2)`, and the predicted mask keeps that fraction of the GT
//! pixels (the ones with the smallest error, ties in raster order). Its IoU
//! with the GT instance therefore equals the survival fraction, and pixels
//! zeroed by a very coarse QP count as lost. Only useful for exercising the
//! harness; real numbers need predictions from an actual segmenter.

use crate::codec::Image;
use crate::error::{Error, Result};
use crate::metrics::{Instance, InstanceMask, InstanceSet};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegradedGtProxy {
    /// Squared error at which a pixel counts as half lost.
    pub half_survival_sq_error: f64,
}

impl Default for DegradedGtProxy {
    fn default() -> Self {
        DegradedGtProxy {
            half_survival_sq_error: 16.0,
        }
    }
}

impl DegradedGtProxy {
    /// Predicted instances for one image given its original and decoded luma.
    pub fn predict(&self, gt: &InstanceSet, original: &Image, decoded: &Image) -> Result<InstanceSet> {
        let dims = (gt.width, gt.height);
        if (original.width(), original.height()) != dims || (decoded.width(), decoded.height()) != dims {
            return Err(Error::Dimension(format!(
                "image {}: GT is {}x{}, original {}x{}, decoded {}x{}",
                gt.image_id,
                gt.width,
                gt.height,
                original.width(),
                original.height(),
                decoded.width(),
                decoded.height()
            )));
        }
        let k = self.half_survival_sq_error;
        let (orig, dec) = (original.luma(), decoded.luma());
        let mut preds = Vec::with_capacity(gt.instances.len());
        for inst in &gt.instances {
            let mut errs: Vec<(u32, usize)> = inst
                .mask
                .foreground()
                .map(|i| {
                    let e = orig[i] as i32 - dec[i] as i32;
                    ((e * e) as u32, i)
                })
                .collect();
            let survival = errs.iter().map(|&(e2, _)| k / (k + e2 as f64)).sum::<f64>() / errs.len() as f64;
            let keep = (survival * errs.len() as f64).round() as usize;
            if keep == 0 {
                continue;
            }
            errs.sort_unstable();
            let mut kept: Vec<usize> = errs[..keep].iter().map(|&(_, i)| i).collect();
            kept.sort_unstable();
            preds.push(Instance {
                id: inst.id,
                class: inst.class.clone(),
                score: survival.clamp(0.0, 1.0),
                mask: InstanceMask::from_indices(gt.width, gt.height, &kept)?,
            });
        }
        InstanceSet::new(gt.image_id.clone(), gt.width, gt.height, preds)
    }
}
