use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::mask::mask_iou;
use super::{Instance, InstanceSet};
use crate::error::{Error, Result};

/// IoU thresholds 0.50, 0.55, ..., 0.95.
pub fn default_iou_thresholds() -> Vec<f64> {
    (0..10).map(|i| (50 + 5 * i) as f64 / 100.0).collect()
}

/// Per-class AP, GT instance counts and the count-weighted mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApReport {
    /// Only classes with at least one GT instance appear here.
    pub per_class_ap: BTreeMap<String, f64>,
    pub per_class_count: BTreeMap<String, u64>,
    pub weighted_ap: f64,
}

impl ApReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("class,gt_count,ap\n");
        let mut total = 0;
        for (class, &count) in &self.per_class_count {
            total += count;
            match self.per_class_ap.get(class) {
                Some(ap) => out.push_str(&format!("{class},{count},{ap}\n")),
                None => out.push_str(&format!("{class},{count},\n")),
            }
        }
        out.push_str(&format!("weighted,{total},{}\n", self.weighted_ap));
        out
    }
}

struct ImageCandidates<'a> {
    gts: Vec<&'a Instance>,
    /// iou[p][g] between the p-th class prediction and g-th class GT.
    iou: Vec<Vec<f64>>,
}

/// Pairs each GT set with its predictions (missing predictions mean none).
fn align<'a>(
    preds: &'a [InstanceSet],
    gts: &'a [InstanceSet],
) -> Result<Vec<(&'a InstanceSet, Option<&'a InstanceSet>)>> {
    let mut by_id: HashMap<&str, &InstanceSet> = HashMap::new();
    for p in preds {
        if by_id.insert(p.image_id.as_str(), p).is_some() {
            return Err(Error::Integrity(format!(
                "duplicate prediction set for image {}",
                p.image_id
            )));
        }
    }
    let mut seen = 0;
    let mut pairs = Vec::with_capacity(gts.len());
    for g in gts {
        let p = by_id.get(g.image_id.as_str()).copied();
        if p.is_some() {
            seen += 1;
        }
        pairs.push((g, p));
    }
    if seen != by_id.len() {
        let gt_ids: std::collections::HashSet<&str> =
            gts.iter().map(|g| g.image_id.as_str()).collect();
        let stray: Vec<&str> = by_id
            .keys()
            .copied()
            .filter(|id| !gt_ids.contains(id))
            .collect();
        return Err(Error::Validation(format!(
            "predictions for images without ground truth: {stray:?}"
        )));
    }
    Ok(pairs)
}

/// Average precision for one class, averaged over `iou_thresholds`.
///
/// Predictions are ranked by descending score across all images (stable for
/// ties) and greedily matched to the highest-IoU unmatched GT of the same
/// image. The PR curve is integrated exactly after taking the monotone
/// precision envelope. Returns `None` when the class has no GT instances.
pub fn class_ap(
    preds: &[InstanceSet],
    gts: &[InstanceSet],
    class: &str,
    iou_thresholds: &[f64],
) -> Result<Option<f64>> {
    if iou_thresholds.is_empty() {
        return Err(Error::Validation("no IoU thresholds given".into()));
    }
    let pairs = align(preds, gts)?;

    let mut images = Vec::with_capacity(pairs.len());
    // (score, image, prediction index within image)
    let mut ranked: Vec<(f64, usize, usize)> = Vec::new();
    let mut n_gt = 0usize;
    for (img_idx, (gt_set, pred_set)) in pairs.iter().enumerate() {
        let class_gts: Vec<&Instance> = gt_set.instances.iter().filter(|i| i.class == class).collect();
        n_gt += class_gts.len();
        let class_preds: Vec<&Instance> = pred_set
            .map(|p| p.instances.iter().filter(|i| i.class == class).collect())
            .unwrap_or_default();
        let mut iou = Vec::with_capacity(class_preds.len());
        for (p_idx, p) in class_preds.iter().enumerate() {
            let row = class_gts
                .iter()
                .map(|g| mask_iou(&p.mask, &g.mask))
                .collect::<Result<Vec<_>>>()?;
            iou.push(row);
            ranked.push((p.score, img_idx, p_idx));
        }
        images.push(ImageCandidates {
            gts: class_gts,
            iou,
        });
    }
    if n_gt == 0 {
        return Ok(None);
    }
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut sum = 0.0;
    for &t in iou_thresholds {
        let mut matched: Vec<Vec<bool>> = images.iter().map(|im| vec![false; im.gts.len()]).collect();
        let mut hits = Vec::with_capacity(ranked.len());
        for &(_, img, p) in &ranked {
            let row = &images[img].iou[p];
            let mut best: Option<(usize, f64)> = None;
            for (g, &v) in row.iter().enumerate() {
                if matched[img][g] || v < t {
                    continue;
                }
                if best.is_none_or(|(_, bv)| v > bv) {
                    best = Some((g, v));
                }
            }
            if let Some((g, _)) = best {
                matched[img][g] = true;
                hits.push(true);
            } else {
                hits.push(false);
            }
        }
        sum += area_under_pr(&hits, n_gt);
    }
    Ok(Some(sum / iou_thresholds.len() as f64))
}

/// Exact area under the precision envelope for a ranked TP/FP sequence.
fn area_under_pr(hits: &[bool], n_gt: usize) -> f64 {
    let mut precision = Vec::with_capacity(hits.len());
    let mut recall = Vec::with_capacity(hits.len());
    let mut tp = 0usize;
    for (i, &hit) in hits.iter().enumerate() {
        if hit {
            tp += 1;
        }
        precision.push(tp as f64 / (i + 1) as f64);
        recall.push(tp as f64 / n_gt as f64);
    }
    for i in (0..precision.len().saturating_sub(1)).rev() {
        if precision[i + 1] > precision[i] {
            precision[i] = precision[i + 1];
        }
    }
    let mut ap = 0.0;
    let mut prev_recall = 0.0;
    for (p, r) in precision.iter().zip(&recall) {
        ap += (r - prev_recall) * p;
        prev_recall = *r;
    }
    ap
}

/// Instance-count weighted AP over `classes`.
///
/// Classes without GT instances are left out of both numerator and
/// denominator. Fails when no requested class has any GT instance.
pub fn weighted_ap(
    preds: &[InstanceSet],
    gts: &[InstanceSet],
    classes: &[String],
    iou_thresholds: &[f64],
) -> Result<ApReport> {
    let mut per_class_ap = BTreeMap::new();
    let mut per_class_count = BTreeMap::new();
    for class in classes {
        let count = gts
            .iter()
            .flat_map(|g| &g.instances)
            .filter(|i| &i.class == class)
            .count() as u64;
        per_class_count.insert(class.clone(), count);
        if let Some(ap) = class_ap(preds, gts, class, iou_thresholds)? {
            per_class_ap.insert(class.clone(), ap);
        }
    }
    let mut num = 0.0;
    let mut den = 0u64;
    for (class, ap) in &per_class_ap {
        let n = per_class_count[class];
        num += n as f64 * ap;
        den += n;
    }
    if den == 0 {
        return Err(Error::UndefinedAp(format!(
            "no ground-truth instances for any of {classes:?}"
        )));
    }
    Ok(ApReport {
        per_class_ap,
        per_class_count,
        weighted_ap: num / den as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::InstanceMask;

    fn inst(id: u64, class: &str, score: f64, on: &[usize]) -> Instance {
        Instance {
            id,
            class: class.into(),
            score,
            mask: InstanceMask::from_indices(4, 4, on).unwrap(),
        }
    }

    fn set(id: &str, instances: Vec<Instance>) -> InstanceSet {
        InstanceSet::new(id, 4, 4, instances).unwrap()
    }

    #[test]
    fn pr_area_examples() {
        assert_eq!(area_under_pr(&[true, false], 1), 1.0);
        assert_eq!(area_under_pr(&[false, true], 1), 0.5);
        assert_eq!(area_under_pr(&[], 3), 0.0);
        // envelope lifts the 1/2 after the miss to 2/3
        let ap = area_under_pr(&[true, false, true], 2);
        assert!((ap - (0.5 + 0.5 * 2.0 / 3.0)).abs() < 1e-15);
    }

    #[test]
    fn ordering_example() {
        let gt = vec![set("a", vec![inst(1, "car", 1.0, &[0, 1, 2, 3])])];
        let good = |s| inst(10, "car", s, &[0, 1, 2, 3]);
        let bad = |s| inst(11, "car", s, &[12, 13]);
        let th = [0.5];
        let p1 = vec![set("a", vec![good(0.9), bad(0.8)])];
        assert_eq!(class_ap(&p1, &gt, "car", &th).unwrap(), Some(1.0));
        let p2 = vec![set("a", vec![good(0.8), bad(0.9)])];
        assert_eq!(class_ap(&p2, &gt, "car", &th).unwrap(), Some(0.5));
    }

    #[test]
    fn no_predictions_and_no_gt() {
        let gt = vec![set("a", vec![inst(1, "car", 1.0, &[0])])];
        assert_eq!(class_ap(&[], &gt, "car", &[0.5]).unwrap(), Some(0.0));
        assert_eq!(class_ap(&[], &gt, "bus", &[0.5]).unwrap(), None);
    }

    #[test]
    fn stray_prediction_image_is_rejected() {
        let gt = vec![set("a", vec![])];
        let pr = vec![set("b", vec![])];
        assert!(matches!(class_ap(&pr, &gt, "car", &[0.5]), Err(Error::Validation(_))));
    }

    #[test]
    fn predictions_never_cross_images() {
        let gt = vec![
            set("a", vec![inst(1, "car", 1.0, &[0, 1])]),
            set("b", vec![]),
        ];
        let pr = vec![set("b", vec![inst(1, "car", 0.9, &[0, 1])])];
        assert_eq!(class_ap(&pr, &gt, "car", &[0.5]).unwrap(), Some(0.0));
    }

    #[test]
    fn threshold_averaging() {
        // IoU 2/3 passes 0.50..0.65 (4 of 10 thresholds)
        let gt = vec![set("a", vec![inst(1, "car", 1.0, &[0, 1, 2])])];
        let pr = vec![set("a", vec![inst(1, "car", 0.5, &[0, 1])])];
        let ap = class_ap(&pr, &gt, "car", &default_iou_thresholds()).unwrap().unwrap();
        assert!((ap - 0.4).abs() < 1e-12);
    }

    #[test]
    fn weighted_examples() {
        let gt_insts: Vec<Instance> = (0..9)
            .map(|i| inst(i, "car", 1.0, &[i as usize]))
            .chain(std::iter::once(inst(9, "bus", 1.0, &[15])))
            .collect();
        let pred_insts: Vec<Instance> = (0..9).map(|i| inst(i, "car", 1.0, &[i as usize])).collect();
        let gt = vec![set("a", gt_insts)];
        let pr = vec![set("a", pred_insts)];
        let classes: Vec<String> = ["car", "bus", "truck"].iter().map(|s| s.to_string()).collect();
        let rep = weighted_ap(&pr, &gt, &classes, &[0.5]).unwrap();
        assert_eq!(rep.per_class_ap["car"], 1.0);
        assert_eq!(rep.per_class_ap["bus"], 0.0);
        assert!(!rep.per_class_ap.contains_key("truck"));
        assert_eq!(rep.per_class_count["truck"], 0);
        assert!((rep.weighted_ap - 0.9).abs() < 1e-15);
        let csv = rep.to_csv();
        assert!(csv.contains("truck,0,\n"));
        assert!(csv.ends_with("weighted,10,0.9\n"));

        let err = weighted_ap(&pr, &gt, &["truck".to_string()], &[0.5]);
        assert!(matches!(err, Err(Error::UndefinedAp(_))));
    }
}
