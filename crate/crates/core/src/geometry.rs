//! CTU tiling, rectangle overlap and the per-CTU saliency decision.
//!
//! A frame is tiled into square coding tree units (CTUs) in row-major order,
//! with the right and bottom border CTUs clipped to the image. A CTU is marked
//! salient when some detection covers a large enough share of the smaller of
//! the two rectangles (the CTU or the detection box).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default CTU edge length in pixels.
pub const DEFAULT_CTU_SIZE: u32 = 128;

/// Axis-aligned rectangle in pixel coordinates. `(x, y)` is the top-left corner.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
}

impl Rect {
    pub fn new(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        let rect = Rect { x, y, w, h };
        if ![x, y, w, h].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidRect(format!("{rect:?} has non-finite fields")));
        }
        if x < 0.0 || y < 0.0 || w < 0.0 || h < 0.0 {
            return Err(Error::InvalidRect(format!("{rect:?} has negative fields")));
        }
        Ok(rect)
    }

    #[inline]
    pub fn right(&self) -> f64 {
        self.x + self.w
    }

    #[inline]
    pub fn bottom(&self) -> f64 {
        self.y + self.h
    }

    #[inline]
    pub fn area(&self) -> f64 {
        self.w * self.h
    }

    /// Intersection rectangle, `None` when the interiors are disjoint.
    pub fn intersection(&self, other: &Rect) -> Option<Rect> {
        let x0 = self.x.max(other.x);
        let y0 = self.y.max(other.y);
        let x1 = self.right().min(other.right());
        let y1 = self.bottom().min(other.bottom());
        if x1 > x0 && y1 > y0 {
            Some(Rect {
                x: x0,
                y: y0,
                w: x1 - x0,
                h: y1 - y0,
            })
        } else {
            None
        }
    }

    /// True if `other` lies entirely inside `self` (boundaries may coincide).
    pub fn contains(&self, other: &Rect) -> bool {
        other.x >= self.x
            && other.y >= self.y
            && other.right() <= self.right()
            && other.bottom() <= self.bottom()
    }
}

/// Area of the intersection of two rectangles. Edge-touching rectangles have
/// zero overlap. Exact for integer-valued inputs.
pub fn overlap_area(a: &Rect, b: &Rect) -> f64 {
    let w = a.right().min(b.right()) - a.x.max(b.x);
    let h = a.bottom().min(b.bottom()) - a.y.max(b.y);
    if w > 0.0 && h > 0.0 {
        w * h
    } else {
        0.0
    }
}

/// Overlap normalised by the smaller of the two areas, in `[0, 1]`.
///
/// Equals 1 exactly when the smaller rectangle is contained in the larger one
/// and 0 when they do not overlap.
pub fn relative_overlap(ctu: &Rect, det: &Rect) -> Result<f64> {
    let det_area = det.area();
    if det_area <= 0.0 {
        return Err(Error::DegenerateDetection(format!("{det:?}")));
    }
    let ctu_area = ctu.area();
    if ctu_area <= 0.0 {
        return Err(Error::InvalidRect(format!("CTU {ctu:?} has zero area")));
    }
    let d = overlap_area(ctu, det) / ctu_area.min(det_area);
    // overlap <= min(areas) holds exactly in real arithmetic; guard rounding.
    Ok(d.min(1.0))
}

/// Row-major tiling of an image into CTUs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CtuGrid {
    image_width: u32,
    image_height: u32,
    ctu_size: u32,
    cols: u32,
    rows: u32,
}

impl CtuGrid {
    pub fn new(image_width: u32, image_height: u32, ctu_size: u32) -> Result<Self> {
        if image_width == 0 || image_height == 0 {
            return Err(Error::Range(format!(
                "image dimensions must be positive, got {image_width}x{image_height}"
            )));
        }
        if ctu_size == 0 {
            return Err(Error::Range("ctu_size must be positive".into()));
        }
        Ok(CtuGrid {
            image_width,
            image_height,
            ctu_size,
            cols: image_width.div_ceil(ctu_size),
            rows: image_height.div_ceil(ctu_size),
        })
    }

    pub fn image_width(&self) -> u32 {
        self.image_width
    }

    pub fn image_height(&self) -> u32 {
        self.image_height
    }

    pub fn ctu_size(&self) -> u32 {
        self.ctu_size
    }

    pub fn cols(&self) -> u32 {
        self.cols
    }

    pub fn rows(&self) -> u32 {
        self.rows
    }

    /// Number of CTUs in the grid.
    pub fn len(&self) -> usize {
        self.cols as usize * self.rows as usize
    }

    /// Always false; a grid holds at least one CTU.
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Integer pixel bounds `(x0, y0, x1, y1)` (exclusive end) of CTU `k`.
    pub fn ctu_bounds(&self, k: usize) -> Result<(u32, u32, u32, u32)> {
        if k >= self.len() {
            return Err(Error::Index {
                index: k,
                len: self.len(),
            });
        }
        let col = (k % self.cols as usize) as u32;
        let row = (k / self.cols as usize) as u32;
        let x0 = col * self.ctu_size;
        let y0 = row * self.ctu_size;
        let x1 = (x0 + self.ctu_size).min(self.image_width);
        let y1 = (y0 + self.ctu_size).min(self.image_height);
        Ok((x0, y0, x1, y1))
    }

    /// The `k`-th CTU rectangle, clipped to the image.
    pub fn ctu_rect(&self, k: usize) -> Result<Rect> {
        let (x0, y0, x1, y1) = self.ctu_bounds(k)?;
        Ok(Rect {
            x: x0 as f64,
            y: y0 as f64,
            w: (x1 - x0) as f64,
            h: (y1 - y0) as f64,
        })
    }

    /// Index of the CTU containing pixel `(x, y)`.
    pub fn ctu_of_pixel(&self, x: u32, y: u32) -> Option<usize> {
        if x >= self.image_width || y >= self.image_height {
            return None;
        }
        let col = (x / self.ctu_size) as usize;
        let row = (y / self.ctu_size) as usize;
        Some(row * self.cols as usize + col)
    }

    /// Half-open range of CTU columns and rows touched by the interior of `r`.
    fn span(&self, r: &Rect) -> Option<(u32, u32, u32, u32)> {
        let size = self.ctu_size as f64;
        let c0 = (r.x / size).floor();
        let r0 = (r.y / size).floor();
        if c0 >= self.cols as f64 || r0 >= self.rows as f64 {
            return None;
        }
        let c1 = (r.right() / size).ceil().min(self.cols as f64);
        let r1 = (r.bottom() / size).ceil().min(self.rows as f64);
        Some((c0 as u32, c1 as u32, r0 as u32, r1 as u32))
    }
}

/// Per-CTU binary saliency decision, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "MaskRepr", try_from = "MaskRepr")]
pub struct SaliencyMask {
    grid: CtuGrid,
    flags: Vec<bool>,
}

impl SaliencyMask {
    pub fn new(grid: CtuGrid, flags: Vec<bool>) -> Result<Self> {
        if flags.len() != grid.len() {
            return Err(Error::Dimension(format!(
                "mask has {} flags for a {}x{} grid",
                flags.len(),
                grid.cols(),
                grid.rows()
            )));
        }
        Ok(SaliencyMask { grid, flags })
    }

    pub fn uniform(grid: CtuGrid, salient: bool) -> Self {
        SaliencyMask {
            grid,
            flags: vec![salient; grid.len()],
        }
    }

    pub fn grid(&self) -> &CtuGrid {
        &self.grid
    }

    pub fn flags(&self) -> &[bool] {
        &self.flags
    }

    pub fn is_salient(&self, k: usize) -> bool {
        self.flags[k]
    }

    pub fn salient_count(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }
}

#[derive(Serialize, Deserialize)]
struct MaskRepr {
    image_width: u32,
    image_height: u32,
    ctu_size: u32,
    cols: u32,
    rows: u32,
    flags: Vec<u8>,
}

impl From<SaliencyMask> for MaskRepr {
    fn from(m: SaliencyMask) -> Self {
        MaskRepr {
            image_width: m.grid.image_width,
            image_height: m.grid.image_height,
            ctu_size: m.grid.ctu_size,
            cols: m.grid.cols,
            rows: m.grid.rows,
            flags: m.flags.iter().map(|&f| f as u8).collect(),
        }
    }
}

impl TryFrom<MaskRepr> for SaliencyMask {
    type Error = Error;

    fn try_from(r: MaskRepr) -> Result<Self> {
        let grid = CtuGrid::new(r.image_width, r.image_height, r.ctu_size)?;
        if grid.cols != r.cols || grid.rows != r.rows {
            return Err(Error::Format(format!(
                "grid {}x{} inconsistent with image {}x{} at ctu {}",
                r.cols, r.rows, r.image_width, r.image_height, r.ctu_size
            )));
        }
        let flags = r
            .flags
            .into_iter()
            .map(|f| match f {
                0 => Ok(false),
                1 => Ok(true),
                other => Err(Error::Format(format!("mask flag {other} is not 0 or 1"))),
            })
            .collect::<Result<Vec<_>>>()?;
        SaliencyMask::new(grid, flags)
    }
}

/// Marks CTU `k` salient iff `max_i d(ctu_k, det_i) > theta`.
///
/// An empty detection list yields an all-false mask. Zero-area detections are
/// rejected.
pub fn decide_saliency(grid: &CtuGrid, dets: &[Rect], theta: f64) -> Result<SaliencyMask> {
    if !(0.0..1.0).contains(&theta) {
        return Err(Error::Range(format!("theta {theta} not in [0, 1)")));
    }
    let mut best = vec![0.0f64; grid.len()];
    for det in dets {
        if det.area() <= 0.0 {
            return Err(Error::DegenerateDetection(format!("{det:?}")));
        }
        let Some((c0, c1, r0, r1)) = grid.span(det) else {
            continue;
        };
        for row in r0..r1 {
            for col in c0..c1 {
                let k = row as usize * grid.cols as usize + col as usize;
                let d = relative_overlap(&grid.ctu_rect(k)?, det)?;
                if d > best[k] {
                    best[k] = d;
                }
            }
        }
    }
    let flags = best.into_iter().map(|d| d > theta).collect();
    SaliencyMask::new(*grid, flags)
}


#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    fn rect() -> impl Strategy<Value = Rect> {
        (0u32..300, 0u32..300, 1u32..200, 1u32..200)
            .prop_map(|(x, y, w, h)| Rect::new(x as f64, y as f64, w as f64, h as f64).unwrap())
    }

    fn real_rect() -> impl Strategy<Value = Rect> {
        (0.0f64..300.0, 0.0f64..300.0, 0.01f64..200.0, 0.01f64..200.0)
            .prop_map(|(x, y, w, h)| Rect::new(x, y, w, h).unwrap())
    }

    proptest! {
        #[test]
        fn relative_overlap_in_unit_interval(a in real_rect(), b in real_rect()) {
            let d = relative_overlap(&a, &b).unwrap();
            prop_assert!((0.0..=1.0).contains(&d));
        }

        #[test]
        fn monotone_in_theta(
            dets in proptest::collection::vec(rect(), 0..6),
            t1 in 0.0f64..1.0,
            t2 in 0.0f64..1.0,
        ) {
            let g = CtuGrid::new(400, 300, 64).unwrap();
            let (lo, hi) = if t1 <= t2 { (t1, t2) } else { (t2, t1) };
            let m_lo = decide_saliency(&g, &dets, lo).unwrap();
            let m_hi = decide_saliency(&g, &dets, hi).unwrap();
            for k in 0..g.len() {
                prop_assert!(!m_hi.is_salient(k) || m_lo.is_salient(k));
            }
        }

        #[test]
        fn monotone_in_detections(
            dets in proptest::collection::vec(rect(), 0..6),
            extra in rect(),
            theta in 0.0f64..1.0,
        ) {
            let g = CtuGrid::new(400, 300, 64).unwrap();
            let before = decide_saliency(&g, &dets, theta).unwrap();
            let mut more = dets.clone();
            more.push(extra);
            let after = decide_saliency(&g, &more, theta).unwrap();
            for k in 0..g.len() {
                prop_assert!(!before.is_salient(k) || after.is_salient(k));
            }
        }

        #[test]
        fn theta_zero_means_positive_overlap(dets in proptest::collection::vec(rect(), 0..6)) {
            let g = CtuGrid::new(400, 300, 64).unwrap();
            let m = decide_saliency(&g, &dets, 0.0).unwrap();
            for k in 0..g.len() {
                let ctu = g.ctu_rect(k).unwrap();
                let any = dets.iter().any(|d| overlap_area(&ctu, d) > 0.0);
                prop_assert_eq!(m.is_salient(k), any);
            }
        }
    }
}
