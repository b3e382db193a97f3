//! Row-major run-length encoded binary masks.
//!
//! Runs alternate background/foreground starting with background, so a mask
//! whose first pixel is foreground begins with a zero-length run.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceMask {
    width: u32,
    height: u32,
    runs: Vec<u32>,
    pixel_count: u64,
}

impl InstanceMask {
    /// Builds a mask from runs, checking that they sum to `width * height`.
    /// Zero-length interior runs are merged away.
    pub fn from_rle(width: u32, height: u32, runs: &[u64]) -> Result<Self> {
        let total: u64 = runs.iter().sum();
        let expected = width as u64 * height as u64;
        if total != expected {
            return Err(Error::Format(format!(
                "RLE covers {total} pixels but mask is {width}x{height} = {expected}"
            )));
        }
        let mut builder = RunBuilder::default();
        for (i, &len) in runs.iter().enumerate() {
            builder.push(i % 2 == 1, len as u32);
        }
        Ok(builder.finish(width, height))
    }

    /// Encodes a row-major bitmap of length `width * height`.
    pub fn from_bitmap(width: u32, height: u32, bits: &[bool]) -> Result<Self> {
        if bits.len() != width as usize * height as usize {
            return Err(Error::Dimension(format!(
                "bitmap has {} pixels, expected {width}x{height}",
                bits.len()
            )));
        }
        let mut builder = RunBuilder::default();
        for &b in bits {
            builder.push(b, 1);
        }
        Ok(builder.finish(width, height))
    }

    /// Mask containing exactly the given row-major pixel indices.
    pub fn from_indices(width: u32, height: u32, indices: &[usize]) -> Result<Self> {
        let mut bits = vec![false; width as usize * height as usize];
        for &i in indices {
            let slot = bits.get_mut(i).ok_or_else(|| {
                Error::Dimension(format!("pixel index {i} outside {width}x{height} mask"))
            })?;
            *slot = true;
        }
        Self::from_bitmap(width, height, &bits)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    /// Canonical runs (no zero-length runs except possibly the first).
    pub fn runs(&self) -> &[u32] {
        &self.runs
    }

    pub fn pixel_count(&self) -> u64 {
        self.pixel_count
    }

    pub fn to_bitmap(&self) -> Vec<bool> {
        let mut bits = Vec::with_capacity(self.width as usize * self.height as usize);
        for (i, &len) in self.runs.iter().enumerate() {
            bits.extend(std::iter::repeat_n(i % 2 == 1, len as usize));
        }
        bits
    }

    /// Row-major indices of foreground pixels, ascending.
    pub fn foreground(&self) -> impl Iterator<Item = usize> + '_ {
        let mut start = 0usize;
        self.runs.iter().enumerate().flat_map(move |(i, &len)| {
            let range = start..start + len as usize;
            start += len as usize;
            let fg = i % 2 == 1;
            range.filter(move |_| fg)
        })
    }

    /// Number of pixels set in both masks.
    pub fn intersection_count(&self, other: &InstanceMask) -> Result<u64> {
        self.check_dims(other)?;
        let mut a = RunCursor::new(&self.runs);
        let mut b = RunCursor::new(&other.runs);
        let mut count = 0u64;
        while let (Some((va, la)), Some((vb, lb))) = (a.peek(), b.peek()) {
            let step = la.min(lb);
            if va && vb {
                count += step as u64;
            }
            a.advance(step);
            b.advance(step);
        }
        Ok(count)
    }

    fn check_dims(&self, other: &InstanceMask) -> Result<()> {
        if (self.width, self.height) != (other.width, other.height) {
            return Err(Error::Dimension(format!(
                "mask {}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(())
    }
}

/// Intersection over union of two equally sized masks. Two empty masks give 0.
pub fn mask_iou(a: &InstanceMask, b: &InstanceMask) -> Result<f64> {
    let inter = a.intersection_count(b)?;
    let union = a.pixel_count + b.pixel_count - inter;
    if union == 0 {
        return Ok(0.0);
    }
    Ok(inter as f64 / union as f64)
}

#[derive(Default)]
struct RunBuilder {
    runs: Vec<u32>,
    current: bool,
    pixel_count: u64,
}

impl RunBuilder {
    fn push(&mut self, fg: bool, len: u32) {
        if len == 0 {
            return;
        }
        if fg {
            self.pixel_count += len as u64;
        }
        if self.runs.is_empty() {
            if fg {
                self.runs.push(0);
            }
            self.runs.push(len);
            self.current = fg;
        } else if fg == self.current {
            *self.runs.last_mut().unwrap() += len;
        } else {
            self.runs.push(len);
            self.current = fg;
        }
    }

    fn finish(mut self, width: u32, height: u32) -> InstanceMask {
        if self.runs.is_empty() {
            self.runs.push(0);
        }
        InstanceMask {
            width,
            height,
            runs: self.runs,
            pixel_count: self.pixel_count,
        }
    }
}

struct RunCursor<'a> {
    runs: &'a [u32],
    idx: usize,
    left: u32,
}

impl<'a> RunCursor<'a> {
    fn new(runs: &'a [u32]) -> Self {
        let mut c = RunCursor {
            runs,
            idx: 0,
            left: runs.first().copied().unwrap_or(0),
        };
        c.skip_empty();
        c
    }

    fn skip_empty(&mut self) {
        while self.left == 0 && self.idx < self.runs.len() {
            self.idx += 1;
            self.left = self.runs.get(self.idx).copied().unwrap_or(0);
        }
    }

    fn peek(&self) -> Option<(bool, u32)> {
        (self.idx < self.runs.len()).then_some((self.idx % 2 == 1, self.left))
    }

    fn advance(&mut self, n: u32) {
        self.left -= n;
        self.skip_empty();
    }
}
