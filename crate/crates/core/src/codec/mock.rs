//! Deterministic stand-in codec: per-CTU uniform scalar quantization with a
//! zero-order entropy rate estimate.
//!
//! Every sample of CTU `k` is quantized with step `2^((QP_k - 4) / 6)` and
//! reconstructed as `clamp(round(index * step), 0, 255)`. CTUs never interact,
//! so changing one CTU's QP leaves every other CTU's reconstruction untouched.
//! Rate is counted on luma only: `samples * H(indices)` per CTU, with a flat
//! 1 bit for CTUs whose indices are all equal.

use super::{EncodeResult, Image};
use crate::error::{Error, Result};
use crate::qpmap::{QpMap, MAX_QP};

pub const MOCK_ENCODER_ID: &str = "mock-scalar-q6";

/// Quantizer step for `qp`.
pub fn step_size(qp: u8) -> f64 {
    ((qp as f64 - 4.0) / 6.0).exp2()
}

#[derive(Clone, Copy)]
struct Lut {
    index: [u16; 256],
    recon: [u8; 256],
}

impl Lut {
    fn new(qp: u8) -> Self {
        let step = step_size(qp);
        let mut lut = Lut {
            index: [0; 256],
            recon: [0; 256],
        };
        for p in 0..256usize {
            let idx = (p as f64 / step).round();
            lut.index[p] = idx as u16;
            lut.recon[p] = (idx * step).round().clamp(0.0, 255.0) as u8;
        }
        lut
    }
}

/// Zero-order entropy in bits per symbol of a histogram with `n` samples.
fn entropy(hist: &[u64], n: u64) -> f64 {
    let n = n as f64;
    hist.iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

pub fn mock_encode(img: &Image, map: &QpMap) -> Result<EncodeResult> {
    let grid = map.grid();
    if (grid.image_width(), grid.image_height()) != (img.width(), img.height()) {
        return Err(Error::Dimension(format!(
            "QP map grid is for {}x{}, image is {}x{}",
            grid.image_width(),
            grid.image_height(),
            img.width(),
            img.height()
        )));
    }
    let luts: Vec<Lut> = (0..=MAX_QP).map(Lut::new).collect();
    let width = img.width() as usize;
    let mut planes: Vec<Vec<u8>> = img.planes().to_vec();
    let mut bits = 0.0;
    let mut hist = vec![0u64; 1024];

    for (k, &qp) in map.qps().iter().enumerate() {
        let lut = &luts[qp as usize];
        let (x0, y0, x1, y1) = grid.ctu_bounds(k)?;
        hist.iter_mut().for_each(|c| *c = 0);
        for y in y0 as usize..y1 as usize {
            let row = y * width;
            for x in x0 as usize..x1 as usize {
                hist[lut.index[img.luma()[row + x] as usize] as usize] += 1;
            }
        }
        let n = (x1 - x0) as u64 * (y1 - y0) as u64;
        let h = entropy(&hist, n);
        bits += if h > 0.0 { n as f64 * h } else { 1.0 };

        for plane in planes.iter_mut() {
            for y in y0 as usize..y1 as usize {
                let row = y * width;
                for s in &mut plane[row + x0 as usize..row + x1 as usize] {
                    *s = lut.recon[*s as usize];
                }
            }
        }
    }

    Ok(EncodeResult {
        decoded: Image::from_planes(img.width(), img.height(), planes)?,
        bits,
        encoder_id: MOCK_ENCODER_ID.to_string(),
        qpmap_path: None,
    })
}
