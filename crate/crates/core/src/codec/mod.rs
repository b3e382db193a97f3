//! Applying a QP map to an image: the built-in mock codec or an external
//! encoder/decoder pair.

mod external;
mod image;
mod mock;

use std::path::{Path, PathBuf};

pub use external::{external_encode, CommandTemplate};
pub use image::{read_pgm, write_pgm, Image};
pub use mock::{mock_encode, step_size, MOCK_ENCODER_ID};

use crate::error::Result;
use crate::qpmap::QpMap;

#[derive(Debug, Clone, PartialEq)]
pub struct EncodeResult {
    pub decoded: Image,
    /// Coded size in bits.
    pub bits: f64,
    pub encoder_id: String,
    /// Sidecar handed to an external encoder; `None` for the mock codec.
    pub qpmap_path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Codec {
    Mock,
    External(CommandTemplate),
}

impl Codec {
    /// `workdir` is only used by external codecs.
    pub fn encode(&self, img: &Image, map: &QpMap, workdir: &Path) -> Result<EncodeResult> {
        match self {
            Codec::Mock => mock_encode(img, map),
            Codec::External(t) => external_encode(img, map, t, workdir),
        }
    }

    /// Stable description used for cache keys.
    pub fn fingerprint(&self) -> String {
        match self {
            Codec::Mock => MOCK_ENCODER_ID.to_string(),
            Codec::External(t) => t.fingerprint(),
        }
    }
}
