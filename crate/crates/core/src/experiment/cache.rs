//! Content-addressed encode cache: `<root>/<sha256>/{bits.txt, decoded.pgm}`.
//!
//! Entries are built in a private temporary directory and renamed into
//! place, so a reader never sees a half-written entry and an interrupted
//! sweep leaves only stray temporaries behind.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use sha2::{Digest, Sha256};

use crate::codec::{Codec, Image};
use crate::error::{Error, Result};
use crate::qpmap::QpMap;

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

pub(crate) fn image_digest(img: &Image) -> [u8; 32] {
    let mut h = Sha256::new();
    for plane in img.planes() {
        h.update(img.width().to_le_bytes());
        h.update(img.height().to_le_bytes());
        h.update(plane);
    }
    h.finalize().into()
}

pub(crate) fn cache_key(image_digest: &[u8; 32], map: &QpMap, codec: &Codec) -> String {
    let mut h = Sha256::new();
    h.update(b"vcm-cache/1\0");
    h.update(image_digest);
    h.update(codec.fingerprint().as_bytes());
    h.update(b"\0");
    h.update(map.to_sidecar().as_bytes());
    hex::encode(h.finalize())
}

pub(crate) struct Encoded {
    pub bits: f64,
    /// Luma only; chroma does not survive the cache.
    pub decoded: Image,
    pub entry: PathBuf,
    pub reused: bool,
}

fn read_entry(entry: &Path) -> Result<(f64, Image)> {
    let bits_path = entry.join("bits.txt");
    let text = fs::read_to_string(&bits_path).map_err(|e| Error::io(&bits_path, e))?;
    let bits = text
        .trim()
        .parse::<f64>()
        .map_err(|e| Error::parse(bits_path.display().to_string(), e))?;
    let decoded = crate::codec::read_pgm(&entry.join("decoded.pgm"))?;
    Ok((bits, decoded))
}

pub(crate) fn temp_path(dir: &Path, stem: &str) -> PathBuf {
    let n = TMP_COUNTER.fetch_add(1, Ordering::Relaxed);
    dir.join(format!(".tmp-{stem}-{}-{n}", std::process::id()))
}

/// Writes `bytes` to `path` through a temporary sibling and a rename.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let name = path.file_name().unwrap_or_default().to_string_lossy();
    let tmp = temp_path(dir, &name);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Returns the cached encode for `map`, running `codec` on a miss.
pub(crate) fn encode_cached(
    root: &Path,
    work_root: &Path,
    codec: &Codec,
    img: &Image,
    digest: &[u8; 32],
    map: &QpMap,
) -> Result<Encoded> {
    let key = cache_key(digest, map, codec);
    let entry = root.join(&key);
    if entry.is_dir() {
        if let Ok((bits, decoded)) = read_entry(&entry) {
            return Ok(Encoded {
                bits,
                decoded,
                entry,
                reused: true,
            });
        }
        // damaged entry; rebuild it
        fs::remove_dir_all(&entry).map_err(|e| Error::io(&entry, e))?;
    }

    let workdir = work_root.join(&key);
    fs::create_dir_all(&workdir).map_err(|e| Error::io(&workdir, e))?;
    let result = codec.encode(img, map, &workdir)?;
    let _ = fs::remove_dir_all(&workdir);

    let luma = Image::gray(img.width(), img.height(), result.decoded.luma().to_vec())?;
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let tmp = temp_path(root, &key);
    fs::create_dir(&tmp).map_err(|e| Error::io(&tmp, e))?;
    let bits_path = tmp.join("bits.txt");
    fs::write(&bits_path, format!("{}\n", result.bits)).map_err(|e| Error::io(&bits_path, e))?;
    let pgm_path = tmp.join("decoded.pgm");
    fs::write(&pgm_path, luma.to_pgm()).map_err(|e| Error::io(&pgm_path, e))?;
    if let Err(e) = fs::rename(&tmp, &entry) {
        let _ = fs::remove_dir_all(&tmp);
        // another worker finished the same key first
        if !entry.is_dir() {
            return Err(Error::io(&entry, e));
        }
    }
    Ok(Encoded {
        bits: result.bits,
        decoded: luma,
        entry,
        reused: false,
    })
}

/// Hard-links `src` to `dst` (copying across filesystems), replacing `dst`.
pub(crate) fn link_or_copy(src: &Path, dst: &Path) -> Result<()> {
    let dir = dst.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let tmp = temp_path(dir, &dst.file_name().unwrap_or_default().to_string_lossy());
    if fs::hard_link(src, &tmp).is_err() {
        fs::copy(src, &tmp).map_err(|e| Error::io(&tmp, e))?;
    }
    fs::rename(&tmp, dst).map_err(|e| Error::io(dst, e))
}
