//! Per-CTU QP maps and their text sidecar format.
//!
//! ```text
//! qpmap/1
//! image_id <id>
//! ctu_size <int>  image <W> <H>  grid <cols> <rows>  qp_base <b>  qp_delta <d>
//! <cols space-separated QPs>      (one line per CTU row)
//! ```
//!
//! The `qp_base`/`qp_delta` pair on line 3 is optional on read; maps that did
//! not come from [`assign_qps`] carry no origin.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CtuGrid, SaliencyMask};

/// Largest QP of the VVC range.
pub const MAX_QP: u8 = 63;

const MAGIC: &str = "qpmap/1";

/// Offset applied to non-salient CTUs, or `Max` to pin them to [`MAX_QP`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "DeltaRepr", into = "DeltaRepr")]
pub enum QpDelta {
    Offset(u32),
    Max,
}

impl QpDelta {
    /// QP of a non-salient CTU for the given base.
    pub fn non_salient_qp(self, qp_base: u8) -> u8 {
        match self {
            QpDelta::Max => MAX_QP,
            QpDelta::Offset(d) => (qp_base as u32).saturating_add(d).min(MAX_QP as u32) as u8,
        }
    }
}

impl fmt::Display for QpDelta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            QpDelta::Offset(d) => write!(f, "{d}"),
            QpDelta::Max => f.write_str("max"),
        }
    }
}

impl FromStr for QpDelta {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "max" {
            return Ok(QpDelta::Max);
        }
        s.parse::<u32>()
            .map(QpDelta::Offset)
            .map_err(|_| Error::Range(format!("qp_delta {s:?} is neither a non-negative integer nor \"max\"")))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum DeltaRepr {
    Int(i64),
    Text(String),
}

impl TryFrom<DeltaRepr> for QpDelta {
    type Error = Error;

    fn try_from(r: DeltaRepr) -> Result<Self> {
        match r {
            DeltaRepr::Int(v) => u32::try_from(v)
                .map(QpDelta::Offset)
                .map_err(|_| Error::Range(format!("qp_delta {v} must be non-negative"))),
            DeltaRepr::Text(s) => s.parse(),
        }
    }
}

impl From<QpDelta> for DeltaRepr {
    fn from(d: QpDelta) -> Self {
        match d {
            QpDelta::Offset(v) => DeltaRepr::Int(v as i64),
            QpDelta::Max => DeltaRepr::Text("max".into()),
        }
    }
}

/// The `(qp_base, qp_delta)` pair a map was derived from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QpOrigin {
    pub qp_base: u8,
    pub qp_delta: QpDelta,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QpMap {
    image_id: String,
    grid: CtuGrid,
    qps: Vec<u8>,
    origin: Option<QpOrigin>,
}

fn check_qp(qp: i64) -> Result<u8> {
    if (0..=MAX_QP as i64).contains(&qp) {
        Ok(qp as u8)
    } else {
        Err(Error::Range(format!("QP {qp} outside [0, {MAX_QP}]")))
    }
}

impl QpMap {
    pub fn new(image_id: impl Into<String>, grid: CtuGrid, qps: Vec<u8>, origin: Option<QpOrigin>) -> Result<Self> {
        if qps.len() != grid.len() {
            return Err(Error::Format(format!(
                "{} QPs for a {}x{} grid",
                qps.len(),
                grid.cols(),
                grid.rows()
            )));
        }
        for &qp in &qps {
            check_qp(qp as i64)?;
        }
        Ok(QpMap {
            image_id: image_id.into(),
            grid,
            qps,
            origin,
        })
    }

    /// Constant-QP map, the unadapted reference configuration.
    pub fn constant(image_id: impl Into<String>, grid: CtuGrid, qp: u8) -> Result<Self> {
        let qp = check_qp(qp as i64)?;
        Self::new(
            image_id,
            grid,
            vec![qp; grid.len()],
            Some(QpOrigin {
                qp_base: qp,
                qp_delta: QpDelta::Offset(0),
            }),
        )
    }

    pub fn image_id(&self) -> &str {
        &self.image_id
    }

    pub fn grid(&self) -> &CtuGrid {
        &self.grid
    }

    pub fn qps(&self) -> &[u8] {
        &self.qps
    }

    pub fn origin(&self) -> Option<QpOrigin> {
        self.origin
    }

    /// Base QP if known, else the smallest QP in the map.
    pub fn base_qp(&self) -> u8 {
        self.origin
            .map(|o| o.qp_base)
            .unwrap_or_else(|| self.qps.iter().copied().min().unwrap_or(0))
    }

    pub fn to_sidecar(&self) -> String {
        let g = &self.grid;
        let mut out = format!(
            "{MAGIC}\nimage_id {}\nctu_size {}  image {} {}  grid {} {}",
            self.image_id,
            g.ctu_size(),
            g.image_width(),
            g.image_height(),
            g.cols(),
            g.rows()
        );
        if let Some(o) = self.origin {
            out.push_str(&format!("  qp_base {}  qp_delta {}", o.qp_base, o.qp_delta));
        }
        out.push('\n');
        for row in self.qps.chunks(g.cols() as usize) {
            let line: Vec<String> = row.iter().map(|q| q.to_string()).collect();
            out.push_str(&line.join(" "));
            out.push('\n');
        }
        out
    }

    pub fn from_sidecar(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let ctx = |n: usize| format!("qpmap line {n}");
        if lines.next() != Some(MAGIC) {
            return Err(Error::Version {
                found: text.lines().next().unwrap_or("").to_string(),
                expected: MAGIC,
            });
        }
        let image_id = lines
            .next()
            .and_then(|l| l.strip_prefix("image_id "))
            .ok_or_else(|| Error::parse(ctx(2), "expected `image_id <id>`"))?
            .to_string();

        let header = lines.next().ok_or_else(|| Error::parse(ctx(3), "missing grid header"))?;
        let tokens: Vec<&str> = header.split_whitespace().collect();
        let mut fields = std::collections::HashMap::new();
        let mut i = 0;
        while i < tokens.len() {
            let arity = match tokens[i] {
                "ctu_size" | "qp_base" | "qp_delta" => 1,
                "image" | "grid" => 2,
                other => return Err(Error::parse(ctx(3), format!("unknown key {other:?}"))),
            };
            let values = tokens
                .get(i + 1..i + 1 + arity)
                .ok_or_else(|| Error::parse(ctx(3), format!("truncated value for {}", tokens[i])))?;
            fields.insert(tokens[i], values.to_vec());
            i += 1 + arity;
        }
        let num = |key: &str, idx: usize| -> Result<u32> {
            let v = fields
                .get(key)
                .ok_or_else(|| Error::parse(ctx(3), format!("missing {key}")))?[idx];
            v.parse()
                .map_err(|_| Error::parse(ctx(3), format!("bad {key} value {v:?}")))
        };
        let grid = CtuGrid::new(num("image", 0)?, num("image", 1)?, num("ctu_size", 0)?)?;
        if (num("grid", 0)?, num("grid", 1)?) != (grid.cols(), grid.rows()) {
            return Err(Error::Format(format!(
                "grid {}x{} inconsistent with image {}x{} at ctu_size {}",
                num("grid", 0)?,
                num("grid", 1)?,
                grid.image_width(),
                grid.image_height(),
                grid.ctu_size()
            )));
        }
        let origin = match (fields.get("qp_base"), fields.get("qp_delta")) {
            (Some(b), Some(d)) => Some(QpOrigin {
                qp_base: check_qp(b[0].parse().map_err(|_| Error::parse(ctx(3), "bad qp_base"))?)?,
                qp_delta: d[0].parse()?,
            }),
            (None, None) => None,
            _ => return Err(Error::parse(ctx(3), "qp_base and qp_delta must appear together")),
        };

        let mut qps = Vec::with_capacity(grid.len());
        let mut rows = 0;
        for (n, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            rows += 1;
            let row = line
                .split_whitespace()
                .map(|t| {
                    t.parse::<i64>()
                        .map_err(|_| Error::parse(ctx(n + 4), format!("bad QP {t:?}")))
                        .and_then(check_qp)
                })
                .collect::<Result<Vec<u8>>>()?;
            if row.len() != grid.cols() as usize {
                return Err(Error::Format(format!(
                    "qpmap line {}: {} QPs, expected {}",
                    n + 4,
                    row.len(),
                    grid.cols()
                )));
            }
            qps.extend(row);
        }
        if rows != grid.rows() as usize {
            return Err(Error::Format(format!("{rows} QP rows, expected {}", grid.rows())));
        }
        Self::new(image_id, grid, qps, origin)
    }
}

/// Salient CTUs get `qp_base`; the rest `min(qp_base + qp_delta, 63)`, or 63
/// for [`QpDelta::Max`].
pub fn assign_qps(image_id: &str, mask: &SaliencyMask, qp_base: i64, qp_delta: QpDelta) -> Result<QpMap> {
    let qp_base = check_qp(qp_base)?;
    let background = qp_delta.non_salient_qp(qp_base);
    let qps = mask
        .flags()
        .iter()
        .map(|&salient| if salient { qp_base } else { background })
        .collect();
    QpMap::new(
        image_id,
        *mask.grid(),
        qps,
        Some(QpOrigin { qp_base, qp_delta }),
    )
}

pub fn write_qpmap(map: &QpMap, path: &Path) -> Result<()> {
    fs::write(path, map.to_sidecar()).map_err(|e| Error::io(path, e))
}

pub fn read_qpmap(path: &Path) -> Result<QpMap> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    QpMap::from_sidecar(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mixed_mask() -> SaliencyMask {
        let g = CtuGrid::new(256, 256, 128).unwrap();
        SaliencyMask::new(g, vec![true, false, false, true]).unwrap()
    }

    #[test]
    fn assignment_examples() {
        let m = assign_qps("a", &mixed_mask(), 22, QpDelta::Max).unwrap();
        assert_eq!(m.qps(), &[22, 63, 63, 22]);
        let m = assign_qps("a", &mixed_mask(), 27, QpDelta::Offset(5)).unwrap();
        assert_eq!(m.qps(), &[27, 32, 32, 27]);
        let m = assign_qps("a", &mixed_mask(), 27, QpDelta::Offset(0)).unwrap();
        assert_eq!(m.qps(), &[27; 4]);
        let m = assign_qps("a", &mixed_mask(), 50, QpDelta::Offset(20)).unwrap();
        assert_eq!(m.qps(), &[50, 63, 63, 50]);
        assert!(matches!(
            assign_qps("a", &mixed_mask(), 64, QpDelta::Max),
            Err(Error::Range(_))
        ));
        assert!(matches!(
            assign_qps("a", &mixed_mask(), -1, QpDelta::Max),
            Err(Error::Range(_))
        ));
    }

    #[test]
    fn all_salient_is_constant_reference() {
        let g = CtuGrid::new(300, 200, 64).unwrap();
        let mask = SaliencyMask::uniform(g, true);
        let adapted = assign_qps("a", &mask, 17, QpDelta::Max).unwrap();
        let constant = QpMap::constant("a", g, 17).unwrap();
        assert_eq!(adapted.qps(), constant.qps());
    }

    #[test]
    fn sidecar_layout() {
        let m = assign_qps("img 7", &mixed_mask(), 22, QpDelta::Max).unwrap();
        assert_eq!(
            m.to_sidecar(),
            "qpmap/1\nimage_id img 7\nctu_size 128  image 256 256  grid 2 2  qp_base 22  qp_delta max\n22 63\n63 22\n"
        );
    }

    #[test]
    fn sidecar_without_origin_is_accepted() {
        let text = "qpmap/1\nimage_id a\nctu_size 128  image 256 256  grid 2 2\n1 2\n3 4\n";
        let m = QpMap::from_sidecar(text).unwrap();
        assert_eq!(m.qps(), &[1, 2, 3, 4]);
        assert_eq!(m.origin(), None);
        assert_eq!(m.to_sidecar(), text);
    }

    #[test]
    fn sidecar_errors() {
        let short = "qpmap/1\nimage_id a\nctu_size 128  image 256 256  grid 2 2\n1 2\n3\n";
        assert!(matches!(QpMap::from_sidecar(short), Err(Error::Format(_))));
        let big = "qpmap/1\nimage_id a\nctu_size 128  image 256 256  grid 2 2\n1 2\n3 64\n";
        assert!(matches!(QpMap::from_sidecar(big), Err(Error::Range(_))));
        let grid = "qpmap/1\nimage_id a\nctu_size 128  image 256 256  grid 3 2\n1 2 3\n3 4 5\n";
        assert!(matches!(QpMap::from_sidecar(grid), Err(Error::Format(_))));
        let rows = "qpmap/1\nimage_id a\nctu_size 128  image 256 256  grid 2 2\n1 2\n";
        assert!(matches!(QpMap::from_sidecar(rows), Err(Error::Format(_))));
        assert!(matches!(QpMap::from_sidecar("qpmap/2\n"), Err(Error::Version { .. })));
        let g = CtuGrid::new(256, 256, 128).unwrap();
        assert!(matches!(QpMap::new("a", g, vec![1, 2, 3], None), Err(Error::Format(_))));
    }

    #[test]
    fn delta_parsing() {
        assert_eq!("max".parse::<QpDelta>().unwrap(), QpDelta::Max);
        assert_eq!("20".parse::<QpDelta>().unwrap(), QpDelta::Offset(20));
        assert!("-3".parse::<QpDelta>().is_err());
        let v: Vec<QpDelta> = serde_json::from_str(r#"[5, "max"]"#).unwrap();
        assert_eq!(v, vec![QpDelta::Offset(5), QpDelta::Max]);
        assert!(serde_json::from_str::<QpDelta>("-1").is_err());
    }

    fn arb_map() -> impl Strategy<Value = QpMap> {
        (1u32..600, 1u32..400, prop::sample::select(vec![16u32, 32, 64, 128]), any::<u64>(), any::<bool>())
            .prop_flat_map(|(w, h, c, seed, with_origin)| {
                let g = CtuGrid::new(w, h, c).unwrap();
                (prop::collection::vec(0u8..=63, g.len()), Just((g, seed, with_origin)))
            })
            .prop_map(|(qps, (g, seed, with_origin))| {
                let origin = with_origin.then_some(QpOrigin {
                    qp_base: (seed % 64) as u8,
                    qp_delta: if seed % 3 == 0 { QpDelta::Max } else { QpDelta::Offset((seed % 30) as u32) },
                });
                QpMap::new(format!("img_{seed}"), g, qps, origin).unwrap()
            })
    }

    proptest! {
        #[test]
        fn sidecar_round_trip(m in arb_map()) {
            let dir = tempfile::TempDir::new().unwrap();
            let p = dir.path().join("m.qpmap");
            write_qpmap(&m, &p).unwrap();
            prop_assert_eq!(read_qpmap(&p).unwrap(), m);
        }

        #[test]
        fn monotone_in_delta(flags in prop::collection::vec(any::<bool>(), 6), base in 0i64..=63, d1 in 0u32..80, d2 in 0u32..80) {
            let g = CtuGrid::new(96, 64, 32).unwrap();
            let mask = SaliencyMask::new(g, flags).unwrap();
            let (lo, hi) = (d1.min(d2), d1.max(d2));
            let a = assign_qps("a", &mask, base, QpDelta::Offset(lo)).unwrap();
            let b = assign_qps("a", &mask, base, QpDelta::Offset(hi)).unwrap();
            let c = assign_qps("a", &mask, base, QpDelta::Max).unwrap();
            for k in 0..g.len() {
                prop_assert!(a.qps()[k] <= b.qps()[k]);
                prop_assert!(b.qps()[k] <= c.qps()[k]);
            }
        }
    }
}
