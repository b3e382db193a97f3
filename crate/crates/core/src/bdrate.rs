//! Bjøntegaard delta-rate between two rate-quality curves.
//!
//! `log10(rate)` is fitted as a cubic in quality (least squares when a curve
//! has more than four points), both fits are integrated in closed form over
//! the shared quality interval, and the mean log-rate gap is turned into a
//! percentage. Negative values mean the test curve needs fewer bits.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RdPoint {
    pub label: String,
    pub rate: f64,
    pub quality: f64,
}

impl RdPoint {
    pub fn new(label: impl Into<String>, rate: f64, quality: f64) -> Self {
        RdPoint {
            label: label.into(),
            rate,
            quality,
        }
    }
}

/// At least four points, sorted by quality, with quality and rate both
/// strictly increasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RdCurve {
    name: String,
    points: Vec<RdPoint>,
}

impl RdCurve {
    pub fn new(name: impl Into<String>, mut points: Vec<RdPoint>) -> Result<Self> {
        let name = name.into();
        if points.len() < 4 {
            return Err(Error::InsufficientData(format!(
                "curve {name:?} has {} points, need at least 4",
                points.len()
            )));
        }
        for p in &points {
            if !(p.rate.is_finite() && p.rate > 0.0 && p.quality.is_finite()) {
                return Err(Error::Validation(format!(
                    "curve {name:?} point {:?}: rate must be positive and values finite",
                    p.label
                )));
            }
        }
        points.sort_by(|a, b| a.quality.total_cmp(&b.quality));
        for pair in points.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            if b.quality <= a.quality || b.rate <= a.rate {
                return Err(Error::Validation(format!(
                    "curve {name:?} is not monotone: {:?} (rate {}, quality {}) -> {:?} (rate {}, quality {})",
                    a.label, a.rate, a.quality, b.label, b.rate, b.quality
                )));
            }
        }
        Ok(RdCurve { name, points })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn points(&self) -> &[RdPoint] {
        &self.points
    }

    fn quality_range(&self) -> (f64, f64) {
        (self.points[0].quality, self.points[self.points.len() - 1].quality)
    }
}

/// Cubic in the normalised variable `u = (q - center) / half_width`.
#[derive(Debug, Clone, Copy)]
struct Cubic {
    center: f64,
    half_width: f64,
    coeffs: [f64; 4],
}

impl Cubic {
    fn fit(curve: &RdCurve) -> Result<Self> {
        let (lo, hi) = curve.quality_range();
        let center = 0.5 * (lo + hi);
        let half_width = 0.5 * (hi - lo);
        let n = curve.points.len();
        let a = DMatrix::from_fn(n, 4, |i, j| {
            let u = (curve.points[i].quality - center) / half_width;
            u.powi(j as i32)
        });
        let b = DVector::from_iterator(n, curve.points.iter().map(|p| p.rate.log10()));
        let x = a
            .svd(true, true)
            .solve(&b, 1e-14)
            .map_err(|e| Error::Validation(format!("cubic fit failed for {:?}: {e}", curve.name)))?;
        Ok(Cubic {
            center,
            half_width,
            coeffs: [x[0], x[1], x[2], x[3]],
        })
    }

    fn antiderivative_u(&self, u: f64) -> f64 {
        let c = &self.coeffs;
        u * (c[0] + u * (c[1] / 2.0 + u * (c[2] / 3.0 + u * c[3] / 4.0)))
    }

    /// Integral over quality from `q0` to `q1`.
    fn integrate(&self, q0: f64, q1: f64) -> f64 {
        let u0 = (q0 - self.center) / self.half_width;
        let u1 = (q1 - self.center) / self.half_width;
        self.half_width * (self.antiderivative_u(u1) - self.antiderivative_u(u0))
    }
}

/// Shared quality interval `[max of minima, min of maxima]`.
pub fn overlap_interval(a: &RdCurve, b: &RdCurve) -> Result<(f64, f64)> {
    let (a_lo, a_hi) = a.quality_range();
    let (b_lo, b_hi) = b.quality_range();
    let lo = a_lo.max(b_lo);
    let hi = a_hi.min(b_hi);
    if hi <= lo {
        return Err(Error::NoOverlap { lo, hi });
    }
    Ok((lo, hi))
}

/// BD-rate of `test` against `anchor`, in percent.
pub fn bd_rate(test: &RdCurve, anchor: &RdCurve) -> Result<f64> {
    let (lo, hi) = overlap_interval(test, anchor)?;
    let t = Cubic::fit(test)?;
    let a = Cubic::fit(anchor)?;
    let avg = (t.integrate(lo, hi) - a.integrate(lo, hi)) / (hi - lo);
    let pct = (10f64.powf(avg) - 1.0) * 100.0;
    // keep identical curves from printing as -0.000000
    Ok(if pct == 0.0 { 0.0 } else { pct })
}

/// Parses `name,label,rate,quality` rows (optional header) into curves,
/// grouped by name in order of first appearance.
pub fn parse_curves_csv(text: &str) -> Result<Vec<RdCurve>> {
    let mut groups: Vec<(String, Vec<RdPoint>)> = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if n == 0 && fields.first() == Some(&"name") {
            continue;
        }
        let [name, label, rate, quality] = fields[..] else {
            return Err(Error::parse(
                format!("curve CSV line {}", n + 1),
                format!("expected 4 fields, got {}", fields.len()),
            ));
        };
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| Error::parse(format!("curve CSV line {}", n + 1), format!("bad number {s:?}")))
        };
        let point = RdPoint::new(label, num(rate)?, num(quality)?);
        match groups.iter_mut().find(|(g, _)| g == name) {
            Some((_, pts)) => pts.push(point),
            None => groups.push((name.to_string(), vec![point])),
        }
    }
    groups.into_iter().map(|(name, pts)| RdCurve::new(name, pts)).collect()
}

pub fn load_curves_csv(path: &Path) -> Result<Vec<RdCurve>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_curves_csv(&text)
}

pub fn curves_to_csv(curves: &[RdCurve]) -> String {
    let mut out = String::from("name,label,rate,quality\n");
    for c in curves {
        for p in &c.points {
            out.push_str(&format!("{},{},{},{}\n", c.name, p.label, p.rate, p.quality));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(name: &str, pts: &[(f64, f64)]) -> RdCurve {
        RdCurve::new(
            name,
            pts.iter()
                .enumerate()
                .map(|(i, &(r, q))| RdPoint::new(i.to_string(), r, q))
                .collect(),
        )
        .unwrap()
    }

    const ANCHOR: [(f64, f64); 4] = [(1000.0, 0.20), (1800.0, 0.28), (3000.0, 0.33), (5200.0, 0.36)];

    #[test]
    fn identical_curves_give_zero() {
        let a = curve("a", &ANCHOR);
        assert_eq!(bd_rate(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn doubled_rate_gives_plus_100() {
        let a = curve("a", &ANCHOR);
        let doubled: Vec<_> = ANCHOR.iter().map(|&(r, q)| (2.0 * r, q)).collect();
        let t = curve("t", &doubled);
        assert!((bd_rate(&t, &a).unwrap() - 100.0).abs() < 1e-9);
        let halved: Vec<_> = ANCHOR.iter().map(|&(r, q)| (0.5 * r, q)).collect();
        assert!((bd_rate(&curve("h", &halved), &a).unwrap() + 50.0).abs() < 1e-9);
    }

    #[test]
    fn least_squares_with_more_points_recovers_exact_cubic() {
        // log10(rate) = 2 + q - q^3 sampled at 7 points fits exactly
        let pts: Vec<_> = (0..7)
            .map(|i| {
                let q = 0.1 * i as f64;
                (10f64.powf(2.0 + q - q * q * q), q)
            })
            .collect();
        let c = curve("c", &pts);
        let fit = Cubic::fit(&c).unwrap();
        let exact = |q: f64| 2.0 * q + q * q / 2.0 - q.powi(4) / 4.0;
        let got = fit.integrate(0.1, 0.5);
        assert!((got - (exact(0.5) - exact(0.1))).abs() < 1e-12);
    }

    #[test]
    fn validation_errors() {
        let three = vec![RdPoint::new("a", 1.0, 0.1), RdPoint::new("b", 2.0, 0.2), RdPoint::new("c", 3.0, 0.3)];
        assert!(matches!(RdCurve::new("x", three), Err(Error::InsufficientData(_))));
        let nonmono = vec![
            RdPoint::new("a", 1.0, 0.1),
            RdPoint::new("b", 3.0, 0.2),
            RdPoint::new("c", 2.0, 0.3),
            RdPoint::new("d", 4.0, 0.4),
        ];
        assert!(matches!(RdCurve::new("x", nonmono), Err(Error::Validation(_))));
        let tie = vec![
            RdPoint::new("a", 1.0, 0.1),
            RdPoint::new("b", 2.0, 0.1),
            RdPoint::new("c", 3.0, 0.3),
            RdPoint::new("d", 4.0, 0.4),
        ];
        assert!(matches!(RdCurve::new("x", tie), Err(Error::Validation(_))));
        let zero = vec![
            RdPoint::new("a", 0.0, 0.1),
            RdPoint::new("b", 2.0, 0.2),
            RdPoint::new("c", 3.0, 0.3),
            RdPoint::new("d", 4.0, 0.4),
        ];
        assert!(matches!(RdCurve::new("x", zero), Err(Error::Validation(_))));
    }

    #[test]
    fn unsorted_input_is_sorted_by_quality() {
        let c = curve("c", &[(3000.0, 0.33), (1000.0, 0.20), (5200.0, 0.36), (1800.0, 0.28)]);
        let q: Vec<f64> = c.points().iter().map(|p| p.quality).collect();
        assert_eq!(q, vec![0.20, 0.28, 0.33, 0.36]);
    }

    #[test]
    fn disjoint_quality_ranges() {
        let a = curve("a", &ANCHOR);
        let b = curve("b", &[(10.0, 0.5), (20.0, 0.6), (30.0, 0.7), (40.0, 0.8)]);
        assert!(matches!(bd_rate(&a, &b), Err(Error::NoOverlap { .. })));
    }

    #[test]
    fn csv_round_trip_and_grouping() {
        let a = curve("anchor", &ANCHOR);
        let b = curve("test", &[(900.0, 0.21), (1500.0, 0.27), (2800.0, 0.34), (4100.0, 0.35)]);
        let text = curves_to_csv(&[a.clone(), b.clone()]);
        assert_eq!(parse_curves_csv(&text).unwrap(), vec![a, b]);
        assert!(parse_curves_csv("x,1,2\n").is_err());
        assert!(parse_curves_csv("x,1,abc,0.5\n").is_err());
    }
}
