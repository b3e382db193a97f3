use std::fs;
use std::path::Path;

use super::synth::{write_synthetic_corpus, SynthOptions};
use super::*;
use crate::ingest::write_instances;

fn corpus(dir: &Path, images: usize) {
    write_synthetic_corpus(
        dir,
        &SynthOptions {
            images,
            width: 384,
            height: 256,
            seed: 11,
        },
    )
    .unwrap();
}

fn small_cfg() -> SweepConfig {
    SweepConfig {
        thetas: vec![0.0, 0.1],
        qp_deltas: vec![QpDelta::Offset(0), QpDelta::Offset(5), QpDelta::Max],
        ctu_size: 64,
        jobs: Some(2),
        ..SweepConfig::default()
    }
}

#[test]
fn delta_zero_reproduces_the_anchor() {
    let tmp = tempfile::tempdir().unwrap();
    corpus(&tmp.path().join("c"), 2);
    let r = run_sweep(&small_cfg(), &tmp.path().join("c"), &tmp.path().join("out")).unwrap();
    assert!(r.anchor.status.is_complete(), "{:?}", r.anchor.status);
    for det in &r.detectors {
        for &t in &r.thetas {
            let cell = r.cell(det, t, QpDelta::Offset(0)).unwrap();
            assert_eq!(cell.points, r.anchor.points);
            assert_eq!(cell.bdr, Some(0.0));
        }
    }
}

#[test]
fn max_delta_at_theta_zero_saves_bits_and_delta_is_monotone() {
    let tmp = tempfile::tempdir().unwrap();
    corpus(&tmp.path().join("c"), 2);
    let r = run_sweep(&small_cfg(), &tmp.path().join("c"), &tmp.path().join("out")).unwrap();
    for det in &r.detectors {
        let cell = r.cell(det, 0.0, QpDelta::Max).unwrap();
        for (p, a) in cell.points.iter().zip(&r.anchor.points) {
            assert!(p.rate < a.rate, "{det} qp {}: {} >= {}", p.qp_base, p.rate, a.rate);
        }
        for &t in &r.thetas {
            for i in 0..r.qp_bases.len() {
                let rates: Vec<f64> = r.qp_deltas.iter().map(|&d| r.cell(det, t, d).unwrap().points[i].rate).collect();
                assert!(rates.windows(2).all(|w| w[1] <= w[0]), "{det} theta {t}: {rates:?}");
            }
        }
    }
}

#[test]
fn deterministic_and_resumable() {
    let tmp = tempfile::tempdir().unwrap();
    let c = tmp.path().join("c");
    corpus(&c, 2);
    let cfg = small_cfg();
    let out1 = tmp.path().join("o1");
    let out2 = tmp.path().join("o2");
    let (r1, s1) = run_sweep_with_stats(&cfg, &c, &out1).unwrap();
    let serial = SweepConfig { jobs: Some(1), ..cfg.clone() };
    run_sweep(&serial, &c, &out2).unwrap();
    let bytes1 = fs::read(out1.join(RESULT_FILE)).unwrap();
    assert_eq!(bytes1, fs::read(out2.join(RESULT_FILE)).unwrap());
    assert!(s1.encodes > 0);

    // simulate an interrupted run: half the cache and the result are gone
    fs::remove_file(out1.join(RESULT_FILE)).unwrap();
    let mut entries: Vec<_> = fs::read_dir(out1.join("cache")).unwrap().map(|e| e.unwrap().path()).collect();
    entries.sort();
    let removed = entries.len() / 2;
    for e in &entries[..removed] {
        fs::remove_dir_all(e).unwrap();
    }
    let (r3, s3) = run_sweep_with_stats(&cfg, &c, &out1).unwrap();
    assert_eq!(r3, r1);
    assert_eq!(fs::read(out1.join(RESULT_FILE)).unwrap(), bytes1);
    assert!(s3.reused > 0);
    assert!(s3.encodes < s1.encodes, "{s1:?} {s3:?} removed {removed} of {}", entries.len());
    assert_eq!(SweepResult::load(&out1.join(RESULT_FILE)).unwrap(), r1);
}

#[test]
fn cell_artifacts_follow_the_layout() {
    let tmp = tempfile::tempdir().unwrap();
    corpus(&tmp.path().join("c"), 2);
    let out = tmp.path().join("out");
    let r = run_sweep(&small_cfg(), &tmp.path().join("c"), &out).unwrap();
    let dir = out.join("cells/tight/0.1/max/22");
    let map = crate::qpmap::read_qpmap(&dir.join("qpmap").join(format!("{}.txt", r.images[0]))).unwrap();
    assert!(map.qps().iter().all(|&q| q == 22 || q == 63));
    assert!(dir.join("decoded").join(format!("{}.pgm", r.images[1])).is_file());
    let bits = fs::read_to_string(dir.join("bits.txt")).unwrap();
    let cell = r.cell("tight", 0.1, QpDelta::Max).unwrap();
    assert!(bits.ends_with(&format!("mean {}\n", cell.points[2].rate)));
    assert!(out.join("cells/anchor/27/bits.txt").is_file());
}

#[test]
fn external_quality_marks_missing_cells_pending() {
    let tmp = tempfile::tempdir().unwrap();
    let c = tmp.path().join("c");
    corpus(&c, 2);
    let preds = tmp.path().join("preds");
    let gt = crate::ingest::load_ground_truth(&c.join("gt")).unwrap();
    let cfg = SweepConfig {
        thetas: vec![0.0],
        qp_deltas: vec![QpDelta::Max],
        quality: QualitySource::External(preds.clone()),
        detectors: vec![DetectorSource {
            name: "tight".into(),
            path: "detections/tight".into(),
        }],
        ..small_cfg()
    };
    // predictions for the anchor only: GT with shrinking masks as QP grows
    for (i, &qp) in cfg.qp_bases.iter().enumerate() {
        let dir = operating_point_dir(&preds, None, qp);
        fs::create_dir_all(&dir).unwrap();
        for set in &gt {
            let mut set = set.clone();
            for inst in &mut set.instances {
                let keep: Vec<usize> = inst.mask.foreground().collect();
                let n = keep.len() * (10 - 2 * i) / 10;
                inst.mask = crate::metrics::InstanceMask::from_indices(set.width, set.height, &keep[..n]).unwrap();
            }
            write_instances(&dir.join(format!("{}.json", set.image_id)), &set).unwrap();
        }
    }
    let r = run_sweep(&cfg, &c, &tmp.path().join("out")).unwrap();
    assert!(r.anchor.status.is_complete(), "{:?}", r.anchor.status);
    let cell = &r.cells[0];
    assert!(matches!(cell.status, CellStatus::Pending(_)));
    assert_eq!(cell.bdr, None);
    assert!(cell.points.iter().all(|p| p.quality.is_none() && p.rate > 0.0));
    assert_eq!(r.uncompressed_quality, None);

    // supplying the cell's predictions completes it
    for &qp in &cfg.qp_bases {
        let src = operating_point_dir(&preds, None, qp);
        let dst = operating_point_dir(&preds, Some(("tight", 0.0, QpDelta::Max)), qp);
        fs::create_dir_all(&dst).unwrap();
        for e in fs::read_dir(&src).unwrap() {
            let e = e.unwrap();
            fs::copy(e.path(), dst.join(e.file_name())).unwrap();
        }
    }
    let r = run_sweep(&cfg, &c, &tmp.path().join("out")).unwrap();
    let cell = &r.cells[0];
    assert!(cell.status.is_complete(), "{:?}", cell.status);
    assert!(cell.bdr.unwrap() < 0.0);
}

#[test]
fn inconsistent_corpus_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let c = tmp.path().join("c");
    corpus(&c, 2);
    fs::remove_file(c.join("detections/loose/img001.json")).unwrap();
    let err = run_sweep(&small_cfg(), &c, &tmp.path().join("out")).unwrap_err();
    assert!(matches!(err, Error::Validation(_)), "{err}");
}

#[test]
fn reports_have_the_expected_shape() {
    let tmp = tempfile::tempdir().unwrap();
    corpus(&tmp.path().join("c"), 2);
    let out = tmp.path().join("out");
    let r = run_sweep(&small_cfg(), &tmp.path().join("c"), &out).unwrap();
    let tables = report_tables(&r, &out).unwrap();
    assert_eq!(tables.len(), r.detectors.len() + r.thetas.len() + 1);

    let text = fs::read_to_string(out.join("tables/bdr_tight.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "qp_delta,theta=0,theta=0.1,best");
    assert_eq!(lines.len(), 1 + r.qp_deltas.len());
    for (line, &delta) in lines[1..].iter().zip(&r.qp_deltas) {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields.len(), 2 + r.thetas.len());
        // recompute the best column from the result
        let mut best: Option<(f64, f64)> = None;
        for &t in &r.thetas {
            let c = r.cell("tight", t, delta).unwrap();
            if let (true, Some(v)) = (c.status.is_complete(), c.bdr) {
                if best.is_none_or(|(_, b)| v < b) {
                    best = Some((t, v));
                }
            }
        }
        let expect = best.map(|(t, _)| format!("theta={t}")).unwrap_or_default();
        assert_eq!(fields.last().unwrap(), &expect);
    }

    let files = report_curves(&r, &out, &CurveSelection::default()).unwrap();
    assert_eq!(files.len(), 3);
    let csv = fs::read_to_string(out.join("curves/loose.csv")).unwrap();
    let cell = r.cell("loose", 0.0, QpDelta::Max).unwrap();
    for (line, (p, a)) in csv.lines().skip(1).zip(cell.points.iter().zip(&r.anchor.points)) {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f[0].parse::<u8>().unwrap(), p.qp_base);
        assert_eq!(f[1].parse::<f64>().unwrap().to_bits(), p.rate.to_bits());
        assert_eq!(f[2].parse::<f64>().unwrap().to_bits(), p.quality.unwrap().to_bits());
        assert_eq!(f[3].parse::<f64>().unwrap().to_bits(), a.rate.to_bits());
        assert_eq!(f[4].parse::<f64>().unwrap().to_bits(), a.quality.unwrap().to_bits());
    }
    let svg = fs::read_to_string(out.join("curves/rate_ap.svg")).unwrap();
    let doc = roxmltree::Document::parse(&svg).unwrap();
    let polylines = doc.descendants().filter(|n| n.has_tag_name("polyline")).count();
    assert_eq!(polylines, 3);
    assert!(svg.contains("stroke-dasharray"));
}

#[test]
fn single_cell_table_is_one_by_one() {
    let tmp = tempfile::tempdir().unwrap();
    corpus(&tmp.path().join("c"), 1);
    let cfg = SweepConfig {
        thetas: vec![0.05],
        qp_deltas: vec![QpDelta::Offset(10)],
        detectors: vec![DetectorSource {
            name: "tight".into(),
            path: "detections/tight".into(),
        }],
        ..small_cfg()
    };
    let out = tmp.path().join("out");
    let r = run_sweep(&cfg, &tmp.path().join("c"), &out).unwrap();
    report_tables(&r, &out).unwrap();
    let text = fs::read_to_string(out.join("tables/bdr_tight.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[1].split(',').count(), 3);
    let text = fs::read_to_string(out.join("tables/detectors_theta_0.05.csv")).unwrap();
    assert_eq!(text.lines().next().unwrap(), "detector,qp_delta=10,best");
}
