//! `vcm`: command-line front end for saliency-driven QP adaptation.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 external tool error.
//! Diagnostics go to stderr; results go to files or stdout.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use vcm_core::bdrate::{bd_rate, load_curves_csv};
use vcm_core::codec::{read_pgm, write_pgm, Codec, CommandTemplate};
use vcm_core::experiment::{
    report_curves, report_tables, run_sweep_with_stats, CurveSelection, SweepConfig, SweepResult,
};
use vcm_core::geometry::{decide_saliency, CtuGrid, SaliencyMask};
use vcm_core::ingest::{load_detections, load_ground_truth, ClassMap, CITYSCAPES_CLASSES};
use vcm_core::metrics::{default_iou_thresholds, weighted_ap};
use vcm_core::qpmap::{assign_qps, read_qpmap, write_qpmap, QpDelta};
use vcm_core::Error;

#[derive(Parser)]
#[command(name = "vcm", version, about = "Saliency-driven QP adaptation: decide, encode, evaluate, sweep")]
struct Cli {
    /// Accepted for harness compatibility and ignored: every command is deterministic.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Mark salient CTUs from detection boxes and write a saliency mask (JSON).
    Decide(DecideArgs),
    /// Turn a saliency mask into a per-CTU QP map sidecar.
    Qpmap(QpmapArgs),
    /// Encode a PGM image with a QP map; prints the coded size in bits.
    Encode(EncodeArgs),
    /// Weighted AP of instance predictions against ground truth.
    EvalAp(EvalApArgs),
    /// BD-rate of test curve(s) against an anchor curve, in percent.
    Bdrate(BdrateArgs),
    /// Run the full (detector, theta, qp_delta, qp_base) sweep over a corpus.
    Sweep(SweepArgs),
    /// Write tables and curve plots from a sweep result.
    Report(ReportArgs),
}

#[derive(Args)]
struct DecideArgs {
    /// Image size as WIDTHxHEIGHT.
    #[arg(long, value_parser = parse_size)]
    image_size: (u32, u32),
    /// CTU edge length in pixels.
    #[arg(long, default_value_t = 128)]
    ctu: u32,
    /// Detection file or directory (vcm-det/1).
    #[arg(long)]
    dets: PathBuf,
    /// Relative-overlap threshold in [0, 1).
    #[arg(long)]
    theta: f64,
    #[arg(long)]
    out: PathBuf,
    /// Record to use when the detection input holds several images.
    #[arg(long)]
    image_id: Option<String>,
    /// Two-column label mapping file; default maps onto the Cityscapes classes.
    #[arg(long)]
    class_map: Option<PathBuf>,
    /// Drop detections scoring below this value.
    #[arg(long, default_value_t = 0.0)]
    min_score: f64,
}

#[derive(Args)]
struct QpmapArgs {
    /// Saliency mask JSON written by `decide`.
    #[arg(long)]
    mask: PathBuf,
    #[arg(long)]
    qp_base: i64,
    /// Non-negative offset for non-salient CTUs, or "max" for QP 63.
    #[arg(long)]
    qp_delta: QpDelta,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "image")]
    image_id: String,
}

#[derive(Args)]
struct EncodeArgs {
    /// Input image (binary PGM).
    #[arg(long)]
    image: PathBuf,
    /// QP map sidecar.
    #[arg(long)]
    qpmap: PathBuf,
    /// Decoded image output (PGM).
    #[arg(long)]
    out: PathBuf,
    /// External codec template; the built-in mock codec is used without it.
    #[arg(long)]
    template: Option<PathBuf>,
    /// Scratch directory for external codecs (default: a directory next to --out).
    #[arg(long)]
    workdir: Option<PathBuf>,
}

#[derive(Args)]
struct EvalApArgs {
    /// Ground-truth instance file or directory (vcm-inst/1).
    #[arg(long)]
    gt: PathBuf,
    /// Predicted instance file or directory (vcm-inst/1).
    #[arg(long)]
    pred: PathBuf,
    /// Comma-separated evaluation classes (default: the Cityscapes classes).
    #[arg(long, value_delimiter = ',')]
    classes: Option<Vec<String>>,
    /// Also write the report as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Write the per-class CSV here instead of stdout.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct BdrateArgs {
    /// CSV with one curve: name,label,rate,quality.
    #[arg(long)]
    anchor: PathBuf,
    /// CSV with one or more test curves.
    #[arg(long)]
    test: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    /// Sweep config (TOML); defaults to the standard grid with the mock codec.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Corpus directory with images/, gt/ and detections/.
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Worker threads (default: available processors).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct ReportArgs {
    /// result.json written by `sweep`.
    #[arg(long)]
    result: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Theta of the cells drawn in the curve plot (default: first swept).
    #[arg(long)]
    theta: Option<f64>,
    /// QP delta of the cells drawn in the curve plot (default: max, else last swept).
    #[arg(long)]
    qp_delta: Option<QpDelta>,
    /// Weighted AP on uncompressed input, drawn as a dotted reference line.
    #[arg(long)]
    uncompressed_quality: Option<f64>,
}

fn parse_size(s: &str) -> Result<(u32, u32), String> {
    let (w, h) = s.split_once(['x', 'X']).ok_or("expected WIDTHxHEIGHT")?;
    let w = w.parse().map_err(|_| format!("bad width {w:?}"))?;
    let h = h.parse().map_err(|_| format!("bad height {h:?}"))?;
    Ok((w, h))
}

type CmdResult = Result<(), Error>;

fn write_text(path: &Path, text: &str) -> CmdResult {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn class_map(path: Option<&Path>) -> Result<ClassMap, Error> {
    match path {
        Some(p) => ClassMap::load(p, &CITYSCAPES_CLASSES),
        None => Ok(ClassMap::cityscapes()),
    }
}

fn decide(a: DecideArgs) -> CmdResult {
    let map = class_map(a.class_map.as_deref())?;
    let records = load_detections(&a.dets, &map, a.min_score)?;
    let record = match &a.image_id {
        Some(id) => records
            .iter()
            .find(|r| &r.image_id == id)
            .ok_or_else(|| Error::Validation(format!("no detections for image {id} in {}", a.dets.display())))?,
        None => match records.as_slice() {
            [r] => r,
            _ => {
                return Err(Error::Validation(format!(
                    "{} holds {} records; pick one with --image-id",
                    a.dets.display(),
                    records.len()
                )))
            }
        },
    };
    if (record.width, record.height) != a.image_size {
        return Err(Error::Dimension(format!(
            "--image-size is {}x{} but detections for {} are {}x{}",
            a.image_size.0, a.image_size.1, record.image_id, record.width, record.height
        )));
    }
    let grid = CtuGrid::new(a.image_size.0, a.image_size.1, a.ctu)?;
    let mask = decide_saliency(&grid, &record.boxes(), a.theta)?;
    let json = serde_json::to_string_pretty(&mask).expect("mask serializes");
    write_text(&a.out, &(json + "\n"))
}

fn qpmap(a: QpmapArgs) -> CmdResult {
    let text = fs::read_to_string(&a.mask).map_err(|e| io_err(&a.mask, e))?;
    let mask: SaliencyMask = serde_json::from_str(&text).map_err(|e| Error::Parse {
        context: a.mask.display().to_string(),
        message: e.to_string(),
    })?;
    let map = assign_qps(&a.image_id, &mask, a.qp_base, a.qp_delta)?;
    write_qpmap(&map, &a.out)
}

fn encode(a: EncodeArgs) -> CmdResult {
    let img = read_pgm(&a.image)?;
    let map = read_qpmap(&a.qpmap)?;
    let codec = match &a.template {
        Some(t) => Codec::External(CommandTemplate::load(t)?),
        None => Codec::Mock,
    };
    let workdir = a.workdir.clone().unwrap_or_else(|| {
        let mut name = a.out.file_name().unwrap_or_default().to_os_string();
        name.push(".work");
        a.out.with_file_name(name)
    });
    if matches!(codec, Codec::External(_)) {
        fs::create_dir_all(&workdir).map_err(|e| io_err(&workdir, e))?;
    }
    let result = codec.encode(&img, &map, &workdir)?;
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    write_pgm(&result.decoded, &a.out)?;
    println!("{}", result.bits);
    Ok(())
}

fn eval_ap(a: EvalApArgs) -> CmdResult {
    let gts = load_ground_truth(&a.gt)?;
    let preds = load_ground_truth(&a.pred)?;
    let classes = a
        .classes
        .unwrap_or_else(|| CITYSCAPES_CLASSES.iter().map(|s| s.to_string()).collect());
    let report = weighted_ap(&preds, &gts, &classes, &default_iou_thresholds())?;
    match &a.csv {
        Some(p) => write_text(p, &report.to_csv())?,
        None => print!("{}", report.to_csv()),
    }
    if let Some(p) = &a.json {
        write_text(p, &(serde_json::to_string_pretty(&report).expect("report serializes") + "\n"))?;
    }
    Ok(())
}

fn bdrate(a: BdrateArgs) -> CmdResult {
    let anchors = load_curves_csv(&a.anchor)?;
    let [anchor] = anchors.as_slice() else {
        return Err(Error::Validation(format!(
            "{} must hold exactly one curve, found {}",
            a.anchor.display(),
            anchors.len()
        )));
    };
    let tests = load_curves_csv(&a.test)?;
    if let [test] = tests.as_slice() {
        println!("{:.6}", bd_rate(test, anchor)?);
    } else {
        for t in &tests {
            println!("{},{:.6}", t.name(), bd_rate(t, anchor)?);
        }
    }
    Ok(())
}

fn sweep(a: SweepArgs) -> CmdResult {
    let mut cfg = match &a.config {
        Some(p) => SweepConfig::load(p)?,
        None => SweepConfig::default(),
    };
    if a.jobs.is_some() {
        cfg.jobs = a.jobs;
    }
    let (result, stats) = run_sweep_with_stats(&cfg, &a.corpus, &a.out)?;
    report_tables(&result, &a.out)?;
    let sel = CurveSelection {
        theta: cfg.curve_theta,
        qp_delta: cfg.curve_delta,
        uncompressed_quality: None,
    };
    report_curves(&result, &a.out, &sel)?;
    let complete = result.cells.iter().filter(|c| c.status.is_complete()).count();
    eprintln!(
        "sweep: {} images, {complete}/{} cells complete, {} encodes, {} reused from cache",
        result.images.len(),
        result.cells.len(),
        stats.encodes,
        stats.reused
    );
    Ok(())
}

fn report(a: ReportArgs) -> CmdResult {
    let result = SweepResult::load(&a.result)?;
    report_tables(&result, &a.out)?;
    let sel = CurveSelection {
        theta: a.theta,
        qp_delta: a.qp_delta,
        uncompressed_quality: a.uncompressed_quality,
    };
    report_curves(&result, &a.out, &sel)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let _ = cli.seed;
    let outcome = match cli.command {
        Command::Decide(a) => decide(a),
        Command::Qpmap(a) => qpmap(a),
        Command::Encode(a) => encode(a),
        Command::EvalAp(a) => eval_ap(a),
        Command::Bdrate(a) => bdrate(a),
        Command::Sweep(a) => sweep(a),
        Command::Report(a) => report(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("vcm: {e}");
            ExitCode::from(if e.is_external() { 3 } else { 2 })
        }
    }
}
