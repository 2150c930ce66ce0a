//! File formats.
//!
//! All files are UTF-8 text with LF line endings and no header line.
//!
//! | file          | line                                   |
//! |---------------|----------------------------------------|
//! | detections    | `frame,x,y,w,h,score` (or JSONL object) |
//! | ground truth  | `frame,present,x,y,w,h`                |
//! | track result  | `frame,present,x,y,w,h,confidence`     |
//! | config        | `key = value`                          |
//!
//! Coordinates are top-left corner plus width/height in pixels. Reals are
//! written in shortest round-trip form, so writing then reading is exact.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;
use crate::metrics::EvalReport;
use crate::model::{Detection, FrameDetections, GroundTruth, GtEntry, Hyperparams, TrackEntry, TrackResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectionFormat {
    Csv,
    Jsonl,
}

impl DetectionFormat {
    /// `.jsonl` / `.ndjson` select JSONL; everything else is CSV.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl") | Some("ndjson") => DetectionFormat::Jsonl,
            _ => DetectionFormat::Csv,
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            DetectionFormat::Csv => "csv",
            DetectionFormat::Jsonl => "jsonl",
        }
    }
}

impl std::str::FromStr for DetectionFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(DetectionFormat::Csv),
            "jsonl" => Ok(DetectionFormat::Jsonl),
            other => Err(Error::config(format!("unknown detection format {other:?}"))),
        }
    }
}

/// Wire form of one detection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionRecord {
    pub frame: usize,
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub score: f64,
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

/// Non-blank lines with 1-based line numbers.
fn lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty())
}

fn split_fields<'a>(path: &Path, line: usize, text: &'a str, expected: usize) -> Result<Vec<&'a str>> {
    let fields: Vec<&str> = text.split(',').map(str::trim).collect();
    if fields.len() != expected {
        return Err(parse_err(
            path,
            line,
            format!("expected {expected} comma-separated fields, found {}", fields.len()),
        ));
    }
    Ok(fields)
}

fn parse_num<T: std::str::FromStr>(path: &Path, line: usize, name: &str, s: &str) -> Result<T> {
    s.parse()
        .map_err(|_| parse_err(path, line, format!("field {name}: cannot parse {s:?}")))
}

fn parse_real(path: &Path, line: usize, name: &str, s: &str) -> Result<f64> {
    let v: f64 = parse_num(path, line, name, s)?;
    if !v.is_finite() {
        return Err(parse_err(path, line, format!("field {name}: non-finite value {s:?}")));
    }
    Ok(v)
}

fn parse_flag(path: &Path, line: usize, s: &str) -> Result<bool> {
    match s {
        "0" => Ok(false),
        "1" => Ok(true),
        _ => Err(parse_err(path, line, format!("field present: expected 0 or 1, found {s:?}"))),
    }
}

fn record_box(path: &Path, line: usize, x: f64, y: f64, w: f64, h: f64) -> Result<BoundingBox> {
    if w < 0.0 || h < 0.0 {
        return Err(parse_err(
            path,
            line,
            format!("rejected record: negative extent (w={w}, h={h})"),
        ));
    }
    BoundingBox::new(x, y, w, h).map_err(|e| parse_err(path, line, format!("rejected record: {e}")))
}

pub fn read_detections(path: &Path) -> Result<Vec<FrameDetections>> {
    read_detections_as(path, DetectionFormat::from_path(path))
}

/// Reads detections, grouping by frame and materializing missing frames up
/// to the largest index as empty. Detection ids follow file order per frame.
pub fn read_detections_as(path: &Path, format: DetectionFormat) -> Result<Vec<FrameDetections>> {
    let text = read_text(path)?;
    let mut records = Vec::new();
    for (line, l) in lines(&text) {
        let rec = match format {
            DetectionFormat::Csv => {
                let f = split_fields(path, line, l, 6)?;
                DetectionRecord {
                    frame: parse_num(path, line, "frame", f[0])?,
                    x: parse_real(path, line, "x", f[1])?,
                    y: parse_real(path, line, "y", f[2])?,
                    w: parse_real(path, line, "w", f[3])?,
                    h: parse_real(path, line, "h", f[4])?,
                    score: parse_real(path, line, "score", f[5])?,
                }
            }
            DetectionFormat::Jsonl => {
                serde_json::from_str(l).map_err(|e| parse_err(path, line, e.to_string()))?
            }
        };
        if !rec.score.is_finite() {
            return Err(parse_err(path, line, "non-finite score"));
        }
        let bbox = record_box(path, line, rec.x, rec.y, rec.w, rec.h)?;
        records.push((rec.frame, bbox, rec.score));
    }
    let Some(max_frame) = records.iter().map(|r| r.0).max() else {
        return Err(Error::structural(format!("{}: no frames", path.display())));
    };
    let mut frames: Vec<FrameDetections> = (0..=max_frame).map(FrameDetections::empty).collect();
    for (frame, bbox, score) in records {
        let f = &mut frames[frame];
        let id = f.detections.len() as u32;
        f.detections.push(Detection {
            frame,
            id,
            bbox,
            score,
        });
    }
    Ok(frames)
}

pub fn write_detections(frames: &[FrameDetections], path: &Path, format: DetectionFormat) -> Result<()> {
    let mut out = String::new();
    for d in frames.iter().flat_map(|f| &f.detections) {
        let b = d.bbox;
        match format {
            DetectionFormat::Csv => {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{}",
                    d.frame,
                    b.x(),
                    b.y(),
                    b.width(),
                    b.height(),
                    d.score
                );
            }
            DetectionFormat::Jsonl => {
                let rec = DetectionRecord {
                    frame: d.frame,
                    x: b.x(),
                    y: b.y(),
                    w: b.width(),
                    h: b.height(),
                    score: d.score,
                };
                out.push_str(&serde_json::to_string(&rec).expect("record serializes"));
                out.push('\n');
            }
        }
    }
    write_text(path, &out)
}

fn check_frame(path: &Path, line: usize, expected: usize, found: usize) -> Result<()> {
    if found != expected {
        return Err(parse_err(
            path,
            line,
            format!("expected frame {expected}, found {found} (one line per frame, in order)"),
        ));
    }
    Ok(())
}

pub fn read_ground_truth(path: &Path) -> Result<GroundTruth> {
    let text = read_text(path)?;
    let mut entries = Vec::new();
    for (line, l) in lines(&text) {
        let f = split_fields(path, line, l, 6)?;
        let frame: usize = parse_num(path, line, "frame", f[0])?;
        check_frame(path, line, entries.len(), frame)?;
        let bbox = if parse_flag(path, line, f[1])? {
            let x = parse_real(path, line, "x", f[2])?;
            let y = parse_real(path, line, "y", f[3])?;
            let w = parse_real(path, line, "w", f[4])?;
            let h = parse_real(path, line, "h", f[5])?;
            Some(record_box(path, line, x, y, w, h)?)
        } else {
            None
        };
        entries.push(GtEntry { frame, bbox });
    }
    if entries.is_empty() {
        return Err(Error::structural(format!("{}: no frames", path.display())));
    }
    Ok(GroundTruth { entries })
}

pub fn write_ground_truth(gt: &GroundTruth, path: &Path) -> Result<()> {
    let mut out = String::new();
    for e in &gt.entries {
        match e.bbox {
            Some(b) => {
                let _ = writeln!(out, "{},1,{},{},{},{}", e.frame, b.x(), b.y(), b.width(), b.height());
            }
            None => {
                let _ = writeln!(out, "{},0,0,0,0,0", e.frame);
            }
        }
    }
    write_text(path, &out)
}

pub fn format_track(track: &TrackResult) -> String {
    let mut out = String::new();
    for e in &track.entries {
        match e.bbox {
            Some(b) => {
                let _ = writeln!(
                    out,
                    "{},1,{},{},{},{},{}",
                    e.frame,
                    b.x(),
                    b.y(),
                    b.width(),
                    b.height(),
                    e.confidence
                );
            }
            None => {
                let _ = writeln!(out, "{},0,0,0,0,0,0", e.frame);
            }
        }
    }
    out
}

pub fn write_track(track: &TrackResult, path: &Path) -> Result<()> {
    write_text(path, &format_track(track))
}

pub fn read_track(path: &Path) -> Result<TrackResult> {
    let text = read_text(path)?;
    let mut entries = Vec::new();
    for (line, l) in lines(&text) {
        let f = split_fields(path, line, l, 7)?;
        let frame: usize = parse_num(path, line, "frame", f[0])?;
        check_frame(path, line, entries.len(), frame)?;
        let confidence = parse_real(path, line, "confidence", f[6])?;
        if parse_flag(path, line, f[1])? {
            let x = parse_real(path, line, "x", f[2])?;
            let y = parse_real(path, line, "y", f[3])?;
            let w = parse_real(path, line, "w", f[4])?;
            let h = parse_real(path, line, "h", f[5])?;
            entries.push(TrackEntry::present(frame, record_box(path, line, x, y, w, h)?, confidence));
        } else {
            if confidence != 0.0 {
                return Err(parse_err(path, line, "absent entry must carry confidence 0"));
            }
            entries.push(TrackEntry::absent(frame));
        }
    }
    Ok(TrackResult { entries })
}

/// Parses flat `key = value` config text; absent keys take defaults.
pub fn parse_config(text: &str) -> Result<Hyperparams> {
    let params: Hyperparams = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
    params.validate()?;
    Ok(params)
}

pub fn load_config(path: &Path) -> Result<Hyperparams> {
    parse_config(&read_text(path)?).map_err(|e| match e {
        Error::Config(msg) => Error::config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn format_config(params: &Hyperparams) -> String {
    toml::to_string(params).expect("hyperparams serialize")
}

pub fn save_config(params: &Hyperparams, path: &Path) -> Result<()> {
    write_text(path, &format_config(params))
}

/// Parses `x,y,w,h`.
pub fn parse_box(s: &str) -> Result<BoundingBox> {
    let f: Vec<&str> = s.split(',').map(str::trim).collect();
    if f.len() != 4 {
        return Err(Error::config(format!("expected x,y,w,h, got {s:?}")));
    }
    let mut v = [0.0; 4];
    for (slot, text) in v.iter_mut().zip(&f) {
        *slot = text
            .parse()
            .map_err(|_| Error::config(format!("cannot parse {text:?} in box {s:?}")))?;
    }
    Ok(BoundingBox::new(v[0], v[1], v[2], v[3])?)
}

/// Files written by [`write_report`].
pub struct ReportFiles {
    pub json: PathBuf,
    pub lt_curve: PathBuf,
    pub success: PathBuf,
    pub precision: PathBuf,
}

/// Writes `report.json` plus `lt_curve.csv`, `success.csv` and
/// `precision.csv` (each with a header line) into `dir`.
pub fn write_report(report: &EvalReport, dir: &Path) -> Result<ReportFiles> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = ReportFiles {
        json: dir.join("report.json"),
        lt_curve: dir.join("lt_curve.csv"),
        success: dir.join("success.csv"),
        precision: dir.join("precision.csv"),
    };
    let json = serde_json::to_string_pretty(report).expect("report serializes");
    write_text(&files.json, &(json + "\n"))?;

    let mut lt = String::from("threshold,precision,recall,f\n");
    for p in &report.lt_curve {
        let _ = writeln!(lt, "{},{},{},{}", p.threshold, p.precision, p.recall, p.f);
    }
    write_text(&files.lt_curve, &lt)?;

    let mut s = String::from("overlap_threshold,success_rate\n");
    for (th, v) in &report.success_curve {
        let _ = writeln!(s, "{th},{v}");
    }
    write_text(&files.success, &s)?;

    let mut p = String::from("pixel_threshold,precision_rate\n");
    for (th, v) in &report.precision_curve {
        let _ = writeln!(p, "{th},{v}");
    }
    write_text(&files.precision, &p)?;
    Ok(files)
}

pub fn read_report(path: &Path) -> Result<EvalReport> {
    serde_json::from_str(&read_text(path)?).map_err(|e| parse_err(path, e.line(), e.to_string()))
}
