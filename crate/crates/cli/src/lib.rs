//! Command implementations behind the `boltrack` binary.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use boltrack::io::{self, DetectionFormat};
use boltrack::metrics::{self, EvalReport};
use boltrack::synth::{self, ScenarioSpec};
use boltrack::{par, rescore, validate_sequence, BoundingBox, GroundTruth, Hyperparams, TrackResult};
use serde::Deserialize;
use thiserror::Error;

pub mod sweep;

pub use sweep::{cmd_sweep, SweepOutcome, SweepSpec};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Io(_) => 2,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Validation(_) => "validation",
            CliError::Io(_) => "io",
        }
    }
}

impl From<boltrack::Error> for CliError {
    fn from(e: boltrack::Error) -> Self {
        if e.is_io() {
            CliError::Io(e.to_string())
        } else {
            CliError::Validation(e.to_string())
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub(crate) fn io_err(path: &Path, e: std::io::Error) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

/// Loads the config, or defaults when no path is given.
pub fn resolve_params(config: Option<&Path>, boundary_single_term: bool) -> CliResult<Hyperparams> {
    let mut params = match config {
        Some(p) => io::load_config(p)?,
        None => {
            log::info!("no --config given; using default hyperparameters");
            Hyperparams::default()
        }
    };
    if boundary_single_term {
        params.boundary_length_weighting = false;
    }
    Ok(params)
}

/// Where the first-frame box comes from.
#[derive(Debug, Clone)]
pub enum FirstBox {
    Literal(BoundingBox),
    FromGroundTruth(PathBuf),
}

impl FirstBox {
    pub fn resolve(&self) -> CliResult<BoundingBox> {
        match self {
            FirstBox::Literal(b) => Ok(*b),
            FirstBox::FromGroundTruth(p) => io::read_ground_truth(p)?
                .first_box()
                .ok_or_else(|| CliError::Validation(format!("{}: target absent on frame 0", p.display()))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrackArgs {
    pub detections: PathBuf,
    pub format: Option<DetectionFormat>,
    pub first_box: FirstBox,
    pub config: Option<PathBuf>,
    pub output: PathBuf,
    pub no_rescoring: bool,
    pub boundary_single_term: bool,
}

/// Runs the tracker over one detection file and writes the track.
pub fn cmd_track(args: &TrackArgs) -> CliResult<TrackResult> {
    let params = resolve_params(args.config.as_deref(), args.boundary_single_term)?;
    let first_box = args.first_box.resolve()?;
    let format = args.format.unwrap_or_else(|| DetectionFormat::from_path(&args.detections));
    let frames = io::read_detections_as(&args.detections, format)?;
    let seq = validate_sequence(frames, first_box, &params)?;
    let track = if args.no_rescoring {
        rescore::run_no_rescoring(&seq)
    } else {
        rescore::run_sequence(&seq, &params)?
    };
    io::write_track(&track, &args.output)?;
    log::info!("wrote {} frames to {}", track.len(), args.output.display());
    Ok(track)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMode {
    Vos,
    Lt,
    Otb,
}

impl std::str::FromStr for EvalMode {
    type Err = CliError;

    fn from_str(s: &str) -> CliResult<Self> {
        match s {
            "vos" => Ok(EvalMode::Vos),
            "lt" => Ok(EvalMode::Lt),
            "otb" => Ok(EvalMode::Otb),
            other => Err(CliError::Validation(format!("unknown eval mode {other:?}"))),
        }
    }
}

/// One-line summary of the metric a mode ranks by.
pub fn headline(report: &EvalReport, mode: EvalMode) -> String {
    match mode {
        EvalMode::Vos => format!("j_box={}", report.j_box),
        EvalMode::Lt => format!("max_f={}", report.max_f),
        EvalMode::Otb => format!(
            "success_auc={} precision_at_20={}",
            report.success_auc, report.precision_at_20
        ),
    }
}

/// Evaluates a track file against ground truth and writes the report files.
pub fn cmd_eval(track: &Path, gt: &Path, mode: EvalMode, out_dir: &Path) -> CliResult<EvalReport> {
    let pred = io::read_track(track)?;
    let truth = io::read_ground_truth(gt)?;
    if mode == EvalMode::Otb && truth.entries.iter().any(|e| e.bbox.is_none()) {
        log::warn!("ground truth has absent frames; otb curves cover present frames only");
    }
    let report = metrics::evaluate(&pred, &truth)?;
    io::write_report(&report, out_dir)?;
    Ok(report)
}

#[derive(Debug, Clone)]
pub struct GenArgs {
    pub spec: Option<PathBuf>,
    pub preset_lt: bool,
    pub seed: Option<u64>,
    pub format: DetectionFormat,
    pub out_dir: PathBuf,
}

pub fn load_scenario_spec(path: &Path) -> CliResult<ScenarioSpec> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let spec: ScenarioSpec =
        toml::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    Ok(spec)
}

/// Paths written by [`cmd_gen`].
#[derive(Debug, Clone)]
pub struct GenFiles {
    pub detections: PathBuf,
    pub ground_truth: PathBuf,
    pub scenario: PathBuf,
}

/// Generates a synthetic scenario into `out_dir`.
pub fn cmd_gen(args: &GenArgs) -> CliResult<GenFiles> {
    let mut spec = match (&args.spec, args.preset_lt) {
        (Some(p), false) => load_scenario_spec(p)?,
        (None, true) => ScenarioSpec::long_term(args.seed.unwrap_or(0)),
        (None, false) => ScenarioSpec::default(),
        (Some(_), true) => {
            return Err(CliError::Validation("use either --spec or --preset, not both".into()));
        }
    };
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    let scenario = synth::generate(&spec)?;
    fs::create_dir_all(&args.out_dir).map_err(|e| io_err(&args.out_dir, e))?;
    let files = GenFiles {
        detections: args.out_dir.join(format!("detections.{}", args.format.extension())),
        ground_truth: args.out_dir.join("gt.csv"),
        scenario: args.out_dir.join("scenario.toml"),
    };
    io::write_detections(&scenario.frames, &files.detections, args.format)?;
    io::write_ground_truth(&scenario.ground_truth, &files.ground_truth)?;
    let text = toml::to_string(&spec).expect("scenario spec serializes");
    fs::write(&files.scenario, text).map_err(|e| io_err(&files.scenario, e))?;
    Ok(files)
}

/// A training sequence: detections plus ground truth.
#[derive(Debug, Clone)]
pub struct SequenceData {
    pub name: String,
    pub frames: Vec<boltrack::FrameDetections>,
    pub ground_truth: GroundTruth,
}

/// Loads `<dir>/<name>/detections.{csv,jsonl}` and `<dir>/<name>/gt.csv`.
pub fn load_sequence_dir(dir: &Path, name: &str) -> CliResult<SequenceData> {
    let root = dir.join(name);
    let csv = root.join("detections.csv");
    let jsonl = root.join("detections.jsonl");
    let det_path = if csv.exists() { csv } else { jsonl };
    Ok(SequenceData {
        name: name.to_string(),
        frames: io::read_detections(&det_path)?,
        ground_truth: io::read_ground_truth(&root.join("gt.csv"))?,
    })
}

/// Names of the sequence subdirectories of `dir`, sorted.
pub fn list_sequences(dir: &Path) -> CliResult<Vec<String>> {
    let mut names = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| io_err(dir, e))? {
        let entry = entry.map_err(|e| io_err(dir, e))?;
        if entry.path().join("gt.csv").exists() {
            names.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    names.sort();
    Ok(names)
}

/// Runs the tracker on many sequences and averages their reports.
pub fn evaluate_sequences(seqs: &[SequenceData], params: &Hyperparams, no_rescoring: bool) -> CliResult<EvalReport> {
    let reports = par::map(seqs, |s| -> CliResult<EvalReport> {
        let first = s
            .ground_truth
            .first_box()
            .ok_or_else(|| CliError::Validation(format!("{}: target absent on frame 0", s.name)))?;
        let seq = validate_sequence(s.frames.clone(), first, params)?;
        let track = if no_rescoring {
            rescore::run_no_rescoring(&seq)
        } else {
            rescore::run_sequence(&seq, params)?
        };
        Ok(metrics::evaluate(&track, &s.ground_truth)?)
    })
    .into_iter()
    .collect::<CliResult<Vec<_>>>()?;
    Ok(metrics::summarize(&reports)?)
}

pub(crate) fn parse_toml_file<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    toml::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

pub(crate) fn overrides_to_params(base: &Hyperparams, overrides: &BTreeMap<String, toml::Value>) -> CliResult<Hyperparams> {
    let mut table = match toml::Value::try_from(base) {
        Ok(toml::Value::Table(t)) => t,
        _ => unreachable!("hyperparams serialize to a table"),
    };
    for (k, v) in overrides {
        table.insert(k.clone(), v.clone());
    }
    let params: Hyperparams = toml::Value::Table(table)
        .try_into()
        .map_err(|e| CliError::Validation(format!("grid point: {e}")))?;
    params.validate()?;
    Ok(params)
}
