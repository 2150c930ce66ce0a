use std::path::PathBuf;
use std::process::ExitCode;

use boltrack::io::{self, DetectionFormat};
use boltrack_cli::{
    cmd_eval, cmd_gen, cmd_sweep, cmd_track, headline, resolve_params, CliError, CliResult, EvalMode, FirstBox,
    GenArgs, SweepSpec, TrackArgs,
};
use clap::{ArgGroup, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "boltrack", version, about = "Temporal-consistency box tracking: track, evaluate, generate, sweep")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Rescore a detection stream into a single-object track.
    #[command(group(ArgGroup::new("first").required(true).args(["first_box", "first_box_gt"])))]
    Track {
        #[arg(long)]
        detections: PathBuf,
        /// First-frame box as x,y,w,h.
        #[arg(long, value_parser = parse_box, allow_hyphen_values = true)]
        first_box: Option<boltrack::BoundingBox>,
        /// Take the first-frame box from frame 0 of a ground-truth file.
        #[arg(long)]
        first_box_gt: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Detection encoding; inferred from the extension when omitted.
        #[arg(long, value_parser = parse_format)]
        format: Option<DetectionFormat>,
        #[arg(long)]
        output: PathBuf,
        /// Output the top-scoring detection per frame instead.
        #[arg(long)]
        no_rescoring: bool,
        /// Count the boundary term once instead of once per predecessor frame.
        #[arg(long)]
        boundary_single_term: bool,
    },
    /// Score a track file against ground truth.
    Eval {
        #[arg(long)]
        track: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, value_parser = parse_mode)]
        mode: EvalMode,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Generate a synthetic scenario.
    Gen {
        #[arg(long, conflicts_with = "preset")]
        spec: Option<PathBuf>,
        /// Built-in scenario preset ("lt").
        #[arg(long, value_parser = ["lt"])]
        preset: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_parser = parse_format, default_value = "csv")]
        format: DetectionFormat,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Grid-search hyperparameters over training sequences.
    Sweep {
        #[arg(long)]
        sweep: PathBuf,
        #[arg(long)]
        data_dir: PathBuf,
        /// Base config the grid overrides.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        boundary_single_term: bool,
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

fn parse_box(s: &str) -> Result<boltrack::BoundingBox, String> {
    io::parse_box(s).map_err(|e| e.to_string())
}

fn parse_format(s: &str) -> Result<DetectionFormat, String> {
    s.parse().map_err(|e: boltrack::Error| e.to_string())
}

fn parse_mode(s: &str) -> Result<EvalMode, String> {
    s.parse().map_err(|e: CliError| e.to_string())
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Track {
            detections,
            first_box,
            first_box_gt,
            config,
            format,
            output,
            no_rescoring,
            boundary_single_term,
        } => {
            let first_box = match (first_box, first_box_gt) {
                (Some(b), _) => FirstBox::Literal(b),
                (None, Some(p)) => FirstBox::FromGroundTruth(p),
                (None, None) => unreachable!("clap enforces one of the two"),
            };
            cmd_track(&TrackArgs {
                detections,
                format,
                first_box,
                config,
                output,
                no_rescoring,
                boundary_single_term,
            })?;
        }
        Command::Eval {
            track,
            gt,
            mode,
            out_dir,
        } => {
            let report = cmd_eval(&track, &gt, mode, &out_dir)?;
            println!("{}", headline(&report, mode));
        }
        Command::Gen {
            spec,
            preset,
            seed,
            format,
            out_dir,
        } => {
            let files = cmd_gen(&GenArgs {
                spec,
                preset_lt: preset.is_some(),
                seed,
                format,
                out_dir,
            })?;
            log::info!(
                "wrote {} and {}",
                files.detections.display(),
                files.ground_truth.display()
            );
        }
        Command::Sweep {
            sweep,
            data_dir,
            config,
            boundary_single_term,
            jobs,
            out_dir,
        } => {
            let spec = SweepSpec::load(&sweep)?;
            let base = resolve_params(config.as_deref(), boundary_single_term)?;
            let outcome = cmd_sweep(&spec, &data_dir, &base, jobs, &out_dir)?;
            let best = outcome.best();
            let point: Vec<String> = best.point.iter().map(|(k, v)| format!("{k}={v}")).collect();
            println!("best objective={} {}", best.objective, point.join(" "));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("BOLTRACK_LOG", "info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error kind={} code={} msg={:?}", e.kind(), e.exit_code(), e.to_string());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
