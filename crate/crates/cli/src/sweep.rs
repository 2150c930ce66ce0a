//! Grid search over hyperparameters on a set of training sequences.
//!
//! A sweep spec is a small TOML file:
//!
//! ```toml
//! objective = "j_box"          # or "max_f", "success_auc"
//! sequences = ["seq_a"]        # optional; default: every subdirectory with a gt.csv
//!
//! [grid]
//! w_bnd = [0.5, 1.0]
//! alpha_bnd = [0.0, 0.1]
//! ```
//!
//! Grid keys are config keys. Points are ranked by objective, highest first;
//! ties go to the lexicographically smallest value tuple, with keys in
//! alphabetical order.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use boltrack::{io, par, EvalReport, Hyperparams};
use serde::Deserialize;

use crate::{evaluate_sequences, io_err, list_sequences, load_sequence_dir, overrides_to_params, parse_toml_file, CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    JBox,
    MaxF,
    SuccessAuc,
}

impl Objective {
    pub fn of(self, report: &EvalReport) -> f64 {
        match self {
            Objective::JBox => report.j_box,
            Objective::MaxF => report.max_f,
            Objective::SuccessAuc => report.success_auc,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub objective: Objective,
    #[serde(default)]
    pub sequences: Vec<String>,
    pub grid: BTreeMap<String, Vec<toml::Value>>,
}

impl SweepSpec {
    pub fn load(path: &Path) -> CliResult<Self> {
        parse_toml_file(path)
    }

    /// Cartesian product of the grid, keys in alphabetical order.
    pub fn points(&self) -> CliResult<Vec<BTreeMap<String, toml::Value>>> {
        if self.grid.is_empty() {
            return Err(CliError::Validation("sweep grid is empty".into()));
        }
        let mut points = vec![BTreeMap::new()];
        for (key, values) in &self.grid {
            if values.is_empty() {
                return Err(CliError::Validation(format!("grid key {key} has no values")));
            }
            points = points
                .into_iter()
                .flat_map(|p| {
                    values.iter().map(move |v| {
                        let mut q = p.clone();
                        q.insert(key.clone(), v.clone());
                        q
                    })
                })
                .collect();
        }
        Ok(points)
    }
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub point: BTreeMap<String, toml::Value>,
    pub params: Hyperparams,
    pub objective: f64,
}

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    /// Ranked best first.
    pub leaderboard: Vec<SweepRow>,
    pub best_config: PathBuf,
    pub leaderboard_csv: PathBuf,
}

impl SweepOutcome {
    pub fn best(&self) -> &SweepRow {
        &self.leaderboard[0]
    }
}

fn value_cmp(a: &toml::Value, b: &toml::Value) -> Ordering {
    use toml::Value::*;
    let num = |v: &toml::Value| match v {
        Integer(i) => Some(*i as f64),
        Float(f) => Some(*f),
        Boolean(b) => Some(f64::from(u8::from(*b))),
        _ => None,
    };
    match (num(a), num(b)) {
        (Some(x), Some(y)) => x.total_cmp(&y),
        _ => a.to_string().cmp(&b.to_string()),
    }
}

fn rank(rows: &mut [SweepRow]) {
    rows.sort_by(|a, b| {
        b.objective.total_cmp(&a.objective).then_with(|| {
            a.point
                .values()
                .zip(b.point.values())
                .map(|(x, y)| value_cmp(x, y))
                .find(|o| o.is_ne())
                .unwrap_or(Ordering::Equal)
        })
    });
}

fn csv_value(v: &toml::Value) -> String {
    match v {
        toml::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Evaluates every grid point on the training sequences, writes
/// `best.toml` and `leaderboard.csv` into `out_dir`.
pub fn cmd_sweep(
    spec: &SweepSpec,
    data_dir: &Path,
    base: &Hyperparams,
    jobs: Option<usize>,
    out_dir: &Path,
) -> CliResult<SweepOutcome> {
    let points = spec.points()?;
    let names = if spec.sequences.is_empty() {
        list_sequences(data_dir)?
    } else {
        spec.sequences.clone()
    };
    if names.is_empty() {
        return Err(CliError::Validation(format!(
            "{}: no training sequences found",
            data_dir.display()
        )));
    }
    let seqs = names
        .iter()
        .map(|n| load_sequence_dir(data_dir, n))
        .collect::<CliResult<Vec<_>>>()?;
    let candidates = points
        .into_iter()
        .map(|p| overrides_to_params(base, &p).map(|params| (p, params)))
        .collect::<CliResult<Vec<_>>>()?;
    log::info!(
        "sweeping {} grid points over {} sequences",
        candidates.len(),
        seqs.len()
    );

    let scores = par::with_jobs(jobs, || {
        par::map(&candidates, |(_, params)| evaluate_sequences(&seqs, params, false))
    });
    let mut rows = Vec::with_capacity(candidates.len());
    for ((point, params), report) in candidates.into_iter().zip(scores) {
        rows.push(SweepRow {
            point,
            params,
            objective: spec.objective.of(&report?),
        });
    }
    rank(&mut rows);

    fs::create_dir_all(out_dir).map_err(|e| io_err(out_dir, e))?;
    let best_config = out_dir.join("best.toml");
    io::save_config(&rows[0].params, &best_config)?;

    let leaderboard_csv = out_dir.join("leaderboard.csv");
    let mut text = String::from("rank");
    for key in rows[0].point.keys() {
        text.push(',');
        text.push_str(key);
    }
    text.push_str(",objective\n");
    for (i, row) in rows.iter().enumerate() {
        let _ = write!(text, "{}", i + 1);
        for v in row.point.values() {
            let _ = write!(text, ",{}", csv_value(v));
        }
        let _ = writeln!(text, ",{}", row.objective);
    }
    fs::write(&leaderboard_csv, text).map_err(|e| io_err(&leaderboard_csv, e))?;

    Ok(SweepOutcome {
        leaderboard: rows,
        best_config,
        leaderboard_csv,
    })
}
