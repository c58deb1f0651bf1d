//! The batch pipeline: results CSV in, report directory out.
//!
//! Output layout under `--out-dir`:
//!
//! ```text
//! election_table.csv    per-election metrics at display precision
//! election_table.json   the same rows at full precision
//! cycles.json           per-cycle summaries and the persistence rate
//! extremes.csv          rows ranked by most positive / most negative
//! model.json            imputation policy and any fitted models
//! errors.json           malformed rows, unresolvable elections, exclusions
//! sensitivity.json      written when --shift is given
//! svg/                  one declination diagram per election (--svg)
//! ```
//!
//! Files are written atomically (temp file plus rename) and every byte is
//! a deterministic function of the inputs, the flags, and the seed.

use crate::CliError;
use declination::impute::{
    fit_partitions, resolve_groups, sensitivity_shift, FitConfig, GroupError, ImputePolicy,
    LambdaSelection, ModelSet,
};
use declination::ingest::{
    group_elections, parse_results, CycleTable, ElectionGroup, GroupKey, RowError,
};
use declination::report::{
    cycle_summary, declination_diagram, election_table, extremes, metric_r_squared,
    persistence_rate, tau_label, write_extremes_csv, write_table_csv, CycleSummary, ElectionRow,
};
use serde::Serialize;
use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq)]
pub enum ImputeChoice {
    Model,
    Uniform(f64),
    Disabled,
}

impl std::str::FromStr for ImputeChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "model" => Ok(ImputeChoice::Model),
            "none" => Ok(ImputeChoice::Disabled),
            _ => match s.strip_prefix("uniform:") {
                Some(w) => {
                    let w: f64 = w
                        .parse()
                        .map_err(|_| format!("bad winner share in {s:?}"))?;
                    if (0.0..=1.0).contains(&w) {
                        Ok(ImputeChoice::Uniform(w))
                    } else {
                        Err(format!("winner share {w} outside [0, 1]"))
                    }
                }
                None => Err(format!(
                    "unknown imputation policy {s:?}; use model, uniform:W, or none"
                )),
            },
        }
    }
}

#[derive(Debug, clap::Args)]
pub struct BatchArgs {
    /// Results CSV (see the documented schema)
    #[arg(long)]
    pub input: PathBuf,
    /// Districting-cycle table JSON; defaults to the national decade rule
    #[arg(long)]
    pub cycles: Option<PathBuf>,
    /// Gap_tau columns for the election table
    #[arg(long, value_delimiter = ',', default_value = "0,0.4,1,2")]
    pub taus: Vec<f64>,
    /// How uncontested races get shares: model, uniform:W, or none
    #[arg(long, default_value = "model")]
    pub impute: ImputeChoice,
    /// Seed for penalty selection and never-contested fallback draws
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory (created if missing)
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Also write one declination diagram per election under svg/
    #[arg(long)]
    pub svg: bool,
    /// Sensitivity analysis: add this to every imputed share and report
    /// the declination response
    #[arg(long)]
    pub shift: Option<f64>,
    /// delta-tilde magnitude used for the sign-persistence rate
    #[arg(long, default_value_t = 0.47)]
    pub threshold: f64,
}

#[derive(Debug)]
pub struct BatchSummary {
    pub n_elections: usize,
    pub n_excluded: usize,
    pub n_group_errors: usize,
    pub n_row_errors: usize,
    pub out_dir: PathBuf,
}

impl fmt::Display for BatchSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "wrote {} elections to {} ({} excluded, {} unresolved, {} bad rows)",
            self.n_elections,
            self.out_dir.display(),
            self.n_excluded,
            self.n_group_errors,
            self.n_row_errors,
        )
    }
}

#[derive(Serialize)]
struct Exclusion<'a> {
    key: &'a GroupKey,
    reason: &'a str,
}

#[derive(Serialize)]
struct ErrorsFile<'a> {
    row_errors: &'a [RowError],
    group_errors: &'a [GroupError],
    exclusions: Vec<Exclusion<'a>>,
}

#[derive(Serialize)]
struct CyclesFile<'a> {
    threshold: f64,
    /// Fraction of threshold-clearing elections in sign-persistent
    /// cycles; null when nothing clears the threshold.
    persistence_rate: Option<f64>,
    /// r-squared between the declination and each requested Gap_tau over
    /// the elections where both are defined.
    declination_gap_r_squared: BTreeMap<String, Option<f64>>,
    summaries: &'a [CycleSummary],
}

#[derive(Serialize)]
struct ModelFile<'a> {
    policy: &'a str,
    uniform_winner_share: Option<f64>,
    models: &'a ModelSet,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)
        .map_err(|e| CliError::new(format!("cannot write {}: {e}", tmp.display())))?;
    fs::rename(&tmp, path)
        .map_err(|e| CliError::new(format!("cannot rename into {}: {e}", path.display())))
}

fn to_json_pretty<T: Serialize>(value: &T) -> Result<Vec<u8>, CliError> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(CliError::new)?;
    bytes.push(b'\n');
    Ok(bytes)
}

fn svg_file_name(row: &ElectionRow) -> String {
    format!("{}_{}_{}.svg", row.state, row.chamber, row.year)
}

pub fn run_batch(args: &BatchArgs) -> Result<BatchSummary, CliError> {
    let input = fs::File::open(&args.input)
        .map_err(|e| CliError::new(format!("cannot open {}: {e}", args.input.display())))?;
    let parsed = parse_results(input).map_err(CliError::new)?;

    let cycles = match &args.cycles {
        Some(path) => {
            let file = fs::File::open(path)
                .map_err(|e| CliError::new(format!("cannot open {}: {e}", path.display())))?;
            CycleTable::from_json(file).map_err(CliError::new)?
        }
        None => CycleTable::empty(),
    };

    let groups = group_elections(&parsed.records, &cycles);
    let fit_config = FitConfig {
        lambdas: LambdaSelection::GridSearch {
            grid: vec![0.01, 0.1, 1.0, 10.0],
            holdout_fraction: 0.1,
            seed: args.seed,
        },
    };
    let (policy_name, uniform_share, models) = match &args.impute {
        ImputeChoice::Model => {
            let models = fit_partitions(&groups, &fit_config).map_err(CliError::new)?;
            ("model", None, models)
        }
        ImputeChoice::Uniform(w) => ("uniform", Some(*w), ModelSet::default()),
        ImputeChoice::Disabled => ("none", None, ModelSet::default()),
    };
    let policy = match &args.impute {
        ImputeChoice::Model => ImputePolicy::Model(&models),
        ImputeChoice::Uniform(w) => ImputePolicy::Uniform(*w),
        ImputeChoice::Disabled => ImputePolicy::Disabled,
    };
    let (resolved, group_errors) = resolve_groups(&groups, &policy, args.seed);

    let rows = election_table(&resolved, &args.taus).map_err(CliError::new)?;
    let summaries = cycle_summary(&rows);
    let rate = persistence_rate(&summaries, args.threshold);
    let ranked = extremes(&rows, rows.len());
    let correlations: BTreeMap<String, Option<f64>> = rows
        .first()
        .map(|first| {
            first
                .tau_gaps
                .iter()
                .map(|t| {
                    let tau = t.tau;
                    let r2 = metric_r_squared(&rows, |r| r.declination, move |r| r.gap_for(tau));
                    (tau_label(tau), r2)
                })
                .collect()
        })
        .unwrap_or_default();

    fs::create_dir_all(&args.out_dir)
        .map_err(|e| CliError::new(format!("cannot create {}: {e}", args.out_dir.display())))?;
    let out = |name: &str| args.out_dir.join(name);

    let mut table_csv = Vec::new();
    write_table_csv(&rows, &mut table_csv).map_err(CliError::new)?;
    write_atomic(&out("election_table.csv"), &table_csv)?;
    write_atomic(&out("election_table.json"), &to_json_pretty(&rows)?)?;

    write_atomic(
        &out("cycles.json"),
        &to_json_pretty(&CyclesFile {
            threshold: args.threshold,
            persistence_rate: rate,
            declination_gap_r_squared: correlations,
            summaries: &summaries,
        })?,
    )?;

    let mut extremes_csv = Vec::new();
    write_extremes_csv(&ranked, &mut extremes_csv).map_err(CliError::new)?;
    write_atomic(&out("extremes.csv"), &extremes_csv)?;

    write_atomic(
        &out("model.json"),
        &to_json_pretty(&ModelFile {
            policy: policy_name,
            uniform_winner_share: uniform_share,
            models: &models,
        })?,
    )?;

    let exclusions: Vec<Exclusion> = groups
        .iter()
        .filter_map(|g| {
            g.exclusion_reason.as_deref().map(|reason| Exclusion {
                key: &g.key,
                reason,
            })
        })
        .collect();
    write_atomic(
        &out("errors.json"),
        &to_json_pretty(&ErrorsFile {
            row_errors: &parsed.row_errors,
            group_errors: &group_errors,
            exclusions,
        })?,
    )?;

    if let Some(shift) = args.shift {
        let report = sensitivity_shift(&resolved, shift);
        write_atomic(&out("sensitivity.json"), &to_json_pretty(&report)?)?;
    }

    if args.svg {
        let svg_dir = args.out_dir.join("svg");
        fs::create_dir_all(&svg_dir)
            .map_err(|e| CliError::new(format!("cannot create {}: {e}", svg_dir.display())))?;
        for (group, row) in resolved.iter().zip(&rows) {
            if row.declination.is_none() {
                continue;
            }
            let svg = declination_diagram(&group.election()).map_err(CliError::new)?;
            write_atomic(&svg_dir.join(svg_file_name(row)), svg.as_bytes())?;
        }
    }

    Ok(BatchSummary {
        n_elections: rows.len(),
        n_excluded: count_excluded(&groups),
        n_group_errors: group_errors.len(),
        n_row_errors: parsed.row_errors.len(),
        out_dir: args.out_dir.clone(),
    })
}

fn count_excluded(groups: &[ElectionGroup]) -> usize {
    groups
        .iter()
        .filter(|g| g.exclusion_reason.is_some())
        .count()
}
