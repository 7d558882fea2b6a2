use std::path::PathBuf;

use clap::Args;
use fedsgt_core::montecarlo::{approximation_rows, validation_grid, GridSpec, MCConfig, ValidationRow, VALIDATION_HEADER};
use serde_json::json;

use super::out_dir;
use crate::output::{num, OutDir};
use crate::{CliError, CliResult, GlobalArgs};

#[derive(Debug, Clone, Args)]
pub struct ValidateArgs {
    /// Monte Carlo trials per quantity.
    #[arg(long, default_value_t = 200_000)]
    pub trials: u64,
    /// Largest allowed |z|.
    #[arg(long = "confidence-k", default_value_t = 3.0)]
    pub confidence_k: f64,
    /// Units per group for the finite-population deletion rows.
    #[arg(long, default_value_t = 20)]
    pub finite_units: u64,
}

impl Default for ValidateArgs {
    fn default() -> Self {
        Self {
            trials: 200_000,
            confidence_k: 3.0,
            finite_units: 20,
        }
    }
}

pub fn validation_failures(rows: &[ValidationRow], k: f64) -> usize {
    rows.iter().filter(|r| !r.passes(k)).count()
}

fn csv_rows(rows: &[ValidationRow]) -> impl Iterator<Item = Vec<String>> + '_ {
    rows.iter().map(|r| {
        vec![
            r.quantity.clone(),
            r.params.clone(),
            num(r.closed_form),
            num(r.mc_mean),
            num(r.mc_stderr),
            num(r.zscore),
        ]
    })
}

/// Writes the comparison tables and fails with exit code 3 when any row
/// exceeds the allowed z-score.
pub fn write_validation(out: &mut OutDir, rows: &[ValidationRow], approx: &[ValidationRow], k: f64) -> CliResult<()> {
    out.write_csv("validation.csv", &VALIDATION_HEADER, csv_rows(rows))?;
    out.write_json("validation.json", rows)?;
    out.write_csv("approximation.csv", &VALIDATION_HEADER, csv_rows(approx))?;
    match validation_failures(rows, k) {
        0 => Ok(()),
        n => Err(CliError::ValidationFailed(n)),
    }
}

pub fn cmd_validate(a: &ValidateArgs, g: &GlobalArgs) -> CliResult<Vec<ValidationRow>> {
    if a.trials == 0 || !(a.confidence_k > 0.0) || a.finite_units == 0 {
        return Err(fedsgt_core::Error::Config(vec!["trials, confidence-k and finite-units must be positive".into()]).into());
    }
    let cfg = MCConfig {
        trials: a.trials,
        seed: g.seed.unwrap_or(0),
        confidence_k: a.confidence_k,
    };
    let grid = GridSpec::default();
    let rows = validation_grid(&grid, &cfg)?;
    let approx = approximation_rows(&grid, a.finite_units, &cfg)?;
    let mut out = OutDir::create(&out_dir(g, PathBuf::from("out")))?;
    let verdict = write_validation(&mut out, &rows, &approx, a.confidence_k);
    out.write_manifest(
        "validate",
        serde_json::to_value(cfg).map_err(fedsgt_core::Error::from)?,
        json!({ "grid": grid, "finite_units": a.finite_units }),
    )?;
    let worst = rows.iter().map(|r| r.zscore.abs()).fold(0.0, f64::max);
    println!("{} quantities, max |z| = {worst:.3}", rows.len());
    verdict.map(|()| rows)
}
