use std::path::PathBuf;

use clap::Args;
use fedsgt_core::fltrain::{encode_bank, train_bank, Ensemble, TrainStats};
use fedsgt_core::ids::SequenceId;
use serde::Serialize;
use serde_json::json;

use super::{prepare, resolve_config, train_accuracy};
use crate::output::{num, OutDir};
use crate::{CliResult, GlobalArgs};

pub const BANK_FILE: &str = "bank.fsgt";
pub const GROUPING_FILE: &str = "grouping.json";
pub const SEQUENCES_FILE: &str = "sequences.json";

#[derive(Debug, Clone, Default, Args)]
pub struct TrainArgs {
    /// TOML config or a previous run's manifest.json (defaults when absent).
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SequenceReport {
    pub sequence: usize,
    pub order: Vec<usize>,
    pub test_accuracy: f64,
    pub train_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub out_dir: PathBuf,
    pub bank_path: PathBuf,
    pub stats: TrainStats,
    pub sequences: Vec<SequenceReport>,
}

pub fn cmd_train(a: &TrainArgs, g: &GlobalArgs) -> CliResult<TrainOutcome> {
    let cfg = resolve_config(a.config.as_deref(), g)?;
    let p = prepare(cfg)?;
    let train_cfg = p.cfg.train_config();
    let (bank, stats) = train_bank(&p.dataset, &p.plan, &p.seqs, &train_cfg)?;

    let sequences = p
        .seqs
        .ids()
        .map(|id: SequenceId| {
            let model = bank.composite(id, p.seqs.group_count());
            Ok(SequenceReport {
                sequence: id.index(),
                order: p.seqs.perm(id).iter().map(|g| g.index()).collect(),
                test_accuracy: Ensemble::new(vec![(1.0, model.clone())])?.accuracy(p.dataset.test())?,
                train_accuracy: train_accuracy(&model, &p.dataset)?,
            })
        })
        .collect::<CliResult<Vec<_>>>()?;

    let mut out = OutDir::create(&p.cfg.output)?;
    out.write_bytes(BANK_FILE, &encode_bank(&bank))?;
    out.write_bytes(GROUPING_FILE, p.plan.to_json()?.as_bytes())?;
    out.write_json(SEQUENCES_FILE, &p.seqs)?;
    out.write_csv(
        "train_report.csv",
        &["sequence", "order", "test_accuracy", "train_accuracy"],
        sequences.iter().map(|s| {
            let order: Vec<String> = s.order.iter().map(usize::to_string).collect();
            vec![s.sequence.to_string(), order.join(" "), num(s.test_accuracy), num(s.train_accuracy)]
        }),
    )?;
    out.write_json("train_report.json", &sequences)?;
    out.write_manifest(
        "train",
        serde_json::to_value(&p.cfg).map_err(fedsgt_core::Error::from)?,
        json!({
            "param_updates": stats.param_updates.to_string(),
            "rounds": stats.rounds,
            "client_rounds": stats.client_rounds,
        }),
    )?;
    let mean = sequences.iter().map(|s| s.test_accuracy).sum::<f64>() / sequences.len() as f64;
    println!(
        "trained {} sequences x {} phases, mean test accuracy {mean:.4}, bank {}",
        p.seqs.budget(),
        p.seqs.group_count(),
        out.path(BANK_FILE).display()
    );
    Ok(TrainOutcome {
        bank_path: out.path(BANK_FILE),
        out_dir: out.root().to_path_buf(),
        stats,
        sequences,
    })
}
