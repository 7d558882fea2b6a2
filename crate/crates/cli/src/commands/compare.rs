use std::path::PathBuf;

use clap::{Args, ValueEnum};
use fedsgt_core::unlearn::{
    fedcio_simulate, fedretrain_simulate, fedsgt_simulate, summarize, write_timeline_csv, CioConfig, TimelineRecord,
    TimelineSummary,
};
use serde_json::json;

use super::{configured_requests, prepare, resolve_config};
use crate::output::OutDir;
use crate::{CliResult, GlobalArgs};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Fedsgt,
    Fedcio,
    Fedretrain,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    /// TOML config or a previous run's manifest.json (defaults when absent)
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Methods to run, comma separated.
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [Method::Fedsgt, Method::Fedcio, Method::Fedretrain])]
    pub methods: Vec<Method>,
}

impl Default for CompareArgs {
    fn default() -> Self {
        Self {
            config: None,
            methods: vec![Method::Fedsgt, Method::Fedcio, Method::Fedretrain],
        }
    }
}

#[derive(Debug, Clone)]
pub struct CompareOutcome {
    pub out_dir: PathBuf,
    pub timeline: Vec<TimelineRecord>,
    pub summary: Vec<TimelineSummary>,
}

pub fn cmd_compare(a: &CompareArgs, g: &GlobalArgs) -> CliResult<CompareOutcome> {
    let cfg = resolve_config(a.config.as_deref(), g)?;
    let p = prepare(cfg)?;
    let requests = configured_requests(&p.cfg, &p.plan)?;
    let train = p.cfg.train_config();
    let mut per_method: Vec<Vec<TimelineRecord>> = Vec::new();
    for m in &a.methods {
        let rows = match m {
            Method::Fedsgt => {
                fedsgt_simulate(p.dataset.clone(), p.plan.clone(), p.seqs.clone(), train, p.cfg.strategy, &requests)?.1
            }
            Method::Fedcio => {
                let cio = CioConfig {
                    clusters: p.cfg.clusters,
                    blocks: p.cfg.groups,
                    mode: p.cfg.fedcio.mode,
                    train,
                };
                fedcio_simulate(p.dataset.clone(), cio, &requests)?.1
            }
            Method::Fedretrain => {
                fedretrain_simulate(p.dataset.clone(), p.cfg.groups, train, &requests, p.cfg.fedretrain.stride)?.1
            }
        };
        per_method.push(rows);
    }
    let mut timeline: Vec<TimelineRecord> = per_method.into_iter().flatten().collect();
    timeline.sort_by_key(|r| r.step);
    let summary = summarize(&timeline, None);

    let mut out = OutDir::create(&p.cfg.output)?;
    let mut csv_buf = Vec::new();
    write_timeline_csv(&mut csv_buf, &timeline)?;
    out.write_bytes("timeline.csv", &csv_buf)?;
    out.write_json("timeline.json", &timeline)?;
    out.write_json("summary.json", &summary)?;
    out.write_manifest(
        "compare",
        serde_json::to_value(&p.cfg).map_err(fedsgt_core::Error::from)?,
        json!({ "requests": requests.len(), "cluster_rounds": p.cfg.fedcio.cluster_rounds }),
    )?;
    for s in &summary {
        println!(
            "{}: failure step {}, mean utility {}",
            s.method,
            crate::output::opt_text(s.failure_step),
            crate::output::opt_utility(s.mean_utility)
        );
    }
    Ok(CompareOutcome {
        out_dir: p.cfg.output.clone(),
        timeline,
        summary,
    })
}
