use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use fedsgt_core::fltrain::read_bank;
use fedsgt_core::grouping::{GroupingPlan, SliceRef};
use fedsgt_core::ids::GroupId;
use fedsgt_core::sequencing::{SequenceSet, ServingStrategy};
use fedsgt_core::unlearn::{
    summarize, uniform_requests, write_timeline_csv, FedSgtSystem, TimelineRecord, TimelineSummary, UnlearnRequest,
    UnlearnSystem,
};
use fedsgt_core::Error;
use serde_json::json;

use super::train::{GROUPING_FILE, SEQUENCES_FILE};
use super::{configured_requests, prepare, resolve_config};
use crate::output::{OutDir, MANIFEST};
use crate::{CliError, CliResult, GlobalArgs};

#[derive(Debug, Clone, Default, Args)]
pub struct UnlearnArgs {
    /// Module bank written by `train`.
    #[arg(long)]
    pub bank: PathBuf,
    /// Run config; defaults to the manifest next to the bank.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Generate this many uniform requests instead of the configured stream.
    #[arg(long)]
    pub requests: Option<usize>,
    /// Scripted targets as `client:slice`, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub targets: Vec<String>,
    /// Scripted group deletions (zero-based ids), comma separated. Each
    /// deletes records from the group's first slice.
    #[arg(long, value_delimiter = ',')]
    pub groups: Vec<usize>,
    /// Serving strategy: allseq, minseq or longseq.
    #[arg(long)]
    pub strategy: Option<ServingStrategy>,
    /// Run the exactness audit when the stream ends.
    #[arg(long)]
    pub audit: bool,
    /// Run the exactness audit after every request.
    #[arg(long)]
    pub audit_every: bool,
}

#[derive(Debug, Clone)]
pub struct UnlearnOutcome {
    pub out_dir: PathBuf,
    pub timeline: Vec<TimelineRecord>,
    pub summary: TimelineSummary,
    pub system: FedSgtSystem,
}

fn read_artifact(dir: &Path, name: &str) -> CliResult<Option<String>> {
    let path = dir.join(name);
    if !path.exists() {
        return Ok(None);
    }
    Ok(Some(fs::read_to_string(path)?))
}

fn requests_for(
    a: &UnlearnArgs,
    plan: &GroupingPlan,
    record_count: usize,
    configured: Vec<UnlearnRequest>,
) -> CliResult<Vec<UnlearnRequest>> {
    if !a.groups.is_empty() {
        return a
            .groups
            .iter()
            .map(|&g| {
                if g >= plan.group_count() {
                    return Err(Error::Config(vec![format!("group {g} out of range for L={}", plan.group_count())]).into());
                }
                let target = plan.members(GroupId(g))[0];
                Ok(UnlearnRequest::capped(plan, target, record_count)?)
            })
            .collect();
    }
    if !a.targets.is_empty() {
        return a
            .targets
            .iter()
            .map(|t| {
                let target: SliceRef = t.parse()?;
                Ok(UnlearnRequest::capped(plan, target, record_count)?)
            })
            .collect();
    }
    Ok(configured)
}

pub fn cmd_unlearn(a: &UnlearnArgs, g: &GlobalArgs) -> CliResult<UnlearnOutcome> {
    if !a.bank.is_file() {
        return Err(Error::Config(vec![format!("bank file {} not found", a.bank.display())]).into());
    }
    let bank_dir = a.bank.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf);
    let config_path = a.config.clone().unwrap_or_else(|| bank_dir.join(MANIFEST));
    let mut cfg = resolve_config(Some(&config_path), &GlobalArgs { out: None, ..g.clone() })?;
    if let Some(s) = a.strategy {
        cfg.strategy = s;
    }
    let out_root = g.out.clone().unwrap_or_else(|| bank_dir.join("unlearn"));
    let p = prepare(cfg)?;

    if let Some(text) = read_artifact(&bank_dir, GROUPING_FILE)? {
        if GroupingPlan::from_json(&text)? != p.plan {
            return Err(Error::Corrupt("stored grouping plan differs from the configuration".into()).into());
        }
    }
    if let Some(text) = read_artifact(&bank_dir, SEQUENCES_FILE)? {
        let stored: SequenceSet = serde_json::from_str(&text).map_err(|e| Error::Corrupt(format!("sequences: {e}")))?;
        let stored = SequenceSet::from_perms(stored.group_count(), stored.seed(), stored.perms().to_vec())
            .map_err(|e| Error::Corrupt(format!("sequences: {e}")))?;
        if stored != p.seqs {
            return Err(Error::Corrupt("stored sequences differ from the configuration".into()).into());
        }
    }
    let bank = read_bank(&a.bank)?;

    let configured = match a.requests {
        Some(n) => uniform_requests(&p.plan, n, p.cfg.requests.seed, p.cfg.requests.record_count),
        None => configured_requests(&p.cfg, &p.plan)?,
    };
    let requests = requests_for(a, &p.plan, p.cfg.requests.record_count, configured)?;
    let cfg = p.cfg.clone();
    let mut system = FedSgtSystem::from_parts(p.dataset, p.plan, p.seqs, bank, cfg.train_config(), cfg.strategy)?;

    let mut timeline = vec![system.baseline_record()?];
    let mut audit_error = None;
    for req in &requests {
        timeline.push(system.process_request(req)?);
        if a.audit_every && audit_error.is_none() {
            audit_error = system.audit().err();
        }
    }
    if (a.audit || a.audit_every) && audit_error.is_none() {
        audit_error = system.audit().err();
    }
    let audited = (a.audit || a.audit_every).then_some(audit_error.is_none());
    let summary = summarize(&timeline, audited).remove(0);

    let mut out = OutDir::create(&out_root)?;
    let mut csv_buf = Vec::new();
    write_timeline_csv(&mut csv_buf, &timeline)?;
    out.write_bytes("timeline.csv", &csv_buf)?;
    out.write_json("timeline.json", &timeline)?;
    out.write_json("summary.json", &summary)?;
    out.write_json("requests.json", &requests)?;
    out.write_manifest(
        "unlearn",
        serde_json::to_value(&cfg).map_err(Error::from)?,
        json!({
            "bank": a.bank,
            "strategy": cfg.strategy,
            "audit": summary.audit,
            "audit_error": audit_error.as_ref().map(ToString::to_string),
        }),
    )?;
    println!(
        "{} requests, failure step {}, mean utility {}, audit {}",
        requests.len(),
        crate::output::opt_text(summary.failure_step),
        crate::output::opt_utility(summary.mean_utility),
        summary.audit.as_deref().unwrap_or("skipped")
    );
    if let Some(e) = audit_error {
        return Err(CliError::Core(e));
    }
    Ok(UnlearnOutcome {
        out_dir: out_root,
        timeline,
        summary,
        system,
    })
}
