pub mod analyze;
pub mod compare;
pub mod train;
pub mod unlearn;
pub mod validate;

use std::path::{Path, PathBuf};

use fedsgt_core::config::{load_run_config, RunConfig};
use fedsgt_core::fltrain::{Dataset, Ensemble, Matrix, TestSplit};
use fedsgt_core::grouping::{build_grouping, GroupingPlan};
use fedsgt_core::sequencing::{build_sequences, SequenceSet};
use fedsgt_core::unlearn::{uniform_requests, UnlearnRequest};

use crate::{CliResult, GlobalArgs};

pub(crate) fn out_dir(g: &GlobalArgs, fallback: PathBuf) -> PathBuf {
    g.out.clone().unwrap_or(fallback)
}

/// Config, data, grouping and sequences derived from one run configuration.
pub(crate) struct Prepared {
    pub cfg: RunConfig,
    pub dataset: Dataset,
    pub plan: GroupingPlan,
    pub seqs: SequenceSet,
}

/// Loads `path` (or the defaults) and applies the global overrides.
pub(crate) fn resolve_config(path: Option<&Path>, g: &GlobalArgs) -> CliResult<RunConfig> {
    let mut cfg = match path {
        Some(p) => load_run_config(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = g.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &g.out {
        cfg.output = out.clone();
    }
    Ok(cfg)
}

pub(crate) fn prepare(cfg: RunConfig) -> CliResult<Prepared> {
    let dataset = cfg.load_dataset()?;
    let plan = build_grouping(&dataset.catalog(), cfg.groups, cfg.seed)?;
    let seqs = build_sequences(cfg.groups, cfg.budget, cfg.seed)?;
    Ok(Prepared { cfg, dataset, plan, seqs })
}

/// Requests named in the config: the explicit list, else a uniform stream.
pub(crate) fn configured_requests(cfg: &RunConfig, plan: &GroupingPlan) -> CliResult<Vec<UnlearnRequest>> {
    let targets = cfg.explicit_targets()?;
    if targets.is_empty() {
        return Ok(uniform_requests(plan, cfg.requests.count, cfg.requests.seed, cfg.requests.record_count));
    }
    Ok(targets
        .into_iter()
        .map(|t| UnlearnRequest::capped(plan, t, cfg.requests.record_count))
        .collect::<fedsgt_core::Result<Vec<_>>>()?)
}

/// Accuracy of a single linear model over all live training records.
pub(crate) fn train_accuracy(model: &Matrix, dataset: &Dataset) -> CliResult<f64> {
    let d = dataset.feature_dim();
    let mut split = TestSplit {
        features: Vec::new(),
        labels: Vec::new(),
    };
    for (_, client) in dataset.clients() {
        for slice in &client.slices {
            let (x, y) = slice.live(d);
            split.features.extend_from_slice(x);
            split.labels.extend_from_slice(y);
        }
    }
    Ok(Ensemble::new(vec![(1.0, model.clone())])?.accuracy(&split)?)
}
