use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fltrain::{evaluate, init_backbone, train_bank, train_sequence, Dataset, ModuleBank, TrainConfig, TrainStats};
use crate::grouping::GroupingPlan;
use crate::ids::{GroupId, PhaseIdx, SequenceId, ServiceStatus};
use crate::sequencing::{SequenceSet, SequenceState, ServingStrategy};

use super::{TimelineRecord, UnlearnRequest, UnlearnSystem};

/// A trained FedSGT deployment and its deletion state.
#[derive(Debug, Clone)]
pub struct FedSgtSystem {
    dataset: Dataset,
    plan: GroupingPlan,
    seqs: SequenceSet,
    bank: ModuleBank,
    cfg: TrainConfig,
    strategy: ServingStrategy,
    state: SequenceState,
    step: usize,
}

impl FedSgtSystem {
    pub fn train(
        dataset: Dataset,
        plan: GroupingPlan,
        seqs: SequenceSet,
        cfg: TrainConfig,
        strategy: ServingStrategy,
    ) -> Result<(Self, TrainStats)> {
        let (bank, stats) = train_bank(&dataset, &plan, &seqs, &cfg)?;
        Ok((Self::from_parts(dataset, plan, seqs, bank, cfg, strategy)?, stats))
    }

    /// Wraps a previously trained bank.
    pub fn from_parts(
        dataset: Dataset,
        plan: GroupingPlan,
        seqs: SequenceSet,
        bank: ModuleBank,
        cfg: TrainConfig,
        strategy: ServingStrategy,
    ) -> Result<Self> {
        bank.check_against(&seqs)?;
        if plan.group_count() != seqs.group_count() {
            return Err(Error::config("grouping plan and sequence set disagree on L"));
        }
        if bank.feature_dim() != dataset.feature_dim() || bank.label_count() != dataset.label_count() {
            return Err(Error::Corrupt("bank dimensions do not match the dataset".into()));
        }
        let state = SequenceState::fresh(&seqs);
        Ok(Self {
            dataset,
            plan,
            seqs,
            bank,
            cfg,
            strategy,
            state,
            step: 0,
        })
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn plan(&self) -> &GroupingPlan {
        &self.plan
    }

    pub fn sequences(&self) -> &SequenceSet {
        &self.seqs
    }

    pub fn bank(&self) -> &ModuleBank {
        &self.bank
    }

    pub fn state(&self) -> &SequenceState {
        &self.state
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn status(&self) -> ServiceStatus {
        ServiceStatus::from_surviving(self.state.surviving(), "sequences")
    }

    /// Live samples in groups that are still undeleted.
    pub fn remaining_samples(&self) -> usize {
        self.plan
            .slices()
            .filter(|s| !self.state.deleted().contains(&self.plan.group_of(*s).expect("slice in plan")))
            .map(|s| self.dataset.slice(s).map_or(0, |sl| sl.live_len()))
            .sum()
    }

    pub fn accuracy(&self) -> Result<Option<f64>> {
        if self.state.is_failed() {
            return Ok(None);
        }
        evaluate(&self.bank, &self.seqs, &self.state, self.strategy, self.dataset.test()).map(Some)
    }

    /// Runs [`exactness_audit`] against the current deletion state.
    pub fn audit(&self) -> Result<AuditReport> {
        exactness_audit(&self.bank, &self.dataset, &self.plan, &self.seqs, &self.cfg, self.state.deleted())
    }

    fn record(&self, affected: Option<GroupId>, notes: String) -> Result<TimelineRecord> {
        let status = self.status();
        Ok(TimelineRecord {
            step: self.step,
            method: self.method().into(),
            affected_unit: affected.map(|g| format!("G{g}")),
            surviving: status.surviving(),
            status,
            utility: self.accuracy()?,
            notes,
        })
    }

    fn lens_note(&self) -> String {
        let lens: Vec<String> = self.state.active_lens().iter().map(usize::to_string).collect();
        format!("active_len={} remaining={}", lens.join("/"), self.remaining_samples())
    }
}

impl UnlearnSystem for FedSgtSystem {
    fn method(&self) -> &'static str {
        "FedSGT"
    }

    fn baseline_record(&self) -> Result<TimelineRecord> {
        self.record(None, self.lens_note())
    }

    fn process_request(&mut self, req: &UnlearnRequest) -> Result<TimelineRecord> {
        req.validate(&self.plan)?;
        let group = self.plan.group_of(req.target)?;
        let removed = self.dataset.remove_records(req.target, req.record_count)?;
        self.state.apply_deletion(&self.seqs, group)?;
        self.step += 1;
        let notes = format!("slice {} removed {removed}; {}", req.target, self.lens_note());
        self.record(Some(group), notes)
    }
}

/// Trains FedSGT and replays `requests`, starting with a step-0 row.
pub fn fedsgt_simulate(
    dataset: Dataset,
    plan: GroupingPlan,
    seqs: SequenceSet,
    cfg: TrainConfig,
    strategy: ServingStrategy,
    requests: &[UnlearnRequest],
) -> Result<(FedSgtSystem, Vec<TimelineRecord>)> {
    let (mut system, _) = FedSgtSystem::train(dataset, plan, seqs, cfg, strategy)?;
    let mut rows = vec![system.baseline_record()?];
    rows.extend(system.run_stream(requests)?);
    Ok((system, rows))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditReport {
    pub sequences_checked: usize,
    pub modules_checked: usize,
}

/// Retrains every surviving prefix from scratch on the current data and
/// demands bit-exact equality with the bank's modules. A mismatch returns
/// [`Error::AuditMismatch`] at the first differing (sequence, phase).
pub fn exactness_audit(
    bank: &ModuleBank,
    dataset: &Dataset,
    plan: &GroupingPlan,
    seqs: &SequenceSet,
    cfg: &TrainConfig,
    deleted: &BTreeSet<GroupId>,
) -> Result<AuditReport> {
    bank.check_against(seqs)?;
    let backbone = init_backbone(dataset.label_count(), dataset.feature_dim(), cfg);
    if backbone.to_le_bytes() != bank.backbone.to_le_bytes() {
        return Err(Error::Corrupt("backbone differs from a fresh initialisation".into()));
    }
    let state = SequenceState::with_deletions(seqs, deleted.iter().copied())?;
    let firsts = seqs
        .ids()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|id| {
            let p = state.active_len(id);
            if p == 0 {
                return Ok(None);
            }
            let fresh = train_sequence(dataset, plan, id, seqs.perm(id), &backbone, cfg, p, &mut TrainStats::default())?;
            Ok(fresh
                .iter()
                .zip(&bank.sequences[id.index()])
                .position(|(a, b)| a.to_bytes() != b.to_bytes()))
        })
        .collect::<Result<Vec<Option<usize>>>>()?;
    if let Some((seq, phase)) = firsts.iter().enumerate().find_map(|(s, p)| p.map(|p| (s, p))) {
        return Err(Error::AuditMismatch {
            sequence: SequenceId(seq),
            phase: PhaseIdx(phase),
        });
    }
    Ok(AuditReport {
        sequences_checked: state.surviving(),
        modules_checked: state.active_lens().iter().sum(),
    })
}
