//! Federated rounds, sequential phase training and the FedAvg-style
//! baseline trainer.
//!
//! Every local update draws its batch order from
//! `stream(seed, [tag, sequence, phase, round, client])`, and server averages
//! are accumulated in ascending client order by pairwise summation. A module
//! therefore depends only on the groups already in its sequence prefix, the
//! config and the seed; retraining a prefix reproduces it bit for bit.

use std::collections::BTreeSet;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grouping::{GroupingPlan, SliceRef};
use crate::ids::{ClientId, GroupId, SequenceId, SliceIdx};
use crate::rng::{self, tag};
use crate::sequencing::SequenceSet;

use super::dataset::Dataset;
use super::model::{pairwise_sum, softmax_in_place, AdapterModule, Matrix, ModuleBank};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    /// Local epochs `E` per round.
    pub epochs: usize,
    /// Communication rounds per FedSGT phase.
    pub rounds_per_phase: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    /// Rounds `T` for the FedAvg-style baselines.
    pub baseline_rounds: usize,
    /// Standard deviation of the random frozen backbone (0 gives zeros).
    pub backbone_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 3,
            rounds_per_phase: 1,
            learning_rate: 0.05,
            batch_size: 32,
            seed: 0,
            baseline_rounds: 10,
            backbone_scale: 0.01,
        }
    }
}

impl TrainConfig {
    fn check(&self) -> Result<()> {
        if self.batch_size == 0 || self.rounds_per_phase == 0 {
            return Err(Error::config("batch_size and rounds_per_phase must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate must be positive and finite"));
        }
        Ok(())
    }
}

/// Work counters accumulated while training.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainStats {
    /// Parameters updated, summed over every sample visit.
    pub param_updates: u128,
    /// Server rounds executed.
    pub rounds: u64,
    /// Rounds each client took part in, indexed by client id.
    pub client_rounds: Vec<u64>,
}

impl TrainStats {
    pub fn merge(&mut self, other: &TrainStats) {
        self.param_updates += other.param_updates;
        self.rounds += other.rounds;
        if self.client_rounds.len() < other.client_rounds.len() {
            self.client_rounds.resize(other.client_rounds.len(), 0);
        }
        for (a, b) in self.client_rounds.iter_mut().zip(&other.client_rounds) {
            *a += b;
        }
    }

    fn count_round(&mut self, participants: &[LocalData]) {
        self.rounds += 1;
        for p in participants {
            let i = p.client.index();
            if self.client_rounds.len() <= i {
                self.client_rounds.resize(i + 1, 0);
            }
            self.client_rounds[i] += 1;
        }
    }
}

/// One client's training records for the current round.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalData {
    pub client: ClientId,
    pub features: Vec<f64>,
    pub labels: Vec<usize>,
}

impl LocalData {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Live records of `client` whose slices satisfy `keep`, in slice order.
fn gather_client(dataset: &Dataset, client: ClientId, mut keep: impl FnMut(SliceRef) -> Result<bool>) -> Result<LocalData> {
    let d = dataset.feature_dim();
    let mut local = LocalData {
        client,
        features: Vec::new(),
        labels: Vec::new(),
    };
    for (s, slice) in dataset.client(client).slices.iter().enumerate() {
        let sref = SliceRef {
            client,
            slice: SliceIdx(s),
        };
        if keep(sref)? {
            let (x, y) = slice.live(d);
            local.features.extend_from_slice(x);
            local.labels.extend_from_slice(y);
        }
    }
    Ok(local)
}

/// Clients holding live records in `groups`, ascending by id.
pub fn participants_for_groups(dataset: &Dataset, plan: &GroupingPlan, groups: &BTreeSet<GroupId>) -> Result<Vec<LocalData>> {
    let mut out = Vec::new();
    for (client, _) in dataset.clients() {
        let local = gather_client(dataset, client, |s| Ok(groups.contains(&plan.group_of(s)?)))?;
        if !local.is_empty() {
            out.push(local);
        }
    }
    Ok(out)
}

/// All live records of the listed clients.
pub fn participants_for_clients(dataset: &Dataset, clients: &[ClientId]) -> Result<Vec<LocalData>> {
    let mut out = Vec::new();
    for &client in clients {
        if client.index() >= dataset.client_count() {
            return Err(Error::Lookup(format!("client {client} not in dataset")));
        }
        let local = gather_client(dataset, client, |_| Ok(true))?;
        if !local.is_empty() {
            out.push(local);
        }
    }
    Ok(out)
}

fn composite(frozen: &Matrix, blocks: &[Matrix]) -> Matrix {
    let mut acc = frozen.clone();
    for b in blocks {
        acc.add_assign(b);
    }
    acc
}

/// Mean cross-entropy of `frozen + Σ blocks` on `data`.
pub fn local_loss(frozen: &Matrix, blocks: &[Matrix], data: &LocalData) -> f64 {
    let w = composite(frozen, blocks);
    let d = w.cols();
    let mut logits = vec![0.0; w.rows()];
    let mut total = 0.0;
    for (x, &y) in data.features.chunks_exact(d).zip(&data.labels) {
        w.matvec_into(x, &mut logits);
        softmax_in_place(&mut logits);
        total -= logits[y].max(f64::MIN_POSITIVE).ln();
    }
    total / data.len().max(1) as f64
}

/// Mini-batch gradient descent on `blocks` only; `frozen` is never touched.
/// Each block moves by `lr · block_scale` times the shared gradient.
/// Returns the number of parameter updates performed.
pub fn local_update(
    frozen: &Matrix,
    blocks: &mut [Matrix],
    data: &LocalData,
    cfg: &TrainConfig,
    rng: &mut impl Rng,
    block_scale: f64,
) -> Result<u128> {
    let k = frozen.rows();
    let d = frozen.cols();
    let params = (k * d * blocks.len()) as u128;
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut grad = Matrix::zeros(k, d);
    let mut logits = vec![0.0; k];
    let mut updates = 0u128;
    for epoch in 0..cfg.epochs {
        rng::shuffle(rng, &mut order);
        for batch in order.chunks(cfg.batch_size) {
            let w = composite(frozen, blocks);
            grad.data_mut().iter_mut().for_each(|g| *g = 0.0);
            for &i in batch {
                let x = &data.features[i * d..(i + 1) * d];
                w.matvec_into(x, &mut logits);
                if logits.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Training(format!(
                        "nonfinite logits for client {} at epoch {epoch}; lower the learning rate",
                        data.client
                    )));
                }
                softmax_in_place(&mut logits);
                logits[data.labels[i]] -= 1.0;
                let g = grad.data_mut();
                for (r, &delta) in logits.iter().enumerate() {
                    for (gv, xv) in g[r * d..(r + 1) * d].iter_mut().zip(x) {
                        *gv += delta * xv;
                    }
                }
            }
            let step = -cfg.learning_rate * block_scale / batch.len() as f64;
            for b in blocks.iter_mut() {
                b.add_scaled(&grad, step);
                if b.data().iter().any(|v| !v.is_finite()) {
                    return Err(Error::Training(format!(
                        "adapter weights diverged for client {} at epoch {epoch}; lower the learning rate",
                        data.client
                    )));
                }
            }
            updates += batch.len() as u128 * params;
        }
    }
    Ok(updates)
}

/// FedAvg weights: each client's share of the round's samples.
pub fn aggregation_coefficients(sample_counts: &[usize]) -> Vec<f64> {
    let total: usize = sample_counts.iter().sum();
    sample_counts
        .iter()
        .map(|&n| n as f64 / total as f64)
        .collect()
}

/// Sample-weighted average of client results, summed pairwise in the given
/// (ascending client) order.
pub fn aggregate(results: &[(usize, Matrix)]) -> Matrix {
    let counts: Vec<usize> = results.iter().map(|(n, _)| *n).collect();
    let parts: Vec<Matrix> = aggregation_coefficients(&counts)
        .iter()
        .zip(results)
        .map(|(c, (_, m))| m.scaled(*c))
        .collect();
    pairwise_sum(&parts)
}

/// One federated round: every participant trains a copy of `active` and the
/// server averages the copies block by block.
pub fn federated_round(
    frozen: &Matrix,
    active: &[Matrix],
    participants: &[LocalData],
    cfg: &TrainConfig,
    stream_path: &[u64],
    block_scale: f64,
    stats: &mut TrainStats,
) -> Result<Vec<Matrix>> {
    if participants.is_empty() {
        return Err(Error::Training("federated round without participants".into()));
    }
    let results = participants
        .par_iter()
        .map(|p| {
            let mut path = stream_path.to_vec();
            path.push(p.client.index() as u64);
            let mut rng = rng::stream(cfg.seed, &path);
            let mut blocks = active.to_vec();
            let updates = local_update(frozen, &mut blocks, p, cfg, &mut rng, block_scale)?;
            Ok((p.len(), blocks, updates))
        })
        .collect::<Result<Vec<_>>>()?;
    stats.count_round(participants);
    stats.param_updates += results.iter().map(|(_, _, u)| u).sum::<u128>();
    Ok((0..active.len())
        .map(|b| {
            let per_client: Vec<(usize, Matrix)> = results.iter().map(|(n, blocks, _)| (*n, blocks[b].clone())).collect();
            aggregate(&per_client)
        })
        .collect())
}

/// Seeded frozen backbone, `label_count × feature_dim`.
pub fn init_backbone(label_count: usize, feature_dim: usize, cfg: &TrainConfig) -> Matrix {
    let mut rng = rng::stream(cfg.seed, &[tag::BACKBONE]);
    let data = (0..label_count * feature_dim)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            cfg.backbone_scale * z
        })
        .collect();
    Matrix::from_vec(label_count, feature_dim, data).expect("shape matches")
}

/// Trains the first `phases` adapters of one sequence. Phase `i` starts a
/// zero adapter, trains it on the cumulative groups `perm[..=i]` with every
/// earlier adapter frozen, then freezes it.
#[allow(clippy::too_many_arguments)]
pub fn train_sequence(
    dataset: &Dataset,
    plan: &GroupingPlan,
    seq: SequenceId,
    perm: &[GroupId],
    backbone: &Matrix,
    cfg: &TrainConfig,
    phases: usize,
    stats: &mut TrainStats,
) -> Result<Vec<AdapterModule>> {
    cfg.check()?;
    if phases > perm.len() {
        return Err(Error::domain("more phases requested than groups in the sequence"));
    }
    let (k, d) = (backbone.rows(), backbone.cols());
    let mut frozen = backbone.clone();
    let mut included = BTreeSet::new();
    let mut modules = Vec::with_capacity(phases);
    for (phase, &group) in perm.iter().enumerate().take(phases) {
        included.insert(group);
        let participants = participants_for_groups(dataset, plan, &included)?;
        if participants.is_empty() {
            return Err(Error::Training(format!(
                "sequence {seq} phase {phase}: cumulative groups hold no data"
            )));
        }
        let mut active = vec![Matrix::zeros(k, d)];
        for round in 0..cfg.rounds_per_phase {
            let path = [tag::LOCAL_TRAIN, seq.index() as u64, phase as u64, round as u64];
            active = federated_round(&frozen, &active, &participants, cfg, &path, 1.0, stats)?;
        }
        let weights = active.pop().expect("one block");
        frozen.add_assign(&weights);
        modules.push(AdapterModule {
            group,
            samples: participants.iter().map(|p| p.len() as u64).sum(),
            weights,
        });
    }
    Ok(modules)
}

/// Trains every sequence to full length. Sequences run in parallel on the
/// current rayon pool; the result does not depend on the worker count.
pub fn train_bank(dataset: &Dataset, plan: &GroupingPlan, seqs: &SequenceSet, cfg: &TrainConfig) -> Result<(ModuleBank, TrainStats)> {
    if plan.group_count() != seqs.group_count() {
        return Err(Error::config("grouping plan and sequence set disagree on L"));
    }
    let backbone = init_backbone(dataset.label_count(), dataset.feature_dim(), cfg);
    let trained = seqs
        .ids()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|id| {
            let mut stats = TrainStats::default();
            let modules = train_sequence(dataset, plan, id, seqs.perm(id), &backbone, cfg, seqs.group_count(), &mut stats)?;
            Ok((modules, stats))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut stats = TrainStats::default();
    let mut sequences = Vec::with_capacity(trained.len());
    for (modules, s) in trained {
        stats.merge(&s);
        sequences.push(modules);
    }
    Ok((ModuleBank { backbone, sequences }, stats))
}

/// Single model trained jointly over a stack of adapter blocks, as used by
/// FedAvg, each FedCIO cluster and FedRetrain.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineModel {
    pub backbone: Matrix,
    pub blocks: Vec<Matrix>,
}

impl BaselineModel {
    pub fn composite(&self) -> Matrix {
        composite(&self.backbone, &self.blocks)
    }
}

/// `T` rounds of FedAvg over `clients`, training `blocks` adapter blocks at
/// once. Each block steps by `lr / blocks`, so the composite moves like a
/// single adapter while every block's parameters are updated.
pub fn train_baseline(
    dataset: &Dataset,
    clients: &[ClientId],
    blocks: usize,
    cfg: &TrainConfig,
    stream_path: &[u64],
    stats: &mut TrainStats,
) -> Result<BaselineModel> {
    cfg.check()?;
    if blocks == 0 {
        return Err(Error::config("baseline needs at least one adapter block"));
    }
    let backbone = init_backbone(dataset.label_count(), dataset.feature_dim(), cfg);
    let participants = participants_for_clients(dataset, clients)?;
    if participants.is_empty() {
        return Err(Error::Training("baseline clients hold no data".into()));
    }
    let (k, d) = (backbone.rows(), backbone.cols());
    let mut active = vec![Matrix::zeros(k, d); blocks];
    for round in 0..cfg.baseline_rounds {
        let mut path = vec![tag::BASELINE_TRAIN];
        path.extend_from_slice(stream_path);
        path.push(round as u64);
        active = federated_round(&backbone, &active, &participants, cfg, &path, 1.0 / blocks as f64, stats)?;
    }
    Ok(BaselineModel { backbone, blocks: active })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fltrain::dataset::{synth_dataset, SynthSpec};
    use crate::grouping::build_grouping;
    use crate::sequencing::build_sequences;

    fn tiny() -> (Dataset, GroupingPlan) {
        let ds = synth_dataset(&SynthSpec {
            clients: 4,
            samples_per_client: 40,
            slices_per_client: 2,
            feature_dim: 4,
            label_count: 3,
            test_samples: 60,
            seed: 5,
            ..SynthSpec::default()
        })
        .unwrap();
        let plan = build_grouping(&ds.catalog(), 4, 5).unwrap();
        (ds, plan)
    }

    #[test]
    fn zero_epochs_leave_zero_modules() {
        let (ds, plan) = tiny();
        let cfg = TrainConfig { epochs: 0, ..TrainConfig::default() };
        let seqs = build_sequences(4, 2, 0).unwrap();
        let (bank, stats) = train_bank(&ds, &plan, &seqs, &cfg).unwrap();
        assert!(bank.sequences.iter().flatten().all(|m| m.weights.is_zero()));
        assert_eq!(stats.param_updates, 0);
    }

    #[test]
    fn first_phase_uses_only_the_head_group() {
        let (ds, plan) = tiny();
        let head = BTreeSet::from([GroupId(2)]);
        let participants = participants_for_groups(&ds, &plan, &head).unwrap();
        let owners: BTreeSet<ClientId> = plan.members(GroupId(2)).iter().map(|s| s.client).collect();
        let got: BTreeSet<ClientId> = participants.iter().map(|p| p.client).collect();
        assert_eq!(got, owners);
        let expected: usize = plan.members(GroupId(2)).iter().map(|s| plan.samples(*s).unwrap()).sum();
        assert_eq!(participants.iter().map(LocalData::len).sum::<usize>(), expected);
    }

    #[test]
    fn single_participant_round_is_identity_aggregation() {
        let (ds, plan) = tiny();
        let cfg = TrainConfig::default();
        let parts = participants_for_groups(&ds, &plan, &BTreeSet::from([GroupId(0)])).unwrap();
        let one = &parts[..1];
        let frozen = init_backbone(3, 4, &cfg);
        let mut stats = TrainStats::default();
        let out = federated_round(&frozen, &[Matrix::zeros(3, 4)], one, &cfg, &[9], 1.0, &mut stats).unwrap();
        let mut rng = rng::stream(cfg.seed, &[9, one[0].client.index() as u64]);
        let mut blocks = vec![Matrix::zeros(3, 4)];
        local_update(&frozen, &mut blocks, &one[0], &cfg, &mut rng, 1.0).unwrap();
        assert_eq!(out, blocks);
        assert_eq!(stats.rounds, 1);
    }

    #[test]
    fn identical_clients_average_to_either() {
        let (ds, plan) = tiny();
        let cfg = TrainConfig::default();
        let parts = participants_for_groups(&ds, &plan, &BTreeSet::from([GroupId(1)])).unwrap();
        let frozen = Matrix::zeros(3, 4);
        let mut a = vec![Matrix::zeros(3, 4)];
        let mut b = vec![Matrix::zeros(3, 4)];
        local_update(&frozen, &mut a, &parts[0], &cfg, &mut rng::stream(1, &[]), 1.0).unwrap();
        local_update(&frozen, &mut b, &parts[0], &cfg, &mut rng::stream(1, &[]), 1.0).unwrap();
        let avg = aggregate(&[(10, a[0].clone()), (10, b[0].clone())]);
        for (x, y) in avg.data().iter().zip(a[0].data()) {
            assert!((x - y).abs() <= 1e-15 * y.abs().max(1.0));
        }
    }

    #[test]
    fn sample_weighted_coefficients() {
        assert_eq!(aggregation_coefficients(&[100, 300]), vec![0.25, 0.75]);
        let one = Matrix::from_vec(1, 1, vec![1.0]).unwrap();
        let five = Matrix::from_vec(1, 1, vec![5.0]).unwrap();
        assert_eq!(aggregate(&[(100, one), (300, five)]).data(), &[4.0]);
    }

    #[test]
    fn prefix_runs_are_bit_exact() {
        let (ds, plan) = tiny();
        let cfg = TrainConfig::default();
        let seqs = build_sequences(4, 4, 0).unwrap();
        let backbone = init_backbone(3, 4, &cfg);
        let id = SequenceId(2);
        let full = train_sequence(&ds, &plan, id, seqs.perm(id), &backbone, &cfg, 4, &mut TrainStats::default()).unwrap();
        for p in 1..=4 {
            let prefix = train_sequence(&ds, &plan, id, seqs.perm(id), &backbone, &cfg, p, &mut TrainStats::default()).unwrap();
            for (a, b) in prefix.iter().zip(&full) {
                assert_eq!(a.to_bytes(), b.to_bytes());
            }
        }
    }

    #[test]
    fn backbone_is_not_mutated() {
        let (ds, plan) = tiny();
        let cfg = TrainConfig::default();
        let seqs = build_sequences(4, 2, 0).unwrap();
        let before = init_backbone(3, 4, &cfg);
        let (bank, _) = train_bank(&ds, &plan, &seqs, &cfg).unwrap();
        assert_eq!(bank.backbone.to_le_bytes(), before.to_le_bytes());
    }

    #[test]
    fn full_batch_loss_is_nonincreasing_per_epoch() {
        let (ds, plan) = tiny();
        let parts = participants_for_groups(&ds, &plan, &plan.groups().map(|(g, _)| g).collect()).unwrap();
        for p in &parts {
            let cfg = TrainConfig {
                batch_size: p.len(),
                epochs: 1,
                ..TrainConfig::default()
            };
            let frozen = init_backbone(3, 4, &cfg);
            let mut blocks = vec![Matrix::zeros(3, 4)];
            let mut rng = rng::stream(0, &[]);
            let mut prev = local_loss(&frozen, &blocks, p);
            for _ in 0..10 {
                local_update(&frozen, &mut blocks, p, &cfg, &mut rng, 1.0).unwrap();
                let now = local_loss(&frozen, &blocks, p);
                assert!(now <= prev + 1e-12, "{now} > {prev}");
                prev = now;
            }
        }
    }

    #[test]
    fn divergence_is_reported() {
        let (ds, plan) = tiny();
        let cfg = TrainConfig {
            learning_rate: f64::MAX,
            ..TrainConfig::default()
        };
        let seqs = build_sequences(4, 1, 0).unwrap();
        assert!(matches!(train_bank(&ds, &plan, &seqs, &cfg), Err(Error::Training(_))));
    }
}
