//! Training orders, deletion state and the three serving strategies.
//!
//! Sequence `t < min(L, B)` is the right rotation of the identity by `t`
//! (position `p` holds group `(p − t) mod L`), so with `L = 6` the family
//! starts `[012345], [501234], [450123], ...`. Budgets beyond `L` are filled
//! with seeded random permutations; those are outside the closed-form
//! analysis.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::{GroupId, SequenceId};
use crate::rng::{self, tag};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequenceSet {
    groups: usize,
    seed: u64,
    perms: Vec<Vec<GroupId>>,
}

/// Right rotation of `[0, L)` by `t`.
pub fn rotation(groups: usize, t: usize) -> Vec<GroupId> {
    (0..groups)
        .map(|p| GroupId((p + groups - t % groups) % groups))
        .collect()
}

fn factorial_at_least(n: usize, bound: usize) -> bool {
    let mut acc = 1usize;
    for i in 2..=n {
        acc = acc.saturating_mul(i);
        if acc >= bound {
            return true;
        }
    }
    acc >= bound
}

/// Builds the `B` training orders for `L` groups.
///
/// When `B > L!` there are not enough distinct permutations; the extra
/// sequences then repeat random permutations.
pub fn build_sequences(groups: usize, budget: usize, seed: u64) -> Result<SequenceSet> {
    if groups == 0 || budget == 0 {
        return Err(Error::domain("sequences need L >= 1 and B >= 1"));
    }
    let rotations = groups.min(budget);
    let mut perms: Vec<Vec<GroupId>> = (0..rotations).map(|t| rotation(groups, t)).collect();
    if budget > groups {
        let distinct_possible = factorial_at_least(groups, budget);
        let mut rng = rng::stream(seed, &[tag::SEQUENCES]);
        let mut seen: BTreeSet<Vec<GroupId>> = perms.iter().cloned().collect();
        while perms.len() < budget {
            let mut p: Vec<GroupId> = (0..groups).map(GroupId).collect();
            rng::shuffle(&mut rng, &mut p);
            if !distinct_possible || seen.insert(p.clone()) {
                perms.push(p);
            }
        }
    }
    Ok(SequenceSet { groups, seed, perms })
}

impl SequenceSet {
    /// Wraps explicit permutations, checking each is a permutation of `[0, L)`.
    pub fn from_perms(groups: usize, seed: u64, perms: Vec<Vec<GroupId>>) -> Result<Self> {
        if perms.is_empty() {
            return Err(Error::domain("at least one sequence is required"));
        }
        for (i, p) in perms.iter().enumerate() {
            let mut seen = vec![false; groups];
            if p.len() != groups {
                return Err(Error::domain(format!("sequence {i} has length {}", p.len())));
            }
            for g in p {
                match seen.get_mut(g.index()) {
                    Some(slot) if !*slot => *slot = true,
                    _ => return Err(Error::domain(format!("sequence {i} is not a permutation"))),
                }
            }
        }
        Ok(Self { groups, seed, perms })
    }

    pub fn group_count(&self) -> usize {
        self.groups
    }

    pub fn budget(&self) -> usize {
        self.perms.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn perm(&self, id: SequenceId) -> &[GroupId] {
        &self.perms[id.index()]
    }

    pub fn perms(&self) -> &[Vec<GroupId>] {
        &self.perms
    }

    pub fn ids(&self) -> impl Iterator<Item = SequenceId> {
        (0..self.perms.len()).map(SequenceId)
    }

    /// True for random permutations added beyond the rotation family.
    pub fn is_extension(&self, id: SequenceId) -> bool {
        id.index() >= self.groups
    }

    /// Length of the longest prefix of `id` avoiding every deleted group.
    pub fn active_len(&self, id: SequenceId, deleted: &BTreeSet<GroupId>) -> usize {
        self.perm(id)
            .iter()
            .position(|g| deleted.contains(g))
            .unwrap_or(self.groups)
    }
}

/// Deleted groups and every sequence's surviving prefix length.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SequenceState {
    deleted: BTreeSet<GroupId>,
    active_len: Vec<usize>,
}

impl SequenceState {
    pub fn fresh(seqs: &SequenceSet) -> Self {
        Self {
            deleted: BTreeSet::new(),
            active_len: vec![seqs.group_count(); seqs.budget()],
        }
    }

    pub fn deleted(&self) -> &BTreeSet<GroupId> {
        &self.deleted
    }

    pub fn active_len(&self, id: SequenceId) -> usize {
        self.active_len[id.index()]
    }

    pub fn active_lens(&self) -> &[usize] {
        &self.active_len
    }

    pub fn surviving(&self) -> usize {
        self.active_len.iter().filter(|&&n| n > 0).count()
    }

    pub fn is_failed(&self) -> bool {
        self.surviving() == 0
    }

    pub fn active_prefix<'a>(&self, seqs: &'a SequenceSet, id: SequenceId) -> &'a [GroupId] {
        &seqs.perm(id)[..self.active_len(id)]
    }

    /// Marks `group` deleted and truncates every sequence at its first
    /// deleted group. Repeating a group is a no-op.
    pub fn apply_deletion(&mut self, seqs: &SequenceSet, group: GroupId) -> Result<()> {
        GroupId::new_checked(group.index(), seqs.group_count())?;
        if self.active_len.len() != seqs.budget() {
            return Err(Error::domain("state does not belong to this sequence set"));
        }
        if self.deleted.insert(group) {
            for (i, len) in self.active_len.iter_mut().enumerate() {
                if let Some(pos) = seqs.perm(SequenceId(i))[..*len].iter().position(|g| *g == group) {
                    *len = pos;
                }
            }
        }
        Ok(())
    }

    /// State after deleting every group in `groups`, in order.
    pub fn with_deletions(seqs: &SequenceSet, groups: impl IntoIterator<Item = GroupId>) -> Result<Self> {
        let mut state = Self::fresh(seqs);
        for g in groups {
            state.apply_deletion(seqs, g)?;
        }
        Ok(state)
    }

    /// LongSeq: the sequence with the longest surviving prefix, lowest index
    /// on ties.
    pub fn select_longseq(&self) -> Option<SequenceId> {
        let mut best: Option<(usize, usize)> = None;
        for (i, &len) in self.active_len.iter().enumerate() {
            if len > 0 && best.is_none_or(|(_, b)| len > b) {
                best = Some((i, len));
            }
        }
        best.map(|(i, _)| SequenceId(i))
    }

    /// MinSeq: surviving sequences whose prefix group sets are maximal under
    /// inclusion. Among identical sets only the lowest index is kept.
    pub fn select_minseq(&self, seqs: &SequenceSet) -> Vec<SequenceId> {
        let prefixes: Vec<(SequenceId, BTreeSet<GroupId>)> = seqs
            .ids()
            .filter(|id| self.active_len(*id) > 0)
            .map(|id| (id, self.active_prefix(seqs, id).iter().copied().collect()))
            .collect();
        prefixes
            .iter()
            .filter(|(id, set)| {
                !prefixes.iter().any(|(other, o)| {
                    other != id && set.is_subset(o) && (set.len() < o.len() || other < id)
                })
            })
            .map(|(id, _)| *id)
            .collect()
    }

    /// AllSeq: every surviving sequence, weighted by its surviving length.
    pub fn select_allseq(&self) -> Vec<(SequenceId, f64)> {
        let total: usize = self.active_len.iter().sum();
        self.active_len
            .iter()
            .enumerate()
            .filter(|(_, &len)| len > 0)
            .map(|(i, &len)| (SequenceId(i), len as f64 / total as f64))
            .collect()
    }

    /// Sequences and blend weights used to serve under `strategy`.
    pub fn serving_weights(&self, seqs: &SequenceSet, strategy: ServingStrategy) -> Vec<(SequenceId, f64)> {
        match strategy {
            ServingStrategy::AllSeq => self.select_allseq(),
            ServingStrategy::MinSeq => {
                let chosen = self.select_minseq(seqs);
                let w = 1.0 / chosen.len() as f64;
                chosen.into_iter().map(|id| (id, w)).collect()
            }
            ServingStrategy::LongSeq => self.select_longseq().map(|id| (id, 1.0)).into_iter().collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ServingStrategy {
    #[default]
    #[serde(alias = "allseq")]
    AllSeq,
    #[serde(alias = "minseq")]
    MinSeq,
    #[serde(alias = "longseq")]
    LongSeq,
}

impl fmt::Display for ServingStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ServingStrategy::AllSeq => "AllSeq",
            ServingStrategy::MinSeq => "MinSeq",
            ServingStrategy::LongSeq => "LongSeq",
        })
    }
}

impl FromStr for ServingStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "allseq" | "all" => Ok(Self::AllSeq),
            "minseq" | "min" => Ok(Self::MinSeq),
            "longseq" | "long" => Ok(Self::LongSeq),
            other => Err(Error::domain(format!("unknown serving strategy `{other}`"))),
        }
    }
}

/// Smallest number of cyclically contiguous groups covering `deleted`:
/// `L − (largest cyclic gap) + 1`, or 0 when nothing is deleted.
pub fn cyclic_span(groups: usize, deleted: &BTreeSet<GroupId>) -> usize {
    let points: Vec<usize> = deleted.iter().map(|g| g.index()).collect();
    let (Some(&first), Some(&last)) = (points.first(), points.last()) else {
        return 0;
    };
    let wrap = first + groups - last;
    let max_gap = points
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(wrap, usize::max);
    groups - max_gap + 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn g(ids: &[usize]) -> Vec<GroupId> {
        ids.iter().map(|&i| GroupId(i)).collect()
    }

    fn set(ids: &[usize]) -> BTreeSet<GroupId> {
        ids.iter().map(|&i| GroupId(i)).collect()
    }

    fn ids(v: &[usize]) -> Vec<SequenceId> {
        v.iter().map(|&i| SequenceId(i)).collect()
    }

    #[test]
    fn rotation_family() {
        let seqs = build_sequences(6, 6, 0).unwrap();
        let expected = [
            [0, 1, 2, 3, 4, 5],
            [5, 0, 1, 2, 3, 4],
            [4, 5, 0, 1, 2, 3],
            [3, 4, 5, 0, 1, 2],
            [2, 3, 4, 5, 0, 1],
            [1, 2, 3, 4, 5, 0],
        ];
        for (i, e) in expected.iter().enumerate() {
            assert_eq!(seqs.perm(SequenceId(i)), g(e).as_slice());
        }
        assert_eq!(build_sequences(4, 1, 0).unwrap().perms(), &[g(&[0, 1, 2, 3])]);
    }

    #[test]
    fn budget_beyond_groups() {
        let seqs = build_sequences(3, 5, 9).unwrap();
        assert_eq!(seqs.budget(), 5);
        for t in 0..3 {
            assert_eq!(seqs.perm(SequenceId(t)), rotation(3, t).as_slice());
            assert!(!seqs.is_extension(SequenceId(t)));
        }
        let distinct: BTreeSet<_> = seqs.perms().iter().cloned().collect();
        assert_eq!(distinct.len(), 5);
        assert!(seqs.is_extension(SequenceId(4)));
        assert!(SequenceSet::from_perms(3, 0, seqs.perms().to_vec()).is_ok());
        // 2! = 2 < 4: repeats are unavoidable.
        assert_eq!(build_sequences(2, 4, 1).unwrap().budget(), 4);
        assert_eq!(build_sequences(3, 5, 9).unwrap(), seqs);
    }

    #[test]
    fn from_perms_validation() {
        assert!(SequenceSet::from_perms(3, 0, vec![g(&[0, 1, 1])]).is_err());
        assert!(SequenceSet::from_perms(3, 0, vec![g(&[0, 1])]).is_err());
        assert!(SequenceSet::from_perms(3, 0, vec![g(&[0, 1, 3])]).is_err());
        assert!(SequenceSet::from_perms(3, 0, vec![]).is_err());
    }

    #[test]
    fn first_deletion_truncates_like_worked_example() {
        let seqs = build_sequences(6, 6, 0).unwrap();
        let mut st = SequenceState::fresh(&seqs);
        st.apply_deletion(&seqs, GroupId(1)).unwrap();
        assert_eq!(st.active_lens(), &[1, 2, 3, 4, 5, 0]);
        let again = st.clone();
        st.apply_deletion(&seqs, GroupId(1)).unwrap();
        assert_eq!(st, again);
        assert!(st.apply_deletion(&seqs, GroupId(6)).is_err());
    }

    #[test]
    fn deleting_everything_kills_all() {
        let seqs = build_sequences(5, 7, 2).unwrap();
        let st = SequenceState::with_deletions(&seqs, (0..5).map(GroupId)).unwrap();
        assert!(st.active_lens().iter().all(|&n| n == 0));
        assert!(st.is_failed());
        assert_eq!(st.select_longseq(), None);
        assert!(st.select_minseq(&seqs).is_empty());
        assert!(st.select_allseq().is_empty());
    }

    #[test]
    fn worked_example_all_three_steps() {
        let seqs = build_sequences(6, 6, 0).unwrap();
        let mut st = SequenceState::fresh(&seqs);

        st.apply_deletion(&seqs, GroupId(1)).unwrap();
        let all: Vec<SequenceId> = st.select_allseq().iter().map(|(i, _)| *i).collect();
        assert_eq!(all, ids(&[0, 1, 2, 3, 4]));
        assert_eq!(st.select_minseq(&seqs), ids(&[4]));
        assert_eq!(st.active_prefix(&seqs, SequenceId(4)), g(&[2, 3, 4, 5, 0]).as_slice());
        assert_eq!(st.select_longseq(), Some(SequenceId(4)));

        st.apply_deletion(&seqs, GroupId(5)).unwrap();
        let all = st.select_allseq();
        assert_eq!(all.iter().map(|(i, _)| *i).collect::<Vec<_>>(), ids(&[0, 2, 3, 4]));
        let w: Vec<f64> = all.iter().map(|(_, w)| *w).collect();
        assert_eq!(w, vec![1.0 / 7.0, 1.0 / 7.0, 2.0 / 7.0, 3.0 / 7.0]);
        assert_eq!(st.select_minseq(&seqs), ids(&[0, 4]));
        assert_eq!(st.active_prefix(&seqs, SequenceId(4)), g(&[2, 3, 4]).as_slice());
        assert_eq!(st.select_longseq(), Some(SequenceId(4)));

        st.apply_deletion(&seqs, GroupId(2)).unwrap();
        let all: Vec<SequenceId> = st.select_allseq().iter().map(|(i, _)| *i).collect();
        assert_eq!(all, ids(&[0, 2, 3]));
        assert_eq!(st.select_minseq(&seqs), ids(&[0, 3]));
        assert_eq!(st.active_prefix(&seqs, SequenceId(3)), g(&[3, 4]).as_slice());
        assert_eq!(st.select_longseq(), Some(SequenceId(3)));
    }

    #[test]
    fn fresh_state_selection() {
        let seqs = build_sequences(4, 4, 0).unwrap();
        let st = SequenceState::fresh(&seqs);
        assert_eq!(st.select_longseq(), Some(SequenceId(0)));
        let all = st.select_allseq();
        assert!(all.iter().all(|(_, w)| *w == 0.25));
        // Every fresh prefix is the full group set, so only the lowest index
        // represents it.
        assert_eq!(st.select_minseq(&seqs), ids(&[0]));
    }

    #[test]
    fn single_survivor_strategies_agree() {
        let seqs = build_sequences(3, 3, 0).unwrap();
        // Deleting groups 0 and 2 leaves only [1,2,0] with prefix [1].
        let st = SequenceState::with_deletions(&seqs, g(&[0, 2])).unwrap();
        assert_eq!(st.surviving(), 1);
        for strategy in [ServingStrategy::AllSeq, ServingStrategy::MinSeq, ServingStrategy::LongSeq] {
            assert_eq!(st.serving_weights(&seqs, strategy), vec![(SequenceId(2), 1.0)]);
        }
    }

    #[test]
    fn span_examples() {
        assert_eq!(cyclic_span(6, &set(&[1, 3])), 3);
        assert_eq!(cyclic_span(6, &set(&[1, 5])), 3);
        assert_eq!(cyclic_span(6, &set(&[2])), 1);
        assert_eq!(cyclic_span(6, &set(&[])), 0);
        assert_eq!(cyclic_span(6, &set(&[0, 1, 2, 3, 4, 5])), 6);
    }

    #[test]
    fn span_duality_exhaustive() {
        for l in 1..=8usize {
            let seqs = build_sequences(l, l, 0).unwrap();
            for mask in 0u32..(1 << l) {
                let del: Vec<usize> = (0..l).filter(|i| mask & (1 << i) != 0).collect();
                let st = SequenceState::with_deletions(&seqs, g(&del)).unwrap();
                let best = st.active_lens().iter().copied().max().unwrap();
                assert_eq!(cyclic_span(l, st.deleted()) + best, l, "L={l} del={del:?}");
            }
        }
    }

    #[test]
    fn strategy_parsing() {
        assert_eq!("LongSeq".parse::<ServingStrategy>().unwrap(), ServingStrategy::LongSeq);
        assert!("best".parse::<ServingStrategy>().is_err());
    }

    proptest! {
        #[test]
        fn selection_invariants(l in 1usize..9, extra in 0usize..4, seed: u64, dels in proptest::collection::vec(0usize..9, 0..8)) {
            let seqs = build_sequences(l, l + extra, seed).unwrap();
            let dels: Vec<GroupId> = dels.into_iter().filter(|d| *d < l).map(GroupId).collect();
            let st = SequenceState::with_deletions(&seqs, dels.iter().copied()).unwrap();

            for id in seqs.ids() {
                prop_assert_eq!(st.active_len(id), seqs.active_len(id, st.deleted()));
            }

            let chosen = st.select_minseq(&seqs);
            let prefix = |id: SequenceId| -> BTreeSet<GroupId> { st.active_prefix(&seqs, id).iter().copied().collect() };
            for a in &chosen {
                for b in &chosen {
                    if a != b {
                        prop_assert!(!prefix(*a).is_subset(&prefix(*b)));
                    }
                }
            }
            for id in seqs.ids().filter(|id| st.active_len(*id) > 0) {
                prop_assert!(chosen.iter().any(|c| prefix(id).is_subset(&prefix(*c))));
            }
            if let Some(long) = st.select_longseq() {
                prop_assert!(chosen.contains(&long));
            }

            let mut reversed = dels.clone();
            reversed.reverse();
            prop_assert_eq!(SequenceState::with_deletions(&seqs, reversed).unwrap(), st.clone());

            let mut cur = SequenceState::fresh(&seqs);
            for d in &dels {
                let before = cur.active_lens().to_vec();
                cur.apply_deletion(&seqs, *d).unwrap();
                prop_assert!(cur.active_lens().iter().zip(&before).all(|(a, b)| a <= b));
            }
        }
    }
}
