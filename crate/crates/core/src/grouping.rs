//! Seeded assignment of client slices to `L` balanced groups.
//!
//! Slices are sorted by `(client, slice)`, shuffled with a Fisher–Yates pass
//! driven by [`crate::rng::stream`]`(seed, [GROUPING])`, and cut into `L`
//! contiguous runs. When `L` does not divide the slice count the first
//! `M mod L` groups take one extra slice.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::{ClientId, GroupId, SliceIdx};
use crate::rng::{self, tag};

/// Name of the shuffle generator recorded in serialized plans.
pub const SHUFFLE_PRNG: &str = "chacha8/splitmix64-key/lemire-bounded/fisher-yates-descending";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SliceRef {
    pub client: ClientId,
    pub slice: SliceIdx,
}

impl SliceRef {
    pub const fn new(client: usize, slice: usize) -> Self {
        Self {
            client: ClientId(client),
            slice: SliceIdx(slice),
        }
    }
}

impl std::fmt::Display for SliceRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.client, self.slice)
    }
}

impl std::str::FromStr for SliceRef {
    type Err = Error;

    /// Parses `client:slice`.
    fn from_str(s: &str) -> Result<Self> {
        let (c, sl) = s
            .split_once(':')
            .ok_or_else(|| Error::domain(format!("expected `client:slice`, got `{s}`")))?;
        let parse = |v: &str| {
            v.trim()
                .parse::<usize>()
                .map_err(|_| Error::domain(format!("bad index `{v}` in `{s}`")))
        };
        Ok(SliceRef::new(parse(c)?, parse(sl)?))
    }
}

/// One catalog row: a slice and how many samples it holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SliceEntry {
    pub slice: SliceRef,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "PlanDocument", try_from = "PlanDocument")]
pub struct GroupingPlan {
    seed: u64,
    members: Vec<Vec<SliceRef>>,
    assignment: BTreeMap<SliceRef, GroupId>,
    sizes: BTreeMap<SliceRef, usize>,
}

impl GroupingPlan {
    pub fn group_count(&self) -> usize {
        self.members.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn slice_count(&self) -> usize {
        self.assignment.len()
    }

    /// Slices of `group` in shuffled order.
    pub fn members(&self, group: GroupId) -> &[SliceRef] {
        &self.members[group.index()]
    }

    pub fn groups(&self) -> impl Iterator<Item = (GroupId, &[SliceRef])> {
        self.members
            .iter()
            .enumerate()
            .map(|(g, m)| (GroupId(g), m.as_slice()))
    }

    /// The unique group holding `slice`.
    pub fn group_of(&self, slice: SliceRef) -> Result<GroupId> {
        self.assignment
            .get(&slice)
            .copied()
            .ok_or_else(|| Error::Lookup(format!("slice {slice} is not in the grouping plan")))
    }

    pub fn contains(&self, slice: SliceRef) -> bool {
        self.assignment.contains_key(&slice)
    }

    pub fn samples(&self, slice: SliceRef) -> Option<usize> {
        self.sizes.get(&slice).copied()
    }

    /// Slices in canonical `(client, slice)` order.
    pub fn slices(&self) -> impl Iterator<Item = SliceRef> + '_ {
        self.assignment.keys().copied()
    }

    pub fn group_samples(&self, group: GroupId) -> usize {
        self.members(group)
            .iter()
            .map(|s| self.sizes[s])
            .sum()
    }

    /// Distinct groups holding at least one of `client`'s slices.
    pub fn client_groups(&self, client: ClientId) -> BTreeSet<GroupId> {
        self.assignment
            .range(SliceRef { client, slice: SliceIdx(0) }..)
            .take_while(|(s, _)| s.client == client)
            .map(|(_, g)| *g)
            .collect()
    }

    pub fn clients(&self) -> BTreeSet<ClientId> {
        self.assignment.keys().map(|s| s.client).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Corrupt(format!("grouping plan: {e}")))
    }
}

/// Builds the balanced, seed-reproducible grouping.
pub fn build_grouping(catalog: &[SliceEntry], groups: usize, seed: u64) -> Result<GroupingPlan> {
    if groups == 0 {
        return Err(Error::config("group count must be positive"));
    }
    let mut sizes = BTreeMap::new();
    for entry in catalog {
        if sizes.insert(entry.slice, entry.samples).is_some() {
            return Err(Error::config(format!("duplicate slice {} in catalog", entry.slice)));
        }
    }
    let total = sizes.len();
    if total < groups {
        return Err(Error::config(format!(
            "{total} slices cannot fill {groups} groups; some group would be empty"
        )));
    }

    let mut order: Vec<SliceRef> = sizes.keys().copied().collect();
    let mut rng = rng::stream(seed, &[tag::GROUPING]);
    rng::shuffle(&mut rng, &mut order);

    let base = total / groups;
    let extra = total % groups;
    let mut members = Vec::with_capacity(groups);
    let mut assignment = BTreeMap::new();
    let mut cursor = 0;
    for g in 0..groups {
        let len = base + usize::from(g < extra);
        let chunk = order[cursor..cursor + len].to_vec();
        for s in &chunk {
            assignment.insert(*s, GroupId(g));
        }
        members.push(chunk);
        cursor += len;
    }

    Ok(GroupingPlan {
        seed,
        members,
        assignment,
        sizes,
    })
}

/// Independent-uniform slice assignment: each slice draws its group on its
/// own. This is the model behind the closed-form client-spread distribution,
/// not the balanced plan used for training.
pub fn assign_independent(slices: &[SliceRef], groups: usize, seed: u64) -> BTreeMap<SliceRef, GroupId> {
    let mut rng = rng::stream(seed, &[tag::INDEPENDENT_ASSIGN]);
    slices
        .iter()
        .map(|s| (*s, GroupId(rng::bounded_usize(&mut rng, groups))))
        .collect()
}

#[derive(Serialize, Deserialize)]
struct PlanDocument {
    format: String,
    version: u32,
    prng: String,
    seed: u64,
    groups: usize,
    assignment: Vec<AssignmentRow>,
}

#[derive(Serialize, Deserialize)]
struct AssignmentRow {
    client: usize,
    slice: usize,
    group: usize,
    samples: usize,
}

const PLAN_FORMAT: &str = "fedsgt-grouping";

impl From<GroupingPlan> for PlanDocument {
    fn from(plan: GroupingPlan) -> Self {
        let assignment = plan
            .members
            .iter()
            .enumerate()
            .flat_map(|(g, members)| {
                members.iter().map(move |s| (g, *s))
            })
            .map(|(g, s)| AssignmentRow {
                client: s.client.0,
                slice: s.slice.0,
                group: g,
                samples: plan.sizes[&s],
            })
            .collect();
        PlanDocument {
            format: PLAN_FORMAT.to_string(),
            version: 1,
            prng: SHUFFLE_PRNG.to_string(),
            seed: plan.seed,
            groups: plan.members.len(),
            assignment,
        }
    }
}

impl TryFrom<PlanDocument> for GroupingPlan {
    type Error = String;

    fn try_from(doc: PlanDocument) -> std::result::Result<Self, String> {
        if doc.format != PLAN_FORMAT || doc.version != 1 {
            return Err(format!("unsupported plan format {} v{}", doc.format, doc.version));
        }
        let mut members = vec![Vec::new(); doc.groups];
        let mut assignment = BTreeMap::new();
        let mut sizes = BTreeMap::new();
        for row in doc.assignment {
            let s = SliceRef::new(row.client, row.slice);
            let bucket = members
                .get_mut(row.group)
                .ok_or_else(|| format!("group {} out of range", row.group))?;
            bucket.push(s);
            if assignment.insert(s, GroupId(row.group)).is_some() {
                return Err(format!("slice {s} assigned twice"));
            }
            sizes.insert(s, row.samples);
        }
        if members.iter().any(Vec::is_empty) {
            return Err("empty group in plan".to_string());
        }
        Ok(GroupingPlan {
            seed: doc.seed,
            members,
            assignment,
            sizes,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn catalog(clients: usize, per_client: usize) -> Vec<SliceEntry> {
        (0..clients)
            .flat_map(|c| {
                (0..per_client).map(move |s| SliceEntry {
                    slice: SliceRef::new(c, s),
                    samples: 10 + c + s,
                })
            })
            .collect()
    }

    #[test]
    fn even_split() {
        let plan = build_grouping(&catalog(4, 3), 6, 11).unwrap();
        assert_eq!(plan.group_count(), 6);
        assert!(plan.groups().all(|(_, m)| m.len() == 2));
    }

    #[test]
    fn one_slice_per_group() {
        for seed in 0..5 {
            let plan = build_grouping(&catalog(5, 1), 5, seed).unwrap();
            assert!(plan.groups().all(|(_, m)| m.len() == 1));
        }
    }

    #[test]
    fn remainder_goes_to_leading_groups() {
        let plan = build_grouping(&catalog(7, 2), 4, 3).unwrap();
        let lens: Vec<usize> = plan.groups().map(|(_, m)| m.len()).collect();
        assert_eq!(lens, vec![4, 4, 3, 3]);
    }

    #[test]
    fn seeds_reproduce_and_differ() {
        let cat = catalog(10, 5);
        let a = build_grouping(&cat, 10, 42).unwrap();
        let b = build_grouping(&cat, 10, 42).unwrap();
        let c = build_grouping(&cat, 10, 43).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        assert_ne!(a.members, c.members);
    }

    #[test]
    fn ingestion_order_is_irrelevant() {
        let cat = catalog(6, 3);
        let mut reversed = cat.clone();
        reversed.reverse();
        assert_eq!(build_grouping(&cat, 4, 9).unwrap(), build_grouping(&reversed, 4, 9).unwrap());
    }

    #[test]
    fn too_few_slices() {
        assert!(matches!(build_grouping(&catalog(2, 2), 5, 0), Err(Error::Config(_))));
        assert!(build_grouping(&catalog(2, 2), 0, 0).is_err());
    }

    #[test]
    fn duplicate_slices_rejected() {
        let mut cat = catalog(2, 2);
        cat.push(cat[0]);
        assert!(build_grouping(&cat, 2, 0).is_err());
    }

    #[test]
    fn group_of_consistency() {
        let plan = build_grouping(&catalog(6, 4), 6, 5).unwrap();
        for s in plan.members(GroupId(3)) {
            assert_eq!(plan.group_of(*s).unwrap(), GroupId(3));
        }
        let covered: BTreeSet<GroupId> = plan.slices().map(|s| plan.group_of(s).unwrap()).collect();
        assert_eq!(covered.len(), 6);
        assert!(matches!(plan.group_of(SliceRef::new(99, 0)), Err(Error::Lookup(_))));
    }

    #[test]
    fn client_groups_bounded_by_slices() {
        let plan = build_grouping(&catalog(10, 3), 10, 1).unwrap();
        for c in plan.clients() {
            let k = plan.client_groups(c).len();
            assert!((1..=3).contains(&k));
        }
    }

    #[test]
    fn json_round_trip() {
        let plan = build_grouping(&catalog(5, 3), 4, 77).unwrap();
        let text = plan.to_json().unwrap();
        assert!(text.contains(SHUFFLE_PRNG));
        assert_eq!(GroupingPlan::from_json(&text).unwrap(), plan);
        assert!(GroupingPlan::from_json("{\"format\":\"x\"}").is_err());
    }

    #[test]
    fn slice_ref_parsing() {
        assert_eq!("3:1".parse::<SliceRef>().unwrap(), SliceRef::new(3, 1));
        assert!("3".parse::<SliceRef>().is_err());
        assert!("a:1".parse::<SliceRef>().is_err());
    }

    proptest! {
        #[test]
        fn partition_and_balance(clients in 1usize..12, per in 1usize..6, l in 1usize..20, seed: u64) {
            let cat = catalog(clients, per);
            prop_assume!(cat.len() >= l);
            let plan = build_grouping(&cat, l, seed).unwrap();
            let mut seen = BTreeSet::new();
            for (_, m) in plan.groups() {
                for s in m {
                    prop_assert!(seen.insert(*s));
                }
            }
            prop_assert_eq!(seen.len(), cat.len());
            let lens: Vec<usize> = plan.groups().map(|(_, m)| m.len()).collect();
            prop_assert!(lens.iter().max().unwrap() - lens.iter().min().unwrap() <= 1);
        }
    }
}
