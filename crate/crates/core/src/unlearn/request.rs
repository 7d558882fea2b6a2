use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grouping::{GroupingPlan, SliceRef};
use crate::rng::{self, tag};

/// Records removed by one request when the slice is large enough.
pub const DEFAULT_RECORD_COUNT: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnlearnRequest {
    pub target: SliceRef,
    pub record_count: usize,
}

impl UnlearnRequest {
    /// Request for up to `record_count` records of `target`, capped at the
    /// slice's size in `plan`.
    pub fn capped(plan: &GroupingPlan, target: SliceRef, record_count: usize) -> Result<Self> {
        let size = plan
            .samples(target)
            .ok_or_else(|| Error::Lookup(format!("slice {target} is not in the grouping plan")))?;
        Ok(Self {
            target,
            record_count: record_count.min(size),
        })
    }

    pub fn validate(&self, plan: &GroupingPlan) -> Result<()> {
        match plan.samples(self.target) {
            None => Err(Error::Lookup(format!("slice {} is not in the grouping plan", self.target))),
            Some(size) if self.record_count > size => Err(Error::domain(format!(
                "request removes {} records from slice {} of size {size}",
                self.record_count, self.target
            ))),
            Some(_) => Ok(()),
        }
    }
}

/// `count` requests with targets drawn uniformly over every slice in the
/// plan, deterministic in `seed`.
pub fn uniform_requests(plan: &GroupingPlan, count: usize, seed: u64, record_count: usize) -> Vec<UnlearnRequest> {
    let slices: Vec<SliceRef> = plan.slices().collect();
    let mut rng = rng::stream(seed, &[tag::REQUESTS]);
    (0..count)
        .map(|_| {
            let target = slices[rng::bounded_usize(&mut rng, slices.len())];
            UnlearnRequest::capped(plan, target, record_count).expect("target drawn from the plan")
        })
        .collect()
}
