//! Monte Carlo oracles for the closed forms in [`crate::analytics`].
//!
//! Trial `i` of a quantity draws from its own stream
//! `(seed, [MONTE_CARLO, quantity, params.., i])`. Trials are grouped into
//! fixed-size chunks whose moments are merged in chunk order, so an estimate
//! depends only on `(seed, trials)` and not on the worker count.

use std::collections::BTreeSet;

use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytics::{self, TrainingMethod};
use crate::error::{Error, Result};
use crate::ids::GroupId;
use crate::rng::{self, tag, StreamRng};
use crate::sequencing::{cyclic_span, rotation};

const CHUNK: u64 = 2048;

mod quantity {
    pub const DELETION_FEDSGT: u64 = 1;
    pub const DELETION_FEDCIO: u64 = 2;
    pub const SPAN: u64 = 3;
    pub const REMAINING_FEDSGT: u64 = 4;
    pub const REMAINING_FEDCIO: u64 = 5;
    pub const COMM_COST: u64 = 6;
    pub const DELETION_FEDSGT_FINITE: u64 = 7;
    pub const DELETION_FEDCIO_FINITE: u64 = 8;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MCConfig {
    pub trials: u64,
    pub seed: u64,
    /// Allowed |z| when comparing against a closed form.
    pub confidence_k: f64,
}

impl Default for MCConfig {
    fn default() -> Self {
        Self {
            trials: 200_000,
            seed: 0,
            confidence_k: 3.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MCEstimate {
    pub mean: f64,
    /// Sample standard deviation over `√trials`; 0 for a single trial.
    pub stderr: f64,
    pub trials: u64,
}

impl MCEstimate {
    /// `(mean − reference) / stderr`. With zero spread the score is 0 for a
    /// match within rounding and infinite otherwise.
    pub fn zscore(&self, reference: f64) -> f64 {
        let diff = self.mean - reference;
        if self.stderr > 0.0 {
            diff / self.stderr
        } else if diff.abs() <= 1e-12 * reference.abs().max(1.0) {
            0.0
        } else {
            diff.signum() * f64::INFINITY
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Moments {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Moments {
    const EMPTY: Moments = Moments { n: 0, mean: 0.0, m2: 0.0 };

    fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    fn merge(self, other: Moments) -> Moments {
        if self.n == 0 {
            return other;
        }
        if other.n == 0 {
            return self;
        }
        let n = self.n + other.n;
        let delta = other.mean - self.mean;
        Moments {
            n,
            mean: self.mean + delta * other.n as f64 / n as f64,
            m2: self.m2 + other.m2 + delta * delta * (self.n as f64 * other.n as f64 / n as f64),
        }
    }
}

/// Runs `cfg.trials` independent trials of `trial` and reports the mean.
pub fn estimate<F>(cfg: &MCConfig, path: &[u64], trial: F) -> Result<MCEstimate>
where
    F: Fn(&mut StreamRng) -> f64 + Sync,
{
    if cfg.trials == 0 {
        return Err(Error::domain("Monte Carlo needs at least one trial"));
    }
    let chunks = cfg.trials.div_ceil(CHUNK);
    let per_chunk: Vec<Moments> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut m = Moments::EMPTY;
            let mut key = Vec::with_capacity(path.len() + 2);
            key.push(tag::MONTE_CARLO);
            key.extend_from_slice(path);
            key.push(0);
            for i in c * CHUNK..((c + 1) * CHUNK).min(cfg.trials) {
                *key.last_mut().expect("trial slot") = i;
                m.push(trial(&mut rng::stream(cfg.seed, &key)));
            }
            m
        })
        .collect();
    let total = per_chunk.into_iter().fold(Moments::EMPTY, Moments::merge);
    let stderr = if total.n > 1 {
        (total.m2 / (total.n - 1) as f64).sqrt() / (total.n as f64).sqrt()
    } else {
        0.0
    };
    Ok(MCEstimate {
        mean: total.mean,
        stderr,
        trials: total.n,
    })
}

fn draw(rng: &mut impl RngCore, n: u64) -> usize {
    rng::bounded(rng, n) as usize
}

/// Uniform hits over `[0, n)` until every index in `targets` is hit.
fn hits_until_covered(rng: &mut impl RngCore, n: usize, targets: &[bool]) -> f64 {
    let mut left = targets.iter().filter(|t| **t).count();
    let mut seen = vec![false; n];
    let mut count = 0u64;
    while left > 0 {
        let g = draw(rng, n as u64);
        count += 1;
        if targets[g] && !seen[g] {
            seen[g] = true;
            left -= 1;
        }
    }
    count as f64
}

fn rotation_heads(groups: usize, budget: usize) -> Vec<bool> {
    let mut heads = vec![false; groups];
    for t in 0..budget.min(groups) {
        heads[rotation(groups, t)[0].index()] = true;
    }
    heads
}

/// Requests until every rotation head among the first `min(L, B)` sequences
/// has been hit.
pub fn mc_deletion_rate_fedsgt(groups: u64, budget: u64, cfg: &MCConfig) -> Result<MCEstimate> {
    if groups == 0 || budget == 0 {
        return Err(Error::domain("L and B must be positive"));
    }
    let heads = rotation_heads(groups as usize, budget as usize);
    estimate(cfg, &[quantity::DELETION_FEDSGT, groups, budget], |rng| {
        hits_until_covered(rng, groups as usize, &heads)
    })
}

/// Coupon collector over `c` clusters.
pub fn mc_deletion_rate_fedcio(clusters: u64, cfg: &MCConfig) -> Result<MCEstimate> {
    if clusters == 0 {
        return Err(Error::domain("cluster count must be positive"));
    }
    let all = vec![true; clusters as usize];
    estimate(cfg, &[quantity::DELETION_FEDCIO, clusters], |rng| {
        hits_until_covered(rng, clusters as usize, &all)
    })
}

/// Finite-population variant: each group holds `units` deletable units and
/// requests draw units without replacement.
pub fn mc_deletion_rate_fedsgt_finite(groups: u64, budget: u64, units: u64, cfg: &MCConfig) -> Result<MCEstimate> {
    if groups == 0 || budget == 0 || units == 0 {
        return Err(Error::domain("L, B and units per group must be positive"));
    }
    let heads = rotation_heads(groups as usize, budget as usize);
    estimate(cfg, &[quantity::DELETION_FEDSGT_FINITE, groups, budget, units], |rng| {
        hits_without_replacement(rng, groups as usize, units, &heads)
    })
}

pub fn mc_deletion_rate_fedcio_finite(clusters: u64, units: u64, cfg: &MCConfig) -> Result<MCEstimate> {
    if clusters == 0 || units == 0 {
        return Err(Error::domain("cluster count and units per cluster must be positive"));
    }
    let all = vec![true; clusters as usize];
    estimate(cfg, &[quantity::DELETION_FEDCIO_FINITE, clusters, units], |rng| {
        hits_without_replacement(rng, clusters as usize, units, &all)
    })
}

fn hits_without_replacement(rng: &mut impl RngCore, bins: usize, units: u64, targets: &[bool]) -> f64 {
    let mut remaining = vec![units; bins];
    let mut total = units * bins as u64;
    let mut left = targets.iter().filter(|t| **t).count();
    let mut seen = vec![false; bins];
    let mut count = 0u64;
    while left > 0 {
        let mut u = rng::bounded(rng, total);
        let g = remaining
            .iter()
            .position(|&r| {
                if u < r {
                    true
                } else {
                    u -= r;
                    false
                }
            })
            .expect("draw inside population");
        remaining[g] -= 1;
        total -= 1;
        count += 1;
        if targets[g] && !seen[g] {
            seen[g] = true;
            left -= 1;
        }
    }
    count as f64
}

fn span_of_hits(rng: &mut impl RngCore, groups: u64, r: usize) -> usize {
    let hit: BTreeSet<GroupId> = (0..r).map(|_| GroupId(draw(rng, groups))).collect();
    cyclic_span(groups as usize, &hit)
}

/// Cyclic span of the distinct groups hit by `r` uniform requests.
pub fn mc_expected_span(groups: u64, r: usize, cfg: &MCConfig) -> Result<MCEstimate> {
    if groups == 0 {
        return Err(Error::domain("L must be positive"));
    }
    estimate(cfg, &[quantity::SPAN, groups, r as u64], |rng| span_of_hits(rng, groups, r) as f64)
}

/// Samples still usable after `r` requests: `D/L·(L − span)` for FedSGT,
/// `D/c·(unhit clusters)` for FedCIO.
pub fn mc_expected_remaining(method: TrainingMethod, samples: u64, units: u64, r: usize, cfg: &MCConfig) -> Result<MCEstimate> {
    if units == 0 {
        return Err(Error::domain("L or c must be positive"));
    }
    let per_unit = samples as f64 / units as f64;
    match method {
        TrainingMethod::FedSgt => estimate(cfg, &[quantity::REMAINING_FEDSGT, samples, units, r as u64], |rng| {
            per_unit * (units as usize - span_of_hits(rng, units, r)) as f64
        }),
        TrainingMethod::FedCio => estimate(cfg, &[quantity::REMAINING_FEDCIO, samples, units, r as u64], |rng| {
            let mut hit = vec![false; units as usize];
            for _ in 0..r {
                hit[draw(rng, units)] = true;
            }
            per_unit * hit.iter().filter(|h| !**h).count() as f64
        }),
        TrainingMethod::FedAvg => Err(Error::domain("remaining-sample estimator is defined for FedSGT and FedCIO")),
    }
}

/// Rounds one client joins across all `L` rotations when its `S` slices land
/// in independently uniform groups.
pub fn mc_comm_cost(groups: u64, slices: usize, cfg: &MCConfig) -> Result<MCEstimate> {
    if groups == 0 || slices == 0 {
        return Err(Error::domain("L and S must be positive"));
    }
    let l = groups as usize;
    estimate(cfg, &[quantity::COMM_COST, groups, slices as u64], |rng| {
        let owned: Vec<usize> = (0..slices).map(|_| draw(rng, groups)).collect();
        (0..l)
            .map(|t| {
                let first = owned.iter().map(|g| (g + t) % l).min().expect("S >= 1") + 1;
                (l - first + 1) as f64
            })
            .sum()
    })
}

/// One line of the closed-form vs Monte Carlo comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationRow {
    pub quantity: String,
    pub params: String,
    pub closed_form: f64,
    pub mc_mean: f64,
    pub mc_stderr: f64,
    pub zscore: f64,
}

impl ValidationRow {
    pub fn new(quantity: &str, params: String, closed_form: f64, est: MCEstimate) -> Self {
        Self {
            quantity: quantity.into(),
            params,
            closed_form,
            mc_mean: est.mean,
            mc_stderr: est.stderr,
            zscore: est.zscore(closed_form),
        }
    }

    /// Recomputes the z-score against a different closed form.
    pub fn with_closed_form(&self, closed_form: f64) -> Self {
        let est = MCEstimate {
            mean: self.mc_mean,
            stderr: self.mc_stderr,
            trials: 0,
        };
        Self {
            closed_form,
            zscore: est.zscore(closed_form),
            ..self.clone()
        }
    }

    pub fn passes(&self, k: f64) -> bool {
        self.zscore.abs() <= k
    }
}

pub const VALIDATION_HEADER: [&str; 6] = ["quantity", "params", "closed_form", "mc_mean", "mc_stderr", "zscore"];

/// Parameter grid for [`validation_grid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub groups: Vec<u64>,
    pub clusters: Vec<u64>,
    pub requests: Vec<usize>,
    pub slices: Vec<usize>,
    pub samples: u64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            groups: vec![4, 6, 10],
            clusters: vec![2, 5],
            requests: vec![1, 3, 5, 10, 20],
            slices: vec![1, 2, 5],
            samples: 50_000,
        }
    }
}

/// Every closed form against its estimator. Budgets are `{2, L}` for each `L`.
pub fn validation_grid(grid: &GridSpec, cfg: &MCConfig) -> Result<Vec<ValidationRow>> {
    let mut rows = Vec::new();
    for &l in &grid.groups {
        let mut budgets = vec![2.min(l), l];
        budgets.dedup();
        for b in budgets {
            rows.push(ValidationRow::new(
                "deletion_rate_fedsgt",
                format!("L={l} B={b}"),
                analytics::deletion_rate_fedsgt(l, b)?,
                mc_deletion_rate_fedsgt(l, b, cfg)?,
            ));
        }
    }
    for &c in &grid.clusters {
        rows.push(ValidationRow::new(
            "deletion_rate_fedcio",
            format!("c={c}"),
            analytics::deletion_rate_fedcio(c)?,
            mc_deletion_rate_fedcio(c, cfg)?,
        ));
    }
    for &l in &grid.groups {
        for &r in &grid.requests {
            rows.push(ValidationRow::new(
                "expected_span",
                format!("L={l} r={r}"),
                analytics::expected_span(l, r)?,
                mc_expected_span(l, r, cfg)?,
            ));
        }
    }
    let d = grid.samples;
    for &l in &grid.groups {
        for &r in &grid.requests {
            rows.push(ValidationRow::new(
                "expected_remaining_fedsgt",
                format!("D={d} L={l} r={r}"),
                analytics::expected_remaining_fedsgt(d, l, r)?,
                mc_expected_remaining(TrainingMethod::FedSgt, d, l, r, cfg)?,
            ));
        }
    }
    for &c in &grid.clusters {
        for &r in &grid.requests {
            rows.push(ValidationRow::new(
                "expected_remaining_fedcio",
                format!("D={d} c={c} r={r}"),
                analytics::expected_remaining_fedcio(d, c, r)?,
                mc_expected_remaining(TrainingMethod::FedCio, d, c, r, cfg)?,
            ));
        }
    }
    for &l in &grid.groups {
        for &s in &grid.slices {
            rows.push(ValidationRow::new(
                "expected_comm_cost",
                format!("L={l} S={s}"),
                analytics::expected_comm_cost(l, s)?,
                mc_comm_cost(l, s, cfg)?,
            ));
        }
    }
    Ok(rows)
}

/// Deletion rates with finite groups, compared against the infinite-population
/// closed forms. Informational only.
pub fn approximation_rows(grid: &GridSpec, units: u64, cfg: &MCConfig) -> Result<Vec<ValidationRow>> {
    let mut rows = Vec::new();
    for &l in &grid.groups {
        rows.push(ValidationRow::new(
            "deletion_rate_fedsgt_finite",
            format!("L={l} B={l} units={units}"),
            analytics::deletion_rate_fedsgt(l, l)?,
            mc_deletion_rate_fedsgt_finite(l, l, units, cfg)?,
        ));
    }
    for &c in &grid.clusters {
        rows.push(ValidationRow::new(
            "deletion_rate_fedcio_finite",
            format!("c={c} units={units}"),
            analytics::deletion_rate_fedcio(c)?,
            mc_deletion_rate_fedcio_finite(c, units, cfg)?,
        ));
    }
    Ok(rows)
}
