//! Closed-form calculators: deletion rates, occupancy and cyclic-span
//! probabilities, expected remaining training data, communication and
//! training cost.
//!
//! Probabilities are evaluated in exact rational arithmetic and converted to
//! `f64` only on return; the alternating sums in [`prob_max_gap_le`] cancel
//! catastrophically in floating point.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use crate::combinatorics::{self, binomial, harmonic, occupancy_count, ExactRatio};
use crate::error::{Error, Result};

/// Symbol set shared by the cost and deletion calculators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalyticParams {
    /// Group count `L`.
    pub groups: u64,
    /// Training budget `B` (number of sequences).
    pub budget: u64,
    /// FedCIO cluster count `c`.
    pub clusters: u64,
    /// Total sample count `|D|`.
    pub samples: u64,
    /// Number of unlearning requests `r`.
    pub requests: u64,
    /// Slices per client `S`.
    pub slices_per_client: u64,
    /// Client count `N`.
    pub clients: u64,
    /// Baseline FL rounds `T`.
    pub rounds: u64,
    /// Local epochs `E`.
    pub epochs: u64,
    /// Trainable parameters per adapter `P`.
    pub params_per_adapter: u64,
}

impl Default for AnalyticParams {
    fn default() -> Self {
        Self {
            groups: 10,
            budget: 10,
            clusters: 5,
            samples: 50_000,
            requests: 25,
            slices_per_client: 2,
            clients: 10,
            rounds: 10,
            epochs: 3,
            params_per_adapter: 1,
        }
    }
}

impl AnalyticParams {
    /// `B' = min(L, B)`.
    pub fn effective_budget(&self) -> u64 {
        self.groups.min(self.budget)
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("groups", self.groups),
            ("budget", self.budget),
            ("clusters", self.clusters),
            ("samples", self.samples),
            ("requests", self.requests),
            ("slices_per_client", self.slices_per_client),
            ("clients", self.clients),
            ("rounds", self.rounds),
            ("epochs", self.epochs),
            ("params_per_adapter", self.params_per_adapter),
        ];
        let problems: Vec<String> = fields
            .iter()
            .filter(|(_, v)| *v == 0)
            .map(|(name, _)| format!("{name} must be positive"))
            .collect();
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }
}

/// `δ(FedSGT) = L · H_{min(L,B)}`.
pub fn deletion_rate_fedsgt(groups: u64, budget: u64) -> Result<f64> {
    if groups == 0 || budget == 0 {
        return Err(Error::domain("deletion rate needs L >= 1 and B >= 1"));
    }
    let h = harmonic(groups.min(budget))?;
    Ok(combinatorics::to_f64(&(h * BigInt::from(groups))))
}

/// `δ(FedCIO) = c · H_c`.
pub fn deletion_rate_fedcio(clusters: u64) -> Result<f64> {
    if clusters == 0 {
        return Err(Error::domain("deletion rate needs c >= 1"));
    }
    let h = harmonic(clusters)?;
    Ok(combinatorics::to_f64(&(h * BigInt::from(clusters))))
}

/// Probability that `r` uniform draws over `groups` bins occupy exactly `m`
/// bins. With `r = 0` all mass sits on `m = 0`.
pub fn prob_m_distinct(groups: u64, r: usize, m: usize) -> ExactRatio {
    if r == 0 {
        return if m == 0 {
            ExactRatio::one()
        } else {
            ExactRatio::zero()
        };
    }
    if groups == 0 || m == 0 || m > r || m as u64 > groups {
        return ExactRatio::zero();
    }
    ExactRatio::new(
        occupancy_count(groups, r, m),
        num_traits::pow(BigInt::from(groups), r),
    )
}

/// `Pr(max gap <= s | M = m)` for `m` occupied positions on a cycle of
/// length `groups`, by inclusion–exclusion over gaps exceeding `s`.
pub fn prob_max_gap_le(groups: u64, m: u64, s: u64) -> Result<ExactRatio> {
    if m == 0 || m > groups {
        return Err(Error::domain(format!(
            "occupied count {m} outside [1, {groups}]"
        )));
    }
    if s == 0 {
        return Ok(ExactRatio::zero());
    }
    let slack = groups - m;
    let mut count = BigInt::zero();
    for j in 0..=slack / s {
        let term = binomial(m, j) * binomial(groups - 1 - j * s, m - 1);
        if j % 2 == 0 {
            count += term;
        } else {
            count -= term;
        }
    }
    Ok(ExactRatio::new(count, binomial(groups - 1, m - 1)))
}

/// Exact `E[U | M = m] = 1 + Σ_{s=1}^{L-1} F_m(s)`.
pub fn expected_span_given_m_exact(groups: u64, m: u64) -> Result<ExactRatio> {
    let mut acc = ExactRatio::one();
    for s in 1..groups {
        acc += prob_max_gap_le(groups, m, s)?;
    }
    Ok(acc)
}

pub fn expected_span_given_m(groups: u64, m: u64) -> Result<f64> {
    expected_span_given_m_exact(groups, m).map(|v| combinatorics::to_f64(&v))
}

/// Exact expected cyclic span after `r` uniform requests over `groups`.
pub fn expected_span_exact(groups: u64, r: usize) -> Result<ExactRatio> {
    if groups == 0 {
        return Err(Error::domain("expected span needs L >= 1"));
    }
    let mut acc = ExactRatio::zero();
    for m in 1..=r.min(groups as usize) {
        acc += prob_m_distinct(groups, r, m) * expected_span_given_m_exact(groups, m as u64)?;
    }
    Ok(acc)
}

pub fn expected_span(groups: u64, r: usize) -> Result<f64> {
    expected_span_exact(groups, r).map(|v| combinatorics::to_f64(&v))
}

/// Expected samples behind the longest surviving prefix under the full
/// rotation family (`B >= L`): `|D|/L · (L − E[U])`.
pub fn expected_remaining_fedsgt(samples: u64, groups: u64, r: usize) -> Result<f64> {
    let span = expected_span_exact(groups, r)?;
    let remaining = (ExactRatio::from_integer(BigInt::from(groups)) - span)
        * ExactRatio::new(BigInt::from(samples), BigInt::from(groups));
    Ok(combinatorics::to_f64(&remaining))
}

/// Budget-aware form of [`expected_remaining_fedsgt`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum RemainingEstimate {
    /// `B = L`: the closed form is exact.
    Exact(f64),
    /// `B > L`: the rotation family is a subset, so the closed form bounds
    /// the true expectation from below.
    LowerBound(f64),
    /// `B < L`: no closed form; use the Monte Carlo estimator.
    Unavailable,
}

pub fn expected_remaining_fedsgt_with_budget(
    samples: u64,
    groups: u64,
    budget: u64,
    r: usize,
) -> Result<RemainingEstimate> {
    if budget == 0 {
        return Err(Error::domain("budget must be positive"));
    }
    Ok(match budget.cmp(&groups) {
        std::cmp::Ordering::Less => RemainingEstimate::Unavailable,
        std::cmp::Ordering::Equal => {
            RemainingEstimate::Exact(expected_remaining_fedsgt(samples, groups, r)?)
        }
        std::cmp::Ordering::Greater => {
            RemainingEstimate::LowerBound(expected_remaining_fedsgt(samples, groups, r)?)
        }
    })
}

/// `|D| · (1 − 1/c)^r`.
pub fn expected_remaining_fedcio(samples: u64, clusters: u64, r: usize) -> Result<f64> {
    if clusters == 0 {
        return Err(Error::domain("cluster count must be positive"));
    }
    let keep = ExactRatio::new(BigInt::from(clusters - 1), BigInt::from(clusters));
    let value = num_traits::pow(keep, r) * BigInt::from(samples);
    Ok(combinatorics::to_f64(&value))
}

/// Distribution of the number of distinct groups `K` touched by a client's
/// `slices` slices under independent uniform assignment.
pub fn prob_k_groups(groups: u64, slices: usize, k: usize) -> ExactRatio {
    if slices == 0 || k == 0 {
        return ExactRatio::zero();
    }
    prob_m_distinct(groups, slices, k)
}

/// Exact `E[C_total(L, S)] = L(L+1) Σ_k Pr(K=k) · k/(k+1)`.
pub fn expected_comm_cost_exact(groups: u64, slices: usize) -> Result<ExactRatio> {
    if groups == 0 || slices == 0 {
        return Err(Error::domain("communication cost needs L >= 1 and S >= 1"));
    }
    let mut acc = ExactRatio::zero();
    for k in 1..=slices.min(groups as usize) {
        acc += prob_k_groups(groups, slices, k) * ExactRatio::new(BigInt::from(k), BigInt::from(k + 1));
    }
    Ok(acc * BigInt::from(groups * (groups + 1)))
}

/// Expected per-client communication rounds over all `L` cyclic sequences.
pub fn expected_comm_cost(groups: u64, slices: usize) -> Result<f64> {
    expected_comm_cost_exact(groups, slices).map(|v| combinatorics::to_f64(&v))
}

/// Per-client rounds for FedCIO: the clustering stage plus `T`.
pub fn comm_rounds_fedcio(rounds: u64, cluster_rounds: u64) -> u64 {
    rounds + cluster_rounds
}

/// Sequence budget whose training cost matches `T` baseline rounds:
/// `2TL/(L+1)`.
pub fn matched_budget(rounds: u64, groups: u64) -> Result<f64> {
    if rounds == 0 || groups == 0 {
        return Err(Error::domain("matched budget needs T >= 1 and L >= 1"));
    }
    Ok(2.0 * rounds as f64 * groups as f64 / (groups as f64 + 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TrainingMethod {
    FedAvg,
    FedCio,
    FedSgt,
}

impl TrainingMethod {
    pub const ALL: [TrainingMethod; 3] = [Self::FedAvg, Self::FedCio, Self::FedSgt];
}

impl fmt::Display for TrainingMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TrainingMethod::FedAvg => "FedAvg",
            TrainingMethod::FedCio => "FedCIO",
            TrainingMethod::FedSgt => "FedSGT",
        })
    }
}

impl FromStr for TrainingMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fedavg" => Ok(Self::FedAvg),
            "fedcio" => Ok(Self::FedCio),
            "fedsgt" => Ok(Self::FedSgt),
            other => Err(Error::domain(format!("unknown training method `{other}`"))),
        }
    }
}

/// Training cost in parameter-update units, without big-O constants.
///
/// FedAvg and FedCIO: `T·E·|D|·P·L`. FedSGT: `B·E·((L+1)/2)·|D|·P`.
pub fn training_cost_exact(method: TrainingMethod, p: &AnalyticParams) -> Result<ExactRatio> {
    p.validate()?;
    let big = |v: u64| BigInt::from(v);
    Ok(match method {
        TrainingMethod::FedAvg | TrainingMethod::FedCio => ExactRatio::from_integer(
            big(p.rounds) * big(p.epochs) * big(p.samples) * big(p.params_per_adapter) * big(p.groups),
        ),
        TrainingMethod::FedSgt => ExactRatio::new(
            big(p.budget) * big(p.epochs) * big(p.groups + 1) * big(p.samples) * big(p.params_per_adapter),
            big(2),
        ),
    })
}

pub fn training_cost(method: TrainingMethod, p: &AnalyticParams) -> Result<f64> {
    training_cost_exact(method, p).map(|v| combinatorics::to_f64(&v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::combinatorics::{ratio, to_f64};

    /// Brute-force cyclic span: best rotation's (max − min) plus one.
    fn span_by_rotation(l: usize, occupied: &[usize]) -> usize {
        if occupied.is_empty() {
            return 0;
        }
        (0..l)
            .map(|j| {
                let shifted: Vec<usize> = occupied.iter().map(|x| (x + j) % l).collect();
                shifted.iter().max().unwrap() - shifted.iter().min().unwrap() + 1
            })
            .min()
            .unwrap()
    }

    fn subsets(l: usize, m: usize) -> Vec<Vec<usize>> {
        (0u32..(1 << l))
            .filter(|mask| mask.count_ones() as usize == m)
            .map(|mask| (0..l).filter(|i| mask & (1 << i) != 0).collect())
            .collect()
    }

    fn max_cyclic_gap(l: usize, occupied: &[usize]) -> usize {
        let m = occupied.len();
        (0..m)
            .map(|i| {
                if i + 1 < m {
                    occupied[i + 1] - occupied[i]
                } else {
                    occupied[0] + l - occupied[m - 1]
                }
            })
            .max()
            .unwrap()
    }

    #[test]
    fn deletion_rates() {
        assert!((deletion_rate_fedsgt(10, 10).unwrap() - 29.2897).abs() < 5e-5);
        assert_eq!(deletion_rate_fedsgt(1, 1).unwrap(), 1.0);
        assert_eq!(deletion_rate_fedsgt(6, 3).unwrap(), 11.0);
        assert!((deletion_rate_fedcio(5).unwrap() - 11.4167).abs() < 5e-5);
        assert_eq!(deletion_rate_fedcio(1).unwrap(), 1.0);
        assert_eq!(deletion_rate_fedcio(2).unwrap(), 3.0);
        assert!(deletion_rate_fedsgt(0, 3).is_err());
        assert!(deletion_rate_fedcio(0).is_err());
    }

    #[test]
    fn prob_m_distinct_matches_enumeration() {
        let mut counts = [0u32; 3];
        for a in 0..6 {
            for b in 0..6 {
                counts[if a == b { 1 } else { 2 }] += 1;
            }
        }
        assert_eq!(counts[1], 6);
        assert_eq!(prob_m_distinct(6, 2, 1), ratio(counts[1], 36));
        assert_eq!(prob_m_distinct(6, 2, 2), ratio(counts[2], 36));
        assert_eq!(prob_m_distinct(6, 2, 1), ratio(1, 6));
        assert_eq!(prob_m_distinct(6, 2, 2), ratio(5, 6));
        assert_eq!(prob_m_distinct(4, 1, 1), ratio(1, 1));
        assert_eq!(prob_m_distinct(4, 0, 0), ratio(1, 1));
        assert_eq!(prob_m_distinct(4, 0, 1), ratio(0, 1));
        assert_eq!(prob_m_distinct(4, 3, 5), ratio(0, 1));
    }

    #[test]
    fn occupancy_sums_to_one() {
        for l in 1..=20u64 {
            for r in 1..=20usize {
                let total: ExactRatio = (1..=r.min(l as usize)).map(|m| prob_m_distinct(l, r, m)).sum();
                assert_eq!(total, ratio(1, 1), "L={l} r={r}");
            }
        }
    }

    #[test]
    fn prob_k_groups_sums_to_one_and_matches_examples() {
        for l in 1..=20u64 {
            for s in 1..=20usize {
                let total: ExactRatio = (1..=s).map(|k| prob_k_groups(l, s, k)).sum();
                assert_eq!(total, ratio(1, 1));
            }
        }
        assert_eq!(prob_k_groups(7, 1, 1), ratio(1, 1));
        assert_eq!(prob_k_groups(2, 2, 1), ratio(1, 2));
        assert_eq!(prob_k_groups(2, 2, 2), ratio(1, 2));
        assert_eq!(prob_k_groups(2, 2, 3), ratio(0, 1));
    }

    #[test]
    fn max_gap_examples() {
        assert_eq!(prob_max_gap_le(6, 1, 5).unwrap(), ratio(0, 1));
        assert_eq!(prob_max_gap_le(6, 1, 6).unwrap(), ratio(1, 1));
        assert_eq!(prob_max_gap_le(6, 2, 0).unwrap(), ratio(0, 1));
        // Positive 2-compositions of 6 are (1,5)..(5,1); only (3,3) has both
        // parts at most 3.
        let compositions: Vec<(u64, u64)> = (1..6).map(|a| (a, 6 - a)).collect();
        let good = compositions.iter().filter(|(a, b)| *a <= 3 && *b <= 3).count();
        assert_eq!(good, 1);
        assert_eq!(prob_max_gap_le(6, 2, 3).unwrap(), ratio(good as u64, 5));
        assert!(prob_max_gap_le(6, 7, 3).is_err());
        assert!(prob_max_gap_le(6, 0, 3).is_err());
    }

    #[test]
    fn max_gap_matches_subset_enumeration() {
        for l in 1..=12usize {
            for m in 1..=l {
                let sets = subsets(l, m);
                for s in 1..=l {
                    let good = sets.iter().filter(|z| max_cyclic_gap(l, z) <= s).count();
                    assert_eq!(
                        prob_max_gap_le(l as u64, m as u64, s as u64).unwrap(),
                        ratio(good as u64, sets.len() as u64),
                        "L={l} m={m} s={s}"
                    );
                }
            }
        }
    }

    #[test]
    fn max_gap_monotone_and_saturates() {
        for l in 1..=20u64 {
            for m in 1..=l {
                let mut prev = ratio(0, 1);
                for s in 1..=l {
                    let v = prob_max_gap_le(l, m, s).unwrap();
                    assert!(v >= prev);
                    prev = v;
                }
                assert_eq!(prob_max_gap_le(l, m, l - m + 1).unwrap(), ratio(1, 1));
            }
        }
    }

    #[test]
    fn span_given_m() {
        assert_eq!(expected_span_given_m(6, 1).unwrap(), 1.0);
        for l in 1..=10 {
            assert_eq!(expected_span_given_m(l, l).unwrap(), l as f64);
        }
        let pairs = subsets(6, 2);
        let total: usize = pairs.iter().map(|z| span_by_rotation(6, z)).sum();
        let exact = expected_span_given_m_exact(6, 2).unwrap();
        assert_eq!(exact, ratio(total as u64, pairs.len() as u64));
    }

    #[test]
    fn span_given_m_matches_rotation_brute_force() {
        for l in 1..=10usize {
            for m in 1..=l {
                let sets = subsets(l, m);
                let total: usize = sets.iter().map(|z| span_by_rotation(l, z)).sum();
                assert_eq!(
                    expected_span_given_m_exact(l as u64, m as u64).unwrap(),
                    ratio(total as u64, sets.len() as u64)
                );
            }
        }
    }

    #[test]
    fn expected_span_matches_full_enumeration() {
        // All L^r ordered request vectors for small cases.
        for (l, r) in [(4usize, 3usize), (5, 4), (6, 3)] {
            let mut total = 0usize;
            let outcomes = l.pow(r as u32);
            for code in 0..outcomes {
                let mut c = code;
                let mut hit = vec![false; l];
                for _ in 0..r {
                    hit[c % l] = true;
                    c /= l;
                }
                let occ: Vec<usize> = (0..l).filter(|&i| hit[i]).collect();
                total += span_by_rotation(l, &occ);
            }
            assert_eq!(
                expected_span_exact(l as u64, r).unwrap(),
                ratio(total as u64, outcomes as u64)
            );
        }
        assert_eq!(expected_span(10, 0).unwrap(), 0.0);
        assert_eq!(expected_span(6, 1).unwrap(), 1.0);
    }

    #[test]
    fn remaining_examples() {
        assert_eq!(expected_remaining_fedsgt(50_000, 10, 0).unwrap(), 50_000.0);
        assert_eq!(expected_remaining_fedsgt(50_000, 10, 1).unwrap(), 45_000.0);
        assert_eq!(expected_remaining_fedcio(50_000, 5, 0).unwrap(), 50_000.0);
        assert_eq!(expected_remaining_fedcio(50_000, 5, 1).unwrap(), 40_000.0);
        let v = expected_remaining_fedcio(50_000, 5, 10).unwrap();
        assert!((v - 50_000.0 * 0.8f64.powi(10)).abs() < 1e-9);
    }

    #[test]
    fn remaining_budget_flags() {
        assert_eq!(
            expected_remaining_fedsgt_with_budget(100, 10, 5, 3).unwrap(),
            RemainingEstimate::Unavailable
        );
        assert!(matches!(
            expected_remaining_fedsgt_with_budget(100, 10, 10, 3).unwrap(),
            RemainingEstimate::Exact(_)
        ));
        assert!(matches!(
            expected_remaining_fedsgt_with_budget(100, 10, 12, 3).unwrap(),
            RemainingEstimate::LowerBound(_)
        ));
    }

    #[test]
    fn fedsgt_dominates_fedcio_on_reference_setting() {
        for r in 1..=25 {
            let sgt = expected_remaining_fedsgt(50_000, 10, r).unwrap();
            let cio = expected_remaining_fedcio(50_000, 5, r).unwrap();
            assert!(sgt >= cio, "r={r}: {sgt} < {cio}");
        }
    }

    #[test]
    fn comm_cost_matches_enumeration() {
        // Enumerate the 4 slice assignments for (L=2, S=2) against both cyclic
        // sequences; per-sequence cost is L − V + 1 with V the 1-based first
        // position holding one of the client's groups.
        let l = 2usize;
        let rotations: Vec<Vec<usize>> = (0..l).map(|t| (0..l).map(|p| (p + l - t) % l).collect()).collect();
        let mut total = 0usize;
        for a in 0..l {
            for b in 0..l {
                for seq in &rotations {
                    let v = seq.iter().position(|g| *g == a || *g == b).unwrap() + 1;
                    total += l - v + 1;
                }
            }
        }
        assert_eq!(total as f64 / 4.0, 3.5);
        assert_eq!(expected_comm_cost(2, 2).unwrap(), 3.5);
        assert_eq!(expected_comm_cost(1, 1).unwrap(), 1.0);
        assert_eq!(expected_comm_cost(10, 2).unwrap(), 71.5);
    }

    #[test]
    fn matched_budget_examples() {
        assert!((matched_budget(10, 10).unwrap() - 18.1818).abs() < 1e-4);
        assert_eq!(matched_budget(1, 1).unwrap(), 1.0);
        assert_eq!(matched_budget(5, 9).unwrap(), 9.0);
    }

    #[test]
    fn training_cost_examples() {
        let p = AnalyticParams {
            rounds: 10,
            epochs: 3,
            samples: 1000,
            params_per_adapter: 50,
            groups: 10,
            budget: 10,
            ..AnalyticParams::default()
        };
        assert_eq!(training_cost(TrainingMethod::FedAvg, &p).unwrap(), 1.5e7);
        assert_eq!(training_cost(TrainingMethod::FedSgt, &p).unwrap(), 8.25e6);
        assert_eq!(
            training_cost(TrainingMethod::FedCio, &p).unwrap(),
            training_cost(TrainingMethod::FedAvg, &p).unwrap()
        );
        assert!("FedSGT".parse::<TrainingMethod>().is_ok());
        assert!("sisa".parse::<TrainingMethod>().is_err());
        let bad = AnalyticParams { epochs: 0, ..p };
        assert!(training_cost(TrainingMethod::FedAvg, &bad).is_err());
        let _ = to_f64(&ratio(1, 2));
    }
}
