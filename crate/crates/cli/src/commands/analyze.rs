use std::path::PathBuf;

use clap::Args;
use fedsgt_core::analytics::{self, AnalyticParams, RemainingEstimate, TrainingMethod};
use serde::Serialize;
use serde_json::json;

use super::out_dir;
use crate::output::{num, OutDir};
use crate::{CliResult, GlobalArgs};

#[derive(Debug, Clone, Args)]
pub struct AnalyzeArgs {
    /// Group count L.
    #[arg(long, default_value_t = 10)]
    pub groups: u64,
    /// Training budget B.
    #[arg(long, default_value_t = 10)]
    pub budget: u64,
    /// FedCIO clusters c.
    #[arg(long, default_value_t = 5)]
    pub clusters: u64,
    /// Total samples |D|.
    #[arg(long, default_value_t = 50_000)]
    pub samples: u64,
    /// Largest request count r in the remaining-sample curve.
    #[arg(long, default_value_t = 25)]
    pub requests: u64,
    /// Slices per client S; the comm-cost table covers 1..=S.
    #[arg(long, default_value_t = 5)]
    pub slices: u64,
    #[arg(long, default_value_t = 10)]
    pub clients: u64,
    /// Baseline rounds T.
    #[arg(long, default_value_t = 10)]
    pub rounds: u64,
    /// Local epochs E.
    #[arg(long, default_value_t = 3)]
    pub epochs: u64,
    /// Parameters per adapter P.
    #[arg(long, default_value_t = 1)]
    pub params: u64,
    /// FedCIO clustering rounds T_cluster.
    #[arg(long, default_value_t = 1)]
    pub cluster_rounds: u64,
}

impl Default for AnalyzeArgs {
    fn default() -> Self {
        Self {
            groups: 10,
            budget: 10,
            clusters: 5,
            samples: 50_000,
            requests: 25,
            slices: 5,
            clients: 10,
            rounds: 10,
            epochs: 3,
            params: 1,
            cluster_rounds: 1,
        }
    }
}

impl AnalyzeArgs {
    pub fn params(&self) -> AnalyticParams {
        AnalyticParams {
            groups: self.groups,
            budget: self.budget,
            clusters: self.clusters,
            samples: self.samples,
            requests: self.requests,
            slices_per_client: self.slices,
            clients: self.clients,
            rounds: self.rounds,
            epochs: self.epochs,
            params_per_adapter: self.params,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RemainingRow {
    pub r: u64,
    pub expected_span: f64,
    pub fedsgt: f64,
    /// `exact`, `lower_bound` or `unavailable` for the configured budget.
    pub fedsgt_kind: &'static str,
    pub fedcio: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CommRow {
    pub slices: u64,
    pub fedsgt: f64,
    pub fedcio: u64,
    pub fedavg: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CostRow {
    pub method: String,
    pub cost: f64,
    pub ratio_to_fedavg: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalyzeReport {
    pub params: AnalyticParams,
    pub deletion_rate_fedsgt: f64,
    pub deletion_rate_fedcio: f64,
    pub deletion_ratio: f64,
    pub span_given_m: Vec<(u64, f64)>,
    pub remaining: Vec<RemainingRow>,
    pub comm_cost: Vec<CommRow>,
    pub training_cost: Vec<CostRow>,
    pub matched_budget: f64,
}

pub fn analyze(a: &AnalyzeArgs) -> CliResult<AnalyzeReport> {
    let p = a.params();
    p.validate()?;
    let sgt = analytics::deletion_rate_fedsgt(p.groups, p.budget)?;
    let cio = analytics::deletion_rate_fedcio(p.clusters)?;
    let span_given_m = (1..=p.groups)
        .map(|m| Ok((m, analytics::expected_span_given_m(p.groups, m)?)))
        .collect::<fedsgt_core::Result<Vec<_>>>()?;
    let remaining = (0..=p.requests)
        .map(|r| {
            let r_us = r as usize;
            let kind = match analytics::expected_remaining_fedsgt_with_budget(p.samples, p.groups, p.budget, r_us)? {
                RemainingEstimate::Exact(_) => "exact",
                RemainingEstimate::LowerBound(_) => "lower_bound",
                RemainingEstimate::Unavailable => "unavailable",
            };
            Ok(RemainingRow {
                r,
                expected_span: analytics::expected_span(p.groups, r_us)?,
                fedsgt: analytics::expected_remaining_fedsgt(p.samples, p.groups, r_us)?,
                fedsgt_kind: kind,
                fedcio: analytics::expected_remaining_fedcio(p.samples, p.clusters, r_us)?,
            })
        })
        .collect::<fedsgt_core::Result<Vec<_>>>()?;
    let comm_cost = (1..=p.slices_per_client)
        .map(|s| {
            Ok(CommRow {
                slices: s,
                fedsgt: analytics::expected_comm_cost(p.groups, s as usize)?,
                fedcio: analytics::comm_rounds_fedcio(p.rounds, a.cluster_rounds),
                fedavg: p.rounds,
            })
        })
        .collect::<fedsgt_core::Result<Vec<_>>>()?;
    let fedavg = analytics::training_cost(TrainingMethod::FedAvg, &p)?;
    let training_cost = TrainingMethod::ALL
        .iter()
        .map(|&m| {
            let cost = analytics::training_cost(m, &p)?;
            Ok(CostRow {
                method: m.to_string(),
                cost,
                ratio_to_fedavg: cost / fedavg,
            })
        })
        .collect::<fedsgt_core::Result<Vec<_>>>()?;
    Ok(AnalyzeReport {
        params: p,
        deletion_rate_fedsgt: sgt,
        deletion_rate_fedcio: cio,
        deletion_ratio: sgt / cio,
        span_given_m,
        remaining,
        comm_cost,
        training_cost,
        matched_budget: analytics::matched_budget(p.rounds, p.groups)?,
    })
}

pub fn cmd_analyze(a: &AnalyzeArgs, g: &GlobalArgs) -> CliResult<AnalyzeReport> {
    let report = analyze(a)?;
    let p = &report.params;
    let mut out = OutDir::create(&out_dir(g, PathBuf::from("out")))?;
    out.write_csv(
        "deletion_rates.csv",
        &["quantity", "params", "value"],
        [
            vec![
                "deletion_rate_fedsgt".into(),
                format!("L={} B={}", p.groups, p.budget),
                format!("{:.4}", report.deletion_rate_fedsgt),
            ],
            vec![
                "deletion_rate_fedcio".into(),
                format!("c={}", p.clusters),
                format!("{:.4}", report.deletion_rate_fedcio),
            ],
            vec!["deletion_ratio".into(), String::new(), format!("{:.4}", report.deletion_ratio)],
        ],
    )?;
    out.write_csv(
        "span.csv",
        &["m", "expected_span"],
        report.span_given_m.iter().map(|(m, v)| vec![m.to_string(), num(*v)]),
    )?;
    out.write_csv(
        "remaining.csv",
        &["r", "expected_span", "fedsgt", "fedsgt_kind", "fedcio"],
        report.remaining.iter().map(|row| {
            vec![
                row.r.to_string(),
                num(row.expected_span),
                num(row.fedsgt),
                row.fedsgt_kind.to_string(),
                num(row.fedcio),
            ]
        }),
    )?;
    out.write_csv(
        "comm_cost.csv",
        &["slices", "fedsgt", "fedcio", "fedavg"],
        report
            .comm_cost
            .iter()
            .map(|row| vec![row.slices.to_string(), num(row.fedsgt), row.fedcio.to_string(), row.fedavg.to_string()]),
    )?;
    out.write_csv(
        "training_cost.csv",
        &["method", "cost", "ratio_to_fedavg"],
        report
            .training_cost
            .iter()
            .map(|row| vec![row.method.clone(), num(row.cost), num(row.ratio_to_fedavg)]),
    )?;
    out.write_json("analyze.json", &report)?;
    out.write_manifest(
        "analyze",
        serde_json::to_value(p).map_err(fedsgt_core::Error::from)?,
        json!({ "cluster_rounds": a.cluster_rounds }),
    )?;
    println!(
        "deletion rate FedSGT(L={}, B={}) = {:.4}, FedCIO(c={}) = {:.4}, ratio {:.2}",
        p.groups, p.budget, report.deletion_rate_fedsgt, p.clusters, report.deletion_rate_fedcio, report.deletion_ratio
    );
    Ok(report)
}
