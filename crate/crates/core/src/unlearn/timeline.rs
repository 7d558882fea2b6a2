use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::ids::ServiceStatus;

pub const TIMELINE_HEADER: [&str; 7] = ["step", "method", "affected_unit", "status", "utility", "surviving", "notes"];

/// State of one system after request `step` (0 is the freshly trained system).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineRecord {
    pub step: usize,
    pub method: String,
    /// Group (`G3`) or cluster (`C1`) hit by the request.
    pub affected_unit: Option<String>,
    pub status: ServiceStatus,
    /// Test accuracy, absent while the system is failed or retraining.
    pub utility: Option<f64>,
    pub surviving: usize,
    pub notes: String,
}

impl TimelineRecord {
    fn csv_row(&self) -> [String; 7] {
        [
            self.step.to_string(),
            self.method.clone(),
            self.affected_unit.clone().unwrap_or_default(),
            self.status.label().to_string(),
            self.utility.map(|u| format!("{u:.6}")).unwrap_or_default(),
            self.surviving.to_string(),
            self.notes.clone(),
        ]
    }
}

pub fn write_timeline_csv<W: Write>(out: W, records: &[TimelineRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TIMELINE_HEADER)?;
    for r in records {
        w.write_record(r.csv_row())?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_timeline_json<W: Write>(out: W, records: &[TimelineRecord]) -> Result<()> {
    serde_json::to_writer_pretty(out, records)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineSummary {
    pub method: String,
    /// First step at which the system reported `Failed`.
    pub failure_step: Option<usize>,
    /// Mean over rows that carry a utility.
    pub mean_utility: Option<f64>,
    /// `pass` / `fail`, when an audit ran.
    pub audit: Option<String>,
}

/// One summary per method, in order of first appearance.
pub fn summarize(records: &[TimelineRecord], audit: Option<bool>) -> Vec<TimelineSummary> {
    let mut methods: Vec<&str> = Vec::new();
    for r in records {
        if !methods.contains(&r.method.as_str()) {
            methods.push(&r.method);
        }
    }
    methods
        .into_iter()
        .map(|m| {
            let rows: Vec<&TimelineRecord> = records.iter().filter(|r| r.method == m).collect();
            let utils: Vec<f64> = rows.iter().filter_map(|r| r.utility).collect();
            TimelineSummary {
                method: m.to_string(),
                failure_step: rows.iter().find(|r| !r.status.is_available()).map(|r| r.step),
                mean_utility: (!utils.is_empty()).then(|| utils.iter().sum::<f64>() / utils.len() as f64),
                audit: audit.map(|a| if a { "pass" } else { "fail" }.to_string()),
            }
        })
        .collect()
}
