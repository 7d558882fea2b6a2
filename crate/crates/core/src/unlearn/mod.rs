//! Deletion-request streams against FedSGT and the FedCIO / FedRetrain
//! baselines.
//!
//! Each system implements [`UnlearnSystem`]; the `*_simulate` helpers train a
//! system, emit a step-0 row for the trained model, then replay the stream.

mod baselines;
mod fedsgt;
mod request;
mod timeline;

pub use baselines::{fedcio_simulate, fedretrain_simulate, CioConfig, CioMode, CioSystem, RetrainSystem};
pub use fedsgt::{exactness_audit, fedsgt_simulate, AuditReport, FedSgtSystem};
pub use request::{uniform_requests, UnlearnRequest, DEFAULT_RECORD_COUNT};
pub use timeline::{
    summarize, write_timeline_csv, write_timeline_json, TimelineRecord, TimelineSummary,
    TIMELINE_HEADER,
};

use crate::error::Result;

pub trait UnlearnSystem {
    /// Method label used in timeline rows.
    fn method(&self) -> &'static str;

    /// Evaluation of the trained system before any request.
    fn baseline_record(&self) -> Result<TimelineRecord>;

    /// Applies one request. Invalid requests are rejected without touching
    /// the state.
    fn process_request(&mut self, req: &UnlearnRequest) -> Result<TimelineRecord>;

    fn run_stream(&mut self, requests: &[UnlearnRequest]) -> Result<Vec<TimelineRecord>> {
        requests.iter().map(|r| self.process_request(r)).collect()
    }
}
