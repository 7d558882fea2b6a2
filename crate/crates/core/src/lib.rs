//! Exact federated unlearning through sequential group-based training.
//!
//! Client data slices are shuffled into `L` balanced groups, and `B` group
//! orderings (cyclic rotations first) are trained as chains of additive
//! adapter modules over a frozen backbone. Deleting a record deactivates every
//! module trained on its group, so the served model never saw the record.
//!
//! The crate is organised bottom-up:
//!
//! - [`combinatorics`]: exact harmonic, binomial and Stirling numbers.
//! - [`analytics`]: closed forms for deletion rates, expected remaining data,
//!   communication and training cost.
//! - [`grouping`], [`sequencing`]: slice-to-group plans, training orders,
//!   deletion state and the AllSeq/MinSeq/LongSeq serving rules.
//! - [`fltrain`]: deterministic toy federated trainer and the module-bank file.
//! - [`unlearn`]: request streams against FedSGT and the FedCIO/FedRetrain
//!   baselines, plus the exactness audit.
//! - [`montecarlo`]: stochastic oracles for every closed form.

pub mod analytics;
pub mod combinatorics;
pub mod config;
pub mod error;
pub mod fltrain;
pub mod grouping;
pub mod ids;
pub mod montecarlo;
pub mod rng;
pub mod sequencing;
pub mod unlearn;

pub use error::{Error, Result};
pub use ids::{ClientId, GroupId, PhaseIdx, SequenceId, ServiceStatus, SliceIdx};
