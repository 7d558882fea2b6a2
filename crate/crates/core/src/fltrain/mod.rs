//! Deterministic toy federated trainer.
//!
//! The model is a frozen linear logit map (`k × d`) plus additive `k × d`
//! adapters. Serving a truncated sequence sums the backbone with the adapters
//! of its surviving prefix.

pub mod bank;
pub mod dataset;
pub mod model;
pub mod trainer;

pub use bank::{decode_bank, encode_bank, read_bank, write_bank, BANK_MAGIC, BANK_VERSION};
pub use dataset::{load_csv_dataset, synth_dataset, Dataset, LabelPartition, SynthSpec, TestSplit};
pub use model::{evaluate, predict, AdapterModule, Ensemble, Matrix, ModuleBank, Prediction};
pub use trainer::{
    federated_round, init_backbone, train_bank, train_baseline, train_sequence, BaselineModel, LocalData,
    TrainConfig, TrainStats,
};
