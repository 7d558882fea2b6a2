//! Run configuration: TOML in, validated [`RunConfig`] out.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fltrain::{load_csv_dataset, synth_dataset, Dataset, LabelPartition, SynthSpec, TrainConfig};
use crate::grouping::SliceRef;
use crate::sequencing::ServingStrategy;
use crate::unlearn::{CioMode, DEFAULT_RECORD_COUNT};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub name: String,
    pub seed: u64,
    /// `N`.
    pub clients: usize,
    /// `S`.
    pub slices_per_client: usize,
    /// `L`.
    pub groups: usize,
    /// `B`.
    pub budget: usize,
    /// `c`.
    pub clusters: usize,
    pub strategy: ServingStrategy,
    pub dataset: DatasetSpec,
    pub train: TrainSection,
    pub requests: RequestSpec,
    pub fedcio: CioSection,
    pub fedretrain: RetrainSection,
    pub output: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            name: "default".into(),
            seed: 0,
            clients: 10,
            slices_per_client: 5,
            groups: 10,
            budget: 10,
            clusters: 5,
            strategy: ServingStrategy::AllSeq,
            dataset: DatasetSpec::default(),
            train: TrainSection::default(),
            requests: RequestSpec::default(),
            fedcio: CioSection::default(),
            fedretrain: RetrainSection::default(),
            output: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    Synthetic {
        #[serde(default = "default_feature_dim")]
        feature_dim: usize,
        #[serde(default = "default_label_count")]
        label_count: usize,
        #[serde(default = "default_samples")]
        samples_per_client: usize,
        /// Dirichlet concentration for label skew; absent means IID.
        #[serde(default)]
        alpha: Option<f64>,
        #[serde(default = "default_test_samples")]
        test_samples: usize,
        #[serde(default = "default_separation")]
        separation: f64,
        #[serde(default = "default_noise")]
        noise: f64,
    },
    Csv {
        data: PathBuf,
        manifest: PathBuf,
    },
}

fn default_feature_dim() -> usize {
    20
}
fn default_label_count() -> usize {
    5
}
fn default_samples() -> usize {
    200
}
fn default_test_samples() -> usize {
    500
}
fn default_separation() -> f64 {
    3.0
}
fn default_noise() -> f64 {
    1.0
}

/// Dirichlet concentration used for the Non-IID experiments.
pub const NON_IID_ALPHA: f64 = 0.3;

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec::Synthetic {
            feature_dim: default_feature_dim(),
            label_count: default_label_count(),
            samples_per_client: default_samples(),
            alpha: None,
            test_samples: default_test_samples(),
            separation: default_separation(),
            noise: default_noise(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub rounds_per_phase: usize,
    /// `T`, rounds for the FedAvg-style baselines.
    pub rounds: usize,
    pub backbone_scale: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            epochs: t.epochs,
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            rounds_per_phase: t.rounds_per_phase,
            rounds: t.baseline_rounds,
            backbone_scale: t.backbone_scale,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RequestSpec {
    /// Uniform requests to generate when `explicit` is empty.
    pub count: usize,
    pub seed: u64,
    pub record_count: usize,
    /// Scripted targets as `client:slice`.
    pub explicit: Vec<String>,
}

impl Default for RequestSpec {
    fn default() -> Self {
        Self {
            count: 30,
            seed: 1,
            record_count: DEFAULT_RECORD_COUNT,
            explicit: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CioSection {
    pub mode: CioMode,
    /// `T_cluster`, charged in overhead reports.
    pub cluster_rounds: u64,
}

impl Default for CioSection {
    fn default() -> Self {
        Self {
            mode: CioMode::NoRetrain,
            cluster_rounds: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetrainSection {
    pub stride: usize,
}

impl Default for RetrainSection {
    fn default() -> Self {
        Self { stride: 5 }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(vec![e.to_string()]))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(vec![e.to_string()]))
    }

    /// Every problem with the configuration, empty when it is usable.
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut positive = |name: &str, v: usize| {
            if v == 0 {
                out.push(format!("{name} must be at least 1"));
            }
        };
        positive("clients (N)", self.clients);
        positive("slices_per_client (S)", self.slices_per_client);
        positive("groups (L)", self.groups);
        positive("budget (B)", self.budget);
        positive("clusters (c)", self.clusters);
        positive("train.epochs", self.train.epochs);
        positive("train.batch_size", self.train.batch_size);
        positive("train.rounds_per_phase", self.train.rounds_per_phase);
        positive("train.rounds", self.train.rounds);
        positive("requests.record_count", self.requests.record_count);
        positive("fedretrain.stride", self.fedretrain.stride);
        if self.groups > self.clients * self.slices_per_client {
            out.push(format!(
                "insufficient slices: L={} exceeds N*S={}",
                self.groups,
                self.clients * self.slices_per_client
            ));
        }
        if self.clusters > self.clients {
            out.push(format!("clusters c={} exceeds clients N={}", self.clusters, self.clients));
        }
        if !(self.train.learning_rate > 0.0 && self.train.learning_rate.is_finite()) {
            out.push("train.learning_rate must be positive and finite".into());
        }
        if !(self.train.backbone_scale >= 0.0 && self.train.backbone_scale.is_finite()) {
            out.push("train.backbone_scale must be nonnegative and finite".into());
        }
        for t in &self.requests.explicit {
            if let Err(e) = t.parse::<SliceRef>() {
                out.push(format!("requests.explicit: {e}"));
            }
        }
        match &self.dataset {
            DatasetSpec::Synthetic {
                feature_dim,
                label_count,
                samples_per_client,
                alpha,
                test_samples,
                separation,
                noise,
            } => {
                if *feature_dim == 0 {
                    out.push("dataset.feature_dim must be at least 1".into());
                }
                if *label_count < 2 {
                    out.push("dataset.label_count must be at least 2".into());
                }
                if *samples_per_client < self.slices_per_client {
                    out.push(format!(
                        "dataset.samples_per_client={samples_per_client} leaves empty slices with S={}",
                        self.slices_per_client
                    ));
                }
                if *test_samples == 0 {
                    out.push("dataset.test_samples must be at least 1".into());
                }
                if alpha.is_some_and(|a| !(a > 0.0 && a.is_finite())) {
                    out.push("dataset.alpha must be positive and finite".into());
                }
                if !(separation.is_finite() && noise.is_finite() && *noise >= 0.0) {
                    out.push("dataset.separation and dataset.noise must be finite, noise nonnegative".into());
                }
            }
            DatasetSpec::Csv { data, manifest } => {
                for (what, p) in [("data", data), ("manifest", manifest)] {
                    if !p.is_file() {
                        out.push(format!("dataset.{what} file {} not found", p.display()));
                    }
                }
            }
        }
        out
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.train.epochs,
            rounds_per_phase: self.train.rounds_per_phase,
            learning_rate: self.train.learning_rate,
            batch_size: self.train.batch_size,
            seed: self.seed,
            baseline_rounds: self.train.rounds,
            backbone_scale: self.train.backbone_scale,
        }
    }

    pub fn synth_spec(&self) -> Option<SynthSpec> {
        match &self.dataset {
            DatasetSpec::Synthetic {
                feature_dim,
                label_count,
                samples_per_client,
                alpha,
                test_samples,
                separation,
                noise,
            } => Some(SynthSpec {
                clients: self.clients,
                samples_per_client: *samples_per_client,
                slices_per_client: self.slices_per_client,
                feature_dim: *feature_dim,
                label_count: *label_count,
                partition: alpha.map_or(LabelPartition::Iid, |alpha| LabelPartition::Dirichlet { alpha }),
                test_samples: *test_samples,
                separation: *separation,
                noise: *noise,
                seed: self.seed,
            }),
            DatasetSpec::Csv { .. } => None,
        }
    }

    /// Generates or loads the dataset and checks it against `N` and `S`.
    pub fn load_dataset(&self) -> Result<Dataset> {
        let ds = match (&self.dataset, self.synth_spec()) {
            (_, Some(spec)) => synth_dataset(&spec)?,
            (DatasetSpec::Csv { data, manifest }, None) => load_csv_dataset(data, manifest)?,
            (DatasetSpec::Synthetic { .. }, None) => unreachable!("synthetic spec always converts"),
        };
        let mut problems = Vec::new();
        if ds.client_count() != self.clients {
            problems.push(format!("dataset has {} clients, config says N={}", ds.client_count(), self.clients));
        }
        if ds.clients().any(|(_, c)| c.slices.len() != self.slices_per_client) {
            problems.push(format!("dataset clients do not all have S={} slices", self.slices_per_client));
        }
        if problems.is_empty() {
            Ok(ds)
        } else {
            Err(Error::Config(problems))
        }
    }

    /// Parsed scripted request targets.
    pub fn explicit_targets(&self) -> Result<Vec<SliceRef>> {
        self.requests.explicit.iter().map(|t| t.parse()).collect()
    }
}

/// Parses and checks a TOML configuration, reporting every problem at once.
pub fn validate_config(raw: &str) -> Result<RunConfig> {
    let cfg = RunConfig::from_toml(raw)?;
    let problems = cfg.problems();
    if problems.is_empty() {
        Ok(cfg)
    } else {
        Err(Error::Config(problems))
    }
}

/// Reads a TOML config, or the `config` object of a JSON run manifest.
pub fn load_run_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(vec![format!("{}: {e}", path.display())]))?;
    if path.extension().is_some_and(|e| e == "json") {
        let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Config(vec![e.to_string()]))?;
        let config = value
            .get("config")
            .cloned()
            .ok_or_else(|| Error::config("manifest has no `config` object"))?;
        let cfg: RunConfig = serde_json::from_value(config).map_err(|e| Error::Config(vec![e.to_string()]))?;
        let problems = cfg.problems();
        return if problems.is_empty() { Ok(cfg) } else { Err(Error::Config(problems)) };
    }
    validate_config(&text)
}
