use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fltrain::{train_baseline, BaselineModel, Dataset, Ensemble, TrainConfig, TrainStats};
use crate::ids::{ClientId, ServiceStatus};

use super::{TimelineRecord, UnlearnRequest, UnlearnSystem};

const FEDAVG_PATH: u64 = 0;
const CIO_PATH: u64 = 1;

fn check_request(dataset: &Dataset, req: &UnlearnRequest) -> Result<()> {
    let size = dataset.slice(req.target)?.len();
    if req.record_count > size {
        return Err(Error::domain(format!(
            "request removes {} records from slice {} of size {size}",
            req.record_count, req.target
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CioMode {
    /// A cluster hit by any deletion is dropped for good.
    #[default]
    NoRetrain,
    /// The hit cluster is retrained on its remaining data.
    Retrain,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CioConfig {
    pub clusters: usize,
    /// Adapter blocks per cluster model, normally `L`.
    pub blocks: usize,
    pub mode: CioMode,
    pub train: TrainConfig,
}

/// FedCIO: clients split round-robin into clusters, one FedAvg model each.
#[derive(Debug, Clone)]
pub struct CioSystem {
    dataset: Dataset,
    cfg: CioConfig,
    members: Vec<Vec<ClientId>>,
    models: Vec<Option<BaselineModel>>,
    hit: Vec<bool>,
    generation: Vec<u64>,
    step: usize,
    stats: TrainStats,
}

impl CioSystem {
    pub fn train(dataset: Dataset, cfg: CioConfig) -> Result<Self> {
        let n = dataset.client_count();
        if cfg.clusters == 0 || cfg.clusters > n {
            return Err(Error::config(format!("FedCIO needs 1 <= c <= N, got c={} N={n}", cfg.clusters)));
        }
        let mut members = vec![Vec::new(); cfg.clusters];
        for (id, _) in dataset.clients() {
            members[id.index() % cfg.clusters].push(id);
        }
        let mut stats = TrainStats::default();
        let models = members
            .iter()
            .enumerate()
            .map(|(j, clients)| {
                train_baseline(&dataset, clients, cfg.blocks, &cfg.train, &[CIO_PATH, j as u64, 0], &mut stats).map(Some)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            dataset,
            members,
            models,
            hit: vec![false; cfg.clusters],
            generation: vec![0; cfg.clusters],
            cfg,
            step: 0,
            stats,
        })
    }

    pub fn cluster_of(&self, client: ClientId) -> usize {
        client.index() % self.cfg.clusters
    }

    pub fn members(&self) -> &[Vec<ClientId>] {
        &self.members
    }

    pub fn stats(&self) -> &TrainStats {
        &self.stats
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn live_clusters(&self) -> usize {
        self.models.iter().filter(|m| m.is_some()).count()
    }

    /// Live samples held by clusters no request has touched.
    pub fn unaffected_samples(&self) -> usize {
        self.members
            .iter()
            .zip(&self.hit)
            .filter(|(_, hit)| !**hit)
            .flat_map(|(clients, _)| clients)
            .map(|&c| self.dataset.client(c).slices.iter().map(|s| s.live_len()).sum::<usize>())
            .sum()
    }

    pub fn accuracy(&self) -> Result<Option<f64>> {
        let live: Vec<&BaselineModel> = self.models.iter().flatten().collect();
        if live.is_empty() {
            return Ok(None);
        }
        let w = 1.0 / live.len() as f64;
        let ensemble = Ensemble::new(live.iter().map(|m| (w, m.composite())).collect())?;
        ensemble.accuracy(self.dataset.test()).map(Some)
    }

    fn record(&self, affected: Option<usize>, notes: String) -> Result<TimelineRecord> {
        let status = ServiceStatus::from_surviving(self.live_clusters(), "clusters");
        Ok(TimelineRecord {
            step: self.step,
            method: self.method().into(),
            affected_unit: affected.map(|c| format!("C{c}")),
            surviving: status.surviving(),
            status,
            utility: self.accuracy()?,
            notes,
        })
    }
}

impl UnlearnSystem for CioSystem {
    fn method(&self) -> &'static str {
        "FedCIO"
    }

    fn baseline_record(&self) -> Result<TimelineRecord> {
        self.record(None, format!("unaffected={}", self.unaffected_samples()))
    }

    fn process_request(&mut self, req: &UnlearnRequest) -> Result<TimelineRecord> {
        check_request(&self.dataset, req)?;
        let j = self.cluster_of(req.target.client);
        let removed = self.dataset.remove_records(req.target, req.record_count)?;
        self.step += 1;
        self.hit[j] = true;
        let action = match self.cfg.mode {
            CioMode::NoRetrain => {
                self.models[j] = None;
                format!("cluster C{j} dropped")
            }
            CioMode::Retrain => {
                self.generation[j] += 1;
                let path = [CIO_PATH, j as u64, self.generation[j]];
                match train_baseline(&self.dataset, &self.members[j], self.cfg.blocks, &self.cfg.train, &path, &mut self.stats) {
                    Ok(model) => {
                        self.models[j] = Some(model);
                        format!("cluster C{j} retrained, downtime {} rounds", self.cfg.train.baseline_rounds)
                    }
                    Err(Error::Training(_)) => {
                        self.models[j] = None;
                        format!("cluster C{j} has no data left")
                    }
                    Err(e) => return Err(e),
                }
            }
        };
        let notes = format!("slice {} removed {removed}; {action}; unaffected={}", req.target, self.unaffected_samples());
        self.record(Some(j), notes)
    }
}

/// Trains FedCIO and replays `requests`, starting with a step-0 row.
pub fn fedcio_simulate(dataset: Dataset, cfg: CioConfig, requests: &[UnlearnRequest]) -> Result<(CioSystem, Vec<TimelineRecord>)> {
    let mut system = CioSystem::train(dataset, cfg)?;
    let mut rows = vec![system.baseline_record()?];
    rows.extend(system.run_stream(requests)?);
    Ok((system, rows))
}

/// FedRetrain: one FedAvg model retrained from scratch on the remaining data.
/// Every request costs a full retrain; the model is evaluated every
/// `stride`-th request.
#[derive(Debug, Clone)]
pub struct RetrainSystem {
    dataset: Dataset,
    cfg: TrainConfig,
    blocks: usize,
    stride: usize,
    model: BaselineModel,
    step: usize,
    stats: TrainStats,
}

impl RetrainSystem {
    pub fn train(dataset: Dataset, blocks: usize, cfg: TrainConfig, stride: usize) -> Result<Self> {
        if stride == 0 {
            return Err(Error::config("FedRetrain evaluation stride must be at least 1"));
        }
        let mut stats = TrainStats::default();
        let clients: Vec<ClientId> = dataset.clients().map(|(c, _)| c).collect();
        let model = train_baseline(&dataset, &clients, blocks, &cfg, &[FEDAVG_PATH, 0], &mut stats)?;
        Ok(Self {
            dataset,
            cfg,
            blocks,
            stride,
            model,
            step: 0,
            stats,
        })
    }

    pub fn model(&self) -> &BaselineModel {
        &self.model
    }

    pub fn stats(&self) -> &TrainStats {
        &self.stats
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn accuracy(&self) -> Result<f64> {
        Ensemble::new(vec![(1.0, self.model.composite())])?.accuracy(self.dataset.test())
    }

    fn record(&self, utility: Option<f64>, notes: String) -> TimelineRecord {
        TimelineRecord {
            step: self.step,
            method: self.method().into(),
            affected_unit: None,
            status: ServiceStatus::from_surviving(1, "models"),
            utility,
            surviving: 1,
            notes,
        }
    }
}

impl UnlearnSystem for RetrainSystem {
    fn method(&self) -> &'static str {
        "FedRetrain"
    }

    fn baseline_record(&self) -> Result<TimelineRecord> {
        Ok(self.record(Some(self.accuracy()?), format!("remaining={}", self.dataset.live_samples())))
    }

    fn process_request(&mut self, req: &UnlearnRequest) -> Result<TimelineRecord> {
        check_request(&self.dataset, req)?;
        let removed = self.dataset.remove_records(req.target, req.record_count)?;
        self.step += 1;
        let downtime = format!("downtime {} rounds", self.cfg.baseline_rounds);
        let remaining = self.dataset.live_samples();
        if self.step % self.stride != 0 {
            return Ok(self.record(None, format!("slice {} removed {removed}; {downtime}; remaining={remaining}", req.target)));
        }
        let clients: Vec<ClientId> = self.dataset.clients().map(|(c, _)| c).collect();
        self.model = train_baseline(
            &self.dataset,
            &clients,
            self.blocks,
            &self.cfg,
            &[FEDAVG_PATH, self.step as u64],
            &mut self.stats,
        )?;
        let notes = format!("slice {} removed {removed}; retrained, {downtime}; remaining={remaining}", req.target);
        Ok(self.record(Some(self.accuracy()?), notes))
    }
}

/// Trains FedRetrain and replays `requests`, starting with a step-0 row.
pub fn fedretrain_simulate(
    dataset: Dataset,
    blocks: usize,
    cfg: TrainConfig,
    requests: &[UnlearnRequest],
    stride: usize,
) -> Result<(RetrainSystem, Vec<TimelineRecord>)> {
    let mut system = RetrainSystem::train(dataset, blocks, cfg, stride)?;
    let mut rows = vec![system.baseline_record()?];
    rows.extend(system.run_stream(requests)?);
    Ok((system, rows))
}
