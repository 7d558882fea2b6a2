//! Python module `fedsgt`.

use std::collections::BTreeSet;

use fedsgt_core::analytics::{self, AnalyticParams, TrainingMethod};
use fedsgt_core::config::{validate_config, RunConfig};
use fedsgt_core::grouping::{build_grouping, SliceRef};
use fedsgt_core::ids::{GroupId, SequenceId};
use fedsgt_core::montecarlo::{self, MCConfig, MCEstimate};
use fedsgt_core::sequencing::{self, SequenceState, ServingStrategy};
use fedsgt_core::unlearn::{uniform_requests, FedSgtSystem, TimelineRecord, UnlearnRequest, UnlearnSystem};
use fedsgt_core::Error;
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

create_exception!(fedsgt, FedSgtError, PyException, "Simulation failure.");
create_exception!(fedsgt, AuditMismatch, FedSgtError, "Exactness audit found a differing module.");

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Domain(_) | Error::Config(_) | Error::Lookup(_) => PyValueError::new_err(e.to_string()),
        Error::AuditMismatch { .. } => AuditMismatch::new_err(e.to_string()),
        other => FedSgtError::new_err(other.to_string()),
    }
}

fn estimate(e: fedsgt_core::Result<MCEstimate>) -> PyResult<(f64, f64, u64)> {
    e.map(|e| (e.mean, e.stderr, e.trials)).map_err(py_err)
}

fn mc(trials: u64, seed: u64) -> MCConfig {
    MCConfig {
        trials,
        seed,
        ..MCConfig::default()
    }
}

#[pyfunction]
fn deletion_rate_fedsgt(groups: u64, budget: u64) -> PyResult<f64> {
    analytics::deletion_rate_fedsgt(groups, budget).map_err(py_err)
}

#[pyfunction]
fn deletion_rate_fedcio(clusters: u64) -> PyResult<f64> {
    analytics::deletion_rate_fedcio(clusters).map_err(py_err)
}

#[pyfunction]
fn expected_span(groups: u64, r: usize) -> PyResult<f64> {
    analytics::expected_span(groups, r).map_err(py_err)
}

#[pyfunction]
fn expected_remaining_fedsgt(samples: u64, groups: u64, r: usize) -> PyResult<f64> {
    analytics::expected_remaining_fedsgt(samples, groups, r).map_err(py_err)
}

#[pyfunction]
fn expected_remaining_fedcio(samples: u64, clusters: u64, r: usize) -> PyResult<f64> {
    analytics::expected_remaining_fedcio(samples, clusters, r).map_err(py_err)
}

#[pyfunction]
fn expected_comm_cost(groups: u64, slices: usize) -> PyResult<f64> {
    analytics::expected_comm_cost(groups, slices).map_err(py_err)
}

/// Parameter-update count for `method` ("fedavg", "fedcio" or "fedsgt").
#[pyfunction]
#[pyo3(signature = (method, groups, budget, samples, rounds, epochs, params_per_adapter=1))]
fn training_cost(
    method: &str,
    groups: u64,
    budget: u64,
    samples: u64,
    rounds: u64,
    epochs: u64,
    params_per_adapter: u64,
) -> PyResult<f64> {
    let m: TrainingMethod = method.parse().map_err(py_err)?;
    let p = AnalyticParams {
        groups,
        budget,
        samples,
        rounds,
        epochs,
        params_per_adapter,
        ..AnalyticParams::default()
    };
    analytics::training_cost(m, &p).map_err(py_err)
}

#[pyfunction]
fn cyclic_span(groups: usize, deleted: Vec<usize>) -> PyResult<usize> {
    if let Some(g) = deleted.iter().find(|&&g| g >= groups) {
        return Err(PyValueError::new_err(format!("group {g} out of range for L={groups}")));
    }
    let set: BTreeSet<GroupId> = deleted.into_iter().map(GroupId).collect();
    Ok(sequencing::cyclic_span(groups, &set))
}

#[pyfunction]
#[pyo3(signature = (groups, budget, trials=200_000, seed=0))]
fn mc_deletion_rate_fedsgt(groups: u64, budget: u64, trials: u64, seed: u64) -> PyResult<(f64, f64, u64)> {
    estimate(montecarlo::mc_deletion_rate_fedsgt(groups, budget, &mc(trials, seed)))
}

#[pyfunction]
#[pyo3(signature = (clusters, trials=200_000, seed=0))]
fn mc_deletion_rate_fedcio(clusters: u64, trials: u64, seed: u64) -> PyResult<(f64, f64, u64)> {
    estimate(montecarlo::mc_deletion_rate_fedcio(clusters, &mc(trials, seed)))
}

#[pyfunction]
#[pyo3(signature = (groups, r, trials=200_000, seed=0))]
fn mc_expected_span(groups: u64, r: usize, trials: u64, seed: u64) -> PyResult<(f64, f64, u64)> {
    estimate(montecarlo::mc_expected_span(groups, r, &mc(trials, seed)))
}

#[pyfunction]
#[pyo3(signature = (groups, slices, trials=200_000, seed=0))]
fn mc_comm_cost(groups: u64, slices: usize, trials: u64, seed: u64) -> PyResult<(f64, f64, u64)> {
    estimate(montecarlo::mc_comm_cost(groups, slices, &mc(trials, seed)))
}

fn strategy(name: &str) -> PyResult<ServingStrategy> {
    name.parse().map_err(py_err)
}

/// Rotation sequences and their deletion state, without training.
#[pyclass(module = "fedsgt")]
struct Sequences {
    seqs: sequencing::SequenceSet,
    state: SequenceState,
}

#[pymethods]
impl Sequences {
    #[new]
    #[pyo3(signature = (groups, budget, seed=0))]
    fn new(groups: usize, budget: usize, seed: u64) -> PyResult<Self> {
        let seqs = sequencing::build_sequences(groups, budget, seed).map_err(py_err)?;
        let state = SequenceState::fresh(&seqs);
        Ok(Self { seqs, state })
    }

    /// Group order of every sequence.
    fn orders(&self) -> Vec<Vec<usize>> {
        self.seqs.perms().iter().map(|p| p.iter().map(|g| g.index()).collect()).collect()
    }

    fn delete(&mut self, group: usize) -> PyResult<()> {
        self.state.apply_deletion(&self.seqs, GroupId(group)).map_err(py_err)
    }

    fn active_lens(&self) -> Vec<usize> {
        self.state.active_lens().to_vec()
    }

    fn surviving(&self) -> usize {
        self.state.surviving()
    }

    fn failed(&self) -> bool {
        self.state.is_failed()
    }

    /// `(sequence, weight)` pairs served under `strategy`.
    #[pyo3(signature = (strategy="allseq"))]
    fn select(&self, strategy: &str) -> PyResult<Vec<(usize, f64)>> {
        let s = self::strategy(strategy)?;
        Ok(self
            .state
            .serving_weights(&self.seqs, s)
            .into_iter()
            .map(|(id, w): (SequenceId, f64)| (id.index(), w))
            .collect())
    }
}

/// A trained FedSGT deployment.
#[pyclass(module = "fedsgt")]
struct System {
    inner: FedSgtSystem,
    config: RunConfig,
}

fn record_dict<'py>(py: Python<'py>, r: &TimelineRecord) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("step", r.step)?;
    d.set_item("method", &r.method)?;
    d.set_item("affected_unit", r.affected_unit.clone())?;
    d.set_item("status", r.status.label())?;
    d.set_item("utility", r.utility)?;
    d.set_item("surviving", r.surviving)?;
    d.set_item("notes", &r.notes)?;
    Ok(d)
}

#[pymethods]
impl System {
    /// Trains from a TOML run configuration (defaults when `None`).
    #[new]
    #[pyo3(signature = (config=None))]
    fn new(py: Python<'_>, config: Option<&str>) -> PyResult<Self> {
        let cfg = validate_config(config.unwrap_or("")).map_err(py_err)?;
        let inner = py
            .detach(|| {
                let dataset = cfg.load_dataset()?;
                let plan = build_grouping(&dataset.catalog(), cfg.groups, cfg.seed)?;
                let seqs = sequencing::build_sequences(cfg.groups, cfg.budget, cfg.seed)?;
                FedSgtSystem::train(dataset, plan, seqs, cfg.train_config(), cfg.strategy).map(|(s, _)| s)
            })
            .map_err(py_err)?;
        Ok(Self { inner, config: cfg })
    }

    fn accuracy(&self) -> PyResult<Option<f64>> {
        self.inner.accuracy().map_err(py_err)
    }

    fn active_lens(&self) -> Vec<usize> {
        self.inner.state().active_lens().to_vec()
    }

    fn deleted_groups(&self) -> Vec<usize> {
        self.inner.state().deleted().iter().map(|g| g.index()).collect()
    }

    fn group_of(&self, client: usize, slice: usize) -> PyResult<usize> {
        self.inner.plan().group_of(SliceRef::new(client, slice)).map(|g| g.index()).map_err(py_err)
    }

    /// `count` uniform requests as `(client, slice, records)` triples.
    #[pyo3(signature = (count, seed=None))]
    fn uniform_requests(&self, count: usize, seed: Option<u64>) -> Vec<(usize, usize, usize)> {
        uniform_requests(
            self.inner.plan(),
            count,
            seed.unwrap_or(self.config.requests.seed),
            self.config.requests.record_count,
        )
        .into_iter()
        .map(|r| (r.target.client.index(), r.target.slice.index(), r.record_count))
        .collect()
    }

    /// Deletes `records` records from a slice and returns the timeline row.
    fn process<'py>(&mut self, py: Python<'py>, client: usize, slice: usize, records: usize) -> PyResult<Bound<'py, PyDict>> {
        let req = UnlearnRequest {
            target: SliceRef::new(client, slice),
            record_count: records,
        };
        let rec = self.inner.process_request(&req).map_err(py_err)?;
        record_dict(py, &rec)
    }

    /// Retrains every surviving prefix and raises `AuditMismatch` on any
    /// difference. Returns the number of modules checked.
    fn audit(&self, py: Python<'_>) -> PyResult<usize> {
        let inner = &self.inner;
        py.detach(|| inner.audit()).map(|r| r.modules_checked).map_err(py_err)
    }
}

#[pymodule]
fn fedsgt(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("FedSgtError", m.py().get_type::<FedSgtError>())?;
    m.add("AuditMismatch", m.py().get_type::<AuditMismatch>())?;
    m.add_class::<Sequences>()?;
    m.add_class::<System>()?;
    m.add_function(wrap_pyfunction!(deletion_rate_fedsgt, m)?)?;
    m.add_function(wrap_pyfunction!(deletion_rate_fedcio, m)?)?;
    m.add_function(wrap_pyfunction!(expected_span, m)?)?;
    m.add_function(wrap_pyfunction!(expected_remaining_fedsgt, m)?)?;
    m.add_function(wrap_pyfunction!(expected_remaining_fedcio, m)?)?;
    m.add_function(wrap_pyfunction!(expected_comm_cost, m)?)?;
    m.add_function(wrap_pyfunction!(training_cost, m)?)?;
    m.add_function(wrap_pyfunction!(cyclic_span, m)?)?;
    m.add_function(wrap_pyfunction!(mc_deletion_rate_fedsgt, m)?)?;
    m.add_function(wrap_pyfunction!(mc_deletion_rate_fedcio, m)?)?;
    m.add_function(wrap_pyfunction!(mc_expected_span, m)?)?;
    m.add_function(wrap_pyfunction!(mc_comm_cost, m)?)?;
    Ok(())
}
