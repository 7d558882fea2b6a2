//! Client datasets: synthetic Gaussian generator and CSV ingestion.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grouping::{SliceEntry, SliceRef};
use crate::ids::ClientId;
use crate::rng::{self, tag};

/// Contiguous block of labelled records owned by one client.
///
/// Deletions remove records from the front, so live records are always the
/// suffix `[removed..]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Slice {
    features: Vec<f64>,
    labels: Vec<usize>,
    removed: usize,
}

impl Slice {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn live_len(&self) -> usize {
        self.labels.len() - self.removed
    }

    pub fn removed(&self) -> usize {
        self.removed
    }

    /// Live features (row-major, `live_len × d`) and labels.
    pub fn live(&self, dim: usize) -> (&[f64], &[usize]) {
        (&self.features[self.removed * dim..], &self.labels[self.removed..])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientData {
    pub slices: Vec<Slice>,
}

/// Labelled test split, row-major features.
#[derive(Debug, Clone, PartialEq)]
pub struct TestSplit {
    pub features: Vec<f64>,
    pub labels: Vec<usize>,
}

impl TestSplit {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    feature_dim: usize,
    label_count: usize,
    clients: Vec<ClientData>,
    test: TestSplit,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LabelPartition {
    /// Every client draws labels uniformly.
    Iid,
    /// Each client draws label proportions from `Dirichlet(alpha)`.
    Dirichlet { alpha: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub clients: usize,
    pub samples_per_client: usize,
    pub slices_per_client: usize,
    pub feature_dim: usize,
    pub label_count: usize,
    pub partition: LabelPartition,
    pub test_samples: usize,
    /// Norm of each class mean.
    pub separation: f64,
    /// Per-coordinate standard deviation around the class mean.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            clients: 10,
            samples_per_client: 200,
            slices_per_client: 5,
            feature_dim: 20,
            label_count: 5,
            partition: LabelPartition::Iid,
            test_samples: 500,
            separation: 3.0,
            noise: 1.0,
            seed: 0,
        }
    }
}

fn sample_dirichlet(rng: &mut impl Rng, alpha: f64, k: usize) -> Result<Vec<f64>> {
    let gamma = Gamma::new(alpha, 1.0).map_err(|e| Error::config(format!("dirichlet alpha: {e}")))?;
    let mut draws: Vec<f64> = (0..k).map(|_| gamma.sample(rng)).collect();
    let total: f64 = draws.iter().sum();
    if total > 0.0 && total.is_finite() {
        draws.iter_mut().for_each(|v| *v /= total);
    } else {
        // Every gamma draw underflowed; all mass goes to one label.
        let hot = rng::bounded_usize(rng, k);
        draws = (0..k).map(|i| f64::from(u8::from(i == hot))).collect();
    }
    Ok(draws)
}

fn sample_categorical(rng: &mut impl Rng, probs: &[f64]) -> usize {
    let u = rng::unit_f64(rng);
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

fn draw_record(rng: &mut impl Rng, mean: &[f64], noise: f64, out: &mut Vec<f64>) {
    for m in mean {
        let z: f64 = StandardNormal.sample(rng);
        out.push(m + noise * z);
    }
}

/// Gaussian class-conditional toy data with IID or Dirichlet label skew.
pub fn synth_dataset(spec: &SynthSpec) -> Result<Dataset> {
    let mut problems = Vec::new();
    for (name, v) in [
        ("clients", spec.clients),
        ("samples_per_client", spec.samples_per_client),
        ("slices_per_client", spec.slices_per_client),
        ("feature_dim", spec.feature_dim),
        ("label_count", spec.label_count),
        ("test_samples", spec.test_samples),
    ] {
        if v == 0 {
            problems.push(format!("{name} must be positive"));
        }
    }
    if spec.label_count > spec.samples_per_client * spec.clients {
        problems.push(format!(
            "{} labels exceed the {} available samples",
            spec.label_count,
            spec.samples_per_client * spec.clients
        ));
    }
    if spec.slices_per_client > spec.samples_per_client {
        problems.push("every slice needs at least one sample".to_string());
    }
    if let LabelPartition::Dirichlet { alpha } = spec.partition {
        if !(alpha > 0.0 && alpha.is_finite()) {
            problems.push("dirichlet alpha must be positive".to_string());
        }
    }
    if !(spec.noise >= 0.0 && spec.separation.is_finite() && spec.noise.is_finite()) {
        problems.push("noise and separation must be finite, noise nonnegative".to_string());
    }
    if !problems.is_empty() {
        return Err(Error::Config(problems));
    }

    let d = spec.feature_dim;
    let k = spec.label_count;
    let mut mean_rng = rng::stream(spec.seed, &[tag::DATASET, 0]);
    let means: Vec<Vec<f64>> = (0..k)
        .map(|_| {
            let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut mean_rng)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
            v.into_iter().map(|x| x * spec.separation / norm).collect()
        })
        .collect();

    let uniform = vec![1.0 / k as f64; k];
    let mut clients = Vec::with_capacity(spec.clients);
    for c in 0..spec.clients {
        let mut label_rng = rng::stream(spec.seed, &[tag::DATASET, 1, c as u64]);
        let probs = match spec.partition {
            LabelPartition::Iid => uniform.clone(),
            LabelPartition::Dirichlet { alpha } => sample_dirichlet(&mut label_rng, alpha, k)?,
        };
        let labels: Vec<usize> = (0..spec.samples_per_client)
            .map(|_| sample_categorical(&mut label_rng, &probs))
            .collect();
        let mut feat_rng = rng::stream(spec.seed, &[tag::DATASET, 2, c as u64]);
        let mut features = Vec::with_capacity(labels.len() * d);
        for &y in &labels {
            draw_record(&mut feat_rng, &means[y], spec.noise, &mut features);
        }

        let s = spec.slices_per_client;
        let base = labels.len() / s;
        let extra = labels.len() % s;
        let mut slices = Vec::with_capacity(s);
        let mut start = 0;
        for j in 0..s {
            let len = base + usize::from(j < extra);
            slices.push(Slice {
                features: features[start * d..(start + len) * d].to_vec(),
                labels: labels[start..start + len].to_vec(),
                removed: 0,
            });
            start += len;
        }
        clients.push(ClientData { slices });
    }

    let mut test_rng = rng::stream(spec.seed, &[tag::DATASET, 3]);
    let mut test = TestSplit {
        features: Vec::with_capacity(spec.test_samples * d),
        labels: Vec::with_capacity(spec.test_samples),
    };
    for _ in 0..spec.test_samples {
        let y = rng::bounded_usize(&mut test_rng, k);
        draw_record(&mut test_rng, &means[y], spec.noise, &mut test.features);
        test.labels.push(y);
    }

    Ok(Dataset {
        feature_dim: d,
        label_count: k,
        clients,
        test,
    })
}

#[derive(Debug, Deserialize)]
struct ManifestRow {
    client: Option<usize>,
    slice: Option<usize>,
    split: String,
}

/// Loads `label,f0,f1,...` rows plus a manifest with one `client,slice,split`
/// row per data row (`split` is `train` or `test`; test rows may leave
/// client and slice empty).
pub fn load_csv_dataset(data_path: &Path, manifest_path: &Path) -> Result<Dataset> {
    let mut data = csv::Reader::from_path(data_path)?;
    let headers = data.headers()?.clone();
    if headers.get(0) != Some("label") || headers.len() < 2 {
        return Err(Error::config("dataset header must be `label,f0,f1,...`"));
    }
    for (i, h) in headers.iter().skip(1).enumerate() {
        if h != format!("f{i}") {
            return Err(Error::config(format!("unexpected column `{h}`, wanted `f{i}`")));
        }
    }
    let d = headers.len() - 1;
    let mut manifest = csv::Reader::from_path(manifest_path)?;
    let mut rows: Vec<(Option<(usize, usize)>, usize, Vec<f64>)> = Vec::new();
    let mut meta = manifest.deserialize::<ManifestRow>();
    for (line, record) in data.records().enumerate() {
        let record = record?;
        let m = meta
            .next()
            .ok_or_else(|| Error::config(format!("manifest ends before data row {line}")))??;
        let parse_err = |what: &str| Error::config(format!("row {line}: bad {what}"));
        let label: usize = record[0].trim().parse().map_err(|_| parse_err("label"))?;
        let features = record
            .iter()
            .skip(1)
            .map(|v| v.trim().parse::<f64>().ok().filter(|x| x.is_finite()))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| parse_err("feature"))?;
        let owner = match m.split.as_str() {
            "train" => Some((
                m.client.ok_or_else(|| parse_err("client"))?,
                m.slice.ok_or_else(|| parse_err("slice"))?,
            )),
            "test" => None,
            other => return Err(Error::config(format!("row {line}: unknown split `{other}`"))),
        };
        rows.push((owner, label, features));
    }
    if meta.next().is_some() {
        return Err(Error::config("manifest has more rows than the dataset"));
    }
    let k = rows.iter().map(|(_, y, _)| y + 1).max().unwrap_or(0);
    build_from_rows(d, k, rows)
}

fn build_from_rows(d: usize, k: usize, rows: Vec<(Option<(usize, usize)>, usize, Vec<f64>)>) -> Result<Dataset> {
    let mut clients: Vec<Vec<Option<Slice>>> = Vec::new();
    let mut test = TestSplit {
        features: Vec::new(),
        labels: Vec::new(),
    };
    for (owner, label, features) in rows {
        match owner {
            None => {
                test.features.extend(features);
                test.labels.push(label);
            }
            Some((c, s)) => {
                if clients.len() <= c {
                    clients.resize_with(c + 1, Vec::new);
                }
                let slots = &mut clients[c];
                if slots.len() <= s {
                    slots.resize_with(s + 1, || None);
                }
                let slice = slots[s].get_or_insert_with(|| Slice {
                    features: Vec::new(),
                    labels: Vec::new(),
                    removed: 0,
                });
                slice.features.extend(features);
                slice.labels.push(label);
            }
        }
    }
    let mut out = Vec::with_capacity(clients.len());
    for (c, slots) in clients.into_iter().enumerate() {
        let slices = slots
            .into_iter()
            .enumerate()
            .map(|(s, slot)| slot.ok_or_else(|| Error::config(format!("client {c} slice {s} is empty"))))
            .collect::<Result<Vec<_>>>()?;
        if slices.is_empty() {
            return Err(Error::config(format!("client {c} has no slices")));
        }
        out.push(ClientData { slices });
    }
    Dataset::new(d, k, out, test)
}

impl Dataset {
    pub fn new(feature_dim: usize, label_count: usize, clients: Vec<ClientData>, test: TestSplit) -> Result<Self> {
        let ds = Self {
            feature_dim,
            label_count,
            clients,
            test,
        };
        ds.check()?;
        Ok(ds)
    }

    /// Builds a dataset from per-client, per-slice `(features, label)` rows.
    pub fn from_records(
        feature_dim: usize,
        label_count: usize,
        clients: Vec<Vec<Vec<(Vec<f64>, usize)>>>,
        test: Vec<(Vec<f64>, usize)>,
    ) -> Result<Self> {
        let clients = clients
            .into_iter()
            .map(|slices| ClientData {
                slices: slices
                    .into_iter()
                    .map(|records| Slice {
                        features: records.iter().flat_map(|(x, _)| x.iter().copied()).collect(),
                        labels: records.iter().map(|(_, y)| *y).collect(),
                        removed: 0,
                    })
                    .collect(),
            })
            .collect();
        let test = TestSplit {
            features: test.iter().flat_map(|(x, _)| x.iter().copied()).collect(),
            labels: test.iter().map(|(_, y)| *y).collect(),
        };
        Self::new(feature_dim, label_count, clients, test)
    }

    fn check(&self) -> Result<()> {
        let d = self.feature_dim;
        let k = self.label_count;
        let mut problems = Vec::new();
        if d == 0 || k == 0 {
            problems.push("feature_dim and label_count must be positive".to_string());
        }
        for (c, client) in self.clients.iter().enumerate() {
            for (s, slice) in client.slices.iter().enumerate() {
                if slice.is_empty() {
                    problems.push(format!("slice {c}:{s} is empty"));
                }
                if slice.features.len() != slice.labels.len() * d {
                    problems.push(format!("slice {c}:{s} has ragged features"));
                }
                if slice.labels.iter().any(|&y| y >= k) {
                    problems.push(format!("slice {c}:{s} has a label outside [0,{k})"));
                }
                if slice.features.iter().any(|x| !x.is_finite()) {
                    problems.push(format!("slice {c}:{s} has nonfinite features"));
                }
            }
        }
        if self.test.features.len() != self.test.labels.len() * d || self.test.labels.iter().any(|&y| y >= k) {
            problems.push("test split is malformed".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems))
        }
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn label_count(&self) -> usize {
        self.label_count
    }

    pub fn client_count(&self) -> usize {
        self.clients.len()
    }

    pub fn client(&self, id: ClientId) -> &ClientData {
        &self.clients[id.index()]
    }

    pub fn clients(&self) -> impl Iterator<Item = (ClientId, &ClientData)> {
        self.clients.iter().enumerate().map(|(i, c)| (ClientId(i), c))
    }

    pub fn test(&self) -> &TestSplit {
        &self.test
    }

    pub fn slice(&self, s: SliceRef) -> Result<&Slice> {
        self.clients
            .get(s.client.index())
            .and_then(|c| c.slices.get(s.slice.index()))
            .ok_or_else(|| Error::Lookup(format!("slice {s} not in dataset")))
    }

    /// Catalog of slices with their live sample counts.
    pub fn catalog(&self) -> Vec<SliceEntry> {
        self.clients()
            .flat_map(|(c, data)| {
                data.slices.iter().enumerate().map(move |(s, slice)| SliceEntry {
                    slice: SliceRef {
                        client: c,
                        slice: crate::ids::SliceIdx(s),
                    },
                    samples: slice.live_len(),
                })
            })
            .collect()
    }

    pub fn live_samples(&self) -> usize {
        self.clients
            .iter()
            .flat_map(|c| &c.slices)
            .map(Slice::live_len)
            .sum()
    }

    /// Deletes up to `count` live records from the front of `slice`;
    /// returns how many were removed.
    pub fn remove_records(&mut self, s: SliceRef, count: usize) -> Result<usize> {
        let slice = self
            .clients
            .get_mut(s.client.index())
            .and_then(|c| c.slices.get_mut(s.slice.index()))
            .ok_or_else(|| Error::Lookup(format!("slice {s} not in dataset")))?;
        let n = count.min(slice.live_len());
        slice.removed += n;
        Ok(n)
    }

    /// Per-client label histogram over live training records.
    pub fn label_histogram(&self, id: ClientId) -> Vec<usize> {
        let mut hist = vec![0; self.label_count];
        for slice in &self.client(id).slices {
            for &y in &slice.labels[slice.removed..] {
                hist[y] += 1;
            }
        }
        hist
    }

    /// Canonical byte encoding of the full dataset, for reproducibility checks.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        let mut put = |v: u64| out.extend_from_slice(&v.to_le_bytes());
        put(self.feature_dim as u64);
        put(self.label_count as u64);
        put(self.clients.len() as u64);
        for c in &self.clients {
            put(c.slices.len() as u64);
            for s in &c.slices {
                put(s.labels.len() as u64);
                put(s.removed as u64);
                s.labels.iter().for_each(|&y| put(y as u64));
                s.features.iter().for_each(|x| put(x.to_bits()));
            }
        }
        put(self.test.labels.len() as u64);
        self.test.labels.iter().for_each(|&y| put(y as u64));
        self.test.features.iter().for_each(|x| put(x.to_bits()));
        out
    }
}
