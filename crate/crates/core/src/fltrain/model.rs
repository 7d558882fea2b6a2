//! Linear logit maps, adapter modules and strategy-aware serving.

use crate::error::{Error, Result};
use crate::ids::{GroupId, SequenceId};
use crate::sequencing::{SequenceSet, SequenceState, ServingStrategy};

use super::dataset::TestSplit;

/// Dense row-major `rows × cols` matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::domain(format!(
                "matrix data has {} entries, expected {rows}x{cols}",
                data.len()
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn add_assign(&mut self, other: &Matrix) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn add_scaled(&mut self, other: &Matrix, scale: f64) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += scale * b;
        }
    }

    pub fn scaled(&self, scale: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * scale).collect(),
        }
    }

    /// `out = self · x`.
    pub fn matvec_into(&self, x: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate() {
            let row = &self.data[r * self.cols..(r + 1) * self.cols];
            *o = row.iter().zip(x).map(|(w, v)| w * v).sum();
        }
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|v| *v == 0.0)
    }

    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.data.iter().flat_map(|v| v.to_le_bytes()).collect()
    }
}

/// Sum of matrices by recursive halving, in slice order.
pub fn pairwise_sum(parts: &[Matrix]) -> Matrix {
    match parts {
        [] => panic!("pairwise_sum of nothing"),
        [only] => only.clone(),
        _ => {
            let (left, right) = parts.split_at(parts.len() / 2);
            let mut acc = pairwise_sum(left);
            acc.add_assign(&pairwise_sum(right));
            acc
        }
    }
}

/// Numerically stable softmax, in place.
pub fn softmax_in_place(logits: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in logits.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in logits.iter_mut() {
        *v /= total;
    }
}

/// First index of the largest score.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s > scores[best] {
            best = i;
        }
    }
    best
}

/// One frozen adapter: the group added at its phase and how many samples the
/// phase trained on.
#[derive(Debug, Clone, PartialEq)]
pub struct AdapterModule {
    pub group: GroupId,
    pub samples: u64,
    pub weights: Matrix,
}

impl AdapterModule {
    /// Serialized form used for bit-exact comparisons: group, samples, then
    /// the weights as little-endian doubles.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + self.weights.data.len() * 8);
        out.extend_from_slice(&(self.group.index() as u32).to_le_bytes());
        out.extend_from_slice(&self.samples.to_le_bytes());
        out.extend_from_slice(&self.weights.to_le_bytes());
        out
    }
}

/// Frozen backbone plus every sequence's chain of adapters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModuleBank {
    pub backbone: Matrix,
    /// `sequences[b][p]` is the adapter trained at phase `p` of sequence `b`.
    pub sequences: Vec<Vec<AdapterModule>>,
}

impl ModuleBank {
    pub fn label_count(&self) -> usize {
        self.backbone.rows()
    }

    pub fn feature_dim(&self) -> usize {
        self.backbone.cols()
    }

    pub fn budget(&self) -> usize {
        self.sequences.len()
    }

    pub fn group_count(&self) -> usize {
        self.sequences.first().map_or(0, Vec::len)
    }

    /// Backbone plus the first `active` adapters of `seq`.
    pub fn composite(&self, seq: SequenceId, active: usize) -> Matrix {
        let mut acc = self.backbone.clone();
        for m in &self.sequences[seq.index()][..active] {
            acc.add_assign(&m.weights);
        }
        acc
    }

    /// Checks the bank's recorded group order against `seqs`.
    pub fn check_against(&self, seqs: &SequenceSet) -> Result<()> {
        if self.budget() != seqs.budget() || self.group_count() != seqs.group_count() {
            return Err(Error::Corrupt("bank shape does not match the sequence set".into()));
        }
        for id in seqs.ids() {
            let recorded: Vec<GroupId> = self.sequences[id.index()].iter().map(|m| m.group).collect();
            if recorded != seqs.perm(id) {
                return Err(Error::Corrupt(format!("sequence {id} group order differs from the bank")));
            }
        }
        Ok(())
    }
}

/// Label and per-label probabilities for one input.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub label: usize,
    pub scores: Vec<f64>,
}

/// Weighted ensemble of linear maps, blended in probability space.
#[derive(Debug, Clone)]
pub struct Ensemble {
    members: Vec<(f64, Matrix)>,
}

impl Ensemble {
    pub fn new(members: Vec<(f64, Matrix)>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::ServiceUnavailable);
        }
        Ok(Self { members })
    }

    /// Materialises the models `strategy` serves in `state`.
    pub fn serving(
        bank: &ModuleBank,
        seqs: &SequenceSet,
        state: &SequenceState,
        strategy: ServingStrategy,
    ) -> Result<Self> {
        let members = state
            .serving_weights(seqs, strategy)
            .into_iter()
            .map(|(id, w)| (w, bank.composite(id, state.active_len(id))))
            .collect();
        Self::new(members)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn predict(&self, x: &[f64]) -> Prediction {
        let k = self.members[0].1.rows();
        let mut logits = vec![0.0; k];
        if let [(_, only)] = self.members.as_slice() {
            only.matvec_into(x, &mut logits);
            let label = argmax(&logits);
            softmax_in_place(&mut logits);
            return Prediction { label, scores: logits };
        }
        let mut scores = vec![0.0; k];
        for (w, m) in &self.members {
            m.matvec_into(x, &mut logits);
            softmax_in_place(&mut logits);
            for (s, p) in scores.iter_mut().zip(&logits) {
                *s += w * p;
            }
        }
        Prediction {
            label: argmax(&scores),
            scores,
        }
    }

    /// Fraction of correctly labelled test rows.
    pub fn accuracy(&self, test: &TestSplit) -> Result<f64> {
        if test.is_empty() {
            return Err(Error::domain("empty test split"));
        }
        let d = self.members[0].1.cols();
        let correct = test
            .features
            .chunks_exact(d)
            .zip(&test.labels)
            .filter(|(x, y)| self.predict(x).label == **y)
            .count();
        Ok(correct as f64 / test.len() as f64)
    }
}

/// Serves one input under `strategy`; `ServiceUnavailable` when every
/// sequence is dead.
pub fn predict(
    bank: &ModuleBank,
    seqs: &SequenceSet,
    state: &SequenceState,
    strategy: ServingStrategy,
    x: &[f64],
) -> Result<Prediction> {
    if x.len() != bank.feature_dim() {
        return Err(Error::domain("feature vector has the wrong dimension"));
    }
    Ok(Ensemble::serving(bank, seqs, state, strategy)?.predict(x))
}

pub fn evaluate(
    bank: &ModuleBank,
    seqs: &SequenceSet,
    state: &SequenceState,
    strategy: ServingStrategy,
    test: &TestSplit,
) -> Result<f64> {
    Ensemble::serving(bank, seqs, state, strategy)?.accuracy(test)
}
