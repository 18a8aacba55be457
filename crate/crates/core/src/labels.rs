//! Label sets, propensities, score vectors and the masking-model sampler.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Positive labels of one example, stored as strictly increasing 0-based
/// indices into a label space of size `num_labels`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SparseLabels {
    indices: Vec<usize>,
    num_labels: usize,
}

impl SparseLabels {
    /// Builds a label set from indices in any order. Duplicates and indices
    /// outside `[0, num_labels)` are rejected.
    pub fn new(mut indices: Vec<usize>, num_labels: usize) -> Result<Self> {
        indices.sort_unstable();
        if indices.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Validation("duplicate label index".into()));
        }
        if let Some(&last) = indices.last() {
            if last >= num_labels {
                return Err(Error::Validation(format!(
                    "label index {last} out of range for {num_labels} labels"
                )));
            }
        }
        Ok(Self { indices, num_labels })
    }

    /// Caller guarantees the invariants (sorted, unique, in range).
    pub(crate) fn from_sorted(indices: Vec<usize>, num_labels: usize) -> Self {
        debug_assert!(indices.windows(2).all(|w| w[0] < w[1]));
        debug_assert!(indices.last().is_none_or(|&i| i < num_labels));
        Self { indices, num_labels }
    }

    pub fn empty(num_labels: usize) -> Self {
        Self { indices: Vec::new(), num_labels }
    }

    pub fn full(num_labels: usize) -> Self {
        Self { indices: (0..num_labels).collect(), num_labels }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    /// Number of positive labels.
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, label: usize) -> bool {
        self.indices.binary_search(&label).is_ok()
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.indices.iter().copied()
    }

    pub fn is_subset_of(&self, other: &SparseLabels) -> bool {
        self.indices.iter().all(|&i| other.contains(i))
    }

    /// Number of labels shared with `other`.
    pub fn intersection_len(&self, other: &SparseLabels) -> usize {
        let (mut a, mut b, mut n) = (0, 0, 0);
        while a < self.indices.len() && b < other.indices.len() {
            match self.indices[a].cmp(&other.indices[b]) {
                std::cmp::Ordering::Less => a += 1,
                std::cmp::Ordering::Greater => b += 1,
                std::cmp::Ordering::Equal => {
                    n += 1;
                    a += 1;
                    b += 1;
                }
            }
        }
        n
    }

    /// Dense 0/1 indicator vector of length `num_labels`.
    pub fn to_dense(&self) -> Vec<u8> {
        indicator_vector(self)
    }

    pub fn into_indices(self) -> Vec<usize> {
        self.indices
    }
}

/// Materializes the dense `{0,1}` indicator of a label set.
pub fn indicator_vector(labels: &SparseLabels) -> Vec<u8> {
    let mut dense = vec![0u8; labels.num_labels];
    for &i in &labels.indices {
        dense[i] = 1;
    }
    dense
}

/// Per-label probability that a true positive is observed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Propensities(Vec<f64>);

impl Propensities {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some((j, p)) = values
            .iter()
            .enumerate()
            .find(|(_, &p)| !(p > 0.0 && p <= 1.0))
        {
            return Err(Error::param(format!("propensity of label {j} is {p}, must lie in (0, 1]")));
        }
        Ok(Self(values))
    }

    /// Same propensity for every label.
    pub fn uniform(num_labels: usize, p: f64) -> Result<Self> {
        Self::new(vec![p; num_labels])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    #[inline]
    pub fn get(&self, label: usize) -> f64 {
        self.0[label]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// Inverse-propensity weights `1 / p_j`.
    pub fn inverse(&self) -> Vec<f64> {
        self.0.iter().map(|p| 1.0 / p).collect()
    }

    /// Every propensity multiplied by `factor` (which must keep them in (0, 1]).
    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.0.iter().map(|p| p * factor).collect())
    }

    pub(crate) fn check_len(&self, num_labels: usize) -> Result<()> {
        if self.len() != num_labels {
            return Err(Error::Dimension { expected: num_labels, got: self.len() });
        }
        Ok(())
    }
}

/// Real-valued per-label predictions for one example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector(Vec<f64>);

impl ScoreVector {
    pub fn new(scores: Vec<f64>) -> Self {
        Self(scores)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl From<Vec<f64>> for ScoreVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

impl AsRef<[f64]> for ScoreVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Draws the observed labels `Y = M ⊙ Y*`: every positive of `truth` is kept
/// independently with its propensity, negatives are never introduced.
pub fn apply_mask<R: Rng + ?Sized>(
    truth: &SparseLabels,
    p: &Propensities,
    rng: &mut R,
) -> Result<SparseLabels> {
    p.check_len(truth.num_labels)?;
    let kept = truth
        .indices
        .iter()
        .copied()
        .filter(|&i| rng.gen::<f64>() < p.get(i))
        .collect();
    Ok(SparseLabels::from_sorted(kept, truth.num_labels))
}
