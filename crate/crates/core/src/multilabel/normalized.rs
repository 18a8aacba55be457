//! Weights of the normalized reductions and per-example recall.
//!
//! A normalized reduction has the form `h(s) + sum_i w*_i g_i(s)` with
//! `w*_i = y_i / sum_j y_j`. Its unbiased estimate replaces `w*_i` by
//!
//! ```text
//! w_i = prod_{j in y} 1/p_j * sum_{J ⊆ y, i ∈ J} 1/|J| prod_{k in y \ J} (p_k - 1).
//! ```
//!
//! Grouping the subsets by cardinality turns the inner sum into elementary
//! symmetric polynomials of the values `p_k - 1`, so both `T` and the
//! propensity-scored recall are computed in polynomial time here. The
//! subset-sum form in [`super::unbiased_general`] remains the reference.

use serde::{Deserialize, Serialize};

use super::general::{check_cap, DEFAULT_LABEL_CAP};
use crate::error::Result;
use crate::labels::{Propensities, SparseLabels};
use crate::numeric::{elementary_symmetric, CompensatedSum};

/// Per-label weights that replace `y_i / sum_j y_j`, stored for the observed
/// labels only (every other label has weight zero).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedWeights {
    labels: Vec<usize>,
    weights: Vec<f64>,
}

impl NormalizedWeights {
    pub(crate) fn from_parts(labels: Vec<usize>, weights: Vec<f64>) -> Self {
        debug_assert_eq!(labels.len(), weights.len());
        Self { labels, weights }
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Weight of `label` (zero for unobserved labels).
    pub fn get(&self, label: usize) -> f64 {
        self.labels
            .binary_search(&label)
            .map_or(0.0, |pos| self.weights[pos])
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.labels.iter().copied().zip(self.weights.iter().copied())
    }

    pub fn sum(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Which denominator the upper-bound weights use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpperBoundForm {
    /// `(y_i/p_i) / (1 + sum_{j != i} y_j/p_j)`; the form with the Jensen
    /// lower-bound guarantee on its expectation.
    #[default]
    ExcludeSelf,
    /// `(y_i/p_i) / (1 + sum_j y_j/p_j)`.
    IncludeAll,
}

/// Clean-data weights `1 / |y|`.
pub fn vanilla_weights(y: &SparseLabels) -> NormalizedWeights {
    let w = if y.is_empty() { 0.0 } else { 1.0 / y.len() as f64 };
    NormalizedWeights { labels: y.indices().to_vec(), weights: vec![w; y.len()] }
}

/// Unbiased normalized weights `w_i` (capped at [`DEFAULT_LABEL_CAP`]
/// observed labels).
pub fn unbiased_weights(p: &Propensities, y: &SparseLabels) -> Result<NormalizedWeights> {
    unbiased_weights_with_cap(p, y, DEFAULT_LABEL_CAP)
}

pub fn unbiased_weights_with_cap(p: &Propensities, y: &SparseLabels, cap: usize) -> Result<NormalizedWeights> {
    p.check_len(y.num_labels())?;
    let observed = y.indices();
    let m = observed.len();
    check_cap(m, cap)?;
    let prefactor: f64 = observed.iter().map(|&j| 1.0 / p.get(j)).product();

    let weights = (0..m)
        .map(|i| {
            // Subsets J ∋ i are {i} ∪ U with U ⊆ others; the excluded labels
            // are others \ U, so sum over |U| = s gives e_{m-1-s}(others).
            let e = elementary_symmetric(
                observed
                    .iter()
                    .enumerate()
                    .filter(|&(k, _)| k != i)
                    .map(|(_, &j)| p.get(j) - 1.0),
            );
            let sum: CompensatedSum = (0..m).map(|s| e[m - 1 - s] / (s + 1) as f64).collect();
            prefactor * sum.value()
        })
        .collect();
    Ok(NormalizedWeights { labels: observed.to_vec(), weights })
}

/// Upper-bound surrogate weights `u_i`.
pub fn upper_bound_weights(p: &Propensities, y: &SparseLabels, form: UpperBoundForm) -> Result<NormalizedWeights> {
    p.check_len(y.num_labels())?;
    let inv: Vec<f64> = y.iter().map(|i| 1.0 / p.get(i)).collect();
    let total: f64 = inv.iter().sum();
    let weights = inv
        .iter()
        .map(|&w| match form {
            UpperBoundForm::ExcludeSelf => w / (1.0 + (total - w)),
            UpperBoundForm::IncludeAll => w / (1.0 + total),
        })
        .collect();
    Ok(NormalizedWeights { labels: y.indices().to_vec(), weights })
}

/// Fraction of the relevant labels that were predicted; zero when `y` is
/// empty.
pub fn recall(y: &SparseLabels, predicted: &SparseLabels) -> f64 {
    if y.is_empty() {
        return 0.0;
    }
    y.intersection_len(predicted) as f64 / y.len() as f64
}

/// Propensity-scored (unbiased) per-example recall of the predicted label
/// set, capped at [`DEFAULT_LABEL_CAP`] observed labels.
pub fn ps_recall(p: &Propensities, y: &SparseLabels, predicted: &SparseLabels) -> Result<f64> {
    ps_recall_with_cap(p, y, predicted, DEFAULT_LABEL_CAP)
}

/// Propensity-scored recall via the split of the observed labels into hits
/// `S = y ∩ predicted` and misses `T = y \ S`:
///
/// ```text
/// Rec = prod_{i in y} 1/p_i * sum_{s=1}^{|S|} s e_{|S|-s}(S) sum_{u=0}^{|T|} e_{|T|-u}(T) / (u + s)
/// ```
///
/// where `e_k(A)` is the elementary symmetric polynomial of `{p_j - 1 : j ∈ A}`.
/// This is the hit/miss factorization of the subset sum, collected by the
/// number of hits and misses kept in each subset.
pub fn ps_recall_with_cap(
    p: &Propensities,
    y: &SparseLabels,
    predicted: &SparseLabels,
    cap: usize,
) -> Result<f64> {
    p.check_len(y.num_labels())?;
    if y.is_empty() {
        return Ok(0.0);
    }
    check_cap(y.len(), cap)?;
    let (hits, misses): (Vec<usize>, Vec<usize>) = y.iter().partition(|&i| predicted.contains(i));
    if hits.is_empty() {
        return Ok(0.0);
    }
    let e_hits = elementary_symmetric(hits.iter().map(|&j| p.get(j) - 1.0));
    let e_miss = elementary_symmetric(misses.iter().map(|&j| p.get(j) - 1.0));
    let (ns, nt) = (hits.len(), misses.len());

    let mut acc = CompensatedSum::new();
    for s in 1..=ns {
        let inner: CompensatedSum = (0..=nt).map(|u| e_miss[nt - u] / (u + s) as f64).collect();
        acc.add(s as f64 * e_hits[ns - s] * inner.value());
    }
    let prefactor: f64 = y.iter().map(|i| 1.0 / p.get(i)).product();
    Ok(prefactor * acc.value())
}

/// Recall with the upper-bound weights: `sum_{i in y ∩ predicted} u_i`.
pub fn upper_bound_recall(
    p: &Propensities,
    y: &SparseLabels,
    predicted: &SparseLabels,
    form: UpperBoundForm,
) -> Result<f64> {
    let w = upper_bound_weights(p, y, form)?;
    Ok(w.iter().filter(|&(i, _)| predicted.contains(i)).map(|(_, v)| v).sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(idx: &[usize], l: usize) -> SparseLabels {
        SparseLabels::new(idx.to_vec(), l).unwrap()
    }

    #[test]
    fn weights_single_label_is_inverse_propensity() {
        let p = Propensities::new(vec![0.25, 0.5, 0.9]).unwrap();
        let t = unbiased_weights(&p, &labels(&[1], 3)).unwrap();
        assert!((t.get(1) - 2.0).abs() < 1e-15);
        assert_eq!(t.get(0), 0.0);
    }

    #[test]
    fn weights_two_labels_equal_propensity() {
        let p = 0.3;
        let props = Propensities::uniform(4, p).unwrap();
        let t = unbiased_weights(&props, &labels(&[0, 3], 4)).unwrap();
        let expected = (p - 0.5) / (p * p);
        assert!((t.get(0) - expected).abs() < 1e-14);
        assert!((t.get(3) - expected).abs() < 1e-14);
    }

    #[test]
    fn weights_clean_is_vanilla() {
        let props = Propensities::uniform(6, 1.0).unwrap();
        let y = labels(&[0, 2, 5], 6);
        let t = unbiased_weights(&props, &y).unwrap();
        for (_, w) in t.iter() {
            assert!((w - 1.0 / 3.0).abs() < 1e-15);
        }
        assert_eq!(vanilla_weights(&y).sum(), 1.0);
    }

    #[test]
    fn upper_bound_weight_examples() {
        let props = Propensities::new(vec![0.5, 0.5, 0.2]).unwrap();
        let single = upper_bound_weights(&props, &labels(&[2], 3), UpperBoundForm::ExcludeSelf).unwrap();
        assert!((single.get(2) - 5.0).abs() < 1e-14);
        let two = upper_bound_weights(&props, &labels(&[0, 1], 3), UpperBoundForm::ExcludeSelf).unwrap();
        assert!((two.get(0) - 2.0 / 3.0).abs() < 1e-15);
        let include = upper_bound_weights(&props, &labels(&[0, 1], 3), UpperBoundForm::IncludeAll).unwrap();
        assert!((include.get(0) - 2.0 / 5.0).abs() < 1e-15);
        let clean = Propensities::uniform(5, 1.0).unwrap();
        let w = upper_bound_weights(&clean, &labels(&[0, 1, 4], 5), UpperBoundForm::ExcludeSelf).unwrap();
        assert!(w.weights().iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn ps_recall_worked_example_rows() {
        let p = Propensities::uniform(3, 1.0 / 3.0).unwrap();
        let pred = labels(&[0], 3);
        assert_eq!(ps_recall(&p, &labels(&[], 3), &pred).unwrap(), 0.0);
        assert_eq!(ps_recall(&p, &labels(&[1], 3), &pred).unwrap(), 0.0);
        assert!((ps_recall(&p, &labels(&[0], 3), &pred).unwrap() - 3.0).abs() < 1e-12);
        assert!((ps_recall(&p, &labels(&[0, 1], 3), &pred).unwrap() + 1.5).abs() < 1e-12);
    }

    #[test]
    fn ps_recall_clean_is_vanilla_recall() {
        let p = Propensities::uniform(8, 1.0).unwrap();
        let y = labels(&[1, 2, 5, 7], 8);
        let pred = labels(&[2, 3, 7], 8);
        let v = ps_recall(&p, &y, &pred).unwrap();
        assert!((v - 0.5).abs() < 1e-15);
        assert_eq!(recall(&y, &pred), 0.5);
        assert_eq!(recall(&SparseLabels::empty(8), &pred), 0.0);
    }

    #[test]
    fn ps_recall_is_sum_of_weights_over_hits() {
        let p = Propensities::new(vec![0.3, 0.6, 0.45, 0.9, 0.2]).unwrap();
        let y = labels(&[0, 1, 3, 4], 5);
        let pred = labels(&[1, 4], 5);
        let t = unbiased_weights(&p, &y).unwrap();
        let via_t = t.get(1) + t.get(4);
        let v = ps_recall(&p, &y, &pred).unwrap();
        assert!((v - via_t).abs() < 1e-12 * via_t.abs().max(1.0));
    }
}
