//! Sparse multilabel datasets: the repository text format, a binary cache,
//! splitting, label restriction and tf-idf features.

mod cache;
mod xmc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use cache::{read_cache, write_cache};
pub use xmc::{load_xmc, parse_xmc, write_xmc};

use crate::error::{Error, Result};
use crate::labels::SparseLabels;
use crate::propensity::frequency_ranking;

/// One example: sparse features sorted by index, and its positive labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub features: Vec<(usize, f64)>,
    pub labels: SparseLabels,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseDataset {
    num_features: usize,
    num_labels: usize,
    examples: Vec<Example>,
}

impl SparseDataset {
    /// Validates that every feature index is in range, unique and finite,
    /// and that every label set has `num_labels` labels. Features are sorted.
    pub fn new(num_features: usize, num_labels: usize, mut examples: Vec<Example>) -> Result<Self> {
        for (row, ex) in examples.iter_mut().enumerate() {
            if ex.labels.num_labels() != num_labels {
                return Err(Error::Validation(format!(
                    "example {row}: label space of size {} instead of {num_labels}",
                    ex.labels.num_labels()
                )));
            }
            ex.features.sort_unstable_by_key(|&(f, _)| f);
            if ex.features.windows(2).any(|w| w[0].0 == w[1].0) {
                return Err(Error::Validation(format!("example {row}: duplicate feature index")));
            }
            if let Some(&(f, _)) = ex.features.last() {
                if f >= num_features {
                    return Err(Error::Validation(format!(
                        "example {row}: feature index {f} out of range for {num_features} features"
                    )));
                }
            }
            if let Some(&(f, v)) = ex.features.iter().find(|(_, v)| !v.is_finite()) {
                return Err(Error::Validation(format!("example {row}: feature {f} has value {v}")));
            }
        }
        Ok(Self { num_features, num_labels, examples })
    }

    pub fn num_examples(&self) -> usize {
        self.examples.len()
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn labels(&self) -> impl Iterator<Item = &SparseLabels> + '_ {
        self.examples.iter().map(|e| &e.labels)
    }

    /// Same features, replaced label sets (e.g. after masking).
    pub fn with_labels(&self, labels: Vec<SparseLabels>) -> Result<Self> {
        if labels.len() != self.examples.len() {
            return Err(Error::Dimension { expected: self.examples.len(), got: labels.len() });
        }
        let examples = self
            .examples
            .iter()
            .zip(labels)
            .map(|(e, labels)| Example { features: e.features.clone(), labels })
            .collect();
        Self::new(self.num_features, self.num_labels, examples)
    }

    /// The examples at `rows`, in that order.
    pub fn subset(&self, rows: &[usize]) -> Self {
        Self {
            num_features: self.num_features,
            num_labels: self.num_labels,
            examples: rows.iter().map(|&r| self.examples[r].clone()).collect(),
        }
    }

    /// Number of examples carrying each label.
    pub fn label_counts(&self) -> Vec<u64> {
        let mut counts = vec![0u64; self.num_labels];
        for labels in self.labels() {
            for i in labels.iter() {
                counts[i] += 1;
            }
        }
        counts
    }

    /// Keeps the labels in `keep` (relabelled to their position in `keep`)
    /// and drops all others. Examples left without labels are retained.
    pub fn restrict_labels(&self, keep: &[usize]) -> Result<Self> {
        let mut map = vec![usize::MAX; self.num_labels];
        for (new, &old) in keep.iter().enumerate() {
            if old >= self.num_labels {
                return Err(Error::param(format!("label {old} out of range")));
            }
            if map[old] != usize::MAX {
                return Err(Error::param(format!("label {old} listed twice")));
            }
            map[old] = new;
        }
        let examples = self
            .examples
            .iter()
            .map(|e| {
                let labels: Vec<usize> = e.labels.iter().map(|i| map[i]).filter(|&i| i != usize::MAX).collect();
                Ok(Example { features: e.features.clone(), labels: SparseLabels::new(labels, keep.len())? })
            })
            .collect::<Result<_>>()?;
        Ok(Self { num_features: self.num_features, num_labels: keep.len(), examples })
    }

    /// Drops examples without any positive label.
    pub fn drop_unlabeled(&self) -> Self {
        Self {
            num_features: self.num_features,
            num_labels: self.num_labels,
            examples: self.examples.iter().filter(|e| !e.labels.is_empty()).cloned().collect(),
        }
    }
}

/// The `n` most frequent labels, most frequent first (ties to the lower
/// index).
pub fn select_top_labels(ds: &SparseDataset, n: usize) -> Result<Vec<usize>> {
    if n == 0 || n > ds.num_labels() {
        return Err(Error::param(format!("need 1 <= n <= {}, got {n}", ds.num_labels())));
    }
    let mut ranking = frequency_ranking(&ds.label_counts());
    ranking.truncate(n);
    Ok(ranking)
}

/// Restricts `ds` to its `n` most frequent labels; label `r` of the result
/// is the label of frequency rank `r`.
pub fn top_n_labels(ds: &SparseDataset, n: usize) -> Result<SparseDataset> {
    ds.restrict_labels(&select_top_labels(ds, n)?)
}

/// Seeded random partition of `0..n` into `(train, validation)` row indices,
/// with `floor(n * val_fraction)` validation rows.
pub fn split_indices(n: usize, val_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(Error::param(format!("validation fraction must be in (0, 1), got {val_fraction}")));
    }
    // the relative nudge keeps products like 10 * 0.3 from flooring down
    let n_val = (n as f64 * val_fraction * (1.0 + 1e-12)).floor() as usize;
    if n_val == 0 || n_val >= n {
        return Err(Error::Validation(format!(
            "splitting {n} examples with fraction {val_fraction} leaves an empty part"
        )));
    }
    let mut rows: Vec<usize> = (0..n).collect();
    rows.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let val = rows.split_off(n - n_val);
    Ok((rows, val))
}

/// Random train/validation split of the examples.
pub fn split(ds: &SparseDataset, val_fraction: f64, seed: u64) -> Result<(SparseDataset, SparseDataset)> {
    let (train, val) = split_indices(ds.num_examples(), val_fraction, seed)?;
    Ok((ds.subset(&train), ds.subset(&val)))
}

/// tf-idf transform followed by L2 row normalization, with the idf taken
/// from `ds` itself.
pub fn tfidf(ds: &SparseDataset, smooth: bool) -> Result<SparseDataset> {
    apply_idf(ds, &idf_weights(ds, smooth)?)
}

/// Per-feature `idf = ln(N / df)`, or `ln((1 + N) / (1 + df)) + 1` with
/// `smooth`; features that never occur get 0.
pub fn idf_weights(ds: &SparseDataset, smooth: bool) -> Result<Vec<f64>> {
    let n = ds.num_examples() as f64;
    let mut df = vec![0usize; ds.num_features()];
    for e in ds.examples() {
        for &(f, v) in &e.features {
            if v < 0.0 {
                return Err(Error::Validation(format!("tf-idf needs non-negative values, feature {f} has {v}")));
            }
            if v != 0.0 {
                df[f] += 1;
            }
        }
    }
    Ok(df
        .iter()
        .map(|&d| match (smooth, d) {
            (_, 0) => 0.0,
            (false, d) => (n / d as f64).ln(),
            (true, d) => ((1.0 + n) / (1.0 + d as f64)).ln() + 1.0,
        })
        .collect())
}

/// Scales each feature by its idf and L2-normalizes every row. Entries whose
/// weight becomes zero are removed.
pub fn apply_idf(ds: &SparseDataset, idf: &[f64]) -> Result<SparseDataset> {
    if idf.len() != ds.num_features() {
        return Err(Error::Dimension { expected: ds.num_features(), got: idf.len() });
    }
    let examples = ds
        .examples()
        .iter()
        .map(|e| {
            let mut features: Vec<(usize, f64)> =
                e.features.iter().map(|&(f, v)| (f, v * idf[f])).filter(|&(_, v)| v != 0.0).collect();
            let norm = features.iter().map(|(_, v)| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                features.iter_mut().for_each(|(_, v)| *v /= norm);
            }
            Example { features, labels: e.labels.clone() }
        })
        .collect();
    SparseDataset::new(ds.num_features(), ds.num_labels(), examples)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ex(features: &[(usize, f64)], labels: &[usize], l: usize) -> Example {
        Example { features: features.to_vec(), labels: SparseLabels::new(labels.to_vec(), l).unwrap() }
    }

    #[test]
    fn validation() {
        assert!(SparseDataset::new(3, 2, vec![ex(&[(3, 1.0)], &[], 2)]).is_err());
        assert!(SparseDataset::new(3, 2, vec![ex(&[(1, 1.0), (1, 2.0)], &[], 2)]).is_err());
        assert!(SparseDataset::new(3, 2, vec![ex(&[(1, f64::NAN)], &[], 2)]).is_err());
        assert!(SparseDataset::new(3, 3, vec![ex(&[], &[0], 2)]).is_err());
        let ds = SparseDataset::new(3, 2, vec![ex(&[(2, 1.0), (0, 2.0)], &[1], 2)]).unwrap();
        assert_eq!(ds.examples()[0].features, vec![(0, 2.0), (2, 1.0)]);
    }

    #[test]
    fn split_sizes_and_reproducibility() {
        let (tr, va) = split_indices(10, 0.3, 7).unwrap();
        assert_eq!((tr.len(), va.len()), (7, 3));
        assert_eq!(split_indices(10, 0.3, 7).unwrap(), (tr.clone(), va.clone()));
        let mut all: Vec<usize> = tr.into_iter().chain(va).collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert!(split_indices(3, 0.2, 0).is_err());
        assert!(split_indices(10, 1.0, 0).is_err());
    }

    #[test]
    fn tfidf_examples() {
        let ds = SparseDataset::new(
            4,
            1,
            vec![ex(&[(0, 1.0), (1, 2.0)], &[], 1), ex(&[(0, 3.0), (2, 1.0), (3, 1.0)], &[0], 1)],
        )
        .unwrap();
        let t = tfidf(&ds, false).unwrap();
        // feature 0 is in every example and vanishes
        assert_eq!(t.examples()[0].features.len(), 1);
        assert!(t.examples().iter().all(|e| e.features.iter().all(|&(f, _)| f != 0)));
        for e in t.examples() {
            let norm: f64 = e.features.iter().map(|(_, v)| v * v).sum();
            assert!((norm - 1.0).abs() < 1e-15);
        }
        let single = SparseDataset::new(2, 1, vec![ex(&[(0, 1.0), (1, 4.0)], &[], 1)]).unwrap();
        assert!(tfidf(&single, false).unwrap().examples()[0].features.is_empty());
        assert_eq!(tfidf(&single, true).unwrap().examples()[0].features.len(), 2);
    }

    #[test]
    fn top_labels_by_frequency() {
        let ds = SparseDataset::new(
            1,
            4,
            vec![ex(&[], &[1, 3], 4), ex(&[], &[3], 4), ex(&[], &[0, 1], 4), ex(&[], &[2], 4)],
        )
        .unwrap();
        assert_eq!(select_top_labels(&ds, 4).unwrap(), vec![1, 3, 0, 2]);
        let top = top_n_labels(&ds, 1).unwrap();
        assert_eq!(top.num_labels(), 1);
        let kept: Vec<usize> = top.labels().map(|l| l.len()).collect();
        assert_eq!(kept, vec![1, 0, 1, 0]);
        assert_eq!(top.num_examples(), 4);
        assert_eq!(top.drop_unlabeled().num_examples(), 2);
        assert!(top_n_labels(&ds, 0).is_err());
    }
}
