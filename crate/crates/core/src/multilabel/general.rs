//! Unbiased estimation of arbitrary multilabel losses by summing over the
//! subsets of the observed positives.

use crate::error::{Error, Result};
use crate::labels::{Propensities, ScoreVector, SparseLabels};
use crate::numeric::CompensatedSum;

/// Largest number of observed positives for which subsets are enumerated.
pub const DEFAULT_LABEL_CAP: usize = 25;

/// A multilabel loss `f*(y, s)` that can be evaluated on any label subset.
///
/// `labels` are sorted, distinct label indices; `scores` holds one entry per
/// label.
pub trait MultilabelLoss {
    fn evaluate(&self, labels: &[usize], scores: &[f64]) -> f64;
}

impl<F> MultilabelLoss for F
where
    F: Fn(&[usize], &[f64]) -> f64,
{
    fn evaluate(&self, labels: &[usize], scores: &[f64]) -> f64 {
        self(labels, scores)
    }
}

pub(crate) fn check_cap(count: usize, cap: usize) -> Result<()> {
    if count > cap {
        Err(Error::TooManyLabels { count, cap })
    } else {
        Ok(())
    }
}

/// Unbiased estimate of `f*` from the observed labels `y`:
///
/// ```text
/// f(y, s) = prod_{i in y} 1/p_i * sum_{J ⊆ y} f*(J, s) prod_{j in y \ J} (p_j - 1)
/// ```
///
/// Costs `2^|y|` evaluations of `f*`; inputs with more than
/// [`DEFAULT_LABEL_CAP`] observed labels are rejected.
pub fn unbiased_general<L: MultilabelLoss + ?Sized>(
    f_star: &L,
    p: &Propensities,
    y: &SparseLabels,
    scores: &ScoreVector,
) -> Result<f64> {
    unbiased_general_with_cap(f_star, p, y, scores, DEFAULT_LABEL_CAP)
}

pub fn unbiased_general_with_cap<L: MultilabelLoss + ?Sized>(
    f_star: &L,
    p: &Propensities,
    y: &SparseLabels,
    scores: &ScoreVector,
    cap: usize,
) -> Result<f64> {
    p.check_len(y.num_labels())?;
    let observed = y.indices();
    let k = observed.len();
    check_cap(k, cap)?;
    if k >= usize::BITS as usize - 1 {
        return Err(Error::TooManyLabels { count: k, cap: usize::BITS as usize - 2 });
    }
    let scores = scores.as_slice();

    let prefactor: f64 = observed.iter().map(|&i| 1.0 / p.get(i)).product();
    let factors: Vec<f64> = observed.iter().map(|&i| p.get(i) - 1.0).collect();

    // Gray-code walk over subsets J, starting from J = ∅. The weight
    // prod_{j ∉ J}(p_j - 1) is maintained incrementally; zero factors
    // (p_j = 1) are counted separately so they can be divided out.
    let mut in_subset = vec![false; k];
    let mut zeros = factors.iter().filter(|&&x| x == 0.0).count();
    let mut product: f64 = factors.iter().filter(|&&x| x != 0.0).product();
    let mut subset: Vec<usize> = Vec::with_capacity(k);

    let mut acc = CompensatedSum::new();
    let total: u64 = 1 << k;
    for step in 0..total {
        if step > 0 {
            let bit = step.trailing_zeros() as usize;
            let factor = factors[bit];
            if in_subset[bit] {
                in_subset[bit] = false;
                if factor == 0.0 {
                    zeros += 1;
                } else {
                    product *= factor;
                }
                let pos = subset.binary_search(&observed[bit]).expect("label in subset");
                subset.remove(pos);
            } else {
                in_subset[bit] = true;
                if factor == 0.0 {
                    zeros -= 1;
                } else {
                    product /= factor;
                }
                let pos = subset.binary_search(&observed[bit]).unwrap_err();
                subset.insert(pos, observed[bit]);
            }
        }
        if zeros == 0 {
            acc.add(product * f_star.evaluate(&subset, scores));
        }
    }
    Ok(prefactor * acc.value())
}
