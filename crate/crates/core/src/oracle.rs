//! Brute-force reference implementations: exact expectations over the mask
//! distribution, the corruption-matrix estimator and central finite
//! differences. Exponential in the number of labels; meant for validation.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::labels::{Propensities, ScoreVector, SparseLabels};
use crate::multilabel::MultilabelLoss;
use crate::numeric::CompensatedSum;

/// Largest number of true positives whose mask outcomes are enumerated.
pub const MAX_ENUMERATED_LABELS: usize = 20;

/// Largest label count for the corruption-matrix estimator.
pub const MAX_CORRUPTION_LABELS: usize = 12;

/// Distribution of the observed labels given the true positives.
#[derive(Debug, Clone)]
pub struct MaskDistribution {
    truth: SparseLabels,
    p: Propensities,
}

impl MaskDistribution {
    pub fn new(truth: SparseLabels, p: Propensities) -> Result<Self> {
        p.check_len(truth.num_labels())?;
        if truth.len() > MAX_ENUMERATED_LABELS {
            return Err(Error::TooManyLabels { count: truth.len(), cap: MAX_ENUMERATED_LABELS });
        }
        Ok(Self { truth, p })
    }

    pub fn truth(&self) -> &SparseLabels {
        &self.truth
    }

    pub fn propensities(&self) -> &Propensities {
        &self.p
    }

    /// All `2^k` kept subsets with their probabilities. The kept set for
    /// bitmask `m` contains the `i`-th true positive when bit `i` is set.
    pub fn outcomes(&self) -> Vec<(SparseLabels, f64)> {
        let positives = self.truth.indices();
        let k = positives.len();
        (0u32..1 << k)
            .map(|mask| {
                let mut prob = 1.0;
                let mut kept = Vec::new();
                for (bit, &label) in positives.iter().enumerate() {
                    let pj = self.p.get(label);
                    if mask >> bit & 1 == 1 {
                        prob *= pj;
                        kept.push(label);
                    } else {
                        prob *= 1.0 - pj;
                    }
                }
                (SparseLabels::from_sorted(kept, self.truth.num_labels()), prob)
            })
            .collect()
    }

    /// `E[g(kept)]` by exhaustive enumeration.
    pub fn expect<F>(&self, mut g: F) -> Result<f64>
    where
        F: FnMut(&SparseLabels) -> Result<f64>,
    {
        let mut acc = CompensatedSum::new();
        for (kept, prob) in self.outcomes() {
            if prob != 0.0 {
                acc.add(prob * g(&kept)?);
            }
        }
        Ok(acc.value())
    }
}

/// Exact expectation of `f(kept, scores)` over the mask distribution.
pub fn exact_expectation<L: MultilabelLoss + ?Sized>(
    f: &L,
    dist: &MaskDistribution,
    scores: &ScoreVector,
) -> Result<f64> {
    dist.expect(|kept| Ok(f.evaluate(kept.indices(), scores.as_slice())))
}

fn state_labels(state: usize, l: usize) -> Vec<usize> {
    (0..l).filter(|&i| state >> i & 1 == 1).collect()
}

/// Unbiased estimate obtained by inverting the corruption operator over all
/// `2^l` label states.
///
/// `C[obs, true] = prod_{i in obs} p_i prod_{i in true \ obs} (1 - p_i)` for
/// `obs ⊆ true` and zero otherwise. The estimator `f` solves
/// `C^T f = f*`; ordering states as bitmasks makes `C^T` lower triangular.
pub fn corruption_matrix_estimate<L: MultilabelLoss + ?Sized>(
    f_star: &L,
    p: &Propensities,
    y: &SparseLabels,
    scores: &ScoreVector,
) -> Result<f64> {
    let l = y.num_labels();
    p.check_len(l)?;
    if l > MAX_CORRUPTION_LABELS {
        return Err(Error::TooManyLabels { count: l, cap: MAX_CORRUPTION_LABELS });
    }
    let n = 1usize << l;
    let transition = DMatrix::from_fn(n, n, |truth, obs| {
        if obs & !truth != 0 {
            return 0.0;
        }
        (0..l)
            .filter(|&i| truth >> i & 1 == 1)
            .map(|i| if obs >> i & 1 == 1 { p.get(i) } else { 1.0 - p.get(i) })
            .product()
    });
    let clean = DVector::from_fn(n, |state, _| f_star.evaluate(&state_labels(state, l), scores.as_slice()));
    let estimator = transition
        .solve_lower_triangular(&clean)
        .ok_or_else(|| Error::Validation("corruption matrix is singular".into()))?;
    let observed: usize = y.iter().map(|i| 1usize << i).sum();
    Ok(estimator[observed])
}

/// Central finite-difference gradient of `f` at `x` with step `h`.
pub fn finite_diff_gradient<F>(f: F, x: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::param(format!("step must be positive, got {h}")));
    }
    let mut point = x.to_vec();
    (0..x.len())
        .map(|i| {
            point[i] = x[i] + h;
            let up = f(&point)?;
            point[i] = x[i] - h;
            let down = f(&point)?;
            point[i] = x[i];
            Ok((up - down) / (2.0 * h))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::multilabel::{ps_recall, unbiased_general};

    fn labels(idx: &[usize], l: usize) -> SparseLabels {
        SparseLabels::new(idx.to_vec(), l).unwrap()
    }

    #[test]
    fn worked_example_probabilities() {
        let p = Propensities::uniform(3, 1.0 / 3.0).unwrap();
        let dist = MaskDistribution::new(labels(&[0, 1], 3), p.clone()).unwrap();
        let probs: Vec<f64> = dist.outcomes().iter().map(|(_, q)| *q).collect();
        for (got, want) in probs.iter().zip([4.0 / 9.0, 2.0 / 9.0, 2.0 / 9.0, 1.0 / 9.0]) {
            assert!((got - want).abs() < 1e-15);
        }
        let pred = labels(&[0], 3);
        let e = dist.expect(|kept| ps_recall(&p, kept, &pred)).unwrap();
        assert!((e - 0.5).abs() < 1e-12);
    }

    #[test]
    fn two_point_and_clean() {
        let f = |s: &[usize], _: &[f64]| if s.is_empty() { 2.0 } else { 5.0 };
        let scores = ScoreVector::new(vec![0.0; 2]);
        let dist = MaskDistribution::new(labels(&[0], 2), Propensities::new(vec![0.3, 1.0]).unwrap()).unwrap();
        assert!((exact_expectation(&f, &dist, &scores).unwrap() - (0.3 * 5.0 + 0.7 * 2.0)).abs() < 1e-15);
        let clean = MaskDistribution::new(labels(&[0, 1], 2), Propensities::uniform(2, 1.0).unwrap()).unwrap();
        assert_eq!(exact_expectation(&f, &clean, &scores).unwrap(), 5.0);
    }

    #[test]
    fn corruption_matrix_matches_subset_sum() {
        let table: Vec<f64> = (0..8).map(|i| ((i * 7 + 3) % 5) as f64 - 1.3).collect();
        let f = |s: &[usize], _: &[f64]| table[s.iter().map(|&i| 1usize << i).sum::<usize>()];
        let p = Propensities::new(vec![0.35, 0.8, 0.6]).unwrap();
        let scores = ScoreVector::new(vec![0.0; 3]);
        for idx in [&[][..], &[1], &[0, 2], &[0, 1, 2]] {
            let y = labels(idx, 3);
            let a = corruption_matrix_estimate(&f, &p, &y, &scores).unwrap();
            let b = unbiased_general(&f, &p, &y, &scores).unwrap();
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
        let clean = Propensities::uniform(3, 1.0).unwrap();
        let y = labels(&[0, 2], 3);
        assert_eq!(corruption_matrix_estimate(&f, &clean, &y, &scores).unwrap(), table[5]);
    }

    #[test]
    fn finite_differences() {
        let g = finite_diff_gradient(|x| Ok(x.iter().map(|v| v * v).sum()), &[1.0, 2.0], 1e-6).unwrap();
        assert!((g[0] - 2.0).abs() < 1e-6 && (g[1] - 4.0).abs() < 1e-6);
        let z = finite_diff_gradient(|_| Ok(3.0), &[0.5, -0.5, 9.0], 1e-6).unwrap();
        assert!(z.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn limits_enforced() {
        let p = Propensities::uniform(21, 0.5).unwrap();
        assert!(MaskDistribution::new(SparseLabels::full(21), p).is_err());
        let f = |_: &[usize], _: &[f64]| 0.0;
        let p = Propensities::uniform(13, 0.5).unwrap();
        let y = SparseLabels::empty(13);
        assert!(corruption_matrix_estimate(&f, &p, &y, &ScoreVector::new(vec![0.0; 13])).is_err());
    }
}
