//! Propensity models: the empirical frequency model and the linear
//! inverse-propensity schedule used for synthetic noise.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::Propensities;

/// Parameters of the empirical propensity model
/// `p_j = 1 / (1 + c * (n_j + b)^(-a))` with `c = (ln n - 1) (b + 1)^a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalModelParams {
    pub a: f64,
    pub b: f64,
    /// Number of examples in the dataset.
    pub n: u64,
}

impl EmpiricalModelParams {
    pub fn new(a: f64, b: f64, n: u64) -> Result<Self> {
        let params = Self { a, b, n };
        params.validate()?;
        Ok(params)
    }

    fn validate(&self) -> Result<()> {
        if !(self.a > 0.0 && self.a.is_finite()) {
            return Err(Error::param(format!("a must be positive, got {}", self.a)));
        }
        if !(self.b >= 0.0 && self.b.is_finite()) {
            return Err(Error::param(format!("b must be non-negative, got {}", self.b)));
        }
        if self.n < 3 {
            return Err(Error::param(format!("dataset size must be at least 3, got {}", self.n)));
        }
        Ok(())
    }

    /// The constant `c = (ln n - 1)(b + 1)^a`.
    pub fn c(&self) -> f64 {
        ((self.n as f64).ln() - 1.0) * (self.b + 1.0).powf(self.a)
    }

    /// Propensity of a label that occurs `count` times.
    pub fn propensity(&self, count: f64) -> Result<f64> {
        let shifted = count + self.b;
        if shifted.is_nan() || shifted <= 0.0 {
            return Err(Error::param(format!(
                "label count + b must be positive, got {count} + {}",
                self.b
            )));
        }
        Ok(1.0 / (1.0 + self.c() * (-self.a * shifted.ln()).exp()))
    }
}

/// Per-label propensities from label occurrence counts.
pub fn empirical_propensity(params: &EmpiricalModelParams, label_counts: &[u64]) -> Result<Propensities> {
    params.validate()?;
    let p = label_counts
        .iter()
        .map(|&n_j| params.propensity(n_j as f64))
        .collect::<Result<Vec<_>>>()?;
    Propensities::new(p)
}

/// Propensities whose inverse grows linearly with the frequency rank:
/// rank 0 gets inverse propensity `top`, rank `num_labels - 1` gets `bottom`.
/// Entry `r` of the result is the propensity of rank `r`.
pub fn linear_inverse_propensity(num_labels: usize, top: f64, bottom: f64) -> Result<Propensities> {
    if num_labels < 2 {
        return Err(Error::param("linear schedule needs at least two labels"));
    }
    if !(top >= 1.0 && top <= bottom && bottom.is_finite()) {
        return Err(Error::param(format!("need 1 <= top <= bottom, got top={top} bottom={bottom}")));
    }
    let step = (bottom - top) / (num_labels - 1) as f64;
    Propensities::new((0..num_labels).map(|r| 1.0 / (top + r as f64 * step)).collect())
}

/// Ranks labels by decreasing count; ties go to the lower index.
pub fn frequency_ranking(label_counts: &[u64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..label_counts.len()).collect();
    order.sort_by(|&i, &j| label_counts[j].cmp(&label_counts[i]).then(i.cmp(&j)));
    order
}

/// Linear inverse-propensity schedule assigned to labels by their frequency
/// rank, indexed by label.
pub fn linear_inverse_by_frequency(label_counts: &[u64], top: f64, bottom: f64) -> Result<Propensities> {
    let by_rank = linear_inverse_propensity(label_counts.len(), top, bottom)?;
    let mut p = vec![0.0; label_counts.len()];
    for (rank, label) in frequency_ranking(label_counts).into_iter().enumerate() {
        p[label] = by_rank.get(rank);
    }
    Propensities::new(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empirical_reference_value() {
        // mpmath, 30 digits: 1 / (1 + (ln 100 - 1) / 100)
        let params = EmpiricalModelParams::new(1.0, 0.0, 100).unwrap();
        let p = empirical_propensity(&params, &[100]).unwrap();
        assert!((p.get(0) - 0.965_202_796_544_649).abs() < 1e-14);
    }

    #[test]
    fn empirical_limit_is_one() {
        let params = EmpiricalModelParams::new(1.0, 0.0, 100).unwrap();
        let p = empirical_propensity(&params, &[1_000_000_000_000]).unwrap();
        assert!((p.get(0) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn empirical_rejects_singular_and_small_n() {
        let params = EmpiricalModelParams::new(1.0, 0.0, 100).unwrap();
        assert!(empirical_propensity(&params, &[0]).is_err());
        assert!(EmpiricalModelParams::new(1.0, 0.0, 2).is_err());
        assert!(EmpiricalModelParams::new(0.0, 0.0, 100).is_err());
    }

    #[test]
    fn linear_schedule_endpoints() {
        let p = linear_inverse_propensity(100, 2.0, 20.0).unwrap();
        assert_eq!(p.get(0), 0.5);
        assert!((p.get(99) - 0.05).abs() < 1e-15);
        assert!((1.0 / p.get(50) - 11.090_909_090_909_09).abs() < 1e-12);
    }

    #[test]
    fn linear_schedule_clean_and_errors() {
        let p = linear_inverse_propensity(5, 1.0, 1.0).unwrap();
        assert!(p.as_slice().iter().all(|&v| v == 1.0));
        assert!(linear_inverse_propensity(1, 2.0, 20.0).is_err());
        assert!(linear_inverse_propensity(10, 3.0, 2.0).is_err());
        assert!(linear_inverse_propensity(10, 0.5, 2.0).is_err());
    }

    #[test]
    fn frequency_assignment_follows_rank() {
        let p = linear_inverse_by_frequency(&[5, 10, 5], 2.0, 4.0).unwrap();
        // ranks: label 1, label 0, label 2
        assert_eq!(p.as_slice(), &[1.0 / 3.0, 0.5, 0.25]);
    }

    proptest! {
        #[test]
        fn empirical_is_monotone(a in 0.1f64..2.0, b in 0.0f64..5.0, n in 3u64..1_000_000,
                            mut counts in proptest::collection::vec(1u64..100_000, 2..30)) {
            counts.sort_unstable();
            let params = EmpiricalModelParams::new(a, b, n).unwrap();
            let p = empirical_propensity(&params, &counts).unwrap();
            for w in p.as_slice().windows(2) {
                prop_assert!(w[0] <= w[1]);
            }
            prop_assert!(p.as_slice().iter().all(|&v| v > 0.0 && v <= 1.0));
        }
    }
}
