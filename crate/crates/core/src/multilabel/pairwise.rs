//! Pairwise losses `sum_{i<j} sum_{a,b} [y_i = a][y_j = b] g_ab(s_i, s_j)` and
//! their unbiased estimates.
//!
//! Replacing `[y_i = 1]` by `y_i / p_i` and `[y_i = 0]` by `1 - y_i / p_i`
//! is unbiased per label, and masks of distinct labels are independent, so
//! the product over a pair stays unbiased. The estimate costs `O(l^2)`.

use crate::error::{Error, Result};
use crate::labels::{Propensities, ScoreVector, SparseLabels};
use crate::numeric::CompensatedSum;

/// The four pair terms `g_ab(s_i, s_j)` for `a = y_i`, `b = y_j`.
pub trait PairwiseTerms {
    fn term(&self, a: bool, b: bool, si: f64, sj: f64) -> f64;
}

impl<F> PairwiseTerms for F
where
    F: Fn(bool, bool, f64, f64) -> f64,
{
    fn term(&self, a: bool, b: bool, si: f64, sj: f64) -> f64 {
        self(a, b, si, sj)
    }
}

/// Kendall-tau style ranking loss: a pair with one relevant and one
/// irrelevant label costs 1 if the irrelevant label is scored higher and 1/2
/// on a tie. Pairs with equal relevance cost nothing.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct KendallTau;

fn misordered(relevant: f64, irrelevant: f64) -> f64 {
    if irrelevant > relevant {
        1.0
    } else if irrelevant == relevant {
        0.5
    } else {
        0.0
    }
}

impl PairwiseTerms for KendallTau {
    fn term(&self, a: bool, b: bool, si: f64, sj: f64) -> f64 {
        match (a, b) {
            (false, true) => misordered(sj, si),
            (true, false) => misordered(si, sj),
            _ => 0.0,
        }
    }
}

fn check(p: &Propensities, y: &SparseLabels, scores: &ScoreVector) -> Result<()> {
    p.check_len(y.num_labels())?;
    if scores.len() != y.num_labels() {
        return Err(Error::Dimension { expected: y.num_labels(), got: scores.len() });
    }
    if y.num_labels() < 2 {
        return Err(Error::param("pairwise losses need at least two labels"));
    }
    Ok(())
}

/// Clean pairwise loss.
pub fn pairwise_vanilla<G: PairwiseTerms + ?Sized>(g: &G, y: &SparseLabels, scores: &ScoreVector) -> Result<f64> {
    let l = y.num_labels();
    if scores.len() != l {
        return Err(Error::Dimension { expected: l, got: scores.len() });
    }
    if l < 2 {
        return Err(Error::param("pairwise losses need at least two labels"));
    }
    let s = scores.as_slice();
    let dense = y.to_dense();
    let mut acc = CompensatedSum::new();
    for i in 0..l {
        for j in i + 1..l {
            acc.add(g.term(dense[i] == 1, dense[j] == 1, s[i], s[j]));
        }
    }
    Ok(acc.value())
}

/// Unbiased estimate of the pairwise loss from observed labels.
pub fn pairwise_unbiased<G: PairwiseTerms + ?Sized>(
    p: &Propensities,
    g: &G,
    y: &SparseLabels,
    scores: &ScoreVector,
) -> Result<f64> {
    check(p, y, scores)?;
    let l = y.num_labels();
    let s = scores.as_slice();
    let dense = y.to_dense();
    // weight[i][a]: estimate of [y*_i = a]
    let weight: Vec<[f64; 2]> = (0..l)
        .map(|i| {
            let pos = f64::from(dense[i]) / p.get(i);
            [1.0 - pos, pos]
        })
        .collect();
    let mut acc = CompensatedSum::new();
    for i in 0..l {
        for j in i + 1..l {
            for a in [false, true] {
                let wa = weight[i][a as usize];
                if wa == 0.0 {
                    continue;
                }
                for b in [false, true] {
                    let wb = weight[j][b as usize];
                    if wb != 0.0 {
                        acc.add(wa * wb * g.term(a, b, s[i], s[j]));
                    }
                }
            }
        }
    }
    Ok(acc.value())
}

/// Unbiased Kendall-tau loss using the simplified form for `g_00 = g_11 = 0`:
/// `sum_{i<j} [(p_i - y_i) y_j g_01 + y_i (p_j - y_j) g_10] / (p_i p_j)`.
pub fn kendall_tau_unbiased(p: &Propensities, y: &SparseLabels, scores: &ScoreVector) -> Result<f64> {
    check(p, y, scores)?;
    let l = y.num_labels();
    let s = scores.as_slice();
    let dense = y.to_dense();
    let g = KendallTau;
    let mut acc = CompensatedSum::new();
    for i in 0..l {
        let (pi, yi) = (p.get(i), f64::from(dense[i]));
        for j in i + 1..l {
            let (pj, yj) = (p.get(j), f64::from(dense[j]));
            let v = (pi - yi) * yj * g.term(false, true, s[i], s[j]) + yi * (pj - yj) * g.term(true, false, s[i], s[j]);
            acc.add(v / (pi * pj));
        }
    }
    Ok(acc.value())
}
