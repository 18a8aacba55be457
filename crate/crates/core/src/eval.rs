//! Ranking metrics at `k`, their propensity-scored versions, the subsampling
//! estimator for examples with many observed labels, and quantile filtering.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::{Propensities, ScoreVector, SparseLabels};
use crate::multilabel::{ps_recall_with_cap, recall, DEFAULT_LABEL_CAP};
use crate::numeric::mean_std;

/// Indices of the `k` largest scores; ties go to the lower index.
pub fn top_k(scores: &ScoreVector, k: usize) -> Result<SparseLabels> {
    let s = scores.as_slice();
    if k == 0 || k > s.len() {
        return Err(Error::param(format!("k must be in 1..={}, got {k}", s.len())));
    }
    if s.iter().any(|v| v.is_nan()) {
        return Err(Error::Validation("NaN score".into()));
    }
    let mut order: Vec<usize> = (0..s.len()).collect();
    let by_score = |&a: &usize, &b: &usize| s[b].total_cmp(&s[a]).then(a.cmp(&b));
    if k < s.len() {
        order.select_nth_unstable_by(k - 1, by_score);
    }
    order.truncate(k);
    order.sort_unstable();
    Ok(SparseLabels::from_sorted(order, s.len()))
}

fn check_dims(y: &SparseLabels, scores: &ScoreVector) -> Result<()> {
    if scores.len() != y.num_labels() {
        return Err(Error::Dimension { expected: y.num_labels(), got: scores.len() });
    }
    Ok(())
}

/// `|top_k ∩ y| / k`.
pub fn precision_at_k(y: &SparseLabels, scores: &ScoreVector, k: usize) -> Result<f64> {
    check_dims(y, scores)?;
    let top = top_k(scores, k)?;
    Ok(y.intersection_len(&top) as f64 / k as f64)
}

/// Propensity-scored precision: every hit `i` counts `1 / p_i`.
pub fn ps_precision_at_k(p: &Propensities, y: &SparseLabels, scores: &ScoreVector, k: usize) -> Result<f64> {
    check_dims(y, scores)?;
    p.check_len(y.num_labels())?;
    let top = top_k(scores, k)?;
    let hits: f64 = top.iter().filter(|&i| y.contains(i)).map(|i| 1.0 / p.get(i)).sum();
    Ok(hits / k as f64)
}

/// `|top_k ∩ y| / |y|`, zero when `y` is empty.
pub fn recall_at_k(y: &SparseLabels, scores: &ScoreVector, k: usize) -> Result<f64> {
    check_dims(y, scores)?;
    Ok(recall(y, &top_k(scores, k)?))
}

/// Settings of the subsampling estimator used once an example has more
/// observed labels than the enumeration cap.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubsampleConfig {
    pub rounds: usize,
    pub cap: usize,
    /// Probability of dropping each observed label per halving step.
    pub drop_prob: f64,
}

impl Default for SubsampleConfig {
    fn default() -> Self {
        Self { rounds: 100, cap: DEFAULT_LABEL_CAP, drop_prob: 0.5 }
    }
}

impl SubsampleConfig {
    fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::param("subsampling needs at least one round"));
        }
        if !(self.drop_prob > 0.0 && self.drop_prob < 1.0) {
            return Err(Error::param(format!("drop probability must be in (0, 1), got {}", self.drop_prob)));
        }
        Ok(())
    }
}

/// Propensity-scored recall that stays tractable for many observed labels.
///
/// Under the cap this is exactly [`crate::multilabel::ps_recall`]. Above it,
/// each round drops every observed label with probability `drop_prob` and
/// scales the propensities by `1 - drop_prob`, repeating until the label set
/// fits under the cap; the rounds are averaged. The thinned labels are a
/// masking of the truth with the scaled propensities, so every round is an
/// unbiased estimate of the same quantity.
pub fn subsampled_ps_recall<R: Rng + ?Sized>(
    p: &Propensities,
    y: &SparseLabels,
    predicted: &SparseLabels,
    cfg: &SubsampleConfig,
    rng: &mut R,
) -> Result<f64> {
    cfg.validate()?;
    if y.len() <= cfg.cap {
        return ps_recall_with_cap(p, y, predicted, cfg.cap);
    }
    let keep = 1.0 - cfg.drop_prob;
    let mut total = 0.0;
    for _ in 0..cfg.rounds {
        let mut labels = y.clone();
        let mut props = p.clone();
        while labels.len() > cfg.cap {
            let kept = labels.iter().filter(|_| rng.gen::<f64>() < keep).collect();
            labels = SparseLabels::from_sorted(kept, y.num_labels());
            props = props.scaled(keep)?;
        }
        total += ps_recall_with_cap(&props, &labels, predicted, cfg.cap)?;
    }
    Ok(total / cfg.rounds as f64)
}

/// Forces the subsampling branch regardless of the label count: every round
/// thins once. Used to validate the estimator on small instances.
pub fn forced_subsampled_ps_recall<R: Rng + ?Sized>(
    p: &Propensities,
    y: &SparseLabels,
    predicted: &SparseLabels,
    cfg: &SubsampleConfig,
    rng: &mut R,
) -> Result<f64> {
    cfg.validate()?;
    let keep = 1.0 - cfg.drop_prob;
    let props = p.scaled(keep)?;
    let mut total = 0.0;
    for _ in 0..cfg.rounds {
        let kept: Vec<usize> = y.iter().filter(|_| rng.gen::<f64>() < keep).collect();
        let labels = SparseLabels::from_sorted(kept, y.num_labels());
        let inner = SubsampleConfig { rounds: 1, ..*cfg };
        total += subsampled_ps_recall(&props, &labels, predicted, &inner, rng)?;
    }
    Ok(total / cfg.rounds as f64)
}

/// Propensity-scored recall of the top `k`; examples above the cap go
/// through [`subsampled_ps_recall`] with the given generator.
pub fn ps_recall_at_k_with<R: Rng + ?Sized>(
    p: &Propensities,
    y: &SparseLabels,
    scores: &ScoreVector,
    k: usize,
    cfg: &SubsampleConfig,
    rng: &mut R,
) -> Result<f64> {
    check_dims(y, scores)?;
    subsampled_ps_recall(p, y, &top_k(scores, k)?, cfg, rng)
}

/// [`ps_recall_at_k_with`] with default subsampling and a fixed seed, so the
/// result is a deterministic function of its inputs.
pub fn ps_recall_at_k(p: &Propensities, y: &SparseLabels, scores: &ScoreVector, k: usize) -> Result<f64> {
    ps_recall_at_k_with(p, y, scores, k, &SubsampleConfig::default(), &mut ChaCha8Rng::seed_from_u64(0))
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Drops values strictly below the `lower_q` quantile and strictly above the
/// `1 - upper_q` quantile. Returns the kept values in input order and the
/// fraction removed.
pub fn quantile_filter(values: &[f64], lower_q: f64, upper_q: f64) -> Result<(Vec<f64>, f64)> {
    if values.is_empty() {
        return Err(Error::Validation("cannot filter an empty list".into()));
    }
    if !(lower_q >= 0.0 && upper_q >= 0.0 && lower_q < 1.0 - upper_q) {
        return Err(Error::param(format!("need 0 <= lower < 1 - upper, got lower={lower_q} upper={upper_q}")));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::Validation("NaN value".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let lo = quantile(&sorted, lower_q);
    let hi = quantile(&sorted, 1.0 - upper_q);
    let kept: Vec<f64> = values.iter().copied().filter(|&v| v >= lo && v <= hi).collect();
    let removed = (values.len() - kept.len()) as f64 / values.len() as f64;
    Ok((kept, removed))
}

/// Summary of one metric over a dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
    pub filtered_fraction: f64,
}

impl MetricReport {
    /// Mean and sample standard deviation after quantile filtering.
    pub fn from_values(values: &[f64], lower_q: f64, upper_q: f64) -> Result<Self> {
        let (kept, filtered_fraction) = quantile_filter(values, lower_q, upper_q)?;
        if kept.is_empty() {
            return Err(Error::Validation("quantile filter removed every value".into()));
        }
        let (mean, std) = mean_std(&kept);
        Ok(Self { mean, std, count: kept.len(), filtered_fraction })
    }
}

/// Options of [`evaluate_dataset`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub ks: Vec<usize>,
    /// Also report propensity-scored metrics (requires propensities).
    pub propensity_scored: bool,
    pub lower_q: f64,
    pub upper_q: f64,
    pub subsample: SubsampleConfig,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            ks: vec![1, 3, 5],
            propensity_scored: true,
            lower_q: 0.01,
            upper_q: 0.01,
            subsample: SubsampleConfig::default(),
            seed: 0,
        }
    }
}

/// Per-metric reports keyed by names such as `P@1`, `PSP@3`, `R@5`, `PSR@5`.
pub type EvalReport = BTreeMap<String, MetricReport>;

/// Evaluates every example in parallel; example `i` draws its subsampling
/// randomness from its own stream so the result does not depend on
/// scheduling.
pub fn evaluate_dataset(
    truth: &[SparseLabels],
    scores: &[ScoreVector],
    p: Option<&Propensities>,
    cfg: &EvalConfig,
) -> Result<EvalReport> {
    if truth.len() != scores.len() {
        return Err(Error::Dimension { expected: truth.len(), got: scores.len() });
    }
    if truth.is_empty() {
        return Err(Error::Validation("no examples to evaluate".into()));
    }
    if cfg.propensity_scored && p.is_none() {
        return Err(Error::param("propensity-scored metrics need propensities"));
    }
    let ps = if cfg.propensity_scored { p } else { None };
    let rows: Vec<Vec<f64>> = truth
        .par_iter()
        .zip(scores.par_iter())
        .enumerate()
        .map(|(idx, (y, s))| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(idx as u64);
            let mut row = Vec::new();
            for &k in &cfg.ks {
                row.push(precision_at_k(y, s, k)?);
                row.push(recall_at_k(y, s, k)?);
                if let Some(p) = ps {
                    row.push(ps_precision_at_k(p, y, s, k)?);
                    row.push(ps_recall_at_k_with(p, y, s, k, &cfg.subsample, &mut rng)?);
                }
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;

    let mut names = Vec::new();
    for &k in &cfg.ks {
        names.push(format!("P@{k}"));
        names.push(format!("R@{k}"));
        if ps.is_some() {
            names.push(format!("PSP@{k}"));
            names.push(format!("PSR@{k}"));
        }
    }
    let mut report = EvalReport::new();
    for (col, name) in names.into_iter().enumerate() {
        let values: Vec<f64> = rows.iter().map(|r| r[col]).collect();
        report.insert(name, MetricReport::from_values(&values, cfg.lower_q, cfg.upper_q)?);
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn labels(idx: &[usize], l: usize) -> SparseLabels {
        SparseLabels::new(idx.to_vec(), l).unwrap()
    }

    #[test]
    fn top_k_examples() {
        let s = ScoreVector::new(vec![0.1, 0.9, 0.5]);
        assert_eq!(top_k(&s, 1).unwrap().indices(), &[1]);
        assert_eq!(top_k(&s, 3).unwrap().indices(), &[0, 1, 2]);
        assert_eq!(top_k(&ScoreVector::new(vec![0.2; 4]), 2).unwrap().indices(), &[0, 1]);
        assert!(top_k(&s, 0).is_err());
        assert!(top_k(&s, 4).is_err());
    }

    #[test]
    fn precision_examples() {
        let p = Propensities::new(vec![0.2, 1.0, 1.0, 1.0, 1.0, 1.0]).unwrap();
        let y = labels(&[0], 6);
        let s = ScoreVector::new(vec![5.0, 4.0, 3.0, 2.0, 1.0, 0.0]);
        assert!((ps_precision_at_k(&p, &y, &s, 5).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(precision_at_k(&y, &s, 5).unwrap(), 0.2);
        let clean = Propensities::uniform(6, 1.0).unwrap();
        let y = labels(&[0, 1], 6);
        assert_eq!(ps_precision_at_k(&clean, &y, &s, 2).unwrap(), 1.0);
    }

    #[test]
    fn recall_worked_rows() {
        let p = Propensities::uniform(3, 1.0 / 3.0).unwrap();
        let s = ScoreVector::new(vec![1.0, 0.0, 0.0]);
        let got: Vec<f64> = [&[][..], &[1], &[0], &[0, 1]]
            .iter()
            .map(|idx| ps_recall_at_k(&p, &labels(idx, 3), &s, 1).unwrap())
            .collect();
        let want = [0.0, 0.0, 3.0, -1.5];
        for (g, w) in got.iter().zip(want) {
            assert!((g - w).abs() < 1e-12);
        }
    }

    #[test]
    fn subsampling_under_cap_is_plain() {
        let p = Propensities::uniform(5, 0.4).unwrap();
        let y = labels(&[0, 2, 3], 5);
        let pred = labels(&[2], 5);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = subsampled_ps_recall(&p, &y, &pred, &SubsampleConfig::default(), &mut rng).unwrap();
        assert_eq!(a, crate::multilabel::ps_recall(&p, &y, &pred).unwrap());
    }

    #[test]
    fn subsampling_handles_over_cap() {
        let l = 60;
        let p = Propensities::uniform(l, 0.9).unwrap();
        let y = SparseLabels::full(l);
        let pred = labels(&[0, 1, 2], l);
        let cfg = SubsampleConfig { rounds: 200, ..Default::default() };
        let v = subsampled_ps_recall(&p, &y, &pred, &cfg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert!(v.is_finite());
    }

    #[test]
    fn quantile_filter_examples() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        let (kept, frac) = quantile_filter(&v, 0.01, 0.01).unwrap();
        assert_eq!(kept.len(), 98);
        assert_eq!(kept[0], 2.0);
        assert_eq!(*kept.last().unwrap(), 99.0);
        assert_eq!(frac, 0.02);
        assert_eq!(quantile_filter(&v, 0.0, 0.0).unwrap().0, v);
        let c = vec![3.5; 17];
        assert_eq!(quantile_filter(&c, 0.2, 0.3).unwrap().0, c);
        assert!(quantile_filter(&[], 0.0, 0.0).is_err());
        assert!(quantile_filter(&v, 0.6, 0.5).is_err());
    }

    #[test]
    fn dataset_report() {
        let truth = vec![labels(&[0], 3), labels(&[1, 2], 3)];
        let scores = vec![ScoreVector::new(vec![0.9, 0.1, 0.0]), ScoreVector::new(vec![0.9, 0.8, 0.1])];
        let p = Propensities::uniform(3, 1.0).unwrap();
        let cfg = EvalConfig { ks: vec![1, 2], lower_q: 0.0, upper_q: 0.0, ..Default::default() };
        let r = evaluate_dataset(&truth, &scores, Some(&p), &cfg).unwrap();
        assert_eq!(r["P@1"].mean, 0.5);
        assert_eq!(r["R@2"].mean, 0.75);
        assert_eq!(r["PSR@2"].mean, 0.75);
        assert_eq!(r["PSP@1"].count, 2);
    }

    proptest! {
        #[test]
        fn filtered_mean_within_range(values in proptest::collection::vec(-1e3f64..1e3, 1..200),
                                      lq in 0.0f64..0.3, uq in 0.0f64..0.3) {
            let (kept, frac) = quantile_filter(&values, lq, uq).unwrap();
            // interpolated cut points can fall between two neighbouring samples
            prop_assume!(!kept.is_empty());
            prop_assert!((0.0..1.0).contains(&frac));
            let (mean, _) = mean_std(&kept);
            let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(mean >= lo - 1e-9 && mean <= hi + 1e-9);
        }

        #[test]
        fn top_k_permutation_equivariant(scores in proptest::collection::vec(-5i32..5, 2..20), seed in 0u64..1000, k in 1usize..20) {
            let l = scores.len();
            let k = k.min(l);
            // distinct scores so tie-breaking plays no role
            let s: Vec<f64> = scores.iter().enumerate().map(|(i, &v)| v as f64 + i as f64 * 1e-6).collect();
            let mut perm: Vec<usize> = (0..l).collect();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            use rand::seq::SliceRandom;
            perm.shuffle(&mut rng);
            let permuted: Vec<f64> = (0..l).map(|j| s[perm[j]]).collect();
            let a = top_k(&ScoreVector::new(s.clone()), k).unwrap();
            let b = top_k(&ScoreVector::new(permuted), k).unwrap();
            let mapped: std::collections::BTreeSet<usize> = b.iter().map(|j| perm[j]).collect();
            prop_assert_eq!(a.iter().collect::<std::collections::BTreeSet<_>>(), mapped);
        }
    }
}
