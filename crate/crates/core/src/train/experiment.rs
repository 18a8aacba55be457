//! Regularization sweep over clean and noisy training data, and the split
//! of the generalization gap into a finite-sample and a noise-pattern term.

use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{dataset_loss, predict, train, Link, LinearModel, TrainConfig};
use crate::binary::Variant;
use crate::data::{split_indices, SparseDataset};
use crate::error::{Error, Result};
use crate::eval::{precision_at_k, ps_precision_at_k, ps_recall_at_k_with, recall_at_k, SubsampleConfig};
use crate::labels::{apply_mask, Propensities, SparseLabels};
use crate::multilabel::Reduction;
use crate::numeric::compensated_sum;

/// The five views of the data used by the sweep. Noisy splits carry masked
/// labels of the same examples as their clean counterparts.
#[derive(Debug, Clone)]
pub struct SweepSplits {
    pub noisy_train: SparseDataset,
    pub clean_train: SparseDataset,
    pub noisy_val: SparseDataset,
    pub clean_val: SparseDataset,
    pub clean_test: SparseDataset,
}

/// Masks every example of `ds` with the propensities, drawing from the given
/// stream of `seed`.
pub fn mask_dataset(ds: &SparseDataset, p: &Propensities, seed: u64, stream: u64) -> Result<SparseDataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let labels = ds.labels().map(|y| apply_mask(y, p, &mut rng)).collect::<Result<Vec<SparseLabels>>>()?;
    ds.with_labels(labels)
}

/// Splits `train` into training and validation parts and masks each part
/// with an independent stream. The test set stays clean.
pub fn prepare_splits(
    train: &SparseDataset,
    test: &SparseDataset,
    p: &Propensities,
    val_fraction: f64,
    seed: u64,
) -> Result<SweepSplits> {
    if test.num_labels() != train.num_labels() || test.num_features() != train.num_features() {
        return Err(Error::Validation("train and test sets have different dimensions".into()));
    }
    p.check_len(train.num_labels())?;
    let (tr, va) = split_indices(train.num_examples(), val_fraction, seed)?;
    let clean_train = train.subset(&tr);
    let clean_val = train.subset(&va);
    Ok(SweepSplits {
        noisy_train: mask_dataset(&clean_train, p, seed, 2)?,
        noisy_val: mask_dataset(&clean_val, p, seed, 3)?,
        clean_train,
        clean_val,
        clean_test: test.clone(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitKind {
    NoisyTrain,
    CleanTrain,
    NoisyVal,
    CleanVal,
    CleanTest,
}

impl SplitKind {
    pub const ALL: [SplitKind; 5] =
        [SplitKind::NoisyTrain, SplitKind::CleanTrain, SplitKind::NoisyVal, SplitKind::CleanVal, SplitKind::CleanTest];

    pub fn name(self) -> &'static str {
        match self {
            SplitKind::NoisyTrain => "noisy-train",
            SplitKind::CleanTrain => "clean-train",
            SplitKind::NoisyVal => "noisy-val",
            SplitKind::CleanVal => "clean-val",
            SplitKind::CleanTest => "clean-test",
        }
    }

    pub fn is_noisy(self) -> bool {
        matches!(self, SplitKind::NoisyTrain | SplitKind::NoisyVal)
    }

    fn of(self, s: &SweepSplits) -> &SparseDataset {
        match self {
            SplitKind::NoisyTrain => &s.noisy_train,
            SplitKind::CleanTrain => &s.clean_train,
            SplitKind::NoisyVal => &s.noisy_val,
            SplitKind::CleanVal => &s.clean_val,
            SplitKind::CleanTest => &s.clean_test,
        }
    }
}

impl fmt::Display for SplitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Which labels the model is trained on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Clean labels, vanilla variant of the loss.
    Clean,
    /// Masked labels, the configured variant of the loss.
    Noisy,
}

/// How the best regularization strength is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    /// Lowest unbiased loss on the masked validation labels.
    NoisyValUnbiased,
    /// Lowest vanilla loss on the clean validation labels.
    CleanValVanilla,
}

impl Selection {
    pub fn default_for(regime: Regime) -> Self {
        match regime {
            Regime::Clean => Selection::CleanValVanilla,
            Regime::Noisy => Selection::NoisyValUnbiased,
        }
    }
}

/// Loss and ranking metrics of one model on one split. Noisy splits use
/// the unbiased loss and propensity-scored metrics; clean splits use the
/// vanilla ones.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitMetrics {
    pub loss: f64,
    /// Precision at each `k`.
    pub precision: Vec<f64>,
    /// Recall at each `k`.
    pub recall: Vec<f64>,
}

#[allow(clippy::too_many_arguments)]
pub fn evaluate_split(
    model: &LinearModel,
    ds: &SparseDataset,
    p: &Propensities,
    loss: &Reduction,
    link: Link,
    noisy: bool,
    ks: &[usize],
    seed: u64,
) -> Result<SplitMetrics> {
    let variant = if noisy { Variant::Unbiased } else { Variant::Vanilla };
    let value = dataset_loss(model, ds, p, &loss.with_variant(variant), link)?;
    let scores = predict(model, ds);
    let n = ds.num_examples() as f64;
    let sub = SubsampleConfig::default();
    let mut precision = Vec::with_capacity(ks.len());
    let mut recall = Vec::with_capacity(ks.len());
    for &k in ks {
        let per_example: Vec<(f64, f64)> = ds
            .labels()
            .zip(&scores)
            .enumerate()
            .collect::<Vec<_>>()
            .into_par_iter()
            .map(|(i, (y, s))| {
                if noisy {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(i as u64);
                    Ok((ps_precision_at_k(p, y, s, k)?, ps_recall_at_k_with(p, y, s, k, &sub, &mut rng)?))
                } else {
                    Ok((precision_at_k(y, s, k)?, recall_at_k(y, s, k)?))
                }
            })
            .collect::<Result<_>>()?;
        precision.push(compensated_sum(per_example.iter().map(|v| v.0)) / n);
        recall.push(compensated_sum(per_example.iter().map(|v| v.1)) / n);
    }
    Ok(SplitMetrics { loss: value, precision, recall })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub l2: f64,
    pub split: SplitKind,
    pub metrics: SplitMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub regime: Regime,
    pub selection: Selection,
    pub ks: Vec<usize>,
    pub rows: Vec<SweepRow>,
    pub best_l2: f64,
    /// Models in grid order.
    #[serde(skip)]
    pub models: Vec<LinearModel>,
}

impl SweepResult {
    pub fn row(&self, l2: f64, split: SplitKind) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.l2 == l2 && r.split == split)
    }
}

/// Trains one model per regularization strength and evaluates it on all five
/// splits; `best_l2` minimizes the selection loss (first grid point on ties).
pub fn regularization_sweep(
    splits: &SweepSplits,
    p: &Propensities,
    base: &TrainConfig,
    l2_grid: &[f64],
    regime: Regime,
    selection: Option<Selection>,
) -> Result<SweepResult> {
    if l2_grid.is_empty() {
        return Err(Error::param("regularization grid is empty"));
    }
    let selection = selection.unwrap_or_else(|| Selection::default_for(regime));
    let ks: Vec<usize> = [1, 3, 5].into_iter().filter(|&k| k <= splits.clean_train.num_labels()).collect();
    let (train_set, train_loss) = match regime {
        Regime::Clean => (&splits.clean_train, base.loss.with_variant(Variant::Vanilla)),
        Regime::Noisy => (&splits.noisy_train, base.loss),
    };
    let link = base.link();

    let per_l2: Vec<(LinearModel, Vec<SweepRow>)> = l2_grid
        .par_iter()
        .map(|&l2| {
            let cfg = TrainConfig { l2, loss: train_loss, ..base.clone() };
            let model = train(train_set, p, &cfg)?;
            let rows = SplitKind::ALL
                .iter()
                .map(|&split| {
                    let metrics =
                        evaluate_split(&model, split.of(splits), p, &base.loss, link, split.is_noisy(), &ks, base.seed)?;
                    Ok(SweepRow { l2, split, metrics })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((model, rows))
        })
        .collect::<Result<_>>()?;

    let selection_split = match selection {
        Selection::NoisyValUnbiased => SplitKind::NoisyVal,
        Selection::CleanValVanilla => SplitKind::CleanVal,
    };
    let mut best = (f64::INFINITY, l2_grid[0]);
    for (_, rows) in &per_l2 {
        let row = rows.iter().find(|r| r.split == selection_split).expect("every split evaluated");
        if row.metrics.loss < best.0 {
            best = (row.metrics.loss, row.l2);
        }
    }
    let (models, rows): (Vec<_>, Vec<_>) = per_l2.into_iter().unzip();
    Ok(SweepResult { regime, selection, ks, rows: rows.into_iter().flatten().collect(), best_l2: best.1, models })
}

/// `true_risk - noisy_estimate = finite_sample + noise_pattern`, where
/// `finite_sample = true_risk - clean_empirical` and
/// `noise_pattern = clean_empirical - noisy_estimate`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapDecomposition {
    /// Vanilla loss on held-out clean data.
    pub true_risk: f64,
    /// Vanilla loss on the clean training labels.
    pub clean_empirical: f64,
    /// Unbiased loss on the masked training labels.
    pub noisy_estimate: f64,
    pub finite_sample: f64,
    pub noise_pattern: f64,
    pub total: f64,
}

/// Decomposes the generalization gap of `model`. `clean_train` and
/// `noisy_train` must be the same examples with clean and masked labels.
pub fn noise_pattern_gap(
    model: &LinearModel,
    clean_train: &SparseDataset,
    noisy_train: &SparseDataset,
    clean_test: &SparseDataset,
    p: &Propensities,
    loss: &Reduction,
    link: Link,
) -> Result<GapDecomposition> {
    if clean_train.num_examples() != noisy_train.num_examples() {
        return Err(Error::Dimension { expected: clean_train.num_examples(), got: noisy_train.num_examples() });
    }
    for (row, (c, n)) in clean_train.examples().iter().zip(noisy_train.examples()).enumerate() {
        if c.features != n.features || !n.labels.is_subset_of(&c.labels) {
            return Err(Error::Validation(format!("noisy example {row} is not a masking of the clean one")));
        }
    }
    let vanilla = loss.with_variant(Variant::Vanilla);
    let true_risk = dataset_loss(model, clean_test, p, &vanilla, link)?;
    let clean_empirical = dataset_loss(model, clean_train, p, &vanilla, link)?;
    let noisy_estimate = dataset_loss(model, noisy_train, p, &loss.with_variant(Variant::Unbiased), link)?;
    Ok(GapDecomposition {
        true_risk,
        clean_empirical,
        noisy_estimate,
        finite_sample: true_risk - clean_empirical,
        noise_pattern: clean_empirical - noisy_estimate,
        total: true_risk - noisy_estimate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::binary::BinaryLoss;
    use crate::multilabel::ReductionKind;
    use crate::simulate::{generate_linear_datasets, LinearDataSpec};

    fn splits(p: &Propensities) -> SweepSplits {
        let spec = LinearDataSpec { num_examples: 200, num_features: 6, num_labels: 4, seed: 3, ..Default::default() };
        let sets = generate_linear_datasets(&spec, &[200, 100]).unwrap();
        prepare_splits(&sets[0], &sets[1], p, 0.3, 1).unwrap()
    }

    fn cfg() -> TrainConfig {
        let loss = Reduction::new(ReductionKind::Ova(BinaryLoss::BinaryCrossEntropy), Variant::Unbiased);
        TrainConfig { epochs_phase1: 3, lr_phase1: 0.05, epochs_phase2: 1, lr_phase2: 0.005, batch_size: 32, ..TrainConfig::new(loss) }
    }

    #[test]
    fn single_point_grid() {
        let p = Propensities::uniform(4, 0.5).unwrap();
        let s = splits(&p);
        let r = regularization_sweep(&s, &p, &cfg(), &[0.01], Regime::Noisy, None).unwrap();
        assert_eq!(r.best_l2, 0.01);
        assert_eq!(r.rows.len(), 5);
        assert_eq!(r.ks, vec![1, 3]);
        assert!(regularization_sweep(&s, &p, &cfg(), &[], Regime::Noisy, None).is_err());
    }

    #[test]
    fn masks_are_subsets_and_independent() {
        let p = Propensities::uniform(4, 0.5).unwrap();
        let s = splits(&p);
        assert_eq!(s.noisy_train.num_examples(), 140);
        assert_eq!(s.clean_val.num_examples(), 60);
        for (c, n) in s.clean_train.labels().zip(s.noisy_train.labels()) {
            assert!(n.is_subset_of(c));
        }
    }

    #[test]
    fn gap_terms_sum_and_vanish_on_clean_data() {
        let p = Propensities::uniform(4, 1.0).unwrap();
        let s = splits(&p);
        let model = LinearModel::zeros(6, 4);
        let loss = cfg().loss;
        let g = noise_pattern_gap(&model, &s.clean_train, &s.noisy_train, &s.clean_test, &p, &loss, Link::Sigmoid)
            .unwrap();
        assert_eq!(g.noise_pattern, 0.0);
        assert!((g.finite_sample + g.noise_pattern - g.total).abs() < 1e-12);

        let p = Propensities::uniform(4, 0.3).unwrap();
        let s = splits(&p);
        let g = noise_pattern_gap(&model, &s.clean_train, &s.noisy_train, &s.clean_test, &p, &loss, Link::Sigmoid)
            .unwrap();
        assert!((g.finite_sample + g.noise_pattern - g.total).abs() < 1e-12);
        assert!(noise_pattern_gap(&model, &s.noisy_train, &s.clean_train, &s.clean_test, &p, &loss, Link::Sigmoid)
            .is_err());
    }
}
