//! Mini-batch Adam training of a linear model under any reduction and
//! variant, plus the regularization-sweep protocol.

mod adam;
mod experiment;
mod model;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use adam::{Adam, AdamParams};
pub use experiment::{
    evaluate_split, mask_dataset, noise_pattern_gap, prepare_splits, regularization_sweep, GapDecomposition, Regime, Selection,
    SplitKind, SplitMetrics, SweepResult, SweepRow, SweepSplits,
};
pub use model::LinearModel;

use crate::binary::Variant;
use crate::data::{Example, SparseDataset};
use crate::error::{Error, Result};
use crate::labels::{Propensities, ScoreVector};
use crate::multilabel::Reduction;
use crate::numeric::{sigmoid, CompensatedSum};

/// Batch objectives above this magnitude abort training.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

/// Clamp applied to sigmoid outputs so probability losses stay finite.
pub const PROBABILITY_EPS: f64 = 1e-12;

/// Map from raw model scores to the values the loss consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    Sigmoid,
    Identity,
}

impl Link {
    /// Sigmoid for probability losses, identity otherwise.
    pub fn for_reduction(r: &Reduction) -> Self {
        if r.kind.takes_probabilities() {
            Link::Sigmoid
        } else {
            Link::Identity
        }
    }

    /// Applies the link in place and returns the derivative of each output
    /// with respect to its input.
    fn apply(self, z: &mut [f64]) -> Vec<f64> {
        match self {
            Link::Identity => vec![1.0; z.len()],
            Link::Sigmoid => z
                .iter_mut()
                .map(|v| {
                    let s = sigmoid(*v);
                    let clamped = s.clamp(PROBABILITY_EPS, 1.0 - PROBABILITY_EPS);
                    *v = clamped;
                    if clamped == s {
                        s * (1.0 - s)
                    } else {
                        0.0
                    }
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub loss: Reduction,
    #[serde(default)]
    pub l2: f64,
    pub epochs_phase1: usize,
    pub lr_phase1: f64,
    #[serde(default)]
    pub epochs_phase2: usize,
    #[serde(default = "default_lr2")]
    pub lr_phase2: f64,
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
    /// Defaults to [`Link::for_reduction`].
    #[serde(default)]
    pub link: Option<Link>,
    /// Leading epochs trained with the vanilla variant before switching to
    /// the configured one.
    #[serde(default)]
    pub pretrain_vanilla_epochs: usize,
    #[serde(default)]
    pub adam: AdamParams,
}

fn default_lr2() -> f64 {
    1e-5
}

impl TrainConfig {
    /// The schedule used for the linear-model experiments: 15 epochs at
    /// `1e-4`, 5 at `1e-5`, batches of 512.
    pub fn new(loss: Reduction) -> Self {
        Self {
            loss,
            l2: 0.0,
            epochs_phase1: 15,
            lr_phase1: 1e-4,
            epochs_phase2: 5,
            lr_phase2: 1e-5,
            batch_size: 512,
            seed: 0,
            link: None,
            pretrain_vanilla_epochs: 0,
            adam: AdamParams::default(),
        }
    }

    pub fn link(&self) -> Link {
        self.link.unwrap_or_else(|| Link::for_reduction(&self.loss))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::param(format!("l2 must be non-negative, got {}", self.l2)));
        }
        for lr in [self.lr_phase1, self.lr_phase2] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::param(format!("learning rates must be positive, got {lr}")));
            }
        }
        if self.batch_size == 0 {
            return Err(Error::param("batch size must be at least 1"));
        }
        if !self.loss.kind.is_differentiable() {
            return Err(Error::UnsupportedGradient("zero-one loss"));
        }
        if self.loss.kind.takes_probabilities() && self.link() != Link::Sigmoid {
            return Err(Error::param("probability losses need the sigmoid link"));
        }
        Ok(())
    }
}

/// Loss of one example and its gradient with respect to the raw scores.
fn example_loss_grad(
    model: &LinearModel,
    ex: &Example,
    p: &Propensities,
    loss: &Reduction,
    link: Link,
) -> Result<(f64, Vec<f64>)> {
    let mut z = model.scores(&ex.features);
    if z.iter().any(|v| !v.is_finite()) {
        // overflowing parameters; reported as divergence by the caller
        return Ok((f64::NAN, vec![f64::NAN; z.len()]));
    }
    let dlink = link.apply(&mut z);
    let s = ScoreVector::new(z);
    let value = loss.loss(p, &ex.labels, &s)?;
    let mut grad = loss.gradient(p, &ex.labels, &s)?;
    for (g, d) in grad.iter_mut().zip(dlink) {
        *g *= d;
    }
    Ok((value, grad))
}

/// Mean loss over `batch` plus `l2 * ||W||^2`, and its gradient with respect
/// to the flat model parameters. Per-example work runs in parallel; the
/// reduction is sequential in batch order, so results are reproducible.
pub fn batch_objective_gradient(
    model: &LinearModel,
    batch: &[&Example],
    p: &Propensities,
    loss: &Reduction,
    link: Link,
    l2: f64,
) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::param("empty batch"));
    }
    let per_example: Vec<(f64, Vec<f64>)> = batch
        .par_iter()
        .map(|ex| example_loss_grad(model, ex, p, loss, link))
        .collect::<Result<_>>()?;
    let (nf, nl) = (model.num_features(), model.num_labels());
    let inv_n = 1.0 / batch.len() as f64;
    let mut grad = vec![0.0; (nf + 1) * nl];
    let mut total = CompensatedSum::new();
    for (ex, (value, dz)) in batch.iter().zip(&per_example) {
        total.add(*value);
        for &(f, x) in &ex.features {
            let row = &mut grad[f * nl..(f + 1) * nl];
            for (g, d) in row.iter_mut().zip(dz) {
                *g += inv_n * x * d;
            }
        }
        for (g, d) in grad[nf * nl..].iter_mut().zip(dz) {
            *g += inv_n * d;
        }
    }
    for (g, w) in grad[..nf * nl].iter_mut().zip(model.weights()) {
        *g += 2.0 * l2 * w;
    }
    Ok((total.value() * inv_n + l2 * model.weight_norm_sq(), grad))
}

/// Objective of [`batch_objective_gradient`] without the gradient.
pub fn batch_objective(
    model: &LinearModel,
    batch: &[&Example],
    p: &Propensities,
    loss: &Reduction,
    link: Link,
    l2: f64,
) -> Result<f64> {
    Ok(batch_objective_gradient(model, batch, p, loss, link, l2)?.0)
}

/// Per-epoch record of a training run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    /// Mean batch objective of every epoch.
    pub epoch_objective: Vec<f64>,
    pub steps: u64,
}

/// Trains a model with the two-phase learning-rate schedule.
pub fn train(data: &SparseDataset, p: &Propensities, cfg: &TrainConfig) -> Result<LinearModel> {
    Ok(train_with_trace(data, p, cfg)?.0)
}

pub fn train_with_trace(
    data: &SparseDataset,
    p: &Propensities,
    cfg: &TrainConfig,
) -> Result<(LinearModel, TrainTrace)> {
    cfg.validate()?;
    p.check_len(data.num_labels())?;
    if data.num_examples() == 0 {
        return Err(Error::Validation("training set is empty".into()));
    }
    let link = cfg.link();
    let mut model = LinearModel::init_uniform(data.num_features(), data.num_labels(), cfg.seed);
    let mut adam = Adam::new(model.params().len(), cfg.adam);
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    shuffle_rng.set_stream(1);
    let mut order: Vec<usize> = (0..data.num_examples()).collect();
    let mut trace = TrainTrace::default();
    let examples = data.examples();

    let epochs = cfg.epochs_phase1 + cfg.epochs_phase2;
    for epoch in 0..epochs {
        let lr = if epoch < cfg.epochs_phase1 { cfg.lr_phase1 } else { cfg.lr_phase2 };
        let loss = if epoch < cfg.pretrain_vanilla_epochs { cfg.loss.with_variant(Variant::Vanilla) } else { cfg.loss };
        order.shuffle(&mut shuffle_rng);
        let mut epoch_total = CompensatedSum::new();
        let mut batches = 0;
        for (b, rows) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&Example> = rows.iter().map(|&r| &examples[r]).collect();
            let (objective, grad) = batch_objective_gradient(&model, &batch, p, &loss, link, cfg.l2)?;
            if !objective.is_finite() || objective.abs() > DIVERGENCE_THRESHOLD || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Divergence { variant: loss.to_string(), epoch, batch: b, value: objective });
            }
            adam.step(model.params_mut(), &grad, lr);
            epoch_total.add(objective);
            batches += 1;
        }
        trace.epoch_objective.push(epoch_total.value() / batches as f64);
    }
    trace.steps = adam.steps();
    Ok((model, trace))
}

/// Mean per-example loss (no regularization) of `model` on `data`.
pub fn dataset_loss(model: &LinearModel, data: &SparseDataset, p: &Propensities, loss: &Reduction, link: Link) -> Result<f64> {
    if data.num_examples() == 0 {
        return Err(Error::Validation("dataset is empty".into()));
    }
    let values: Vec<f64> = data
        .examples()
        .par_iter()
        .map(|ex| {
            let mut z = model.scores(&ex.features);
            link.apply(&mut z);
            loss.loss(p, &ex.labels, &ScoreVector::new(z))
        })
        .collect::<Result<_>>()?;
    Ok(values.into_iter().collect::<CompensatedSum>().value() / data.num_examples() as f64)
}

/// Raw scores of every example.
pub fn predict(model: &LinearModel, data: &SparseDataset) -> Vec<ScoreVector> {
    data.examples().par_iter().map(|ex| ScoreVector::new(model.scores(&ex.features))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::binary::BinaryLoss;
    use crate::labels::SparseLabels;
    use crate::multilabel::{MulticlassLoss, ReductionKind};
    use crate::oracle::finite_diff_gradient;

    type Row<'a> = (&'a [(usize, f64)], &'a [usize]);

    fn tiny() -> SparseDataset {
        let rows: [Row; 8] = [
            (&[(0, 1.0), (1, 0.5)], &[0]),
            (&[(0, -0.3), (1, 1.0)], &[1]),
            (&[(0, 0.8)], &[0, 1]),
            (&[(1, -1.0)], &[]),
            (&[(0, 0.2), (1, 0.2)], &[1]),
            (&[(0, -1.0), (1, -0.4)], &[]),
            (&[(0, 0.5), (1, -0.5)], &[0]),
            (&[(1, 0.7)], &[1]),
        ];
        let examples = rows
            .iter()
            .map(|(f, l)| Example { features: f.to_vec(), labels: SparseLabels::new(l.to_vec(), 2).unwrap() })
            .collect();
        SparseDataset::new(2, 2, examples).unwrap()
    }

    fn full_batch_cfg(loss: Reduction) -> TrainConfig {
        TrainConfig {
            epochs_phase1: 1,
            epochs_phase2: 0,
            lr_phase1: 0.01,
            batch_size: 8,
            ..TrainConfig::new(loss)
        }
    }

    #[test]
    fn one_step_matches_hand_reference() {
        let ds = tiny();
        let p = Propensities::new(vec![0.6, 0.8]).unwrap();
        let loss = Reduction::new(ReductionKind::Ova(BinaryLoss::SquaredError), Variant::Unbiased);
        let cfg = full_batch_cfg(loss);
        let model = train(&ds, &p, &cfg).unwrap();

        // independent re-derivation: scores, PS squared error gradient, one Adam step
        let init = LinearModel::init_uniform(2, 2, cfg.seed);
        let mut grad = [0.0f64; 6];
        for ex in ds.examples() {
            let z = init.scores(&ex.features);
            for j in 0..2 {
                let y = ex.labels.contains(j);
                let pj = p.get(j);
                let g = if y { (2.0 * (z[j] - 1.0) + (pj - 1.0) * 2.0 * z[j]) / pj } else { 2.0 * z[j] };
                for &(f, x) in &ex.features {
                    grad[f * 2 + j] += x * g / 8.0;
                }
                grad[4 + j] += g / 8.0;
            }
        }
        for (k, g) in grad.iter().enumerate() {
            let m_hat = 0.1 * g / 0.1;
            let v_hat = 0.001 * g * g / 0.001;
            let expected = init.params()[k] - 0.01 * m_hat / (v_hat.sqrt() + 1e-8);
            assert!((model.params()[k] - expected).abs() < 1e-10);
        }
    }

    #[test]
    fn clean_unbiased_matches_vanilla_trajectory() {
        let ds = tiny();
        let p = Propensities::uniform(2, 1.0).unwrap();
        let base = ReductionKind::Ova(BinaryLoss::BinaryCrossEntropy);
        let mut cfg = full_batch_cfg(Reduction::new(base, Variant::Vanilla));
        cfg.epochs_phase1 = 5;
        cfg.batch_size = 3;
        let (mv, tv) = train_with_trace(&ds, &p, &cfg).unwrap();
        cfg.loss = cfg.loss.with_variant(Variant::Unbiased);
        let (mu, tu) = train_with_trace(&ds, &p, &cfg).unwrap();
        assert_eq!(mv, mu);
        assert_eq!(tv, tu);
    }

    #[test]
    fn strong_regularization_shrinks_weights() {
        let ds = tiny();
        let p = Propensities::uniform(2, 1.0).unwrap();
        let mut cfg = full_batch_cfg(Reduction::new(ReductionKind::Ova(BinaryLoss::SquaredError), Variant::Vanilla));
        cfg.epochs_phase1 = 400;
        cfg.lr_phase1 = 0.01;
        cfg.l2 = 1e6;
        let m = train(&ds, &p, &cfg).unwrap();
        assert!(m.weights().iter().all(|w| w.abs() < 1e-3), "{:?}", m.weights());
    }

    #[test]
    fn objective_decreases_on_convex_problem() {
        let ds = tiny();
        let p = Propensities::uniform(2, 1.0).unwrap();
        let mut cfg = full_batch_cfg(Reduction::new(ReductionKind::Ova(BinaryLoss::SquaredError), Variant::Vanilla));
        cfg.epochs_phase1 = 50;
        cfg.lr_phase1 = 1e-3;
        let (_, trace) = train_with_trace(&ds, &p, &cfg).unwrap();
        assert!(trace.epoch_objective.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn batch_gradient_matches_finite_differences() {
        let ds = tiny();
        let p = Propensities::new(vec![0.4, 0.7]).unwrap();
        let batch: Vec<&Example> = ds.examples().iter().collect();
        let losses = [
            Reduction::new(ReductionKind::Ova(BinaryLoss::BinaryCrossEntropy), Variant::Unbiased),
            Reduction::new(ReductionKind::OvaN(BinaryLoss::SquaredHinge), Variant::UpperBound),
            Reduction::new(ReductionKind::PalN(MulticlassLoss::SoftmaxCrossEntropy), Variant::Unbiased),
        ];
        for loss in losses {
            let link = Link::for_reduction(&loss);
            let model = LinearModel::init_uniform(2, 2, 5);
            let (_, grad) = batch_objective_gradient(&model, &batch, &p, &loss, link, 0.1).unwrap();
            let fd = finite_diff_gradient(
                |theta| {
                    let mut m = model.clone();
                    m.params_mut().copy_from_slice(theta);
                    batch_objective(&m, &batch, &p, &loss, link, 0.1)
                },
                model.params(),
                1e-6,
            )
            .unwrap();
            for (a, b) in grad.iter().zip(&fd) {
                assert!((a - b).abs() <= 1e-5 * a.abs().max(b.abs()).max(1.0), "{loss}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn divergence_is_reported() {
        let ds = tiny();
        let p = Propensities::uniform(2, 0.05).unwrap();
        let mut cfg = full_batch_cfg(Reduction::new(ReductionKind::Ova(BinaryLoss::BinaryCrossEntropy), Variant::Unbiased));
        cfg.epochs_phase1 = 20;
        cfg.lr_phase1 = 1e308;
        let err = train(&ds, &p, &cfg).unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }), "{err}");
    }

    #[test]
    fn rejects_bad_configs() {
        let ds = tiny();
        let p = Propensities::uniform(2, 1.0).unwrap();
        let mut cfg = full_batch_cfg(Reduction::new(ReductionKind::Ova(BinaryLoss::ZeroOne), Variant::Vanilla));
        assert!(train(&ds, &p, &cfg).is_err());
        cfg.loss = Reduction::new(ReductionKind::Ova(BinaryLoss::SquaredError), Variant::Vanilla);
        cfg.batch_size = 0;
        assert!(train(&ds, &p, &cfg).is_err());
    }
}
