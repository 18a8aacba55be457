//! Synthetic data: independent-label recall experiments and a linear
//! feature/label generator for the training experiments.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Example, SparseDataset};
use crate::error::{Error, Result};
use crate::eval::{subsampled_ps_recall, SubsampleConfig};
use crate::labels::{apply_mask, Propensities, SparseLabels};
use crate::multilabel::{recall, upper_bound_recall, UpperBoundForm};
use crate::numeric::{compensated_sum, mean_std};

/// Every label is present independently with probability `label_prob`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub num_labels: usize,
    pub label_prob: f64,
    pub num_examples: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self { num_labels: 100, label_prob: 0.1, num_examples: 10_000, seed: 0 }
    }
}

impl SyntheticSpec {
    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.label_prob) {
            return Err(Error::param(format!("label probability must be in [0, 1], got {}", self.label_prob)));
        }
        if self.num_labels == 0 || self.num_examples == 0 {
            return Err(Error::param("need at least one label and one example"));
        }
        Ok(())
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draws the ground-truth label sets.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Vec<SparseLabels>> {
    spec.validate()?;
    let mut rng = stream_rng(spec.seed, 0);
    Ok((0..spec.num_examples)
        .map(|_| {
            let idx = (0..spec.num_labels).filter(|_| rng.gen::<f64>() < spec.label_prob).collect();
            SparseLabels::from_sorted(idx, spec.num_labels)
        })
        .collect())
}

/// A prediction containing one uniformly chosen true label (empty for an
/// empty truth).
pub fn oracle_prediction<R: Rng + ?Sized>(truth: &SparseLabels, rng: &mut R) -> SparseLabels {
    let idx = if truth.is_empty() { vec![] } else { vec![truth.indices()[rng.gen_range(0..truth.len())]] };
    SparseLabels::from_sorted(idx, truth.num_labels())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Vanilla,
    Unbiased,
    UpperBound,
}

impl Estimator {
    pub const ALL: [Estimator; 3] = [Estimator::Vanilla, Estimator::Unbiased, Estimator::UpperBound];

    pub fn name(self) -> &'static str {
        match self {
            Estimator::Vanilla => "vanilla",
            Estimator::Unbiased => "unbiased",
            Estimator::UpperBound => "upper_bound",
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RecallSweepOptions {
    /// Leave examples without observed labels out of the averages instead of
    /// counting them as recall 0.
    pub skip_empty: bool,
    pub upper_bound_form: UpperBoundForm,
    pub subsample: SubsampleConfig,
}


/// Mean and standard deviation over repetitions of one estimator at one
/// propensity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecallRow {
    pub p: f64,
    pub estimator: Estimator,
    pub mean: f64,
    pub std: f64,
    pub true_recall: f64,
}

/// Dataset-average recall of each estimator on one masking of the truth.
fn one_repetition(
    truth: &[SparseLabels],
    predictions: &[SparseLabels],
    p: &Propensities,
    opts: &RecallSweepOptions,
    rng: &mut ChaCha8Rng,
) -> Result<[f64; 3]> {
    let mut sums = [Vec::with_capacity(truth.len()), Vec::with_capacity(truth.len()), Vec::with_capacity(truth.len())];
    for (y_star, pred) in truth.iter().zip(predictions) {
        let y = apply_mask(y_star, p, rng)?;
        if opts.skip_empty && y.is_empty() {
            continue;
        }
        sums[0].push(recall(&y, pred));
        sums[1].push(subsampled_ps_recall(p, &y, pred, &opts.subsample, rng)?);
        sums[2].push(upper_bound_recall(p, &y, pred, opts.upper_bound_form)?);
    }
    let n = sums[0].len();
    if n == 0 {
        return Ok([0.0; 3]);
    }
    Ok(sums.map(|v| compensated_sum(v) / n as f64))
}

/// Masks the synthetic truth `repetitions` times per propensity and reports
/// the spread of the dataset-average recall for each estimator. Predictions
/// are drawn once from the clean truth. Each repetition owns a random
/// stream, so the output does not depend on the thread count.
pub fn recall_variance_sweep(
    spec: &SyntheticSpec,
    p_grid: &[f64],
    repetitions: usize,
    opts: &RecallSweepOptions,
) -> Result<Vec<RecallRow>> {
    if repetitions == 0 {
        return Err(Error::param("need at least one repetition"));
    }
    if p_grid.is_empty() {
        return Err(Error::param("propensity grid is empty"));
    }
    let props = p_grid
        .iter()
        .map(|&p| Propensities::uniform(spec.num_labels, p))
        .collect::<Result<Vec<_>>>()?;
    let truth = generate_synthetic(spec)?;
    let mut pred_rng = stream_rng(spec.seed, 1);
    let predictions: Vec<SparseLabels> = truth.iter().map(|t| oracle_prediction(t, &mut pred_rng)).collect();
    let clean: Vec<f64> = truth
        .iter()
        .zip(&predictions)
        .filter(|(t, _)| !(opts.skip_empty && t.is_empty()))
        .map(|(t, pr)| recall(t, pr))
        .collect();
    let true_recall = if clean.is_empty() { 0.0 } else { compensated_sum(clean.iter().copied()) / clean.len() as f64 };

    let jobs: Vec<(usize, usize)> = (0..p_grid.len()).flat_map(|i| (0..repetitions).map(move |r| (i, r))).collect();
    let results: Vec<[f64; 3]> = jobs
        .par_iter()
        .map(|&(i, r)| {
            let mut rng = stream_rng(spec.seed, 2 + (i * repetitions + r) as u64);
            one_repetition(&truth, &predictions, &props[i], opts, &mut rng)
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::with_capacity(p_grid.len() * 3);
    for (i, &p) in p_grid.iter().enumerate() {
        let reps = &results[i * repetitions..(i + 1) * repetitions];
        for (e, estimator) in Estimator::ALL.into_iter().enumerate() {
            let values: Vec<f64> = reps.iter().map(|r| r[e]).collect();
            let (mean, std) = mean_std(&values);
            rows.push(RecallRow { p, estimator, mean, std, true_recall });
        }
    }
    Ok(rows)
}

/// Linear ground truth: label `j` is relevant when
/// `w_j . x / sqrt(F) + b_j + noise > 0`, with standard normal features and
/// weights. Offsets `b_j` fall linearly from `first_offset` to
/// `last_offset`, so label frequency decreases with the label index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearDataSpec {
    pub num_examples: usize,
    pub num_features: usize,
    pub num_labels: usize,
    pub noise_std: f64,
    pub first_offset: f64,
    pub last_offset: f64,
    pub seed: u64,
}

impl Default for LinearDataSpec {
    fn default() -> Self {
        Self {
            num_examples: 2000,
            num_features: 50,
            num_labels: 20,
            noise_std: 0.5,
            first_offset: -0.5,
            last_offset: -2.0,
            seed: 0,
        }
    }
}

/// Datasets of the given sizes drawn from one shared ground-truth model.
pub fn generate_linear_datasets(spec: &LinearDataSpec, sizes: &[usize]) -> Result<Vec<SparseDataset>> {
    let (nf, nl) = (spec.num_features, spec.num_labels);
    if nf == 0 || nl == 0 {
        return Err(Error::param("need at least one feature and one label"));
    }
    if !(spec.noise_std >= 0.0 && spec.noise_std.is_finite()) {
        return Err(Error::param(format!("noise std must be non-negative, got {}", spec.noise_std)));
    }
    let mut model_rng = stream_rng(spec.seed, 0);
    let w: Vec<f64> = (0..nf * nl).map(|_| model_rng.sample(StandardNormal)).collect();
    let offsets: Vec<f64> = (0..nl)
        .map(|j| {
            let t = if nl > 1 { j as f64 / (nl - 1) as f64 } else { 0.0 };
            spec.first_offset + t * (spec.last_offset - spec.first_offset)
        })
        .collect();
    let scale = 1.0 / (nf as f64).sqrt();
    sizes
        .iter()
        .enumerate()
        .map(|(part, &n)| {
            let mut rng = stream_rng(spec.seed, 1 + part as u64);
            let examples = (0..n)
                .map(|_| {
                    let x: Vec<f64> = (0..nf).map(|_| rng.sample(StandardNormal)).collect();
                    let labels = (0..nl)
                        .filter(|&j| {
                            let z: f64 = (0..nf).map(|f| x[f] * w[f * nl + j]).sum::<f64>() * scale + offsets[j];
                            let eps: f64 = rng.sample(StandardNormal);
                            z + spec.noise_std * eps > 0.0
                        })
                        .collect();
                    Example { features: x.into_iter().enumerate().collect(), labels: SparseLabels::from_sorted(labels, nl) }
                })
                .collect();
            SparseDataset::new(nf, nl, examples)
        })
        .collect()
}

pub fn generate_linear_dataset(spec: &LinearDataSpec) -> Result<SparseDataset> {
    Ok(generate_linear_datasets(spec, &[spec.num_examples])?.remove(0))
}
