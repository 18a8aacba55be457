//! The one-vs-all and pick-all-labels reductions, plain and normalized, in
//! vanilla, unbiased and upper-bound form.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::general::DEFAULT_LABEL_CAP;
use super::normalized::{unbiased_weights_with_cap, upper_bound_weights, vanilla_weights, NormalizedWeights, UpperBoundForm};
use crate::binary::{BinaryLoss, BinaryVariant, Variant};
use crate::error::{Error, Result};
use crate::labels::{Propensities, ScoreVector, SparseLabels};
use crate::numeric::{log_sum_exp, CompensatedSum};

/// Per-label multiclass loss `g(i, s)` used by the pick-all-labels reductions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MulticlassLoss {
    /// `g(i, s) = -s_i + log sum_j exp(s_j)`.
    #[serde(alias = "cce")]
    SoftmaxCrossEntropy,
    /// `g(i, s) = s_i`; with 0/1 scores the normalized reduction is recall.
    Score,
}

impl MulticlassLoss {
    pub fn name(self) -> &'static str {
        match self {
            MulticlassLoss::SoftmaxCrossEntropy => "cce",
            MulticlassLoss::Score => "score",
        }
    }

    pub fn value(self, label: usize, scores: &[f64]) -> f64 {
        match self {
            MulticlassLoss::SoftmaxCrossEntropy => log_sum_exp(scores) - scores[label],
            MulticlassLoss::Score => scores[label],
        }
    }

    /// Adds `weight * d g(label, s) / ds` to `grad`.
    fn add_gradient(self, label: usize, weight: f64, softmax: Option<&[f64]>, grad: &mut [f64]) {
        match self {
            MulticlassLoss::SoftmaxCrossEntropy => {
                let softmax = softmax.expect("softmax precomputed");
                for (g, s) in grad.iter_mut().zip(softmax) {
                    *g += weight * s;
                }
                grad[label] -= weight;
            }
            MulticlassLoss::Score => grad[label] += weight,
        }
    }
}

fn softmax(scores: &[f64]) -> Vec<f64> {
    let lse = log_sum_exp(scores);
    scores.iter().map(|s| (s - lse).exp()).collect()
}

/// Which reduction turns the multilabel problem into binary or multiclass
/// terms, together with its base loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "reduction", content = "base")]
pub enum ReductionKind {
    /// One-vs-all: `sum_i g(y_i, s_i)`.
    Ova(BinaryLoss),
    /// Pick-all-labels: `sum_i y_i g(i, s)`.
    Pal(MulticlassLoss),
    /// Normalized one-vs-all: `sum_i w*_i g(1, s_i) + (1 - w*_i) g(0, s_i)`.
    OvaN(BinaryLoss),
    /// Normalized pick-all-labels: `sum_i w*_i g(i, s)`.
    PalN(MulticlassLoss),
}

impl ReductionKind {
    pub fn name(&self) -> String {
        match self {
            ReductionKind::Ova(b) => format!("ova-{}", b.name()),
            ReductionKind::Pal(m) => format!("pal-{}", m.name()),
            ReductionKind::OvaN(b) => format!("ova_n-{}", b.name()),
            ReductionKind::PalN(m) => format!("pal_n-{}", m.name()),
        }
    }

    pub fn is_differentiable(&self) -> bool {
        match self {
            ReductionKind::Ova(b) | ReductionKind::OvaN(b) => b.is_differentiable(),
            ReductionKind::Pal(_) | ReductionKind::PalN(_) => true,
        }
    }

    pub fn is_normalized(&self) -> bool {
        matches!(self, ReductionKind::OvaN(_) | ReductionKind::PalN(_))
    }

    /// Whether the base loss expects probabilities rather than raw scores.
    pub fn takes_probabilities(&self) -> bool {
        match self {
            ReductionKind::Ova(b) | ReductionKind::OvaN(b) => b.takes_probabilities(),
            _ => false,
        }
    }
}

/// A multilabel loss: reduction, base loss and missing-label variant.
///
/// For the normalized one-vs-all reduction the upper-bound variant uses the
/// `u` weights, which are not a true upper bound for that reduction; it is
/// provided so the experiments can compare against it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Reduction {
    pub kind: ReductionKind,
    pub variant: Variant,
    #[serde(default)]
    pub upper_bound_form: UpperBoundForm,
    #[serde(default = "default_cap")]
    pub cap: usize,
}

fn default_cap() -> usize {
    DEFAULT_LABEL_CAP
}

impl fmt::Display for Reduction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.kind.name(), self.variant.name())
    }
}

impl Reduction {
    pub fn new(kind: ReductionKind, variant: Variant) -> Self {
        Self { kind, variant, upper_bound_form: UpperBoundForm::default(), cap: DEFAULT_LABEL_CAP }
    }

    pub fn with_variant(self, variant: Variant) -> Self {
        Self { variant, ..self }
    }

    fn check(&self, p: &Propensities, y: &SparseLabels, scores: &[f64]) -> Result<()> {
        p.check_len(y.num_labels())?;
        if scores.len() != y.num_labels() {
            return Err(Error::Dimension { expected: y.num_labels(), got: scores.len() });
        }
        match self.kind {
            ReductionKind::Ova(b) | ReductionKind::OvaN(b) => scores.iter().try_for_each(|&s| b.check_domain(s)),
            _ => scores.iter().try_for_each(|&s| {
                if s.is_finite() {
                    Ok(())
                } else {
                    Err(Error::Domain { loss: "multiclass", score: s })
                }
            }),
        }
    }

    /// Weights multiplying the per-label terms for the (plain or normalized)
    /// pick-all-labels form and the normalized one-vs-all form.
    pub fn label_weights(&self, p: &Propensities, y: &SparseLabels) -> Result<NormalizedWeights> {
        p.check_len(y.num_labels())?;
        match (self.kind, self.variant) {
            (ReductionKind::Ova(_), _) => Err(Error::param("one-vs-all has no label weights")),
            (ReductionKind::Pal(_), Variant::Vanilla) => Ok(NormalizedWeights::from_parts(
                y.indices().to_vec(),
                vec![1.0; y.len()],
            )),
            (ReductionKind::Pal(_), _) => Ok(NormalizedWeights::from_parts(
                y.indices().to_vec(),
                y.iter().map(|i| 1.0 / p.get(i)).collect(),
            )),
            (_, Variant::Vanilla) => Ok(vanilla_weights(y)),
            (_, Variant::Unbiased) => unbiased_weights_with_cap(p, y, self.cap),
            (_, Variant::UpperBound) => upper_bound_weights(p, y, self.upper_bound_form),
        }
    }

    pub fn loss(&self, p: &Propensities, y: &SparseLabels, scores: &ScoreVector) -> Result<f64> {
        let s = scores.as_slice();
        self.check(p, y, s)?;
        match self.kind {
            ReductionKind::Ova(base) => {
                let mut acc = CompensatedSum::new();
                for (i, &si) in s.iter().enumerate() {
                    let bv = BinaryVariant::new(self.variant, p.get(i))?;
                    acc.add(bv.loss(base, y.contains(i), si)?);
                }
                Ok(acc.value())
            }
            ReductionKind::OvaN(base) => {
                let w = self.label_weights(p, y)?;
                let mut acc = CompensatedSum::new();
                for &si in s {
                    acc.add(base.negative(si)?);
                }
                for (i, wi) in w.iter() {
                    acc.add(wi * (base.positive(s[i])? - base.negative(s[i])?));
                }
                Ok(acc.value())
            }
            ReductionKind::Pal(g) | ReductionKind::PalN(g) => {
                let w = self.label_weights(p, y)?;
                Ok(w.iter().map(|(i, wi)| wi * g.value(i, s)).collect::<CompensatedSum>().value())
            }
        }
    }

    /// Gradient of [`Reduction::loss`] with respect to the scores.
    pub fn gradient(&self, p: &Propensities, y: &SparseLabels, scores: &ScoreVector) -> Result<Vec<f64>> {
        let s = scores.as_slice();
        self.check(p, y, s)?;
        let mut grad = vec![0.0; s.len()];
        match self.kind {
            ReductionKind::Ova(base) => {
                for (i, &si) in s.iter().enumerate() {
                    let bv = BinaryVariant::new(self.variant, p.get(i))?;
                    grad[i] = bv.gradient(base, y.contains(i), si)?;
                }
            }
            ReductionKind::OvaN(base) => {
                let w = self.label_weights(p, y)?;
                for (g, &si) in grad.iter_mut().zip(s) {
                    *g = base.negative_grad(si)?;
                }
                for (i, wi) in w.iter() {
                    grad[i] += wi * (base.positive_grad(s[i])? - base.negative_grad(s[i])?);
                }
            }
            ReductionKind::Pal(g) | ReductionKind::PalN(g) => {
                let w = self.label_weights(p, y)?;
                let sm = matches!(g, MulticlassLoss::SoftmaxCrossEntropy).then(|| softmax(s));
                for (i, wi) in w.iter() {
                    g.add_gradient(i, wi, sm.as_deref(), &mut grad);
                }
            }
        }
        Ok(grad)
    }
}

/// Convenience wrapper for [`Reduction::loss`].
pub fn reduction_loss(r: &Reduction, p: &Propensities, y: &SparseLabels, scores: &ScoreVector) -> Result<f64> {
    r.loss(p, y, scores)
}

impl FromStr for MulticlassLoss {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cce" | "softmax_cross_entropy" => Ok(MulticlassLoss::SoftmaxCrossEntropy),
            "score" => Ok(MulticlassLoss::Score),
            _ => Err(Error::param(format!("unknown multiclass loss '{s}' (cce, score)"))),
        }
    }
}

/// Parses names such as `ova-bce`, `ova_n-se` or `pal-cce`.
impl FromStr for ReductionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, base) = s
            .split_once('-')
            .ok_or_else(|| Error::param(format!("expected '<reduction>-<base>', got '{s}'")))?;
        match kind {
            "ova" => Ok(ReductionKind::Ova(base.parse()?)),
            "ova_n" => Ok(ReductionKind::OvaN(base.parse()?)),
            "pal" => Ok(ReductionKind::Pal(base.parse()?)),
            "pal_n" => Ok(ReductionKind::PalN(base.parse()?)),
            _ => Err(Error::param(format!("unknown reduction '{kind}' (ova, ova_n, pal, pal_n)"))),
        }
    }
}

/// Parses `<kind>/<variant>` as printed by `Display`; a bare kind means the
/// unbiased variant.
impl FromStr for Reduction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, variant) = match s.split_once('/') {
            Some((k, v)) => (k, v.parse()?),
            None => (s, Variant::Unbiased),
        };
        Ok(Reduction::new(kind.parse()?, variant))
    }
}
