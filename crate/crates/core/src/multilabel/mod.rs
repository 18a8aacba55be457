//! Multilabel estimators: the general subset-sum estimator, the four
//! reductions, propensity-scored recall and pairwise losses.

mod general;
mod normalized;
mod pairwise;
mod reduction;

pub use general::{unbiased_general, unbiased_general_with_cap, MultilabelLoss, DEFAULT_LABEL_CAP};
pub use normalized::{
    unbiased_weights, unbiased_weights_with_cap, ps_recall, ps_recall_with_cap, recall, upper_bound_weights, upper_bound_recall,
    vanilla_weights, NormalizedWeights, UpperBoundForm,
};
pub use pairwise::{kendall_tau_unbiased, pairwise_unbiased, pairwise_vanilla, KendallTau, PairwiseTerms};
pub use reduction::{reduction_loss, MulticlassLoss, Reduction, ReductionKind};
