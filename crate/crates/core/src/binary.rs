//! Binary base losses, the propensity-scoring operator, the convex upper
//! bound and their analytic gradients.
//!
//! Every binary loss is handled through its decomposition
//! `f*(y, s) = y f+(s) + (1 - y) f-(s)`. The propensity-scored loss for
//! propensity `p` is
//!
//! ```text
//! f(y, s) = y (f+(s) + (p - 1) f-(s)) / p + (1 - y) f-(s)
//! ```
//!
//! whose expectation over the mask equals `f*(y*, s)`. The upper-bound
//! variant replaces the positive branch by `(2/p - 1) f+(s)`, which is
//! convex whenever `f+` is, at the price of bias. The constant dropped when
//! bounding the propensity-scored 0-1 loss is not added back, so upper-bound
//! values are only comparable with each other.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Base binary losses. `SquaredError`, `SquaredHinge` and `ZeroOne` act on
/// raw real scores (margins); `BinaryCrossEntropy` acts on probabilities in
/// the open unit interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BinaryLoss {
    SquaredError,
    #[serde(alias = "bce")]
    BinaryCrossEntropy,
    #[serde(alias = "sqh")]
    SquaredHinge,
    ZeroOne,
}

impl BinaryLoss {
    pub const ALL: [BinaryLoss; 4] = [
        BinaryLoss::SquaredError,
        BinaryLoss::BinaryCrossEntropy,
        BinaryLoss::SquaredHinge,
        BinaryLoss::ZeroOne,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BinaryLoss::SquaredError => "squared_error",
            BinaryLoss::BinaryCrossEntropy => "bce",
            BinaryLoss::SquaredHinge => "squared_hinge",
            BinaryLoss::ZeroOne => "zero_one",
        }
    }

    pub fn is_differentiable(self) -> bool {
        !matches!(self, BinaryLoss::ZeroOne)
    }

    /// Whether scores are probabilities (as opposed to unconstrained margins).
    pub fn takes_probabilities(self) -> bool {
        matches!(self, BinaryLoss::BinaryCrossEntropy)
    }

    pub fn check_domain(self, score: f64) -> Result<()> {
        let ok = match self {
            BinaryLoss::BinaryCrossEntropy => score > 0.0 && score < 1.0,
            _ => score.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Domain { loss: self.name(), score })
        }
    }

    /// `f*(1, s)`.
    pub fn positive(self, s: f64) -> Result<f64> {
        self.check_domain(s)?;
        Ok(match self {
            BinaryLoss::SquaredError => (1.0 - s) * (1.0 - s),
            BinaryLoss::BinaryCrossEntropy => -s.ln(),
            BinaryLoss::SquaredHinge => {
                let m = (1.0 - s).max(0.0);
                m * m
            }
            BinaryLoss::ZeroOne => (s <= 0.0) as u8 as f64,
        })
    }

    /// `f*(0, s)`.
    pub fn negative(self, s: f64) -> Result<f64> {
        self.check_domain(s)?;
        Ok(match self {
            BinaryLoss::SquaredError => s * s,
            BinaryLoss::BinaryCrossEntropy => -(1.0 - s).ln(),
            BinaryLoss::SquaredHinge => {
                let m = (1.0 + s).max(0.0);
                m * m
            }
            BinaryLoss::ZeroOne => (s > 0.0) as u8 as f64,
        })
    }

    pub fn value(self, y: bool, s: f64) -> Result<f64> {
        if y {
            self.positive(s)
        } else {
            self.negative(s)
        }
    }

    /// `d/ds f*(1, s)`.
    pub fn positive_grad(self, s: f64) -> Result<f64> {
        self.check_domain(s)?;
        match self {
            BinaryLoss::SquaredError => Ok(-2.0 * (1.0 - s)),
            BinaryLoss::BinaryCrossEntropy => Ok(-1.0 / s),
            BinaryLoss::SquaredHinge => Ok(-2.0 * (1.0 - s).max(0.0)),
            BinaryLoss::ZeroOne => Err(Error::UnsupportedGradient("zero_one")),
        }
    }

    /// `d/ds f*(0, s)`.
    pub fn negative_grad(self, s: f64) -> Result<f64> {
        self.check_domain(s)?;
        match self {
            BinaryLoss::SquaredError => Ok(2.0 * s),
            BinaryLoss::BinaryCrossEntropy => Ok(1.0 / (1.0 - s)),
            BinaryLoss::SquaredHinge => Ok(2.0 * (1.0 + s).max(0.0)),
            BinaryLoss::ZeroOne => Err(Error::UnsupportedGradient("zero_one")),
        }
    }

    pub fn grad(self, y: bool, s: f64) -> Result<f64> {
        if y {
            self.positive_grad(s)
        } else {
            self.negative_grad(s)
        }
    }
}

/// How missing labels are accounted for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// The clean-data loss applied to observed labels as-is.
    Vanilla,
    /// The unique unbiased estimator.
    Unbiased,
    /// Convex upper bound (biased, lower variance).
    UpperBound,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Vanilla, Variant::Unbiased, Variant::UpperBound];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Vanilla => "vanilla",
            Variant::Unbiased => "unbiased",
            Variant::UpperBound => "upper_bound",
        }
    }
}

/// A binary variant together with the label's propensity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinaryVariant {
    variant: Variant,
    propensity: f64,
}

impl BinaryVariant {
    pub fn new(variant: Variant, propensity: f64) -> Result<Self> {
        check_propensity(propensity)?;
        Ok(Self { variant, propensity })
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn propensity(&self) -> f64 {
        self.propensity
    }

    pub fn loss(&self, base: BinaryLoss, y: bool, s: f64) -> Result<f64> {
        match self.variant {
            Variant::Vanilla => base.value(y, s),
            Variant::Unbiased => ps_operator(base, self.propensity, y, s),
            Variant::UpperBound => binary_upper_bound(base, self.propensity, y, s),
        }
    }

    pub fn gradient(&self, base: BinaryLoss, y: bool, s: f64) -> Result<f64> {
        match self.variant {
            Variant::Vanilla => base.grad(y, s),
            Variant::Unbiased => ps_gradient(base, self.propensity, y, s),
            Variant::UpperBound => binary_upper_bound_gradient(base, self.propensity, y, s),
        }
    }
}

pub(crate) fn check_propensity(p: f64) -> Result<()> {
    if p > 0.0 && p <= 1.0 {
        Ok(())
    } else {
        Err(Error::param(format!("propensity {p} outside (0, 1]")))
    }
}

/// Propensity-scored (unbiased) version of `base` evaluated at `(y, s)`.
pub fn ps_operator(base: BinaryLoss, p: f64, y: bool, s: f64) -> Result<f64> {
    check_propensity(p)?;
    let neg = base.negative(s)?;
    if y {
        Ok((base.positive(s)? + (p - 1.0) * neg) / p)
    } else {
        Ok(neg)
    }
}

/// Derivative in `s` of [`ps_operator`].
pub fn ps_gradient(base: BinaryLoss, p: f64, y: bool, s: f64) -> Result<f64> {
    check_propensity(p)?;
    let neg = base.negative_grad(s)?;
    if y {
        Ok((base.positive_grad(s)? + (p - 1.0) * neg) / p)
    } else {
        Ok(neg)
    }
}

/// Convex upper bound `y (2/p - 1) f*(1, s) + (1 - y) f*(0, s)`.
pub fn binary_upper_bound(base: BinaryLoss, p: f64, y: bool, s: f64) -> Result<f64> {
    check_propensity(p)?;
    if y {
        Ok((2.0 / p - 1.0) * base.positive(s)?)
    } else {
        base.negative(s)
    }
}

/// Derivative in `s` of [`binary_upper_bound`].
pub fn binary_upper_bound_gradient(base: BinaryLoss, p: f64, y: bool, s: f64) -> Result<f64> {
    check_propensity(p)?;
    if y {
        Ok((2.0 / p - 1.0) * base.positive_grad(s)?)
    } else {
        base.negative_grad(s)
    }
}

/// Variance of the propensity-scored loss at a fixed score.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceEstimate {
    /// `Var[f(Y, s)] = q (1 - q) (f+ - f-)^2 / p^2` for `Y ~ Bernoulli(q)`.
    pub exact: f64,
    /// Small-propensity form `Var[f*(Y*, s)] / (p (1 - q*))` with `q* = q / p`,
    /// which makes the `1/p` growth explicit.
    pub approx: f64,
}

/// Variance of the propensity-scored binary loss when the observed label is
/// Bernoulli with mean `q` (so the clean label has mean `q / p`).
pub fn variance_ratio_estimate(base: BinaryLoss, p: f64, q: f64, s: f64) -> Result<VarianceEstimate> {
    check_propensity(p)?;
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::param(format!("observed marginal q={q} outside (0, 1)")));
    }
    if q > p {
        return Err(Error::param(format!("observed marginal q={q} exceeds the propensity {p}")));
    }
    let diff = base.positive(s)? - base.negative(s)?;
    let exact = q * (1.0 - q) * diff * diff / (p * p);
    // Var[f*] / (p (1 - q*)) = q* (f+ - f-)^2 / p = q (f+ - f-)^2 / p^2
    let approx = q * diff * diff / (p * p);
    Ok(VarianceEstimate { exact, approx })
}

impl FromStr for BinaryLoss {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "se" | "squared_error" => Ok(BinaryLoss::SquaredError),
            "bce" | "binary_cross_entropy" => Ok(BinaryLoss::BinaryCrossEntropy),
            "sqh" | "squared_hinge" => Ok(BinaryLoss::SquaredHinge),
            "zero_one" | "01" => Ok(BinaryLoss::ZeroOne),
            _ => Err(Error::param(format!("unknown binary loss '{s}' (se, bce, sqh, zero_one)"))),
        }
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vanilla" => Ok(Variant::Vanilla),
            "unbiased" => Ok(Variant::Unbiased),
            "upper_bound" | "upper-bound" | "ub" => Ok(Variant::UpperBound),
            _ => Err(Error::param(format!("unknown variant '{s}' (vanilla, unbiased, upper_bound)"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn fd(f: impl Fn(f64) -> f64, x: f64, h: f64) -> f64 {
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    #[test]
    fn squared_error_examples() {
        let v = ps_operator(BinaryLoss::SquaredError, 1.0, true, 0.3).unwrap();
        assert!((v - 0.49).abs() < 1e-15);
        // y = 1: (1/p)(1 - 2s) + s^2, minimised at s = 1/p.
        let p = 0.4;
        for &s in &[-1.0, 0.2, 1.7, 2.5, 3.0] {
            let v = ps_operator(BinaryLoss::SquaredError, p, true, s).unwrap();
            assert!((v - ((1.0 - 2.0 * s) / p + s * s)).abs() < 1e-12);
        }
        assert!(ps_gradient(BinaryLoss::SquaredError, p, true, 1.0 / p).unwrap().abs() < 1e-12);
    }

    #[test]
    fn bce_example() {
        // -(y/p) ln s - (1 - y/p) ln(1 - s) at p=0.5, s=0.5 is -ln 0.5.
        let v = ps_operator(BinaryLoss::BinaryCrossEntropy, 0.5, true, 0.5).unwrap();
        assert!((v - (-(0.5f64).ln())).abs() < 1e-15);
    }

    #[test]
    fn gradient_examples() {
        let g = ps_gradient(BinaryLoss::SquaredError, 0.5, true, 0.8).unwrap();
        assert!((g - (-2.4)).abs() < 1e-12);
        let fdg = fd(|s| ps_operator(BinaryLoss::SquaredError, 0.5, true, s).unwrap(), 0.8, 1e-6);
        assert!((fdg - (-2.4)).abs() < 1e-6);
        for &p in &[0.1, 0.5, 1.0] {
            let g = ps_gradient(BinaryLoss::BinaryCrossEntropy, p, false, 0.5).unwrap();
            assert!((g - 2.0).abs() < 1e-15);
        }
        assert!(matches!(
            ps_gradient(BinaryLoss::ZeroOne, 0.5, true, 0.1),
            Err(Error::UnsupportedGradient(_))
        ));
    }

    #[test]
    fn domain_and_parameter_errors() {
        assert!(matches!(
            ps_operator(BinaryLoss::BinaryCrossEntropy, 0.5, true, 1.0),
            Err(Error::Domain { .. })
        ));
        assert!(matches!(ps_operator(BinaryLoss::SquaredError, 0.0, true, 0.1), Err(Error::Parameter(_))));
        assert!(matches!(ps_operator(BinaryLoss::SquaredError, 1.5, true, 0.1), Err(Error::Parameter(_))));
        assert!(BinaryVariant::new(Variant::Unbiased, -0.1).is_err());
    }

    #[test]
    fn upper_bound_weights() {
        let b = BinaryLoss::SquaredHinge;
        assert_eq!(binary_upper_bound(b, 1.0, true, 0.2).unwrap(), b.positive(0.2).unwrap());
        assert!((binary_upper_bound(b, 0.5, true, 0.2).unwrap() - 3.0 * b.positive(0.2).unwrap()).abs() < 1e-15);
        for &p in &[0.1, 0.4, 1.0] {
            assert_eq!(binary_upper_bound(b, p, false, 0.3).unwrap(), b.negative(0.3).unwrap());
        }
    }

    #[test]
    fn upper_bound_dominates_scaled_zero_one() {
        for base in [BinaryLoss::SquaredHinge, BinaryLoss::SquaredError] {
            for &p in &[0.1, 0.3, 0.7, 1.0] {
                for i in 0..=400 {
                    let s = -4.0 + i as f64 * 0.02;
                    let ub = binary_upper_bound(base, p, true, s).unwrap();
                    let zero_one = (2.0 / p - 1.0) * BinaryLoss::ZeroOne.positive(s).unwrap();
                    assert!(ub >= zero_one, "{base:?} p={p} s={s}");
                }
            }
        }
    }

    #[test]
    fn upper_bound_is_convex_on_grid() {
        for base in [BinaryLoss::SquaredHinge, BinaryLoss::SquaredError] {
            for &y in &[true, false] {
                let f = |s: f64| binary_upper_bound(base, 0.25, y, s).unwrap();
                for i in 1..200 {
                    let s = -3.0 + i as f64 * 0.03;
                    assert!(f(s - 0.03) + f(s + 0.03) - 2.0 * f(s) >= -1e-12);
                }
            }
        }
    }

    #[test]
    fn variance_examples() {
        // f+ = 1, f- = 0 via the 0-1 loss at a non-positive margin.
        let v = variance_ratio_estimate(BinaryLoss::ZeroOne, 0.1, 0.05, -1.0).unwrap();
        assert!((v.exact - 4.75).abs() < 1e-12);
        assert!((v.approx - 5.0).abs() < 1e-12);
        // Constant loss difference zero -> both vanish (squared error at s = 0.5).
        let v = variance_ratio_estimate(BinaryLoss::SquaredError, 0.3, 0.1, 0.5).unwrap();
        assert_eq!(v.exact, 0.0);
        assert_eq!(v.approx, 0.0);
        assert!(variance_ratio_estimate(BinaryLoss::SquaredError, 0.3, 0.5, 0.5).is_err());
    }

    #[test]
    fn variance_at_full_propensity_matches_monte_carlo() {
        use rand::{Rng, SeedableRng};
        let (q, s, base) = (0.3, 0.2, BinaryLoss::SquaredError);
        let v = variance_ratio_estimate(base, 1.0, q, s).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let n = 200_000;
        let samples: Vec<f64> = (0..n).map(|_| base.value(rng.gen::<f64>() < q, s).unwrap()).collect();
        let (_, sd) = crate::numeric::mean_std(&samples);
        let var = sd * sd;
        // Var of the sample variance for a two-point law: (mu4 - var^2) / n.
        let d = base.positive(s).unwrap() - base.negative(s).unwrap();
        let mu4 = q * (1.0 - q) * (1.0 - 3.0 * q + 3.0 * q * q) * d.powi(4);
        let se = ((mu4 - v.exact * v.exact) / n as f64).sqrt();
        assert!((var - v.exact).abs() < 3.0 * se, "mc {var} exact {}", v.exact);
    }

    proptest! {
        #[test]
        fn two_point_expectation_is_unbiased(p in 0.05f64..=1.0, s in 0.01f64..0.99, truth in any::<bool>()) {
            for base in BinaryLoss::ALL {
                let expect = if truth {
                    p * ps_operator(base, p, true, s).unwrap() + (1.0 - p) * ps_operator(base, p, false, s).unwrap()
                } else {
                    ps_operator(base, p, false, s).unwrap()
                };
                let clean = base.value(truth, s).unwrap();
                prop_assert!((expect - clean).abs() <= 1e-12 * (1.0 + clean.abs()));
            }
        }

        #[test]
        fn gradient_matches_finite_difference(p in 0.05f64..=1.0, s in 0.05f64..0.95, y in any::<bool>()) {
            for base in [BinaryLoss::SquaredError, BinaryLoss::BinaryCrossEntropy, BinaryLoss::SquaredHinge] {
                let g = ps_gradient(base, p, y, s).unwrap();
                let f = fd(|x| ps_operator(base, p, y, x).unwrap(), s, 1e-6);
                prop_assert!((g - f).abs() <= 1e-5 * g.abs().max(1.0));
                let g = binary_upper_bound_gradient(base, p, y, s).unwrap();
                let f = fd(|x| binary_upper_bound(base, p, y, x).unwrap(), s, 1e-6);
                prop_assert!((g - f).abs() <= 1e-5 * g.abs().max(1.0));
            }
        }

        #[test]
        fn full_propensity_collapses_variants(s in 0.001f64..0.999, y in any::<bool>()) {
            for base in BinaryLoss::ALL {
                let v = base.value(y, s).unwrap();
                prop_assert_eq!(ps_operator(base, 1.0, y, s).unwrap(), v);
                prop_assert_eq!(binary_upper_bound(base, 1.0, y, s).unwrap(), v);
            }
        }
    }
}
