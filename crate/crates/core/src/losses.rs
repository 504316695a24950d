//! Binary losses, the LW partial loss, and the supervised losses it is
//! compared against.
//!
//! With candidate set `ȳ`, weights `w`, leverage `β` and partial-side scale
//! `α`, the LW loss is
//!
//! ```text
//! α · Σ_{z ∈ ȳ} w_z ψ(g_z)  +  β · Σ_{z ∉ ȳ} w_z ψ(−g_z)
//! ```
//!
//! In cross-entropy mode `ψ(g_z)` is replaced by `−log p_z` and `ψ(−g_z)` by
//! `−log(1 − p_z)`, where `p = softmax(g)`.

use crate::labelset::PartialLabelSet;
use crate::scalar::{check_finite, Scalar};
use crate::{Error, Result};

/// Probability floor applied inside logarithms.
pub const PROB_FLOOR: f64 = 1e-12;

/// A non-increasing binary loss `ψ : ℝ → [0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinaryLoss {
    /// `ψ(z) = 1 / (1 + e^z)`.
    Sigmoid,
    /// `ψ(z) = clamp((1 − z) / 2, 0, 1)`.
    Ramp,
    /// `1` for `z < 0`, `1/2` at `0`, `0` for `z > 0`. Not differentiable.
    ZeroOneStep,
}

impl BinaryLoss {
    pub const ALL: [BinaryLoss; 3] = [BinaryLoss::Sigmoid, BinaryLoss::Ramp, BinaryLoss::ZeroOneStep];

    #[inline]
    pub fn value<T: Scalar>(self, z: T) -> T {
        match self {
            BinaryLoss::Sigmoid => T::one() / (T::one() + z.exp()),
            BinaryLoss::Ramp => {
                let half = T::lit(0.5);
                (half - half * z).max(T::zero()).min(T::one())
            }
            BinaryLoss::ZeroOneStep => {
                if z < T::zero() {
                    T::one()
                } else if z > T::zero() {
                    T::zero()
                } else {
                    T::lit(0.5)
                }
            }
        }
    }

    /// `ψ'(z)`. Ramp returns 0 at its kinks `z = ±1`.
    #[inline]
    pub fn derivative<T: Scalar>(self, z: T) -> Result<T> {
        match self {
            BinaryLoss::Sigmoid => Ok(-(self.value(z) * self.value(-z))),
            BinaryLoss::Ramp => Ok(if z.abs() < T::one() {
                T::lit(-0.5)
            } else {
                T::zero()
            }),
            BinaryLoss::ZeroOneStep => Err(Error::UnsupportedLoss("zero-one step")),
        }
    }

    /// `ψ(z) + ψ(−z) = 1` for every `z`. True for all three losses.
    pub fn is_symmetric(self) -> bool {
        true
    }

    pub fn is_differentiable(self) -> bool {
        !matches!(self, BinaryLoss::ZeroOneStep)
    }

    pub fn name(self) -> &'static str {
        match self {
            BinaryLoss::Sigmoid => "sigmoid",
            BinaryLoss::Ramp => "ramp",
            BinaryLoss::ZeroOneStep => "zero_one",
        }
    }
}

/// The per-label loss plugged into the LW form.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Surrogate {
    Binary(BinaryLoss),
    /// Softmax cross entropy on each side; see the module docs.
    CrossEntropy,
}

impl Surrogate {
    pub fn name(self) -> &'static str {
        match self {
            Surrogate::Binary(b) => b.name(),
            Surrogate::CrossEntropy => "cross_entropy",
        }
    }

    pub fn is_differentiable(self) -> bool {
        match self {
            Surrogate::Binary(b) => b.is_differentiable(),
            Surrogate::CrossEntropy => true,
        }
    }
}

impl From<BinaryLoss> for Surrogate {
    fn from(b: BinaryLoss) -> Self {
        Surrogate::Binary(b)
    }
}

/// Selects one member of the LW loss family.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LwConfig<T> {
    /// Leverage on the non-candidate side.
    pub beta: T,
    /// Scale on the candidate side (1 for the plain LW loss).
    pub alpha: T,
    pub surrogate: Surrogate,
}

impl<T: Scalar> LwConfig<T> {
    pub fn new(beta: T, surrogate: impl Into<Surrogate>) -> Result<Self> {
        Self::with_alpha(T::one(), beta, surrogate)
    }

    pub fn with_alpha(alpha: T, beta: T, surrogate: impl Into<Surrogate>) -> Result<Self> {
        let cfg = Self {
            beta,
            alpha,
            surrogate: surrogate.into(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta.is_finite() && self.beta >= T::zero()) {
            return Err(Error::invalid(format!("beta must be finite and >= 0, got {}", self.beta)));
        }
        if !(self.alpha.is_finite() && self.alpha >= T::zero()) {
            return Err(Error::invalid(format!("alpha must be finite and >= 0, got {}", self.alpha)));
        }
        Ok(())
    }
}

/// Numerically stable `log Σ exp(x_i)`.
pub fn log_sum_exp<T: Scalar>(xs: &[T]) -> T {
    let m = xs.iter().copied().fold(T::neg_infinity(), T::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|&x| (x - m).exp()).sum::<T>().ln()
}

/// Softmax with max subtraction.
pub fn softmax<T: Scalar>(xs: &[T]) -> Vec<T> {
    let m = xs.iter().copied().fold(T::neg_infinity(), T::max);
    let e: Vec<T> = xs.iter().map(|&x| (x - m).exp()).collect();
    let s: T = e.iter().copied().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn validate_inputs<T: Scalar>(scores: &[T], partial: &PartialLabelSet, weights: &[T]) -> Result<()> {
    let k = scores.len();
    if partial.num_classes() != k {
        return Err(Error::DimensionMismatch {
            what: "candidate set classes vs scores",
            expected: k,
            actual: partial.num_classes(),
        });
    }
    validate_weights(scores, weights)
}

fn validate_weights<T: Scalar>(scores: &[T], weights: &[T]) -> Result<()> {
    if weights.len() != scores.len() {
        return Err(Error::DimensionMismatch {
            what: "weights vs scores",
            expected: scores.len(),
            actual: weights.len(),
        });
    }
    check_finite(scores, "scores")?;
    check_finite(weights, "weights")?;
    if let Some((class, &w)) = weights.iter().enumerate().find(|(_, &w)| w < T::zero()) {
        return Err(Error::NegativeWeight {
            class,
            value: w.as_f64(),
        });
    }
    Ok(())
}

/// Per-class values of the two sides of the loss: `pos[z]` is the loss paid
/// when `z` is a candidate, `neg[z]` when it is not.
pub fn side_terms<T: Scalar>(surrogate: Surrogate, scores: &[T]) -> (Vec<T>, Vec<T>) {
    match surrogate {
        Surrogate::Binary(psi) => (
            scores.iter().map(|&g| psi.value(g)).collect(),
            scores.iter().map(|&g| psi.value(-g)).collect(),
        ),
        Surrogate::CrossEntropy => {
            let cap = -T::lit(PROB_FLOOR).ln();
            let lse = log_sum_exp(scores);
            let p = softmax(scores);
            let pos = scores.iter().map(|&g| (lse - g).min(cap)).collect();
            let neg = (0..scores.len())
                .map(|z| -complement_prob(&p, z).max(T::lit(PROB_FLOOR)).ln())
                .collect();
            (pos, neg)
        }
    }
}

/// `1 − p_z`, summed over the other coordinates to avoid cancellation.
fn complement_prob<T: Scalar>(p: &[T], z: usize) -> T {
    p.iter()
        .enumerate()
        .filter(|&(j, _)| j != z)
        .map(|(_, &v)| v)
        .sum()
}

/// The LW partial loss.
pub fn lw_loss<T: Scalar>(
    scores: &[T],
    partial: &PartialLabelSet,
    weights: &[T],
    cfg: &LwConfig<T>,
) -> Result<T> {
    validate_inputs(scores, partial, weights)?;
    let (pos, neg) = side_terms(cfg.surrogate, scores);
    Ok(combine_side_terms(&pos, &neg, partial, weights, cfg))
}

/// The LW loss from precomputed [`side_terms`]; lets callers that evaluate
/// many candidate sets for one score vector skip recomputing ψ.
pub fn combine_side_terms<T: Scalar>(
    pos: &[T],
    neg: &[T],
    partial: &PartialLabelSet,
    weights: &[T],
    cfg: &LwConfig<T>,
) -> T {
    let mut candidate = T::zero();
    for z in partial.iter() {
        candidate += weights[z] * pos[z];
    }
    let mut other = T::zero();
    for z in partial.complement() {
        other += weights[z] * neg[z];
    }
    cfg.alpha * candidate + cfg.beta * other
}

/// `∂ lw_loss / ∂ g`.
pub fn lw_loss_gradient<T: Scalar>(
    scores: &[T],
    partial: &PartialLabelSet,
    weights: &[T],
    cfg: &LwConfig<T>,
) -> Result<Vec<T>> {
    let mut grad = vec![T::zero(); scores.len()];
    lw_loss_and_gradient(scores, partial, weights, cfg, &mut grad)?;
    Ok(grad)
}

/// Loss value and gradient in one pass; `grad` is overwritten.
pub fn lw_loss_and_gradient<T: Scalar>(
    scores: &[T],
    partial: &PartialLabelSet,
    weights: &[T],
    cfg: &LwConfig<T>,
    grad: &mut [T],
) -> Result<T> {
    validate_inputs(scores, partial, weights)?;
    if grad.len() != scores.len() {
        return Err(Error::DimensionMismatch {
            what: "gradient buffer",
            expected: scores.len(),
            actual: grad.len(),
        });
    }
    match cfg.surrogate {
        Surrogate::Binary(psi) => {
            let mut candidate = T::zero();
            let mut other = T::zero();
            for z in 0..scores.len() {
                let g = scores[z];
                if partial.contains(z) {
                    candidate += weights[z] * psi.value(g);
                    grad[z] = cfg.alpha * weights[z] * psi.derivative(g)?;
                } else {
                    other += weights[z] * psi.value(-g);
                    grad[z] = -(cfg.beta * weights[z] * psi.derivative(-g)?);
                }
            }
            Ok(cfg.alpha * candidate + cfg.beta * other)
        }
        Surrogate::CrossEntropy => Ok(cross_entropy_loss_and_gradient(scores, partial, weights, cfg, grad)),
    }
}

fn cross_entropy_loss_and_gradient<T: Scalar>(
    scores: &[T],
    partial: &PartialLabelSet,
    weights: &[T],
    cfg: &LwConfig<T>,
    grad: &mut [T],
) -> T {
    let floor = T::lit(PROB_FLOOR);
    let cap = -floor.ln();
    let lse = log_sum_exp(scores);
    let p = softmax(scores);

    // grad_j = p_j (A − C) − a_j + c_j, where a_z = α w_z over unclamped
    // candidates and c_z = β w_z p_z / (1 − p_z) over unclamped non-candidates.
    let mut loss_candidate = T::zero();
    let mut loss_other = T::zero();
    let mut a_sum = T::zero();
    let mut c_sum = T::zero();
    for v in grad.iter_mut() {
        *v = T::zero();
    }
    for z in 0..scores.len() {
        if partial.contains(z) {
            let nll = lse - scores[z];
            if nll < cap {
                loss_candidate += weights[z] * nll;
                let a = cfg.alpha * weights[z];
                a_sum += a;
                grad[z] -= a;
            } else {
                loss_candidate += weights[z] * cap;
            }
        } else {
            let rest = complement_prob(&p, z);
            if rest >= floor {
                loss_other += weights[z] * -rest.ln();
                let c = cfg.beta * weights[z] * p[z] / rest;
                c_sum += c;
                grad[z] += c;
            } else {
                loss_other += weights[z] * cap;
            }
        }
    }
    for (j, v) in grad.iter_mut().enumerate() {
        *v += p[j] * (a_sum - c_sum);
    }
    cfg.alpha * loss_candidate + cfg.beta * loss_other
}

/// Earlier partial losses recovered as special cases of the LW form.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SpecialCase {
    /// `min_{z ∈ ȳ} ψ(g_z)`.
    MinOverCandidates,
    /// `(1/|ȳ|) Σ_{z ∈ ȳ} ψ(g_z)`.
    AverageOverCandidates,
    /// `ψ(max_{z ∈ ȳ} g_z) + Σ_{z ∉ ȳ} ψ(−g_z)`.
    CourMaxPlusNeg,
}

pub fn special_case_loss<T: Scalar>(
    kind: SpecialCase,
    scores: &[T],
    partial: &PartialLabelSet,
    psi: BinaryLoss,
) -> Result<T> {
    if partial.num_classes() != scores.len() {
        return Err(Error::DimensionMismatch {
            what: "candidate set classes vs scores",
            expected: scores.len(),
            actual: partial.num_classes(),
        });
    }
    check_finite(scores, "scores")?;
    let value = match kind {
        SpecialCase::AverageOverCandidates => {
            let inv = T::one() / T::lit(partial.len() as f64);
            let mut s = T::zero();
            for z in partial.iter() {
                s += inv * psi.value(scores[z]);
            }
            s
        }
        SpecialCase::MinOverCandidates => partial
            .iter()
            .map(|z| psi.value(scores[z]))
            .fold(T::infinity(), T::min),
        SpecialCase::CourMaxPlusNeg => {
            let top = partial.iter().map(|z| scores[z]).fold(T::neg_infinity(), T::max);
            let mut other = T::zero();
            for z in partial.complement() {
                other += psi.value(-scores[z]);
            }
            psi.value(top) + other
        }
    };
    Ok(value)
}

/// Validates a row of inclusion probabilities for true label `y`:
/// `q[y] = 1` and `q[z] ∈ [0, 1)` otherwise.
pub fn validate_q_row<T: Scalar>(true_label: usize, q_row: &[T]) -> Result<()> {
    if true_label >= q_row.len() {
        return Err(Error::ClassOutOfRange {
            class: true_label,
            num_classes: q_row.len(),
        });
    }
    if q_row[true_label] != T::one() {
        return Err(Error::InvalidGeneration(format!(
            "q[{true_label}][{true_label}] = {} (must be 1)",
            q_row[true_label]
        )));
    }
    for (z, &q) in q_row.iter().enumerate() {
        if z != true_label && !(q >= T::zero() && q < T::one()) {
            return Err(Error::InvalidGeneration(format!(
                "q[{true_label}][{z}] = {q} outside [0, 1)"
            )));
        }
    }
    Ok(())
}

/// The supervised loss in the closed form stated alongside the risk
/// consistency claim:
///
/// ```text
/// α w_y ψ(g_y) + Σ_{z ≠ y} w_z q_z [α ψ(g_z) + β ψ(−g_z)]
/// ```
///
/// This form matches the expected LW loss only when `β = 0` or every
/// `q_z = 1/2`; [`exact_supervised_loss`] is the expectation in general.
pub fn derived_supervised_loss<T: Scalar>(
    true_label: usize,
    scores: &[T],
    weights: &[T],
    q_row: &[T],
    cfg: &LwConfig<T>,
) -> Result<T> {
    let Surrogate::Binary(psi) = cfg.surrogate else {
        return Err(Error::UnsupportedLoss("cross_entropy"));
    };
    check_supervised_inputs(true_label, scores, weights, q_row)?;
    let y = true_label;
    let mut rest = T::zero();
    for z in (0..scores.len()).filter(|&z| z != y) {
        let g = scores[z];
        rest += weights[z] * q_row[z] * (cfg.alpha * psi.value(g) + cfg.beta * psi.value(-g));
    }
    Ok(cfg.alpha * weights[y] * psi.value(scores[y]) + rest)
}

/// Expected LW loss over candidate sets drawn from `q_row` given true label
/// `y`, in closed form. Each label `z ≠ y` enters the set with probability
/// `π_z` and stays out with probability `1 − π_z`:
///
/// ```text
/// α w_y ψ(g_y) + Σ_{z ≠ y} w_z [α π_z ψ(g_z) + β (1 − π_z) ψ(−g_z)]
/// ```
///
/// Without rejection `π_z = q_z`. When the full set is rejected,
/// `π_z = (q_z − M) / (1 − M)` with `M = Π_{z ≠ y} q_z`.
pub fn exact_supervised_loss<T: Scalar>(
    true_label: usize,
    scores: &[T],
    weights: &[T],
    q_row: &[T],
    reject_full: bool,
    cfg: &LwConfig<T>,
) -> Result<T> {
    check_supervised_inputs(true_label, scores, weights, q_row)?;
    let y = true_label;
    let full = if reject_full {
        let m: T = q_row
            .iter()
            .enumerate()
            .filter(|&(z, _)| z != y)
            .fold(T::one(), |acc, (_, &q)| acc * q);
        if m >= T::one() {
            return Err(Error::InvalidGeneration(
                "full set has probability 1; rejection is impossible".into(),
            ));
        }
        m
    } else {
        T::zero()
    };
    let norm = T::one() - full;
    let (pos, neg) = side_terms(cfg.surrogate, scores);
    let mut rest = T::zero();
    for z in (0..scores.len()).filter(|&z| z != y) {
        let inside = (q_row[z] - full) / norm;
        let outside = (T::one() - q_row[z]) / norm;
        rest += weights[z] * (cfg.alpha * inside * pos[z] + cfg.beta * outside * neg[z]);
    }
    Ok(cfg.alpha * weights[y] * pos[y] + rest)
}

fn check_supervised_inputs<T: Scalar>(
    true_label: usize,
    scores: &[T],
    weights: &[T],
    q_row: &[T],
) -> Result<()> {
    validate_weights(scores, weights)?;
    if q_row.len() != scores.len() {
        return Err(Error::DimensionMismatch {
            what: "q row vs scores",
            expected: scores.len(),
            actual: q_row.len(),
        });
    }
    validate_q_row(true_label, q_row)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(labels: &[usize], k: usize) -> PartialLabelSet {
        PartialLabelSet::from_labels(labels.iter().copied(), k).unwrap()
    }

    /// Central differences, independent of the analytic gradient code.
    fn fd_gradient(f: impl Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
        (0..x.len())
            .map(|i| {
                let mut xp = x.to_vec();
                let mut xm = x.to_vec();
                xp[i] += h;
                xm[i] -= h;
                (f(&xp) - f(&xm)) / (2.0 * h)
            })
            .collect()
    }

    fn rel_err(a: &[f64], b: &[f64]) -> f64 {
        let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        diff / na.max(nb).max(1e-10)
    }

    #[test]
    fn sigmoid_at_zero_is_half() {
        assert_eq!(BinaryLoss::Sigmoid.value(0.0f64), 0.5);
        assert_eq!(BinaryLoss::Ramp.value(0.0f64), 0.5);
        assert_eq!(BinaryLoss::ZeroOneStep.value(0.0f64), 0.5);
    }

    #[test]
    fn symmetry_on_grid() {
        for psi in [BinaryLoss::Sigmoid, BinaryLoss::Ramp, BinaryLoss::ZeroOneStep] {
            for i in -10_000..=10_000 {
                let z = i as f64 * 1e-3;
                let s = psi.value(z) + psi.value(-z);
                assert!((s - 1.0).abs() <= 1e-12, "{psi:?} at {z}: {s}");
            }
        }
    }

    #[test]
    fn symmetry_in_single_precision() {
        for i in -100..=100 {
            let z = i as f32 * 0.1;
            let s = BinaryLoss::Sigmoid.value(z) + BinaryLoss::Sigmoid.value(-z);
            assert!((s - 1.0).abs() <= 1e-6);
        }
    }

    #[test]
    fn zero_one_has_no_derivative() {
        assert!(matches!(
            BinaryLoss::ZeroOneStep.derivative(0.3f64),
            Err(Error::UnsupportedLoss(_))
        ));
        let cfg = LwConfig::new(1.0, BinaryLoss::ZeroOneStep).unwrap();
        let err = lw_loss_gradient(&[0.0, 1.0], &set(&[0], 2), &[1.0, 1.0], &cfg).unwrap_err();
        assert!(matches!(err, Error::UnsupportedLoss(_)));
    }

    #[test]
    fn ramp_kinks_use_zero_subgradient() {
        assert_eq!(BinaryLoss::Ramp.derivative(1.0f64).unwrap(), 0.0);
        assert_eq!(BinaryLoss::Ramp.derivative(-1.0f64).unwrap(), 0.0);
        assert_eq!(BinaryLoss::Ramp.derivative(0.2f64).unwrap(), -0.5);
    }

    #[test]
    fn lw_loss_at_zero_scores() {
        // ȳ = {1, 2} one-based.
        let cfg = LwConfig::new(2.0, BinaryLoss::Sigmoid).unwrap();
        let v = lw_loss(&[0.0, 0.0, 0.0], &set(&[0, 1], 3), &[0.5, 0.5, 1.0], &cfg).unwrap();
        assert_eq!(v, 1.5);
    }

    #[test]
    fn lw_loss_full_set_ignores_beta() {
        let g = [0.3, -1.2, 2.5];
        let w = [0.2, 0.5, 0.3];
        let full = PartialLabelSet::full(3).unwrap();
        let expect: f64 = (0..3).map(|z| w[z] * BinaryLoss::Sigmoid.value(g[z])).sum();
        for beta in [0.0, 1.0, 123.0] {
            let cfg = LwConfig::new(beta, BinaryLoss::Sigmoid).unwrap();
            assert!((lw_loss(&g, &full, &w, &cfg).unwrap() - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn lw_loss_hand_evaluated() {
        // ȳ = {2, 4} one-based; value frozen from a term-by-term evaluation.
        let cfg = LwConfig::new(1.0, BinaryLoss::Sigmoid).unwrap();
        let v = lw_loss(
            &[1.0f64, -0.5, 0.25, 2.0],
            &set(&[1, 3], 4),
            &[0.3, 0.7, 1.0, 0.4],
            &cfg,
        )
        .unwrap();
        assert!((v - 1.264896775124945).abs() < 1e-14, "{v}");
    }

    #[test]
    fn lw_loss_rejects_bad_inputs() {
        let cfg = LwConfig::new(1.0, BinaryLoss::Sigmoid).unwrap();
        assert!(matches!(
            lw_loss(&[0.0, 0.0], &set(&[0], 3), &[1.0, 1.0], &cfg),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            lw_loss(&[0.0, f64::NAN], &set(&[0], 2), &[1.0, 1.0], &cfg),
            Err(Error::NonFinite(_))
        ));
        assert!(matches!(
            lw_loss(&[0.0, 0.0], &set(&[0], 2), &[1.0, -1.0], &cfg),
            Err(Error::NegativeWeight { .. })
        ));
        assert!(LwConfig::new(-1.0, BinaryLoss::Sigmoid).is_err());
        assert!(LwConfig::with_alpha(-0.1, 1.0, BinaryLoss::Sigmoid).is_err());
    }

    #[test]
    fn gradient_at_origin_is_quarter() {
        let cfg = LwConfig::new(1.0, BinaryLoss::Sigmoid).unwrap();
        let g = lw_loss_gradient(&[0.0, 0.0], &set(&[0], 2), &[1.0, 1.0], &cfg).unwrap();
        assert_eq!(g, vec![-0.25, 0.25]);
    }

    #[test]
    fn cross_entropy_gradient_at_origin() {
        let cfg = LwConfig::new(1.0, Surrogate::CrossEntropy).unwrap();
        let partial = set(&[0], 3);
        let w = [1.0 / 3.0; 3];
        let x = [0.0, 0.0, 0.0];
        let analytic = lw_loss_gradient(&x, &partial, &w, &cfg).unwrap();
        let numeric = fd_gradient(|g| lw_loss(g, &partial, &w, &cfg).unwrap(), &x, 1e-5);
        assert!(rel_err(&analytic, &numeric) < 1e-6);
        // The loss is 1/3 (−log 1/3) + 2/3 (−log 2/3).
        let v = lw_loss(&x, &partial, &w, &cfg).unwrap();
        let expect = (3f64.ln() + 2.0 * (1.5f64).ln()) / 3.0;
        assert!((v - expect).abs() < 1e-14);
    }

    #[test]
    fn cross_entropy_clamps_extreme_probabilities() {
        let cfg = LwConfig::new(1.0, Surrogate::CrossEntropy).unwrap();
        let partial = set(&[0], 2);
        let w = [1.0, 1.0];
        let g = [-500.0f64, 500.0];
        let v = lw_loss(&g, &partial, &w, &cfg).unwrap();
        let cap = -PROB_FLOOR.ln();
        assert!(v.is_finite() && (v - 2.0 * cap).abs() < 1e-9);
        let grad = lw_loss_gradient(&g, &partial, &w, &cfg).unwrap();
        assert!(grad.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn special_cases_examples() {
        let avg = special_case_loss(
            SpecialCase::AverageOverCandidates,
            &[0.0, 0.0, 0.0],
            &set(&[0, 1], 3),
            BinaryLoss::Sigmoid,
        )
        .unwrap();
        assert_eq!(avg, 0.5);
        let min = special_case_loss(
            SpecialCase::MinOverCandidates,
            &[1.0f64, -1.0, 0.0],
            &set(&[0, 1], 3),
            BinaryLoss::Sigmoid,
        )
        .unwrap();
        assert!((min - 0.2689414213699951).abs() < 1e-15);
    }

    #[test]
    fn derived_loss_cases() {
        let g = [0.4, -1.3, 2.2, 0.1];
        let w = [0.9, 0.3, 0.5, 0.2];
        let q = [1.0, 0.2, 0.6, 0.35];
        let psi = BinaryLoss::Sigmoid;
        // β = 1: w_y ψ(g_y) + Σ w_z q_z.
        let cfg = LwConfig::new(1.0, psi).unwrap();
        let v = derived_supervised_loss(0, &g, &w, &q, &cfg).unwrap();
        let expect = w[0] * psi.value(g[0]) + (1..4).map(|z| w[z] * q[z]).sum::<f64>();
        assert!((v - expect).abs() < 1e-14);
        // β = 0: w_y ψ(g_y) + Σ w_z q_z ψ(g_z).
        let cfg = LwConfig::new(0.0, psi).unwrap();
        let v = derived_supervised_loss(0, &g, &w, &q, &cfg).unwrap();
        let expect = w[0] * psi.value(g[0]) + (1..4).map(|z| w[z] * q[z] * psi.value(g[z])).sum::<f64>();
        assert!((v - expect).abs() < 1e-14);
        // β = 2, w_z = 1/q_z: one-versus-all form plus K − 1.
        let cfg = LwConfig::new(2.0, psi).unwrap();
        let w_inv: Vec<f64> = q.iter().map(|q| 1.0 / q).collect();
        let v = derived_supervised_loss(0, &g, &w_inv, &q, &cfg).unwrap();
        let expect = psi.value(g[0]) + (1..4).map(|z| psi.value(-g[z])).sum::<f64>() + 3.0;
        assert!((v - expect).abs() < 1e-12);
    }

    #[test]
    fn derived_loss_validates_generation_row() {
        let cfg = LwConfig::new(1.0, BinaryLoss::Sigmoid).unwrap();
        let g = [0.0, 0.0];
        let w = [1.0, 1.0];
        assert!(matches!(
            derived_supervised_loss(0, &g, &w, &[0.9, 0.5], &cfg),
            Err(Error::InvalidGeneration(_))
        ));
        assert!(matches!(
            derived_supervised_loss(0, &g, &w, &[1.0, 1.0], &cfg),
            Err(Error::InvalidGeneration(_))
        ));
        let ce = LwConfig::new(1.0, Surrogate::CrossEntropy).unwrap();
        assert!(matches!(
            derived_supervised_loss(0, &g, &w, &[1.0, 0.5], &ce),
            Err(Error::UnsupportedLoss(_))
        ));
    }

    #[test]
    fn exact_and_stated_forms_agree_at_half() {
        let g = [0.4, -1.3, 2.2];
        let w = [0.9f64, 0.3, 0.5];
        let q = [1.0, 0.5, 0.5];
        let cfg = LwConfig::with_alpha(0.5, 7.3, BinaryLoss::Ramp).unwrap();
        let a = derived_supervised_loss(0, &g, &w, &q, &cfg).unwrap();
        let b = exact_supervised_loss(0, &g, &w, &q, false, &cfg).unwrap();
        assert!((a - b).abs() < 1e-14);
    }

    fn instance(k: usize) -> impl Strategy<Value = (Vec<f64>, u64, Vec<f64>)> {
        (
            prop::collection::vec(-4.0..4.0f64, k),
            1u64..(1u64 << k),
            prop::collection::vec(0.0..2.0f64, k),
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn monotone(psi in prop::sample::select(BinaryLoss::ALL.to_vec()), a in -20.0..20.0f64, b in -20.0..20.0f64) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(psi.value(lo) >= psi.value(hi));
        }

        #[test]
        fn gradient_matches_finite_differences(
            k in 2usize..8,
            seed in any::<u64>(),
            beta in 0.0..8.0f64,
            alpha in 0.0..2.0f64,
            mode in 0usize..3,
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let surrogate = [Surrogate::Binary(BinaryLoss::Sigmoid), Surrogate::Binary(BinaryLoss::Ramp), Surrogate::CrossEntropy][mode];
            // Ramp is piecewise linear; keep scores away from its kinks.
            let g: Vec<f64> = (0..k).map(|_| loop {
                let v: f64 = rng.gen_range(-4.0..4.0);
                if (v.abs() - 1.0).abs() > 1e-3 { break v; }
            }).collect();
            let mask = rng.gen_range(1u64..(1u64 << k));
            let w: Vec<f64> = (0..k).map(|_| rng.gen_range(0.0..2.0)).collect();
            let partial = PartialLabelSet::from_mask(mask, k).unwrap();
            let cfg = LwConfig::with_alpha(alpha, beta, surrogate).unwrap();
            let analytic = lw_loss_gradient(&g, &partial, &w, &cfg).unwrap();
            let numeric = fd_gradient(|x| lw_loss(x, &partial, &w, &cfg).unwrap(), &g, 1e-5);
            prop_assert!(rel_err(&analytic, &numeric) < 1e-6, "{:?} vs {:?}", analytic, numeric);
        }

        #[test]
        fn reductions_are_exact((g, mask, _w) in (2usize..9).prop_flat_map(instance), psi in prop::sample::select(vec![BinaryLoss::Sigmoid, BinaryLoss::Ramp])) {
            let k = g.len();
            let partial = PartialLabelSet::from_mask(mask, k).unwrap();
            let n = partial.len() as f64;

            let mut w = vec![0.0; k];
            for z in partial.iter() { w[z] = 1.0 / n; }
            let lw = lw_loss(&g, &partial, &w, &LwConfig::new(0.0, psi).unwrap()).unwrap();
            let avg = special_case_loss(SpecialCase::AverageOverCandidates, &g, &partial, psi).unwrap();
            prop_assert_eq!(lw, avg);

            let top = partial.iter().max_by(|&a, &b| g[a].partial_cmp(&g[b]).unwrap()).unwrap();
            let mut w = vec![0.0; k];
            w[top] = 1.0;
            let lw = lw_loss(&g, &partial, &w, &LwConfig::new(0.0, psi).unwrap()).unwrap();
            let min = special_case_loss(SpecialCase::MinOverCandidates, &g, &partial, psi).unwrap();
            prop_assert_eq!(lw, min);

            for z in partial.complement() { w[z] = 1.0; }
            let lw = lw_loss(&g, &partial, &w, &LwConfig::new(1.0, psi).unwrap()).unwrap();
            let cour = special_case_loss(SpecialCase::CourMaxPlusNeg, &g, &partial, psi).unwrap();
            prop_assert_eq!(lw, cour);
        }
    }

    #[test]
    fn average_special_case_matches_lw_on_random_instances() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let k = rng.gen_range(2..10);
            let g: Vec<f64> = (0..k).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let partial = PartialLabelSet::from_mask(rng.gen_range(1..(1u64 << k)), k).unwrap();
            let mut w = vec![0.0; k];
            for z in partial.iter() {
                w[z] = 1.0 / partial.len() as f64;
            }
            let cfg = LwConfig::new(0.0, BinaryLoss::Sigmoid).unwrap();
            assert_eq!(
                lw_loss(&g, &partial, &w, &cfg).unwrap(),
                special_case_loss(SpecialCase::AverageOverCandidates, &g, &partial, BinaryLoss::Sigmoid).unwrap()
            );
        }
    }
}
