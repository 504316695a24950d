//! Exhaustive-enumeration checks of the identities behind the LW loss.
//!
//! The partial risk of a score vector is computed by brute force: every
//! candidate set containing each label is enumerated, weighted by its
//! generation probability and scored with [`lw_loss`]. That value is compared
//! with closed-form supervised risks built from [`derived_supervised_loss`]
//! (the stated form) or [`exact_supervised_loss`] (the expectation). The two
//! sides share no code beyond the binary losses themselves.
//!
//! The stated form agrees with the brute-force expectation only when `β = 0`
//! or every off-diagonal `q = 1/2`. For a one-hot posterior at `y` and no
//! rejection the gap is
//!
//! ```text
//! exact − stated = β Σ_{z ≠ y} w_z (1 − 2 q_z) ψ(−g_z)
//! ```

use std::fmt;

use rand::Rng;
use rayon::prelude::*;

use crate::labelgen::{sets_containing, GenerationModel};
use crate::labelset::PartialLabelSet;
use crate::losses::{
    combine_side_terms, derived_supervised_loss, exact_supervised_loss, lw_loss, side_terms, validate_q_row, BinaryLoss,
    LwConfig,
};
use crate::model::argmax;
use crate::rng::{self, streams};
use crate::scalar::{Field, NeumaierSum, Scalar};
use crate::{Error, Result};

/// Largest class count accepted by the enumeration routines.
pub const MAX_ENUM_CLASSES: usize = 16;

pub const RISK_TOLERANCE: f64 = 1e-10;
pub const PROBABILITY_TOLERANCE: f64 = 1e-12;

/// `p_y = P(Y = y | x)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassPosterior<T> {
    p: Vec<T>,
}

impl<T: Scalar> ClassPosterior<T> {
    pub fn new(p: Vec<T>) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::UnsupportedClassCount(0));
        }
        if p.iter().any(|v| !v.is_finite() || *v < T::zero()) {
            return Err(Error::invalid("posterior entries must be finite and non-negative"));
        }
        let total: T = p.iter().copied().sum();
        if (total - T::one()).abs().as_f64() > 1e-12 {
            return Err(Error::invalid(format!("posterior sums to {total}, not 1")));
        }
        Ok(Self { p })
    }

    pub fn one_hot(y: usize, num_classes: usize) -> Result<Self> {
        if y >= num_classes {
            return Err(Error::ClassOutOfRange { class: y, num_classes });
        }
        Ok(Self {
            p: (0..num_classes).map(|z| if z == y { T::one() } else { T::zero() }).collect(),
        })
    }

    pub fn as_slice(&self) -> &[T] {
        &self.p
    }

    pub fn num_classes(&self) -> usize {
        self.p.len()
    }

    /// The class with all the mass, if the posterior is one-hot.
    pub fn deterministic_label(&self) -> Option<usize> {
        let y = self.p.iter().position(|&v| v == T::one())?;
        self.p
            .iter()
            .enumerate()
            .all(|(z, &v)| z == y || v == T::zero())
            .then_some(y)
    }
}

/// Outcome of one check. For boolean properties the discrepancy counts
/// failing instances.
#[derive(Clone, Debug, PartialEq)]
pub struct ConsistencyReport {
    pub name: String,
    pub max_discrepancy: f64,
    pub instances: usize,
    pub worst: String,
    pub tolerance: f64,
}

impl ConsistencyReport {
    fn new(name: &str, tolerance: f64) -> Self {
        Self {
            name: name.to_string(),
            max_discrepancy: 0.0,
            instances: 0,
            worst: String::from("-"),
            tolerance,
        }
    }

    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    fn record(&mut self, discrepancy: f64, describe: impl FnOnce() -> String) {
        self.instances += 1;
        // NaN must surface as a failure, so compare with `!(a <= b)`.
        if !(discrepancy <= self.max_discrepancy) {
            self.max_discrepancy = discrepancy;
            self.worst = describe();
        }
    }

    pub fn passed(&self) -> bool {
        self.max_discrepancy < self.tolerance
    }

    /// `name max_discrepancy=… instances=… tolerance=… status=pass|fail`.
    pub fn summary_line(&self) -> String {
        format!(
            "{} max_discrepancy={:.3e} instances={} tolerance={:.0e} status={}",
            self.name,
            self.max_discrepancy,
            self.instances,
            self.tolerance,
            if self.passed() { "pass" } else { "fail" }
        )
    }
}

impl fmt::Display for ConsistencyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "[{}] {}", if self.passed() { "PASS" } else { "FAIL" }, self.name)?;
        writeln!(f, "  instances checked : {}", self.instances)?;
        writeln!(f, "  max discrepancy   : {:.6e} (tolerance {:.0e})", self.max_discrepancy, self.tolerance)?;
        write!(f, "  worst instance    : {}", self.worst)
    }
}

fn check_enum_size(k: usize) -> Result<()> {
    if k == 0 || k > MAX_ENUM_CLASSES {
        return Err(Error::UnsupportedClassCount(k));
    }
    Ok(())
}

fn check_risk_inputs<T: Scalar>(
    scores: &[T],
    posterior: &ClassPosterior<T>,
    model: &GenerationModel<T>,
) -> Result<()> {
    let k = model.num_classes();
    check_enum_size(k)?;
    for (what, len) in [("scores", scores.len()), ("posterior", posterior.num_classes())] {
        if len != k {
            return Err(Error::DimensionMismatch {
                what,
                expected: k,
                actual: len,
            });
        }
    }
    Ok(())
}

/// `Σ_y p_y Σ_{ȳ ∋ y} P(ȳ | y) · lw_loss(g, ȳ, w)` by enumerating all
/// `2^(K−1)` sets per label, with compensated summation.
pub fn partial_risk_bruteforce<T: Scalar>(
    scores: &[T],
    posterior: &ClassPosterior<T>,
    model: &GenerationModel<T>,
    weights: &[T],
    cfg: &LwConfig<T>,
) -> Result<T> {
    check_risk_inputs(scores, posterior, model)?;
    // Validates the inputs once; the per-set losses below reuse the ψ terms.
    lw_loss(scores, &PartialLabelSet::full(model.num_classes())?, weights, cfg)?;
    let (pos, neg) = side_terms(cfg.surrogate, scores);
    let mut total = NeumaierSum::new();
    for (y, &p_y) in posterior.as_slice().iter().enumerate() {
        if p_y == T::zero() {
            continue;
        }
        for set in model.sets_containing(y) {
            let prob = model.set_probability(y, &set)?;
            if prob == T::zero() {
                continue;
            }
            total += p_y * prob * combine_side_terms(&pos, &neg, &set, weights, cfg);
        }
    }
    Ok(total.value())
}

/// `Σ_y p_y · derived_supervised_loss(y, g, w, q[y])`.
pub fn supervised_risk_direct<T: Scalar>(
    scores: &[T],
    posterior: &ClassPosterior<T>,
    model: &GenerationModel<T>,
    weights: &[T],
    cfg: &LwConfig<T>,
) -> Result<T> {
    check_risk_inputs(scores, posterior, model)?;
    let mut total = NeumaierSum::new();
    for (y, &p_y) in posterior.as_slice().iter().enumerate() {
        if p_y != T::zero() {
            total += p_y * derived_supervised_loss(y, scores, weights, model.row(y), cfg)?;
        }
    }
    Ok(total.value())
}

/// `Σ_y p_y · exact_supervised_loss(y, g, w, q[y])`, honoring the model's
/// rejection of the full set.
pub fn supervised_risk_exact<T: Scalar>(
    scores: &[T],
    posterior: &ClassPosterior<T>,
    model: &GenerationModel<T>,
    weights: &[T],
    cfg: &LwConfig<T>,
) -> Result<T> {
    check_risk_inputs(scores, posterior, model)?;
    let mut total = NeumaierSum::new();
    for (y, &p_y) in posterior.as_slice().iter().enumerate() {
        if p_y != T::zero() {
            total += p_y * exact_supervised_loss(y, scores, weights, model.row(y), model.reject_full(), cfg)?;
        }
    }
    Ok(total.value())
}

/// `Σ_{ȳ ∋ y} P(ȳ | y)` in the model's own arithmetic (exact for rationals).
pub fn probability_mass<P: Field>(model: &GenerationModel<P>, y: usize) -> Result<P> {
    check_enum_size(model.num_classes())?;
    let mut total = P::zero();
    for set in sets_containing(y, model.num_classes()) {
        total = total + model.set_probability(y, &set)?;
    }
    Ok(total)
}

/// `|Σ_{ȳ ∋ y} P(ȳ | y) − 1|` for one true label.
pub fn lemma1_check<T: Scalar>(model: &GenerationModel<T>, y: usize) -> Result<ConsistencyReport> {
    check_enum_size(model.num_classes())?;
    let mut report = ConsistencyReport::new("subset_probability_normalization", PROBABILITY_TOLERANCE);
    let mut total = NeumaierSum::new();
    for set in sets_containing(y, model.num_classes()) {
        total += model.set_probability(y, &set)?;
    }
    let gap = (total.value() - T::one()).abs().as_f64();
    report.record(gap, || format!("K={} y={y} sum={}", model.num_classes(), total.value()));
    Ok(report)
}

/// With every off-diagonal `q = 1/2` and the full set rejected, each proper
/// candidate set containing `y` has probability `1/(2^(K−1) − 1)`.
pub fn uniform_recovery_check(k: usize) -> Result<ConsistencyReport> {
    check_enum_size(k)?;
    if k < 2 {
        return Err(Error::UnsupportedClassCount(k));
    }
    let model = GenerationModel::<f64>::uniform(k, 0.5)?.with_reject_full(true)?;
    let target = 1.0 / ((1u64 << (k - 1)) - 1) as f64;
    let mut report = ConsistencyReport::new("uniform_recovery", PROBABILITY_TOLERANCE);
    for y in 0..k {
        for set in sets_containing(y, k).filter(|s| !s.is_full()) {
            let p = model.set_probability(y, &set)?;
            report.record((p - target).abs(), || format!("K={k} y={y} set={set:?} p={p:e} target={target:e}"));
        }
    }
    Ok(report)
}

/// `c_y = w_y q_y (β p_y − (β − 1))`.
pub fn theorem2_coefficients<T: Scalar>(posterior: &ClassPosterior<T>, weights: &[T], q_row: &[T], beta: T) -> Vec<T> {
    posterior
        .as_slice()
        .iter()
        .zip(weights)
        .zip(q_row)
        .map(|((&p, &w), &q)| w * q * (beta * p - (beta - T::one())))
        .collect()
}

/// Whether `argmax_y c_y` is the true label in the deterministic scenario.
/// Instances outside the preconditions (one-hot posterior at `y*`, `y*`
/// carrying the largest positive weight, `q[y*] = 1`, other `q < 1`, `β > 0`)
/// return [`Error::Inapplicable`]. NaN inputs count as outside them.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn theorem2_coefficient_check<T: Scalar>(
    posterior: &ClassPosterior<T>,
    weights: &[T],
    q_row: &[T],
    beta: T,
) -> Result<bool> {
    let k = posterior.num_classes();
    if weights.len() != k || q_row.len() != k {
        return Err(Error::DimensionMismatch {
            what: "weights / q row vs posterior",
            expected: k,
            actual: if weights.len() != k { weights.len() } else { q_row.len() },
        });
    }
    let y = posterior
        .deterministic_label()
        .ok_or_else(|| Error::Inapplicable("posterior is not one-hot".into()))?;
    if !(beta > T::zero() && beta.is_finite()) {
        return Err(Error::Inapplicable(format!("beta = {beta} is not positive")));
    }
    if weights.iter().any(|&w| !(w >= T::zero())) {
        return Err(Error::Inapplicable("negative weight".into()));
    }
    if !(weights[y] > T::zero()) || weights.iter().any(|&w| w > weights[y]) {
        return Err(Error::Inapplicable(format!("class {y} does not carry the largest weight")));
    }
    validate_q_row(y, q_row).map_err(|e| Error::Inapplicable(e.to_string()))?;
    Ok(argmax(&theorem2_coefficients(posterior, weights, q_row, beta)) == y)
}

/// Absolute change of the stated supervised loss for true label `y` when the
/// scores move from `g` to `g2` with `g[y]` held fixed.
pub fn perturbation_gap<T: Scalar>(
    y: usize,
    g: &[T],
    g2: &[T],
    weights: &[T],
    q_row: &[T],
    cfg: &LwConfig<T>,
) -> Result<T> {
    if g.len() != g2.len() {
        return Err(Error::DimensionMismatch {
            what: "perturbed scores",
            expected: g.len(),
            actual: g2.len(),
        });
    }
    if y >= g.len() || g[y] != g2[y] {
        return Err(Error::Inapplicable("perturbation must keep the true-label score".into()));
    }
    let a = derived_supervised_loss(y, g, weights, q_row, cfg)?;
    let b = derived_supervised_loss(y, g2, weights, q_row, cfg)?;
    Ok((a - b).abs())
}

/// With `α = β = 1` and a symmetric ψ the stated supervised loss depends on
/// the scores only through `ψ(g_y)`: perturbing any other score leaves it
/// unchanged (within 1e-12).
pub fn beta1_collapse_check<T: Scalar>(
    g: &[T],
    g2: &[T],
    posterior: &ClassPosterior<T>,
    model: &GenerationModel<T>,
    weights: &[T],
    psi: BinaryLoss,
) -> Result<bool> {
    if !psi.is_symmetric() {
        return Err(Error::Inapplicable(format!("{} is not symmetric", psi.name())));
    }
    let y = posterior
        .deterministic_label()
        .ok_or_else(|| Error::Inapplicable("posterior is not one-hot".into()))?;
    let cfg = LwConfig::new(T::one(), psi)?;
    Ok(perturbation_gap(y, g, g2, weights, model.row(y), &cfg)?.as_f64() <= 1e-12)
}

/// Which closed form the enumeration is compared against.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum DerivedForm {
    /// [`derived_supervised_loss`], the form stated with the consistency
    /// claim.
    #[default]
    Stated,
    /// [`exact_supervised_loss`].
    Exact,
}

impl DerivedForm {
    pub fn name(self) -> &'static str {
        match self {
            DerivedForm::Stated => "stated",
            DerivedForm::Exact => "exact",
        }
    }
}

/// Randomized risk-equality certification.
#[derive(Clone, Debug, PartialEq)]
pub struct CertificationConfig {
    pub ks: Vec<usize>,
    /// Random `(g, p, q, w)` instances per class count; each instance is
    /// checked under every `(ψ, α, β)` combination.
    pub trials: usize,
    pub seed: u64,
    pub losses: Vec<BinaryLoss>,
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    pub form: DerivedForm,
    pub reject_full: bool,
    /// Added to β in the closed-form path only. Nonzero values are a
    /// mutation fixture: a sensitive suite must then fail.
    pub beta_offset: f64,
}

impl Default for CertificationConfig {
    fn default() -> Self {
        Self {
            ks: (2..=8).collect(),
            trials: 1000,
            seed: 0,
            losses: BinaryLoss::ALL.to_vec(),
            alphas: vec![0.5, 1.0],
            betas: vec![0.0, 0.5, 1.0, 2.0, 7.3],
            form: DerivedForm::Stated,
            reject_full: false,
            beta_offset: 0.0,
        }
    }
}

/// A random enumeration instance.
#[derive(Clone, Debug)]
pub struct Instance {
    pub scores: Vec<f64>,
    pub posterior: ClassPosterior<f64>,
    pub model: GenerationModel<f64>,
    pub weights: Vec<f64>,
}

fn instance_rng(seed: u64, k: usize, trial: usize) -> rng::Rng {
    let mixed = seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add((k as u64) << 40)
        .wrapping_add(trial as u64);
    rng::stream(mixed, streams::VERIFY)
}

/// Scores in `[−3, 3)`, weights in `[0, 2)`, off-diagonal `q` in `[0, 0.95)`;
/// a quarter of the posteriors are one-hot, the rest are normalized
/// exponentials.
pub fn random_instance<R: Rng>(rng: &mut R, k: usize, reject_full: bool) -> Result<Instance> {
    let scores = (0..k).map(|_| rng.gen_range(-3.0..3.0)).collect();
    let weights = (0..k).map(|_| rng.gen_range(0.0..2.0)).collect();
    let posterior = if rng.gen_bool(0.25) {
        ClassPosterior::one_hot(rng.gen_range(0..k), k)?
    } else {
        let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(-2.0f64..2.0).exp()).collect();
        let total: f64 = raw.iter().sum();
        ClassPosterior::new(raw.iter().map(|v| v / total).collect())?
    };
    let rows = (0..k)
        .map(|y| (0..k).map(|z| if z == y { 1.0 } else { rng.gen_range(0.0..0.95) }).collect())
        .collect();
    let model = GenerationModel::from_rows(rows, reject_full && k > 1)?;
    Ok(Instance {
        scores,
        posterior,
        model,
        weights,
    })
}

/// Brute-force partial risk against the configured closed form over the
/// whole grid. Instances are independent (seeded by `(seed, K, trial)`) and
/// sharded across worker threads; the report does not depend on the thread
/// count.
pub fn certify_risk_equality(cfg: &CertificationConfig) -> Result<ConsistencyReport> {
    for &k in &cfg.ks {
        check_enum_size(k)?;
    }
    let name = format!("risk_equality[{}]", cfg.form.name());
    let jobs: Vec<(usize, usize)> = cfg.ks.iter().flat_map(|&k| (0..cfg.trials).map(move |t| (k, t))).collect();
    let results: Vec<Result<Vec<(f64, String)>>> = jobs
        .par_iter()
        .map(|&(k, trial)| certify_instance(cfg, k, trial))
        .collect();
    let mut report = ConsistencyReport::new(&name, RISK_TOLERANCE);
    for r in results {
        for (gap, desc) in r? {
            report.record(gap, || desc);
        }
    }
    Ok(report)
}

fn certify_instance(cfg: &CertificationConfig, k: usize, trial: usize) -> Result<Vec<(f64, String)>> {
    let mut rng = instance_rng(cfg.seed, k, trial);
    let inst = random_instance(&mut rng, k, cfg.reject_full)?;
    let mut out = Vec::with_capacity(cfg.losses.len() * cfg.alphas.len() * cfg.betas.len());
    for &psi in &cfg.losses {
        for &alpha in &cfg.alphas {
            for &beta in &cfg.betas {
                let lw = LwConfig::with_alpha(alpha, beta, psi)?;
                let mutated = LwConfig::with_alpha(alpha, beta + cfg.beta_offset, psi)?;
                let brute = partial_risk_bruteforce(&inst.scores, &inst.posterior, &inst.model, &inst.weights, &lw)?;
                let closed = match cfg.form {
                    DerivedForm::Stated => {
                        supervised_risk_direct(&inst.scores, &inst.posterior, &inst.model, &inst.weights, &mutated)?
                    }
                    DerivedForm::Exact => {
                        supervised_risk_exact(&inst.scores, &inst.posterior, &inst.model, &inst.weights, &mutated)?
                    }
                };
                let gap = (brute - closed).abs();
                out.push((
                    gap,
                    format!(
                        "K={k} trial={trial} psi={} alpha={alpha} beta={beta}: enumerated={brute:.15e} closed_form={closed:.15e}",
                        psi.name()
                    ),
                ));
            }
        }
    }
    Ok(out)
}

/// Normalization of subset probabilities over `models` random generation
/// models with `K` cycling through `ks` (every true label of each model).
pub fn certify_lemma1(ks: &[usize], models: usize, seed: u64) -> Result<ConsistencyReport> {
    let mut report = ConsistencyReport::new("subset_probability_normalization", PROBABILITY_TOLERANCE);
    if ks.is_empty() {
        return Ok(report);
    }
    let mut rng = rng::stream(seed, streams::VERIFY);
    for m in 0..models {
        let k = ks[m % ks.len()];
        check_enum_size(k)?;
        let rows = (0..k)
            .map(|y| {
                (0..k)
                    .map(|z| match (z == y, rng.gen_range(0..10)) {
                        (true, _) => 1.0,
                        (false, 0) => 0.0,
                        _ => rng.gen_range(0.0..1.0),
                    })
                    .collect()
            })
            .collect();
        let model = GenerationModel::from_rows(rows, false)?;
        for y in 0..k {
            let r = lemma1_check(&model, y)?;
            report.record(r.max_discrepancy, || format!("model={m} {}", r.worst));
        }
    }
    Ok(report)
}

pub fn certify_uniform_recovery(ks: &[usize]) -> Result<ConsistencyReport> {
    let mut report = ConsistencyReport::new("uniform_recovery", PROBABILITY_TOLERANCE);
    for &k in ks.iter().filter(|&&k| k >= 2) {
        let r = uniform_recovery_check(k)?;
        report.instances += r.instances - 1;
        report.record(r.max_discrepancy, || r.worst.clone());
    }
    Ok(report)
}

/// The coefficient argmax property on `trials` random precondition-satisfying
/// instances with `β ∈ (0, 10]`. The discrepancy counts failures.
pub fn certify_theorem2(ks: &[usize], trials: usize, seed: u64) -> Result<ConsistencyReport> {
    let mut report = ConsistencyReport::new("bayes_coefficient_argmax", 0.5);
    if ks.is_empty() {
        return Ok(report);
    }
    let mut rng = rng::stream(seed.wrapping_add(1), streams::VERIFY);
    let mut failures = 0usize;
    let mut first_failure = None;
    for t in 0..trials {
        let k = ks[t % ks.len()].max(2);
        let y = rng.gen_range(0..k);
        let mut w: Vec<f64> = (0..k).map(|_| rng.gen_range(0.0..1.0)).collect();
        let top = w.iter().copied().fold(0.0, f64::max);
        w[y] = top + rng.gen_range(1e-9..1.0);
        let q: Vec<f64> = (0..k).map(|z| if z == y { 1.0 } else { rng.gen_range(0.0..1.0) }).collect();
        // (0, 10]: map [0, 1) onto (0, 1] before scaling.
        let beta = 10.0 * (1.0 - rng.gen::<f64>());
        let post = ClassPosterior::one_hot(y, k)?;
        if !theorem2_coefficient_check(&post, &w, &q, beta)? {
            failures += 1;
            first_failure.get_or_insert_with(|| format!("trial={t} K={k} y={y} beta={beta} w={w:?} q={q:?}"));
        }
    }
    report.instances = trials;
    report.max_discrepancy = failures as f64;
    if let Some(f) = first_failure {
        report.worst = f;
    }
    Ok(report)
}

/// Random perturbations of non-true-label scores under `α = β = 1` and a
/// symmetric ψ leave the stated supervised loss unchanged.
pub fn certify_beta1_collapse(ks: &[usize], trials: usize, seed: u64) -> Result<ConsistencyReport> {
    let mut report = ConsistencyReport::new("unit_beta_collapse", 1e-12);
    if ks.is_empty() {
        return Ok(report);
    }
    let mut rng = rng::stream(seed.wrapping_add(2), streams::VERIFY);
    let cfg = LwConfig::new(1.0, BinaryLoss::Sigmoid)?;
    for t in 0..trials {
        let k = ks[t % ks.len()].max(2);
        let inst = random_instance(&mut rng, k, false)?;
        let y = rng.gen_range(0..k);
        let g2: Vec<f64> = inst
            .scores
            .iter()
            .enumerate()
            .map(|(z, &g)| if z == y { g } else { g + rng.gen_range(-5.0..5.0) })
            .collect();
        let gap = perturbation_gap(y, &inst.scores, &g2, &inst.weights, inst.model.row(y), &cfg)?;
        report.record(gap, || format!("trial={t} K={k} y={y}"));
    }
    Ok(report)
}

/// Options for the full verification suite.
#[derive(Clone, Debug, PartialEq)]
pub struct SuiteConfig {
    pub certification: CertificationConfig,
    pub lemma1_models: usize,
    pub theorem2_trials: usize,
    pub collapse_trials: usize,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self {
            certification: CertificationConfig::default(),
            lemma1_models: 100,
            theorem2_trials: 10_000,
            collapse_trials: 100,
        }
    }
}

/// Every check, in a fixed order. Subset normalization uses the class counts up to 10.
pub fn run_suite(cfg: &SuiteConfig) -> Result<Vec<ConsistencyReport>> {
    let c = &cfg.certification;
    let small: Vec<usize> = c.ks.iter().copied().filter(|&k| k <= 10).collect();
    let with_trials = |n: usize| if c.trials == 0 { 0 } else { n };
    Ok(vec![
        certify_risk_equality(c)?,
        certify_lemma1(&small, with_trials(cfg.lemma1_models), c.seed)?,
        certify_uniform_recovery(if c.trials == 0 { &[] } else { &c.ks })?,
        certify_theorem2(&c.ks, with_trials(cfg.theorem2_trials), c.seed)?,
        certify_beta1_collapse(&c.ks, with_trials(cfg.collapse_trials), c.seed)?,
    ])
}

/// Enumerated partial risk of a single candidate-set distribution; exposed
/// for callers that want the per-set breakdown.
pub fn set_breakdown<T: Scalar>(
    model: &GenerationModel<T>,
    y: usize,
    scores: &[T],
    weights: &[T],
    cfg: &LwConfig<T>,
) -> Result<Vec<(PartialLabelSet, T, T)>> {
    check_enum_size(model.num_classes())?;
    model
        .sets_containing(y)
        .map(|s| Ok((s, model.set_probability(y, &s)?, lw_loss(scores, &s, weights, cfg)?)))
        .collect()
}
