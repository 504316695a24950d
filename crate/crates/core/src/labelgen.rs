//! Label-specific generation of candidate label sets.
//!
//! Row `y` of the generation matrix holds `q[y][z] = P(z ∈ Ȳ | Y = y)`. Given
//! the true label, every other label enters the set independently, so
//!
//! ```text
//! P(Ȳ = ȳ | Y = y) = Π_{s ∈ ȳ, s ≠ y} q_s · Π_{t ∉ ȳ} (1 − q_t)
//! ```
//!
//! With `reject_full`, draws equal to the full label set are discarded and
//! redrawn, which divides every remaining probability by `1 − M` where
//! `M = Π_{z ≠ y} q_z`.

use rand::Rng;

use crate::labelset::{full_mask, PartialLabelSet, MAX_CLASSES};
use crate::rng::{self, streams};
use crate::scalar::{Field, Scalar};
use crate::{Error, Result};

/// Upper bound on redraws when the full set is rejected.
pub const RETRY_CAP: usize = 1_000_000;

/// The structured generation matrices used for non-uniform corruption.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GenerationCase {
    /// One similar label per class (the next class, cyclically) at `q1`.
    Case1,
    /// Both neighbouring classes at `q1`.
    Case2,
    /// Neighbours at distance 1, 2, 3 with `q1 > q2 > q3`.
    Case3,
}

impl GenerationCase {
    fn min_classes(self) -> usize {
        match self {
            GenerationCase::Case1 => 2,
            GenerationCase::Case2 => 3,
            GenerationCase::Case3 => 7,
        }
    }
}

/// Immutable `K × K` matrix of inclusion probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct GenerationModel<P = f64> {
    q: Vec<P>,
    num_classes: usize,
    reject_full: bool,
}

impl<P: Field> GenerationModel<P> {
    /// Validates `q[y][y] = 1` and `q[y][z] ∈ [0, 1)` for `z ≠ y`.
    pub fn from_rows(rows: Vec<Vec<P>>, reject_full: bool) -> Result<Self> {
        let k = rows.len();
        if k == 0 || k > MAX_CLASSES {
            return Err(Error::UnsupportedClassCount(k));
        }
        if reject_full && k == 1 {
            return Err(Error::InvalidGeneration(
                "a single class always yields the full set; cannot reject it".into(),
            ));
        }
        let mut q = Vec::with_capacity(k * k);
        for (y, row) in rows.into_iter().enumerate() {
            if row.len() != k {
                return Err(Error::DimensionMismatch {
                    what: "generation matrix row",
                    expected: k,
                    actual: row.len(),
                });
            }
            for (z, v) in row.into_iter().enumerate() {
                if z == y {
                    if v != P::one() {
                        return Err(Error::InvalidGeneration(format!("q[{y}][{y}] = {v:?}, must be 1")));
                    }
                } else if !(v >= P::zero() && v < P::one()) {
                    return Err(Error::InvalidGeneration(format!(
                        "q[{y}][{z}] = {v:?} outside [0, 1)"
                    )));
                }
                q.push(v);
            }
        }
        Ok(Self {
            q,
            num_classes: k,
            reject_full,
        })
    }

    /// Diagonal 1, every off-diagonal entry `q`.
    pub fn uniform(num_classes: usize, q: P) -> Result<Self> {
        let rows = (0..num_classes)
            .map(|y| {
                (0..num_classes)
                    .map(|z| if z == y { P::one() } else { q.clone() })
                    .collect()
            })
            .collect();
        Self::from_rows(rows, false)
    }

    /// The structured matrices for `K = 10`. `q2` and `q3` are only read by
    /// [`GenerationCase::Case3`].
    pub fn case(case: GenerationCase, num_classes: usize, q1: P, q2: P, q3: P) -> Result<Self> {
        if num_classes != 10 {
            return Err(Error::UnsupportedClassCount(num_classes));
        }
        Self::case_circulant(case, num_classes, q1, q2, q3)
    }

    /// Circulant extension of [`GenerationModel::case`] to other class counts.
    /// Identical to it at `K = 10`.
    pub fn case_circulant(case: GenerationCase, num_classes: usize, q1: P, q2: P, q3: P) -> Result<Self> {
        let k = num_classes;
        if k < case.min_classes() || k > MAX_CLASSES {
            return Err(Error::UnsupportedClassCount(k));
        }
        let in_range = |v: &P| *v >= P::zero() && *v < P::one();
        if !in_range(&q1) {
            return Err(Error::InvalidGeneration(format!("q1 = {q1:?} outside [0, 1)")));
        }
        if case == GenerationCase::Case3 {
            if !(in_range(&q2) && in_range(&q3)) {
                return Err(Error::InvalidGeneration("q2, q3 must lie in [0, 1)".into()));
            }
            if !(q1 > q2 && q2 > q3) {
                return Err(Error::InvalidGeneration("Case3 requires q1 > q2 > q3".into()));
            }
        }
        // (offset, probability) pairs; offsets are applied cyclically.
        let bands: Vec<(isize, P)> = match case {
            GenerationCase::Case1 => vec![(1, q1)],
            GenerationCase::Case2 => vec![(1, q1.clone()), (-1, q1)],
            GenerationCase::Case3 => vec![
                (1, q1.clone()),
                (-1, q1),
                (2, q2.clone()),
                (-2, q2),
                (3, q3.clone()),
                (-3, q3),
            ],
        };
        let mut rows = vec![vec![P::zero(); k]; k];
        for (y, row) in rows.iter_mut().enumerate() {
            row[y] = P::one();
            for (offset, p) in &bands {
                let z = (y as isize + offset).rem_euclid(k as isize) as usize;
                row[z] = p.clone();
            }
        }
        Self::from_rows(rows, false)
    }

    pub fn with_reject_full(mut self, reject_full: bool) -> Result<Self> {
        if reject_full && self.num_classes == 1 {
            return Err(Error::InvalidGeneration(
                "a single class always yields the full set; cannot reject it".into(),
            ));
        }
        self.reject_full = reject_full;
        Ok(self)
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn reject_full(&self) -> bool {
        self.reject_full
    }

    pub fn q(&self, y: usize, z: usize) -> &P {
        &self.q[y * self.num_classes + z]
    }

    pub fn row(&self, y: usize) -> &[P] {
        &self.q[y * self.num_classes..(y + 1) * self.num_classes]
    }

    /// `M = Π_{z ≠ y} q[y][z]`, the probability of drawing the full set.
    pub fn full_set_probability(&self, y: usize) -> P {
        self.row(y)
            .iter()
            .enumerate()
            .filter(|&(z, _)| z != y)
            .fold(P::one(), |acc, (_, q)| acc * q.clone())
    }

    /// `P(Ȳ = set | Y = y)`; zero when `y ∉ set`, and zero for the full set
    /// under rejection.
    pub fn set_probability(&self, y: usize, set: &PartialLabelSet) -> Result<P> {
        if y >= self.num_classes {
            return Err(Error::ClassOutOfRange {
                class: y,
                num_classes: self.num_classes,
            });
        }
        if set.num_classes() != self.num_classes {
            return Err(Error::DimensionMismatch {
                what: "candidate set classes vs generation model",
                expected: self.num_classes,
                actual: set.num_classes(),
            });
        }
        if !set.contains(y) {
            return Ok(P::zero());
        }
        if self.reject_full && set.is_full() {
            return Ok(P::zero());
        }
        let row = self.row(y);
        let mut p = P::one();
        for (z, q) in row.iter().enumerate() {
            if z == y {
                continue;
            }
            p = if set.contains(z) {
                p * q.clone()
            } else {
                p * (P::one() - q.clone())
            };
        }
        if self.reject_full {
            p = p / (P::one() - self.full_set_probability(y));
        }
        Ok(p)
    }

    /// Every candidate set containing `y`, in increasing mask order.
    pub fn sets_containing(&self, y: usize) -> impl Iterator<Item = PartialLabelSet> {
        sets_containing(y, self.num_classes)
    }
}

/// Enumerates all `2^(K−1)` subsets of `[K]` that contain `y`.
pub fn sets_containing(y: usize, num_classes: usize) -> impl Iterator<Item = PartialLabelSet> {
    let k = num_classes;
    let others: Vec<usize> = (0..k).filter(|&z| z != y).collect();
    let count = 1u64 << others.len();
    (0..count).map(move |bits| {
        let mut mask = 1u64 << y;
        for (i, &z) in others.iter().enumerate() {
            if bits >> i & 1 == 1 {
                mask |= 1 << z;
            }
        }
        debug_assert!(mask & !full_mask(k) == 0);
        PartialLabelSet::from_mask(mask, k).expect("mask contains y")
    })
}

impl<P: Scalar> GenerationModel<P> {
    /// Draws a candidate set for true label `y`: one uniform draw per label
    /// `z ≠ y`, in increasing `z`, including `z` when the draw is below
    /// `q[y][z]`.
    pub fn sample_set<R: Rng + ?Sized>(&self, y: usize, rng: &mut R) -> Result<PartialLabelSet> {
        if y >= self.num_classes {
            return Err(Error::ClassOutOfRange {
                class: y,
                num_classes: self.num_classes,
            });
        }
        let full = full_mask(self.num_classes);
        let row = self.row(y);
        for _ in 0..RETRY_CAP {
            let mut mask = 1u64 << y;
            for (z, &q) in row.iter().enumerate() {
                if z != y && rng.gen::<f64>() < q.as_f64() {
                    mask |= 1 << z;
                }
            }
            if !(self.reject_full && mask == full) {
                return PartialLabelSet::from_mask(mask, self.num_classes);
            }
        }
        Err(Error::RetryCapExceeded(RETRY_CAP))
    }

    /// Candidate sets for a whole label vector from the generation stream of
    /// `seed`.
    pub fn sample_corpus(&self, labels: &[usize], seed: u64) -> Result<Vec<PartialLabelSet>> {
        let mut rng = rng::stream(seed, streams::LABELGEN);
        labels.iter().map(|&y| self.sample_set(y, &mut rng)).collect()
    }
}
