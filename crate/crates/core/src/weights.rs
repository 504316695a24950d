//! Per-instance weighting parameters.
//!
//! Each row is normalized separately over the candidate labels and over the
//! non-candidate labels, so both partitions sum to one. Refreshing a row is a
//! softmax of the raw scores restricted to each partition.

use crate::labelset::PartialLabelSet;
use crate::scalar::Scalar;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct WeightState<T> {
    w: Vec<T>,
    masks: Vec<PartialLabelSet>,
    num_classes: usize,
}

impl<T: Scalar> WeightState<T> {
    /// Uniform weights within each partition: `1/|ȳ|` on candidates and
    /// `1/(K − |ȳ|)` elsewhere. Rows whose candidate set is the full label
    /// set have an empty non-candidate partition; see
    /// [`WeightState::full_set_rows`].
    pub fn init(masks: Vec<PartialLabelSet>, num_classes: usize) -> Result<Self> {
        let k = num_classes;
        let mut w = Vec::with_capacity(masks.len() * k);
        for m in &masks {
            if m.num_classes() != k {
                return Err(Error::DimensionMismatch {
                    what: "candidate set classes",
                    expected: k,
                    actual: m.num_classes(),
                });
            }
            let inside = T::one() / T::lit(m.len() as f64);
            let outside = if m.is_full() {
                T::zero()
            } else {
                T::one() / T::lit((k - m.len()) as f64)
            };
            w.extend((0..k).map(|z| if m.contains(z) { inside } else { outside }));
        }
        Ok(Self {
            w,
            masks,
            num_classes: k,
        })
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn masks(&self) -> &[PartialLabelSet] {
        &self.masks
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.w[i * self.num_classes..(i + 1) * self.num_classes]
    }

    /// Flat `n × K` row-major weights.
    pub fn as_slice(&self) -> &[T] {
        &self.w
    }

    /// Rows whose candidate set covers every class.
    pub fn full_set_rows(&self) -> usize {
        self.masks.iter().filter(|m| m.is_full()).count()
    }

    /// Sums over the candidate and (if nonempty) non-candidate partitions.
    pub fn partition_sums(&self, i: usize) -> (T, Option<T>) {
        let row = self.row(i);
        let m = &self.masks[i];
        let inside = m.iter().map(|z| row[z]).sum();
        let outside = (!m.is_full()).then(|| m.complement().map(|z| row[z]).sum());
        (inside, outside)
    }

    /// Refreshes every row from an `n × K` row-major score matrix.
    pub fn update(&mut self, scores: &[T]) -> Result<()> {
        if scores.len() != self.w.len() {
            return Err(Error::DimensionMismatch {
                what: "score matrix",
                expected: self.w.len(),
                actual: scores.len(),
            });
        }
        let k = self.num_classes;
        for i in 0..self.masks.len() {
            self.update_row(i, &scores[i * k..(i + 1) * k])?;
        }
        Ok(())
    }

    /// Refreshes row `i` from that instance's scores.
    pub fn update_row(&mut self, i: usize, scores: &[T]) -> Result<()> {
        let k = self.num_classes;
        if scores.len() != k {
            return Err(Error::DimensionMismatch {
                what: "score row",
                expected: k,
                actual: scores.len(),
            });
        }
        if scores.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite("scores"));
        }
        let mask = self.masks[i];
        let row = &mut self.w[i * k..(i + 1) * k];
        restricted_softmax(scores, mask.iter(), row);
        if !mask.is_full() {
            restricted_softmax(scores, mask.complement(), row);
        }
        Ok(())
    }
}

/// Writes `exp(g_z) / Σ_{z' ∈ part} exp(g_z')` into `out[z]` for `z ∈ part`.
fn restricted_softmax<T: Scalar>(scores: &[T], part: impl Iterator<Item = usize> + Clone, out: &mut [T]) {
    let m = part.clone().map(|z| scores[z]).fold(T::neg_infinity(), T::max);
    let mut total = T::zero();
    for z in part.clone() {
        let e = (scores[z] - m).exp();
        out[z] = e;
        total += e;
    }
    for z in part {
        out[z] /= total;
    }
}
