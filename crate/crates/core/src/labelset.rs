use std::fmt;

use crate::{Error, Result};

/// Largest supported class count (the set is a `u64` bitmask).
pub const MAX_CLASSES: usize = 64;

/// A candidate label set over `[K] = {0, …, K-1}`.
///
/// Class indices are zero-based everywhere in this crate.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct PartialLabelSet {
    mask: u64,
    num_classes: u8,
}

impl PartialLabelSet {
    pub fn from_mask(mask: u64, num_classes: usize) -> Result<Self> {
        if num_classes == 0 || num_classes > MAX_CLASSES {
            return Err(Error::UnsupportedClassCount(num_classes));
        }
        if mask == 0 {
            return Err(Error::EmptyLabelSet);
        }
        if mask & !full_mask(num_classes) != 0 {
            let class = 63 - mask.leading_zeros() as usize;
            return Err(Error::ClassOutOfRange { class, num_classes });
        }
        Ok(Self {
            mask,
            num_classes: num_classes as u8,
        })
    }

    /// Builds a set from class indices. Duplicates are tolerated.
    pub fn from_labels(labels: impl IntoIterator<Item = usize>, num_classes: usize) -> Result<Self> {
        if num_classes == 0 || num_classes > MAX_CLASSES {
            return Err(Error::UnsupportedClassCount(num_classes));
        }
        let mut mask = 0u64;
        for class in labels {
            if class >= num_classes {
                return Err(Error::ClassOutOfRange { class, num_classes });
            }
            mask |= 1 << class;
        }
        Self::from_mask(mask, num_classes)
    }

    pub fn singleton(label: usize, num_classes: usize) -> Result<Self> {
        Self::from_labels([label], num_classes)
    }

    pub fn full(num_classes: usize) -> Result<Self> {
        Self::from_mask(full_mask(num_classes.min(MAX_CLASSES)), num_classes)
    }

    #[inline]
    pub fn mask(&self) -> u64 {
        self.mask
    }

    #[inline]
    pub fn num_classes(&self) -> usize {
        self.num_classes as usize
    }

    #[inline]
    pub fn contains(&self, class: usize) -> bool {
        class < self.num_classes() && self.mask >> class & 1 == 1
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.mask.count_ones() as usize
    }

    /// Always false; kept for API symmetry with collections.
    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn is_full(&self) -> bool {
        self.mask == full_mask(self.num_classes())
    }

    /// Candidate labels in increasing order.
    pub fn iter(&self) -> impl Iterator<Item = usize> + Clone + '_ {
        BitIter(self.mask)
    }

    /// Non-candidate labels in increasing order.
    pub fn complement(&self) -> impl Iterator<Item = usize> + Clone + '_ {
        BitIter(!self.mask & full_mask(self.num_classes()))
    }
}

pub(crate) fn full_mask(num_classes: usize) -> u64 {
    if num_classes >= 64 {
        u64::MAX
    } else {
        (1u64 << num_classes) - 1
    }
}

#[derive(Clone)]
struct BitIter(u64);

impl Iterator for BitIter {
    type Item = usize;

    fn next(&mut self) -> Option<usize> {
        if self.0 == 0 {
            return None;
        }
        let i = self.0.trailing_zeros() as usize;
        self.0 &= self.0 - 1;
        Some(i)
    }
}

impl fmt::Debug for PartialLabelSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

/// `|`-separated class indices, e.g. `0|2`.
impl fmt::Display for PartialLabelSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, c) in self.iter().enumerate() {
            if i > 0 {
                f.write_str("|")?;
            }
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn membership_and_complement() {
        let s = PartialLabelSet::from_labels([0, 2], 4).unwrap();
        assert!(s.contains(0) && s.contains(2) && !s.contains(1) && !s.contains(9));
        assert_eq!(s.iter().collect::<Vec<_>>(), vec![0, 2]);
        assert_eq!(s.complement().collect::<Vec<_>>(), vec![1, 3]);
        assert_eq!(s.len(), 2);
        assert_eq!(s.to_string(), "0|2");
    }

    #[test]
    fn duplicates_collapse() {
        let s = PartialLabelSet::from_labels([1, 1], 3).unwrap();
        assert_eq!(s.len(), 1);
    }

    #[test]
    fn rejects_empty_and_out_of_range() {
        assert!(matches!(
            PartialLabelSet::from_labels([], 3),
            Err(Error::EmptyLabelSet)
        ));
        assert!(matches!(
            PartialLabelSet::from_labels([3], 3),
            Err(Error::ClassOutOfRange { .. })
        ));
        assert!(PartialLabelSet::from_mask(0b1000, 3).is_err());
    }

    #[test]
    fn full_set() {
        let s = PartialLabelSet::full(64).unwrap();
        assert!(s.is_full());
        assert_eq!(s.complement().count(), 0);
        assert!(PartialLabelSet::full(3).unwrap().is_full());
    }
}
