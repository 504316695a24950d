//! Datasets, file formats and synthetic tasks.
//!
//! Class indices are zero-based everywhere, including on disk.
//!
//! # Partial-label CSV
//!
//! ```text
//! f0,f1,...,f{d-1},candidates[,true_label]
//! 0.5,1.25,0|2,0
//! ```
//!
//! `candidates` is a `|`-separated list of class indices (duplicates are
//! tolerated). The class count is one more than the largest index seen, unless
//! the caller supplies it. Features are written with 17 significant digits, so
//! a save/load round trip is exact.
//!
//! # IDX
//!
//! Big-endian header: magic `0x00000803` (images, then `n, rows, cols`) or
//! `0x00000801` (labels, then `n`), followed by raw `u8` data. Pixels are
//! scaled to `[0, 1]` by dividing by 255.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};

use crate::labelset::PartialLabelSet;
use crate::rng::{self, streams};
use crate::scalar::Scalar;
use crate::{Error, Result};

const IDX_IMAGES: u32 = 0x0000_0803;
const IDX_LABELS: u32 = 0x0000_0801;

/// Row-major `n × d` features with optional supervised labels and optional
/// candidate sets. When both are present every true label lies in its
/// candidate set.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<T> {
    features: Vec<T>,
    dim: usize,
    num_classes: usize,
    true_labels: Option<Vec<usize>>,
    partial_masks: Option<Vec<PartialLabelSet>>,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(
        features: Vec<T>,
        dim: usize,
        num_classes: usize,
        true_labels: Option<Vec<usize>>,
        partial_masks: Option<Vec<PartialLabelSet>>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("feature dimension must be positive"));
        }
        if num_classes == 0 {
            return Err(Error::UnsupportedClassCount(0));
        }
        if !features.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch {
                what: "feature matrix length vs dimension",
                expected: features.len() / dim * dim + dim,
                actual: features.len(),
            });
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("features"));
        }
        let n = features.len() / dim;
        if let Some(labels) = &true_labels {
            if labels.len() != n {
                return Err(Error::DimensionMismatch {
                    what: "true labels",
                    expected: n,
                    actual: labels.len(),
                });
            }
            if let Some(&bad) = labels.iter().find(|&&y| y >= num_classes) {
                return Err(Error::ClassOutOfRange {
                    class: bad,
                    num_classes,
                });
            }
        }
        if let Some(masks) = &partial_masks {
            if masks.len() != n {
                return Err(Error::DimensionMismatch {
                    what: "candidate sets",
                    expected: n,
                    actual: masks.len(),
                });
            }
            if let Some(m) = masks.iter().find(|m| m.num_classes() != num_classes) {
                return Err(Error::DimensionMismatch {
                    what: "candidate set classes",
                    expected: num_classes,
                    actual: m.num_classes(),
                });
            }
            if let Some(labels) = &true_labels {
                for (row, (m, &y)) in masks.iter().zip(labels).enumerate() {
                    if !m.contains(y) {
                        return Err(Error::LabelNotInCandidates { row, label: y });
                    }
                }
            }
        }
        Ok(Self {
            features,
            dim,
            num_classes,
            true_labels,
            partial_masks,
        })
    }

    pub fn len(&self) -> usize {
        self.features.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn features(&self) -> &[T] {
        &self.features
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn true_labels(&self) -> Option<&[usize]> {
        self.true_labels.as_deref()
    }

    pub fn partial_masks(&self) -> Option<&[PartialLabelSet]> {
        self.partial_masks.as_deref()
    }

    /// Replaces the candidate sets, re-checking them against the labels.
    pub fn with_partial_masks(self, masks: Vec<PartialLabelSet>) -> Result<Self> {
        Self::new(self.features, self.dim, self.num_classes, self.true_labels, Some(masks))
    }

    pub fn without_true_labels(mut self) -> Self {
        self.true_labels = None;
        self
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            features.extend_from_slice(self.row(i));
        }
        Self {
            features,
            dim: self.dim,
            num_classes: self.num_classes,
            true_labels: self.true_labels.as_ref().map(|l| indices.iter().map(|&i| l[i]).collect()),
            partial_masks: self.partial_masks.as_ref().map(|m| indices.iter().map(|&i| m[i]).collect()),
        }
    }

    /// The first `n` rows (or all of them).
    pub fn take(&self, n: usize) -> Self {
        let idx: Vec<usize> = (0..n.min(self.len())).collect();
        self.subset(&idx)
    }

    /// Shuffles the rows with the split stream of `seed` and puts the last
    /// `round(n · val_fraction)` of them in the validation part.
    pub fn split(&self, val_fraction: f64, seed: u64) -> Result<(Self, Self)> {
        if !(0.0..1.0).contains(&val_fraction) {
            return Err(Error::invalid(format!("val_fraction {val_fraction} outside [0, 1)")));
        }
        let n = self.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng::stream(seed, streams::SPLIT));
        let n_val = ((n as f64) * val_fraction).round() as usize;
        let (train, val) = order.split_at(n - n_val);
        Ok((self.subset(train), self.subset(val)))
    }

    /// Converts to another scalar type.
    pub fn cast<U: Scalar>(&self) -> Dataset<U> {
        Dataset {
            features: self.features.iter().map(|v| U::lit(v.as_f64())).collect(),
            dim: self.dim,
            num_classes: self.num_classes,
            true_labels: self.true_labels.clone(),
            partial_masks: self.partial_masks.clone(),
        }
    }
}

/// Per-feature z-scoring fitted on one dataset and applied to others.
/// Constant features are centered but not scaled.
#[derive(Clone, Debug, PartialEq)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit<T: Scalar>(ds: &Dataset<T>) -> Self {
        let d = ds.dim();
        let n = ds.len().max(1) as f64;
        let mut mean = vec![0.0; d];
        for i in 0..ds.len() {
            for (m, v) in mean.iter_mut().zip(ds.row(i)) {
                *m += v.as_f64();
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for i in 0..ds.len() {
            for ((s, v), m) in var.iter_mut().zip(ds.row(i)).zip(&mean) {
                *s += (v.as_f64() - m).powi(2);
            }
        }
        let std = var.into_iter().map(|s| (s / n).sqrt()).collect();
        Self { mean, std }
    }

    pub fn apply<T: Scalar>(&self, ds: &mut Dataset<T>) -> Result<()> {
        if ds.dim() != self.mean.len() {
            return Err(Error::DimensionMismatch {
                what: "standardizer dimension",
                expected: self.mean.len(),
                actual: ds.dim(),
            });
        }
        let d = ds.dim;
        for (j, v) in ds.features.iter_mut().enumerate() {
            let f = j % d;
            let s = if self.std[f] > 0.0 { self.std[f] } else { 1.0 };
            *v = T::lit((v.as_f64() - self.mean[f]) / s);
        }
        Ok(())
    }
}

fn be_u32(bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| Error::format("idx", format!("{what} header truncated")))
}

/// Decodes an IDX image/label pair already in memory.
pub fn parse_idx<T: Scalar>(images: &[u8], labels: &[u8]) -> Result<Dataset<T>> {
    let magic = be_u32(images, 0, "images")?;
    if magic != IDX_IMAGES {
        return Err(Error::format("idx", format!("bad image magic {magic:#010x}")));
    }
    let magic = be_u32(labels, 0, "labels")?;
    if magic != IDX_LABELS {
        return Err(Error::format("idx", format!("bad label magic {magic:#010x}")));
    }
    let n = be_u32(images, 4, "images")? as usize;
    let rows = be_u32(images, 8, "images")? as usize;
    let cols = be_u32(images, 12, "images")? as usize;
    let n_labels = be_u32(labels, 4, "labels")? as usize;
    if n != n_labels {
        return Err(Error::format("idx", format!("{n} images but {n_labels} labels")));
    }
    let d = rows * cols;
    let pixels = &images[16..];
    if pixels.len() != n * d {
        return Err(Error::format(
            "idx",
            format!("image data has {} bytes, header implies {}", pixels.len(), n * d),
        ));
    }
    let label_bytes = &labels[8..];
    if label_bytes.len() != n {
        return Err(Error::format(
            "idx",
            format!("label data has {} bytes, header implies {n}", label_bytes.len()),
        ));
    }
    let features = pixels.iter().map(|&b| T::lit(b as f64 / 255.0)).collect();
    let true_labels: Vec<usize> = label_bytes.iter().map(|&b| b as usize).collect();
    let k = true_labels.iter().max().map_or(1, |&m| m + 1);
    Dataset::new(features, d.max(1), k, Some(true_labels), None)
}

pub fn load_idx<T: Scalar>(images: impl AsRef<Path>, labels: impl AsRef<Path>) -> Result<Dataset<T>> {
    parse_idx(&fs::read(images)?, &fs::read(labels)?)
}

/// Encodes features in `[0, 1]` and labels as an IDX pair (inverse of
/// [`parse_idx`] up to byte quantization).
pub fn encode_idx<T: Scalar>(ds: &Dataset<T>, rows: usize, cols: usize) -> Result<(Vec<u8>, Vec<u8>)> {
    if rows * cols != ds.dim() {
        return Err(Error::DimensionMismatch {
            what: "image shape",
            expected: ds.dim(),
            actual: rows * cols,
        });
    }
    let labels = ds
        .true_labels()
        .ok_or_else(|| Error::invalid("IDX export needs true labels"))?;
    let mut img = Vec::with_capacity(16 + ds.features().len());
    for v in [IDX_IMAGES, ds.len() as u32, rows as u32, cols as u32] {
        img.extend_from_slice(&v.to_be_bytes());
    }
    img.extend(ds.features().iter().map(|v| (v.as_f64().clamp(0.0, 1.0) * 255.0).round() as u8));
    let mut lab = Vec::with_capacity(8 + labels.len());
    lab.extend_from_slice(&IDX_LABELS.to_be_bytes());
    lab.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    lab.extend(labels.iter().map(|&y| y as u8));
    Ok((img, lab))
}

/// Reads the partial-label CSV. `num_classes` overrides the inferred class
/// count (it must cover every index in the file).
pub fn read_partial_csv<T: Scalar, R: Read>(reader: R, num_classes: Option<usize>) -> Result<Dataset<T>> {
    let mut lines = BufReader::new(reader).lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::format("csv", "missing header"))??;
    let cols: Vec<&str> = header.trim_end_matches('\r').split(',').map(str::trim).collect();
    let cand_col = cols
        .iter()
        .position(|&c| c == "candidates")
        .ok_or_else(|| Error::format("csv", "header has no candidates column"))?;
    let d = cand_col;
    if d == 0 {
        return Err(Error::format("csv", "no feature columns"));
    }
    for (j, c) in cols[..d].iter().enumerate() {
        if *c != format!("f{j}") {
            return Err(Error::format("csv", format!("feature column {j} is named {c:?}")));
        }
    }
    let has_labels = match &cols[d + 1..] {
        [] => false,
        ["true_label"] => true,
        other => return Err(Error::format("csv", format!("unexpected trailing columns {other:?}"))),
    };
    let width = d + 1 + has_labels as usize;

    let mut features = Vec::new();
    let mut cand_lists: Vec<Vec<usize>> = Vec::new();
    let mut labels = Vec::new();
    let mut max_class = 0usize;
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let row = lineno + 2;
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if cells.len() != width {
            return Err(Error::format("csv", format!("line {row}: {} cells, expected {width}", cells.len())));
        }
        for c in &cells[..d] {
            let v: f64 = c
                .parse()
                .map_err(|_| Error::format("csv", format!("line {row}: non-numeric feature {c:?}")))?;
            if !v.is_finite() {
                return Err(Error::format("csv", format!("line {row}: non-finite feature")));
            }
            features.push(T::lit(v));
        }
        let cand = cells[d];
        if cand.is_empty() {
            return Err(Error::format("csv", format!("line {row}: empty candidate cell")));
        }
        let list = cand
            .split('|')
            .map(|s| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::format("csv", format!("line {row}: bad class index {s:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        max_class = list.iter().copied().fold(max_class, usize::max);
        cand_lists.push(list);
        if has_labels {
            let c = cells[d + 1];
            let y: usize = c
                .parse()
                .map_err(|_| Error::format("csv", format!("line {row}: bad true label {c:?}")))?;
            max_class = max_class.max(y);
            labels.push(y);
        }
    }
    let k = match num_classes {
        Some(k) if k <= max_class && !cand_lists.is_empty() => {
            return Err(Error::ClassOutOfRange {
                class: max_class,
                num_classes: k,
            })
        }
        Some(k) => k,
        None => max_class + 1,
    };
    let masks = cand_lists
        .into_iter()
        .map(|l| PartialLabelSet::from_labels(l, k))
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(features, d, k, has_labels.then_some(labels), Some(masks))
}

pub fn load_partial_csv<T: Scalar>(path: impl AsRef<Path>, num_classes: Option<usize>) -> Result<Dataset<T>> {
    read_partial_csv(fs::File::open(path)?, num_classes)
}

pub fn write_partial_csv<T: Scalar, W: Write>(ds: &Dataset<T>, writer: W) -> Result<()> {
    let masks = ds
        .partial_masks()
        .ok_or_else(|| Error::invalid("dataset has no candidate sets to write"))?;
    let mut w = BufWriter::new(writer);
    let mut header: Vec<String> = (0..ds.dim()).map(|j| format!("f{j}")).collect();
    header.push("candidates".into());
    if ds.true_labels().is_some() {
        header.push("true_label".into());
    }
    writeln!(w, "{}", header.join(","))?;
    let mut line = String::new();
    for i in 0..ds.len() {
        line.clear();
        for v in ds.row(i) {
            line.push_str(&format!("{:.16e},", v.as_f64()));
        }
        let cands: Vec<String> = masks[i].iter().map(|z| z.to_string()).collect();
        line.push_str(&cands.join("|"));
        if let Some(labels) = ds.true_labels() {
            line.push_str(&format!(",{}", labels[i]));
        }
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_partial_csv<T: Scalar>(ds: &Dataset<T>, path: impl AsRef<Path>) -> Result<()> {
    write_partial_csv(ds, fs::File::create(path)?)
}

/// Vertices of a regular simplex with `k` vertices and unit circumradius,
/// embedded in the first `k − 1` of `d` coordinates.
pub fn simplex_vertices(k: usize, d: usize) -> Result<Vec<Vec<f64>>> {
    if k < 2 {
        return Err(Error::UnsupportedClassCount(k));
    }
    if d < k - 1 {
        return Err(Error::invalid(format!("dimension {d} cannot hold a {k}-class simplex (need ≥ {})", k - 1)));
    }
    // Centered basis vectors e_i − 1/k span the (k−1)-dim simplex subspace;
    // Gram–Schmidt on the first k−1 gives coordinates for all k vertices.
    let centered: Vec<Vec<f64>> = (0..k)
        .map(|i| (0..k).map(|j| if i == j { 1.0 } else { 0.0 } - 1.0 / k as f64).collect())
        .collect();
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(k - 1);
    for v in centered.iter().take(k - 1) {
        let mut u = v.clone();
        for b in &basis {
            let dot: f64 = u.iter().zip(b).map(|(x, y)| x * y).sum();
            u.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
        }
        let norm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        u.iter_mut().for_each(|x| *x /= norm);
        basis.push(u);
    }
    let radius = ((k - 1) as f64 / k as f64).sqrt();
    Ok(centered
        .iter()
        .map(|v| {
            let mut p: Vec<f64> = basis
                .iter()
                .map(|b| v.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / radius)
                .collect();
            p.resize(d, 0.0);
            p
        })
        .collect())
}

/// Balanced Gaussian classification task: class means at
/// `separation · simplex_vertices(k, d)` and isotropic noise `sigma`. Labels
/// cycle through the classes before the rows are shuffled, so class counts
/// differ by at most one.
pub fn make_gaussian_task<T: Scalar>(k: usize, d: usize, n: usize, separation: f64, sigma: f64, seed: u64) -> Result<Dataset<T>> {
    if !(separation.is_finite() && separation >= 0.0) || !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::invalid("separation and sigma must be finite and non-negative"));
    }
    let means = simplex_vertices(k, d)?;
    let mut rng = rng::stream(seed, streams::GAUSSIAN);
    let mut labels: Vec<usize> = (0..n).map(|i| i % k).collect();
    labels.shuffle(&mut rng);
    let mut features = Vec::with_capacity(n * d);
    for &y in &labels {
        for mu in &means[y] {
            let e: f64 = StandardNormal.sample(&mut rng);
            features.push(T::lit(separation * mu + sigma * e));
        }
    }
    Dataset::new(features, d, k, Some(labels), None)
}
