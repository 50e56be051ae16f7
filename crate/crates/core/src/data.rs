//! Datasets: MNIST IDX files, per-class subsets and the 3x3 pattern task.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Canonical MNIST file names inside a data directory.
pub const TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
pub const TRAIN_LABELS: &str = "train-labels-idx1-ubyte";
pub const TEST_IMAGES: &str = "t10k-images-idx3-ubyte";
pub const TEST_LABELS: &str = "t10k-labels-idx1-ubyte";

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<S> {
    pub images: Vec<Vec<S>>,
    pub labels: Vec<usize>,
    pub n_classes: usize,
}

impl<S: Scalar> Dataset<S> {
    pub fn new(images: Vec<Vec<S>>, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::Dimension {
                expected: images.len(),
                got: labels.len(),
            });
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::Format(format!("label {l} >= {n_classes} classes")));
        }
        Ok(Dataset {
            images,
            labels,
            n_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }
}

fn be_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| Error::Format("truncated IDX header".into()))
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Raw IDX images: `(rows, cols, pixel bytes)`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, Vec<Vec<u8>>)> {
    let magic = be_u32(bytes, 0)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::Format(format!("bad IDX image magic {magic:#010x}")));
    }
    let n = be_u32(bytes, 4)? as usize;
    let rows = be_u32(bytes, 8)? as usize;
    let cols = be_u32(bytes, 12)? as usize;
    let size = rows * cols;
    let body = &bytes[16..];
    if body.len() != n * size {
        return Err(Error::Format(format!(
            "IDX images: expected {} pixel bytes, found {}",
            n * size,
            body.len()
        )));
    }
    Ok((
        rows,
        cols,
        body.chunks(size.max(1))
            .take(n)
            .map(<[u8]>::to_vec)
            .collect(),
    ))
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let magic = be_u32(bytes, 0)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::Format(format!("bad IDX label magic {magic:#010x}")));
    }
    let n = be_u32(bytes, 4)? as usize;
    let body = &bytes[8..];
    if body.len() != n {
        return Err(Error::Format(format!(
            "IDX labels: expected {n} bytes, found {}",
            body.len()
        )));
    }
    Ok(body.to_vec())
}

pub fn encode_idx_images(rows: usize, cols: usize, images: &[Vec<u8>]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.len() * rows * cols);
    for v in [
        IDX_IMAGES_MAGIC,
        images.len() as u32,
        rows as u32,
        cols as u32,
    ] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    for img in images {
        assert_eq!(img.len(), rows * cols);
        out.extend_from_slice(img);
    }
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Loads an image/label file pair with pixels scaled to `[0, 1]`.
pub fn load_idx<S: Scalar>(images_path: &Path, labels_path: &Path) -> Result<Dataset<S>> {
    let (_, _, images) = parse_idx_images(&read(images_path)?)?;
    let labels = parse_idx_labels(&read(labels_path)?)?;
    if images.len() != labels.len() {
        return Err(Error::Format(format!(
            "{} images but {} labels",
            images.len(),
            labels.len()
        )));
    }
    let n_classes = labels
        .iter()
        .map(|&l| l as usize + 1)
        .max()
        .unwrap_or(0)
        .max(10);
    let scale = S::lit(255.0);
    let images = images
        .into_iter()
        .map(|img| img.into_iter().map(|p| S::lit(p as f64) / scale).collect())
        .collect();
    Dataset::new(
        images,
        labels.into_iter().map(usize::from).collect(),
        n_classes,
    )
}

/// Train and test splits from the canonical file names in `dir`.
pub fn load_mnist<S: Scalar>(dir: &Path) -> Result<(Dataset<S>, Dataset<S>)> {
    Ok((
        load_idx(&dir.join(TRAIN_IMAGES), &dir.join(TRAIN_LABELS))?,
        load_idx(&dir.join(TEST_IMAGES), &dir.join(TEST_LABELS))?,
    ))
}

/// First `per_class` examples of every class, in file order.
pub fn first_per_class<S: Scalar>(full: &Dataset<S>, per_class: usize) -> Result<Dataset<S>> {
    let mut taken = vec![0; full.n_classes];
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for (img, &l) in full.images.iter().zip(&full.labels) {
        if taken[l] < per_class {
            taken[l] += 1;
            images.push(img.clone());
            labels.push(l);
        }
    }
    if let Some(c) = taken.iter().position(|&t| t < per_class) {
        return Err(Error::Insufficient(format!(
            "class {c} has {} examples, {per_class} requested",
            taken[c]
        )));
    }
    Dataset::new(images, labels, full.n_classes)
}

/// MNIST/k-style subsets: the first `per_class_train` train examples and the
/// first `per_class_test` test examples of every class.
pub fn make_subset<S: Scalar>(
    train: &Dataset<S>,
    test: &Dataset<S>,
    per_class_train: usize,
    per_class_test: usize,
) -> Result<(Dataset<S>, Dataset<S>)> {
    Ok((
        first_per_class(train, per_class_train)?,
        first_per_class(test, per_class_test)?,
    ))
}

/// Two binary 3x3 images: class 0 is a vertical centre bar, class 1 a
/// horizontal one.
pub fn patterns_3x3<S: Scalar>() -> Dataset<S> {
    two_patterns(|_, c| c == 1, |r, _| r == 1)
}

/// Main diagonal (class 0) and anti-diagonal (class 1). Unlike the bars, the
/// 2x2 patches of these images are not closed under negation, so a 2x2
/// convolution can tell them apart.
pub fn diagonal_patterns_3x3<S: Scalar>() -> Dataset<S> {
    two_patterns(|r, c| r == c, |r, c| r + c == 2)
}

fn two_patterns<S: Scalar>(a: fn(usize, usize) -> bool, b: fn(usize, usize) -> bool) -> Dataset<S> {
    let draw = |on: fn(usize, usize) -> bool| -> Vec<S> {
        (0..9)
            .map(|i| {
                if on(i / 3, i % 3) {
                    S::one()
                } else {
                    -S::one()
                }
            })
            .collect()
    };
    Dataset {
        images: vec![draw(a), draw(b)],
        labels: vec![0, 1],
        n_classes: 2,
    }
}
