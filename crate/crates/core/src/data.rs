//! Dataset ingestion (IDX, CIFAR-10 binary, CSV), splits and synthetic
//! desk-scale generators. All loaders normalize pixel values to [0,1].

use std::fs::File;
use std::io::{BufReader, Read as _};
use std::path::Path;

use byteorder::{BigEndian, ReadBytesExt};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
const CIFAR_RECORD: usize = 3073;

/// An in-memory dataset of uniformly shaped samples with optional labels.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub samples: Vec<Tensor>,
    pub labels: Option<Vec<usize>>,
    pub name: String,
    pub num_classes: usize,
}

impl Dataset {
    pub fn new(samples: Vec<Tensor>, labels: Option<Vec<usize>>, name: &str) -> Result<Self> {
        if let Some(first) = samples.first() {
            let shape = first.shape().to_vec();
            for (i, s) in samples.iter().enumerate() {
                if s.shape() != shape.as_slice() {
                    return Err(Error::Dataset(format!(
                        "sample {i} has shape {:?}, expected {shape:?}",
                        s.shape()
                    )));
                }
            }
        }
        if let Some(l) = &labels {
            if l.len() != samples.len() {
                return Err(Error::Dataset(format!(
                    "{} labels for {} samples",
                    l.len(),
                    samples.len()
                )));
            }
        }
        let num_classes = labels
            .as_ref()
            .and_then(|l| l.iter().max().map(|m| m + 1))
            .unwrap_or(0);
        Ok(Dataset {
            samples,
            labels,
            name: name.to_string(),
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample_shape(&self) -> &[usize] {
        self.samples.first().map(|s| s.shape()).unwrap_or(&[])
    }

    /// Sub-dataset restricted to the given indices.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            labels: self
                .labels
                .as_ref()
                .map(|l| indices.iter().map(|&i| l[i]).collect()),
            name: self.name.clone(),
            num_classes: self.num_classes,
        }
    }
}

/// Reads the IDX image/label pair used by the MNIST family.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let mut img = BufReader::new(File::open(images_path)?);
    let magic = img.read_u32::<BigEndian>().map_err(|_| truncated(images_path, 0))?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::Format {
            path: images_path.display().to_string(),
            offset: 0,
            reason: format!("bad image magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}"),
        });
    }
    let count = img.read_u32::<BigEndian>().map_err(|_| truncated(images_path, 4))? as usize;
    let rows = img.read_u32::<BigEndian>().map_err(|_| truncated(images_path, 8))? as usize;
    let cols = img.read_u32::<BigEndian>().map_err(|_| truncated(images_path, 12))? as usize;
    let mut pixels = vec![0u8; count * rows * cols];
    img.read_exact(&mut pixels)
        .map_err(|_| truncated(images_path, 16))?;

    let mut lbl = BufReader::new(File::open(labels_path)?);
    let magic = lbl.read_u32::<BigEndian>().map_err(|_| truncated(labels_path, 0))?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::Format {
            path: labels_path.display().to_string(),
            offset: 0,
            reason: format!("bad label magic {magic:#010x}, expected {IDX_LABELS_MAGIC:#010x}"),
        });
    }
    let lcount = lbl.read_u32::<BigEndian>().map_err(|_| truncated(labels_path, 4))? as usize;
    if lcount != count {
        return Err(Error::Dataset(format!(
            "{count} images but {lcount} labels"
        )));
    }
    let mut labels = vec![0u8; lcount];
    lbl.read_exact(&mut labels)
        .map_err(|_| truncated(labels_path, 8))?;

    let samples = pixels
        .chunks(rows * cols)
        .map(|chunk| {
            Tensor::from_vec(
                &[1, rows, cols],
                chunk.iter().map(|&b| b as f64 / 255.0).collect(),
            )
            .unwrap()
        })
        .collect();
    Dataset::new(
        samples,
        Some(labels.into_iter().map(|b| b as usize).collect()),
        "idx",
    )
}

fn truncated(path: &Path, offset: u64) -> Error {
    Error::Format {
        path: path.display().to_string(),
        offset,
        reason: "truncated file".into(),
    }
}

/// Reads CIFAR-10 binary batches: 3073-byte records of label + 3x32x32 pixels.
pub fn load_cifar_binary(paths: &[&Path]) -> Result<Dataset> {
    let mut samples = Vec::new();
    let mut labels = Vec::new();
    for path in paths {
        let bytes = std::fs::read(path)?;
        if bytes.len() % CIFAR_RECORD != 0 {
            return Err(Error::Format {
                path: path.display().to_string(),
                offset: (bytes.len() - bytes.len() % CIFAR_RECORD) as u64,
                reason: format!("file length {} not a multiple of {CIFAR_RECORD}", bytes.len()),
            });
        }
        for rec in bytes.chunks(CIFAR_RECORD) {
            labels.push(rec[0] as usize);
            samples.push(
                Tensor::from_vec(
                    &[3, 32, 32],
                    rec[1..].iter().map(|&b| b as f64 / 255.0).collect(),
                )
                .unwrap(),
            );
        }
    }
    Dataset::new(samples, Some(labels), "cifar10")
}

/// Rectangular numeric CSV, one sample per row, optional label column.
pub fn load_csv(path: &Path, label_column: Option<usize>) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)?;
    let mut samples = Vec::new();
    let mut labels = Vec::new();
    let mut width = None;
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for (col, cell) in line.split(',').enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| {
                Error::Dataset(format!(
                    "non-numeric cell {:?} at line {}, column {}",
                    cell.trim(),
                    lineno + 1,
                    col + 1
                ))
            })?;
            row.push(v);
        }
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(Error::Dataset(format!(
                    "ragged row at line {}: {} columns, expected {w}",
                    lineno + 1,
                    row.len()
                )))
            }
            _ => {}
        }
        if let Some(lc) = label_column {
            if lc >= row.len() {
                return Err(Error::Dataset(format!(
                    "label column {lc} out of range for {}-column row",
                    row.len()
                )));
            }
            let label = row.remove(lc);
            labels.push(label as usize);
        }
        samples.push(Tensor::vector(&row));
    }
    if samples.is_empty() {
        return Err(Error::Dataset(format!(
            "{}: no data rows",
            path.display()
        )));
    }
    Dataset::new(
        samples,
        label_column.map(|_| labels),
        path.file_stem().and_then(|s| s.to_str()).unwrap_or("csv"),
    )
}

/// Deterministic shuffled partition into (train, val, test); stratified per
/// class when labels are present.
pub fn split(dataset: &Dataset, fractions: (f64, f64, f64), seed: u64) -> Result<(Dataset, Dataset, Dataset)> {
    let (ft, fv, fs) = fractions;
    if ft < 0.0 || fv < 0.0 || fs < 0.0 || (ft + fv + fs - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "split fractions {fractions:?} must be nonnegative and sum to 1"
        )));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let n = dataset.len();

    let groups: Vec<Vec<usize>> = match &dataset.labels {
        Some(labels) => {
            let k = dataset.num_classes.max(1);
            let mut g = vec![Vec::new(); k];
            for (i, &l) in labels.iter().enumerate() {
                g[l].push(i);
            }
            g
        }
        None => vec![(0..n).collect()],
    };

    let mut train = Vec::new();
    let mut val = Vec::new();
    let mut test = Vec::new();
    for mut group in groups {
        group.shuffle(&mut rng);
        let gn = group.len();
        let nt = (ft * gn as f64).round() as usize;
        let nv = (fv * gn as f64).round() as usize;
        let nt = nt.min(gn);
        let nv = nv.min(gn - nt);
        train.extend_from_slice(&group[..nt]);
        val.extend_from_slice(&group[nt..nt + nv]);
        test.extend_from_slice(&group[nt + nv..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    Ok((
        dataset.subset(&train),
        dataset.subset(&val),
        dataset.subset(&test),
    ))
}

/// Gaussian blobs with known labels: k clusters of dimension `dim`, centers
/// spaced on a scaled simplex-like grid, per-coordinate noise `spread`.
pub fn synth_blobs(n: usize, k: usize, dim: usize, spread: f64, seed: u64) -> Dataset {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, spread.max(0.0)).unwrap();
    // deterministic well-separated centers in the unit cube
    let mut centers = Vec::with_capacity(k);
    for c in 0..k {
        let mut center = vec![0.0; dim];
        for (d, v) in center.iter_mut().enumerate() {
            *v = 0.5 + 0.4 * ((c * dim + d) as f64 * 2.399_963).sin();
        }
        centers.push(center);
    }
    let mut samples = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % k;
        let data: Vec<f64> = centers[c]
            .iter()
            .map(|&v| {
                if spread > 0.0 {
                    v + noise.sample(&mut rng)
                } else {
                    v
                }
            })
            .collect();
        samples.push(Tensor::vector(&data));
        labels.push(c);
    }
    Dataset::new(samples, Some(labels), "blobs").unwrap()
}

/// Tiny grayscale images: each class is a bar pattern (horizontal or vertical
/// at a class-specific position) plus additive noise, clamped to [0,1].
pub fn synth_images(n: usize, pattern_classes: usize, size: usize, noise: f64, seed: u64) -> Dataset {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut samples = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % pattern_classes;
        let mut img = vec![0.1; size * size];
        let pos = (c / 2) % size;
        if c % 2 == 0 {
            for x in 0..size {
                img[pos * size + x] = 0.9;
            }
        } else {
            for y in 0..size {
                img[y * size + pos] = 0.9;
            }
        }
        if noise > 0.0 {
            for v in img.iter_mut() {
                *v = (*v + noise * (rng.random::<f64>() - 0.5)).clamp(0.0, 1.0);
            }
        }
        samples.push(Tensor::from_vec(&[1, size, size], img).unwrap());
        labels.push(c);
    }
    Dataset::new(samples, Some(labels), "bars").unwrap()
}
