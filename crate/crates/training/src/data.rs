//! Datasets: MNIST in IDX format, or a synthetic 28x28, 10-class stand-in.

use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use uepmm::Matrix;

use crate::error::{Error, Result};

pub const IMAGE_SIDE: usize = 28;
pub const FEATURES: usize = IMAGE_SIDE * IMAGE_SIDE;
pub const CLASSES: usize = 10;

const IMAGE_MAGIC: u32 = 2051;
const LABEL_MAGIC: u32 = 2049;

/// Row-major samples with pixel values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub features: Matrix<f64>,
    pub labels: Vec<u8>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn truncated(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        let idx: Vec<usize> = (0..n).collect();
        Dataset {
            features: self.features.select_rows(&idx),
            labels: self.labels[..n].to_vec(),
        }
    }

    pub fn batch(&self, indices: &[usize]) -> (Matrix<f64>, Vec<u8>) {
        (
            self.features.select_rows(indices),
            indices.iter().map(|&i| self.labels[i]).collect(),
        )
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

fn be_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_be_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
}

fn idx_err(path: &Path, kind: &'static str, reason: impl Into<String>) -> Error {
    Error::Idx {
        path: path.display().to_string(),
        kind,
        reason: reason.into(),
    }
}

pub fn parse_idx_images(bytes: &[u8], path: &Path) -> Result<Matrix<f64>> {
    if bytes.len() < 16 {
        return Err(idx_err(path, "image", "shorter than the 16-byte header"));
    }
    let magic = be_u32(bytes, 0);
    if magic != IMAGE_MAGIC {
        return Err(idx_err(path, "image", format!("magic {magic}, expected {IMAGE_MAGIC}")));
    }
    let (n, rows, cols) = (
        be_u32(bytes, 4) as usize,
        be_u32(bytes, 8) as usize,
        be_u32(bytes, 12) as usize,
    );
    let body = &bytes[16..];
    if body.len() != n * rows * cols {
        return Err(idx_err(
            path,
            "image",
            format!("{n} images of {rows}x{cols} need {} bytes, found {}", n * rows * cols, body.len()),
        ));
    }
    Ok(Matrix::from_vec(n, rows * cols, body.iter().map(|&b| b as f64 / 255.0).collect())?)
}

pub fn parse_idx_labels(bytes: &[u8], path: &Path) -> Result<Vec<u8>> {
    if bytes.len() < 8 {
        return Err(idx_err(path, "label", "shorter than the 8-byte header"));
    }
    let magic = be_u32(bytes, 0);
    if magic != LABEL_MAGIC {
        return Err(idx_err(path, "label", format!("magic {magic}, expected {LABEL_MAGIC}")));
    }
    let n = be_u32(bytes, 4) as usize;
    let body = &bytes[8..];
    if body.len() != n {
        return Err(idx_err(path, "label", format!("{n} labels declared, {} present", body.len())));
    }
    if let Some(bad) = body.iter().find(|&&b| b as usize >= CLASSES) {
        return Err(idx_err(path, "label", format!("label {bad} out of range")));
    }
    Ok(body.to_vec())
}

pub fn load_idx_pair(images: &Path, labels: &Path) -> Result<Dataset> {
    let features = parse_idx_images(&read(images)?, images)?;
    let labels_v = parse_idx_labels(&read(labels)?, labels)?;
    if features.rows() != labels_v.len() {
        return Err(Error::Shape(format!(
            "{} images but {} labels",
            features.rows(),
            labels_v.len()
        )));
    }
    Ok(Dataset {
        features,
        labels: labels_v,
    })
}

/// The four standard file names inside `dir`, training pair first.
pub fn mnist_paths(dir: &Path) -> [PathBuf; 4] {
    [
        dir.join("train-images-idx3-ubyte"),
        dir.join("train-labels-idx1-ubyte"),
        dir.join("t10k-images-idx3-ubyte"),
        dir.join("t10k-labels-idx1-ubyte"),
    ]
}

/// Training and test sets from an MNIST directory.
pub fn load_mnist(dir: &Path) -> Result<(Dataset, Dataset)> {
    let paths = mnist_paths(dir);
    if paths.iter().any(|p| !p.is_file()) {
        return Err(Error::MissingDataset {
            expected: paths.iter().map(|p| p.display().to_string()).collect(),
        });
    }
    Ok((load_idx_pair(&paths[0], &paths[1])?, load_idx_pair(&paths[2], &paths[3])?))
}

/// Parameters of the synthetic digit-like generator.
///
/// Every class owns a prototype image made of a few soft strokes. A sample
/// is its class prototype shifted by up to `max_shift` pixels, blended with
/// a random other prototype by a weight drawn from `[0, blend)`, scaled in
/// brightness and perturbed by Gaussian pixel noise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub seed: u64,
    #[serde(default = "default_blend")]
    pub blend: f64,
    #[serde(default = "default_noise")]
    pub noise: f64,
    #[serde(default = "default_shift")]
    pub max_shift: i64,
}

fn default_blend() -> f64 {
    0.3
}

fn default_noise() -> f64 {
    0.1
}

fn default_shift() -> i64 {
    1
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            seed: 7,
            blend: default_blend(),
            noise: default_noise(),
            max_shift: default_shift(),
        }
    }
}

impl SyntheticSpec {
    fn prototypes(&self) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        (0..CLASSES)
            .map(|_| {
                let mut img = vec![0.0; FEATURES];
                let strokes = rng.random_range(3..6);
                for _ in 0..strokes {
                    let (mut x, mut y) = (rng.random_range(7.0..21.0), rng.random_range(7.0..21.0));
                    let angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                    let len = rng.random_range(4..10);
                    for _ in 0..len {
                        stamp(&mut img, x, y, 1.3);
                        x = (x + angle.cos()).clamp(3.0, 24.0);
                        y = (y + angle.sin()).clamp(3.0, 24.0);
                    }
                }
                img.iter_mut().for_each(|v| *v = v.min(1.0));
                img
            })
            .collect()
    }

    /// `n` samples with labels cycling through the classes in random order.
    /// `split` separates independent draws (e.g. 0 for training, 1 for test)
    /// that share the same prototypes.
    pub fn generate(&self, n: usize, split: u64) -> Dataset {
        let protos = self.prototypes();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(split + 1);
        let noise = Normal::new(0.0, self.noise.max(0.0)).expect("finite noise");
        let mut data = Vec::with_capacity(n * FEATURES);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let c = rng.random_range(0..CLASSES);
            let other = (c + rng.random_range(1..CLASSES)) % CLASSES;
            let w = if self.blend > 0.0 { rng.random_range(0.0..self.blend) } else { 0.0 };
            let bright = rng.random_range(0.6..1.0);
            let s = self.max_shift;
            let (dx, dy) = if s > 0 {
                (rng.random_range(-s..=s), rng.random_range(-s..=s))
            } else {
                (0, 0)
            };
            for r in 0..IMAGE_SIDE as i64 {
                for col in 0..IMAGE_SIDE as i64 {
                    let (sr, sc) = (r - dy, col - dx);
                    let base = if (0..IMAGE_SIDE as i64).contains(&sr) && (0..IMAGE_SIDE as i64).contains(&sc) {
                        let k = (sr as usize) * IMAGE_SIDE + sc as usize;
                        (1.0 - w) * protos[c][k] + w * protos[other][k]
                    } else {
                        0.0
                    };
                    let v = bright * base + noise.sample(&mut rng);
                    data.push(v.clamp(0.0, 1.0));
                }
            }
            labels.push(c as u8);
        }
        Dataset {
            features: Matrix::from_vec(n, FEATURES, data).expect("sized buffer"),
            labels,
        }
    }
}

fn stamp(img: &mut [f64], cx: f64, cy: f64, sigma: f64) {
    let r = (3.0 * sigma).ceil() as i64;
    let (x0, y0) = (cx.round() as i64, cy.round() as i64);
    for y in (y0 - r).max(0)..=(y0 + r).min(IMAGE_SIDE as i64 - 1) {
        for x in (x0 - r).max(0)..=(x0 + r).min(IMAGE_SIDE as i64 - 1) {
            let d2 = (x as f64 - cx).powi(2) + (y as f64 - cy).powi(2);
            img[y as usize * IMAGE_SIDE + x as usize] += (-d2 / (2.0 * sigma * sigma)).exp();
        }
    }
}
