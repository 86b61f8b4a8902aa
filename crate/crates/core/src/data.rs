//! Datasets: the MNIST IDX format and seeded synthetic generators.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Environment variable naming the default dataset directory.
pub const DATA_DIR_ENV: &str = "DEEPPCR_DATA_DIR";

pub const MNIST_TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
pub const MNIST_TRAIN_LABELS: &str = "train-labels-idx1-ubyte";

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub samples: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub feature_dim: usize,
    pub class_count: usize,
}

impl Dataset {
    pub fn new(samples: Vec<Vec<f64>>, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        if samples.len() != labels.len() {
            return Err(Error::InvalidArgument(format!(
                "{} samples but {} labels",
                samples.len(),
                labels.len()
            )));
        }
        let feature_dim = samples.first().map_or(0, Vec::len);
        if samples.iter().any(|s| s.len() != feature_dim) {
            return Err(Error::InvalidArgument("samples differ in dimension".into()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::InvalidArgument(format!(
                "label {bad} >= class count {class_count}"
            )));
        }
        if samples.iter().flatten().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidArgument("features must lie in [0, 1]".into()));
        }
        Ok(Self {
            samples,
            labels,
            feature_dim,
            class_count,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// The first `n` samples.
    pub fn truncated(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        Dataset {
            samples: self.samples[..n].to_vec(),
            labels: self.labels[..n].to_vec(),
            feature_dim: self.feature_dim,
            class_count: self.class_count,
        }
    }
}

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    let chunk = bytes.get(offset..offset + 4).ok_or(Error::Truncated {
        needed: offset + 4,
        available: bytes.len(),
    })?;
    Ok(u32::from_be_bytes(chunk.try_into().expect("four bytes")))
}

fn check_magic(bytes: &[u8], expected: u32) -> Result<()> {
    let found = read_u32(bytes, 0)?;
    if found != expected {
        return Err(Error::BadMagic { found, expected });
    }
    Ok(())
}

/// Payload after `header` bytes, which must hold exactly `declared` bytes.
fn payload(bytes: &[u8], header: usize, declared: usize) -> Result<&[u8]> {
    let actual = bytes.len() - header;
    if actual < declared {
        return Err(Error::Truncated {
            needed: header + declared,
            available: bytes.len(),
        });
    }
    if actual > declared {
        return Err(Error::PayloadMismatch { declared, actual });
    }
    Ok(&bytes[header..])
}

/// Parses an IDX image file into row-major pixel vectors scaled to `[0, 1]`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<Vec<Vec<f64>>> {
    check_magic(bytes, IDX_IMAGES_MAGIC)?;
    let count = read_u32(bytes, 4)? as usize;
    let rows = read_u32(bytes, 8)? as usize;
    let cols = read_u32(bytes, 12)? as usize;
    let pixels = rows * cols;
    let data = payload(bytes, 16, count * pixels)?;
    if pixels == 0 {
        return Ok(vec![Vec::new(); count]);
    }
    Ok(data
        .chunks_exact(pixels)
        .map(|img| img.iter().map(|&p| f64::from(p) / 255.0).collect())
        .collect())
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    check_magic(bytes, IDX_LABELS_MAGIC)?;
    let count = read_u32(bytes, 4)? as usize;
    Ok(payload(bytes, 8, count)?
        .iter()
        .map(|&b| usize::from(b))
        .collect())
}

/// Serializes images as IDX (`rows * cols` must equal each sample's length).
/// Values are rounded to the nearest of the 256 pixel levels.
pub fn write_idx_images(samples: &[Vec<f64>], rows: usize, cols: usize) -> Result<Vec<u8>> {
    if samples.iter().any(|s| s.len() != rows * cols) {
        return Err(Error::InvalidArgument(
            "sample length differs from rows * cols".into(),
        ));
    }
    let mut out = Vec::with_capacity(16 + samples.len() * rows * cols);
    for v in [
        IDX_IMAGES_MAGIC,
        samples.len() as u32,
        rows as u32,
        cols as u32,
    ] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    for s in samples {
        out.extend(s.iter().map(|&p| (p.clamp(0.0, 1.0) * 255.0).round() as u8));
    }
    Ok(out)
}

pub fn write_idx_labels(labels: &[usize]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    for &l in labels {
        out.push(
            u8::try_from(l)
                .map_err(|_| Error::InvalidArgument(format!("label {l} does not fit a byte")))?,
        );
    }
    Ok(out)
}

/// `--data-dir` if given, else `$DEEPPCR_DATA_DIR`.
pub fn resolve_data_dir(flag: Option<&Path>) -> Option<PathBuf> {
    flag.map(Path::to_path_buf)
        .or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from))
}

/// Loads the MNIST training split from `dir`, keeping at most `limit` samples.
pub fn load_mnist(dir: &Path, limit: Option<usize>) -> Result<Dataset> {
    let images = parse_idx_images(&fs::read(dir.join(MNIST_TRAIN_IMAGES))?)?;
    let labels = parse_idx_labels(&fs::read(dir.join(MNIST_TRAIN_LABELS))?)?;
    let ds = Dataset::new(images, labels, 10)?;
    Ok(match limit {
        Some(n) => ds.truncated(n),
        None => ds,
    })
}

/// Gaussian clusters around random class centers, squashed into `[0, 1]`.
///
/// Centers are drawn uniformly in `[0.2, 0.8]` per feature and samples add
/// `N(0, 0.1²)` noise before clamping, which leaves classes well separated
/// for `feature_dim` in the tens or more.
pub fn synthetic_classification(
    n: usize,
    feature_dim: usize,
    class_count: usize,
    seed: u64,
) -> Result<Dataset> {
    if n == 0 || feature_dim == 0 || class_count == 0 {
        return Err(Error::InvalidArgument(
            "synthetic dataset needs n, feature_dim, class_count >= 1".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<Vec<f64>> = (0..class_count)
        .map(|_| {
            (0..feature_dim)
                .map(|_| rng.random_range(0.2..0.8))
                .collect()
        })
        .collect();
    let mut samples = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let label = rng.random_range(0..class_count);
        let sample = centers[label]
            .iter()
            .map(|&c| {
                let e: f64 = StandardNormal.sample(&mut rng);
                (c + 0.1 * e).clamp(0.0, 1.0)
            })
            .collect();
        samples.push(sample);
        labels.push(label);
    }
    Dataset::new(samples, labels, class_count)
}

/// `n` standard-normal vectors of dimension `dim`.
pub fn synthetic_gaussian(n: usize, dim: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n)
        .map(|_| (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect())
}
