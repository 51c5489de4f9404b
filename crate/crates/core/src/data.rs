//! Datasets: a deterministic synthetic generator and the IDX image format.

use std::fs;
use std::path::Path;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid dataset parameters: {0}")]
    Invalid(String),
    #[error("bad IDX magic number {0:#010x}")]
    BadMagic(u32),
    #[error("IDX length mismatch: {0}")]
    LengthMismatch(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

/// Row-major feature matrix with integer class labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    dims: usize,
    labels: Vec<usize>,
    n_classes: usize,
    pub split: Split,
}

impl Dataset {
    pub fn new(
        features: Vec<f64>,
        dims: usize,
        labels: Vec<usize>,
        n_classes: usize,
        split: Split,
    ) -> Result<Dataset, DataError> {
        if dims == 0 {
            return Err(DataError::Invalid("feature dimension must be positive".into()));
        }
        if features.len() != dims * labels.len() {
            return Err(DataError::Invalid(format!(
                "{} feature values do not fill {} rows of {dims}",
                features.len(),
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|l| **l >= n_classes) {
            return Err(DataError::Invalid(format!(
                "label {bad} out of range for {n_classes} classes"
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(DataError::Invalid("non-finite feature value".into()));
        }
        Ok(Dataset {
            features,
            dims,
            labels,
            n_classes,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dims..(i + 1) * self.dims]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Rows at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        let mut features = Vec::with_capacity(indices.len() * self.dims);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Dataset {
            features,
            dims: self.dims,
            labels,
            n_classes: self.n_classes,
            split: self.split,
        }
    }
}

/// Default distance of the class means from the origin.
pub const DEFAULT_RING_RADIUS: f64 = 2.8;
/// Default per-coordinate standard deviation of every blob.
pub const DEFAULT_BLOB_STD: f64 = 0.35;
pub const DEFAULT_PAIR_SHIFT: f64 = 0.0;

/// Gaussian blobs with means evenly spaced on a circle in the first two
/// coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    pub n_classes: usize,
    pub dims: usize,
    /// Fraction of training labels resampled uniformly at random.
    pub noise_frac: f64,
    pub radius: f64,
    pub std: f64,
    /// Moves classes `2k` and `2k+1` towards each other by this fraction
    /// of the even spacing, so that pairs are more alike than other
    /// neighbours. Zero gives evenly spaced means.
    pub pair_shift: f64,
}

impl SyntheticConfig {
    pub fn new(seed: u64, n_train: usize, n_test: usize, n_classes: usize, dims: usize, noise_frac: f64) -> Self {
        SyntheticConfig {
            seed,
            n_train,
            n_test,
            n_classes,
            dims,
            noise_frac,
            radius: DEFAULT_RING_RADIUS,
            std: DEFAULT_BLOB_STD,
            pair_shift: DEFAULT_PAIR_SHIFT,
        }
    }

    fn validate(&self) -> Result<(), DataError> {
        if self.n_classes < 3 {
            return Err(DataError::Invalid(format!(
                "need at least 3 classes, got {}",
                self.n_classes
            )));
        }
        if self.dims < 2 {
            return Err(DataError::Invalid(format!("need at least 2 dims, got {}", self.dims)));
        }
        if self.n_train == 0 || self.n_test == 0 {
            return Err(DataError::Invalid("train and test sizes must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.noise_frac) {
            return Err(DataError::Invalid(format!(
                "noise fraction must be in [0, 1), got {}",
                self.noise_frac
            )));
        }
        if !(0.0..0.5).contains(&self.pair_shift) {
            return Err(DataError::Invalid(format!(
                "pair shift must be in [0, 0.5), got {}",
                self.pair_shift
            )));
        }
        if !(self.std > 0.0) || !self.radius.is_finite() {
            return Err(DataError::Invalid("blob std must be positive and radius finite".into()));
        }
        Ok(())
    }

    pub fn class_mean(&self, class: usize) -> Vec<f64> {
        let shift = if class.is_multiple_of(2) && class + 1 < self.n_classes {
            self.pair_shift
        } else if class % 2 == 1 {
            -self.pair_shift
        } else {
            0.0
        };
        let theta = 2.0 * std::f64::consts::PI * (class as f64 + shift) / self.n_classes as f64;
        let mut m = vec![0.0; self.dims];
        m[0] = self.radius * theta.cos();
        m[1] = self.radius * theta.sin();
        m
    }
}

/// Output of [`gen_synthetic_detailed`].
#[derive(Clone, Debug)]
pub struct SyntheticData {
    pub train: Dataset,
    pub test: Dataset,
    /// Component each training row was drawn from.
    pub train_components: Vec<usize>,
    /// Training rows whose label was resampled, ascending.
    pub noisy_rows: Vec<usize>,
}

pub fn gen_synthetic(cfg: &SyntheticConfig) -> Result<(Dataset, Dataset), DataError> {
    let d = gen_synthetic_detailed(cfg)?;
    Ok((d.train, d.test))
}

pub fn gen_synthetic_detailed(cfg: &SyntheticConfig) -> Result<SyntheticData, DataError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = Normal::new(0.0, cfg.std).map_err(|e| DataError::Invalid(e.to_string()))?;
    let means: Vec<Vec<f64>> = (0..cfg.n_classes).map(|c| cfg.class_mean(c)).collect();

    let draw = |n: usize, rng: &mut ChaCha8Rng| {
        // Balanced classes in shuffled order.
        let mut comps: Vec<usize> = (0..n).map(|i| i % cfg.n_classes).collect();
        comps.shuffle(rng);
        let mut features = Vec::with_capacity(n * cfg.dims);
        for &c in &comps {
            features.extend(means[c].iter().map(|m| m + noise.sample(rng)));
        }
        (features, comps)
    };

    let (train_x, train_components) = draw(cfg.n_train, &mut rng);
    let (test_x, test_y) = draw(cfg.n_test, &mut rng);

    let n_noisy = (cfg.noise_frac * cfg.n_train as f64).floor() as usize;
    let mut noisy_rows = sample(&mut rng, cfg.n_train, n_noisy).into_vec();
    noisy_rows.sort_unstable();
    let mut train_y = train_components.clone();
    for &i in &noisy_rows {
        train_y[i] = rng.random_range(0..cfg.n_classes);
    }

    Ok(SyntheticData {
        train: Dataset::new(train_x, cfg.dims, train_y, cfg.n_classes, Split::Train)?,
        test: Dataset::new(test_x, cfg.dims, test_y, cfg.n_classes, Split::Test)?,
        train_components,
        noisy_rows,
    })
}

/// Stratified subsample: each class keeps `round(fraction * count)` rows,
/// chosen uniformly with a seeded RNG. Kept rows stay in their original order.
pub fn subsample(d: &Dataset, fraction: f64, seed: u64) -> Result<Dataset, DataError> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(DataError::Invalid(format!(
            "fraction must be in (0, 1], got {fraction}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut by_class = vec![Vec::new(); d.n_classes];
    for (i, &l) in d.labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let mut keep = Vec::new();
    for mut rows in by_class {
        let k = (fraction * rows.len() as f64).round() as usize;
        rows.shuffle(&mut rng);
        keep.extend_from_slice(&rows[..k.min(rows.len())]);
    }
    keep.sort_unstable();
    Ok(d.select(&keep))
}

/// Deterministic split of one dataset into train and test parts.
pub fn train_test_split(d: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset), DataError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(DataError::Invalid(format!(
            "test fraction must be in (0, 1), got {test_fraction}"
        )));
    }
    let mut idx: Vec<usize> = (0..d.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_test = ((d.len() as f64) * test_fraction).round() as usize;
    let (test_idx, train_idx) = idx.split_at(n_test);
    let mut train_idx = train_idx.to_vec();
    let mut test_idx = test_idx.to_vec();
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    let mut train = d.select(&train_idx);
    let mut test = d.select(&test_idx);
    train.split = Split::Train;
    test.split = Split::Test;
    Ok((train, test))
}

// ---------------------------------------------------------------------------
// IDX

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
const IDX_UBYTE: u8 = 0x08;

/// An unsigned-byte IDX array.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

/// Parses an unsigned-byte IDX file: 4-byte big-endian magic
/// `0x0000_08_NN` (NN = number of dimensions), NN big-endian u32 sizes,
/// then the raw bytes.
pub fn parse_idx(bytes: &[u8]) -> Result<IdxArray, DataError> {
    if bytes.len() < 4 {
        return Err(DataError::LengthMismatch(format!(
            "{} bytes is shorter than the IDX header",
            bytes.len()
        )));
    }
    let magic = u32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]);
    if bytes[0] != 0 || bytes[1] != 0 || bytes[2] != IDX_UBYTE || bytes[3] == 0 {
        return Err(DataError::BadMagic(magic));
    }
    let ndims = bytes[3] as usize;
    let header = 4 + 4 * ndims;
    if bytes.len() < header {
        return Err(DataError::LengthMismatch(format!(
            "header declares {ndims} dimensions but the file has {} bytes",
            bytes.len()
        )));
    }
    let dims: Vec<usize> = bytes[4..header]
        .chunks_exact(4)
        .map(|c| u32::from_be_bytes([c[0], c[1], c[2], c[3]]) as usize)
        .collect();
    let expected = dims.iter().product::<usize>();
    let body = &bytes[header..];
    if body.len() != expected {
        return Err(DataError::LengthMismatch(format!(
            "header {dims:?} implies {expected} data bytes, found {}",
            body.len()
        )));
    }
    Ok(IdxArray {
        dims,
        data: body.to_vec(),
    })
}

pub fn encode_idx(array: &IdxArray) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + 4 * array.dims.len() + array.data.len());
    out.extend_from_slice(&[0, 0, IDX_UBYTE, array.dims.len() as u8]);
    for d in &array.dims {
        out.extend_from_slice(&(*d as u32).to_be_bytes());
    }
    out.extend_from_slice(&array.data);
    out
}

fn read(path: &Path) -> Result<Vec<u8>, DataError> {
    fs::read(path).map_err(|source| DataError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Builds a dataset from an image file and a label file. Pixels are scaled
/// to `[0, 1]` and each image is flattened to one row. The class count is
/// `max(label) + 1`.
pub fn dataset_from_idx(images: &IdxArray, labels: &IdxArray, split: Split) -> Result<Dataset, DataError> {
    if images.dims.is_empty() || labels.dims.len() != 1 {
        return Err(DataError::Invalid(format!(
            "expected images with >= 1 dims and 1-d labels, got {:?} and {:?}",
            images.dims, labels.dims
        )));
    }
    let n = images.dims[0];
    if labels.dims[0] != n {
        return Err(DataError::LengthMismatch(format!(
            "{n} images but {} labels",
            labels.dims[0]
        )));
    }
    let dims = images.dims[1..].iter().product::<usize>().max(1);
    let features = images.data.iter().map(|b| *b as f64 / 255.0).collect();
    let y: Vec<usize> = labels.data.iter().map(|b| *b as usize).collect();
    let n_classes = y.iter().max().map_or(0, |m| m + 1);
    Dataset::new(features, dims, y, n_classes, split)
}

pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset, DataError> {
    let images = parse_idx(&read(images_path.as_ref())?)?;
    let labels = parse_idx(&read(labels_path.as_ref())?)?;
    if images.dims.len() < 2 {
        return Err(DataError::BadMagic(0x0800 | images.dims.len() as u32));
    }
    if labels.dims.len() != 1 {
        return Err(DataError::BadMagic(0x0800 | labels.dims.len() as u32));
    }
    dataset_from_idx(&images, &labels, Split::Train)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(noise: f64) -> SyntheticConfig {
        SyntheticConfig::new(7, 1000, 200, 10, 5, noise)
    }

    #[test]
    fn noiseless_labels_are_components() {
        let d = gen_synthetic_detailed(&cfg(0.0)).unwrap();
        assert_eq!(d.train.labels(), d.train_components.as_slice());
        assert!(d.noisy_rows.is_empty());
    }

    #[test]
    fn deterministic() {
        let a = gen_synthetic(&cfg(0.1)).unwrap();
        let b = gen_synthetic(&cfg(0.1)).unwrap();
        assert_eq!(a, b);
        let mut other = cfg(0.1);
        other.seed = 8;
        assert_ne!(gen_synthetic(&other).unwrap().0, a.0);
    }

    #[test]
    fn noise_count_is_floored() {
        let d = gen_synthetic_detailed(&cfg(0.1)).unwrap();
        assert_eq!(d.noisy_rows.len(), 100);
        let mut c = cfg(0.1);
        c.n_train = 1005;
        let d = gen_synthetic_detailed(&c).unwrap();
        assert_eq!(d.noisy_rows.len(), 100);
        // only the chosen rows may differ from their component
        for (i, (l, c)) in d.train.labels().iter().zip(&d.train_components).enumerate() {
            if l != c {
                assert!(d.noisy_rows.binary_search(&i).is_ok());
            }
        }
    }

    #[test]
    fn test_split_is_clean_and_balanced() {
        let d = gen_synthetic(&cfg(0.5)).unwrap().1;
        assert_eq!(d.split, Split::Test);
        assert_eq!(d.class_counts(), vec![20; 10]);
    }

    #[test]
    fn invalid_sizes() {
        let mut c = cfg(0.0);
        c.n_classes = 2;
        assert!(gen_synthetic(&c).is_err());
        let c = cfg(1.0);
        assert!(gen_synthetic(&c).is_err());
        let mut c = cfg(0.0);
        c.n_test = 0;
        assert!(gen_synthetic(&c).is_err());
    }

    #[test]
    fn subsample_examples() {
        let train = gen_synthetic(&cfg(0.0)).unwrap().0;
        let same = subsample(&train, 1.0, 3).unwrap();
        assert_eq!(same, train);
        let tenth = subsample(&train, 0.1, 3).unwrap();
        assert_eq!(tenth.class_counts(), vec![10; 10]);
        assert_eq!(tenth, subsample(&train, 0.1, 3).unwrap());
        assert!(subsample(&train, 0.0, 3).is_err());
        assert!(subsample(&train, 1.5, 3).is_err());
    }

    #[test]
    fn idx_roundtrip_and_errors() {
        let images = IdxArray {
            dims: vec![10, 28, 28],
            data: (0..10 * 28 * 28).map(|i| (i % 256) as u8).collect(),
        };
        let bytes = encode_idx(&images);
        assert_eq!(&bytes[..4], &IDX_IMAGES_MAGIC.to_be_bytes());
        let parsed = parse_idx(&bytes).unwrap();
        assert_eq!(parsed, images);

        let labels = IdxArray {
            dims: vec![10],
            data: (0..10).collect(),
        };
        let lbytes = encode_idx(&labels);
        assert_eq!(&lbytes[..4], &IDX_LABELS_MAGIC.to_be_bytes());

        let ds = dataset_from_idx(&parsed, &parse_idx(&lbytes).unwrap(), Split::Train).unwrap();
        assert_eq!(ds.len(), 10);
        assert_eq!(ds.dims(), 784);
        assert_eq!(ds.row(0)[255], 1.0);

        let truncated = &bytes[..bytes.len() - 1];
        assert!(matches!(parse_idx(truncated), Err(DataError::LengthMismatch(_))));
        let mut bad = bytes.clone();
        bad[2] = 0x0D;
        assert!(matches!(parse_idx(&bad), Err(DataError::BadMagic(_))));

        let short_labels = IdxArray {
            dims: vec![9],
            data: vec![0; 9],
        };
        assert!(matches!(
            dataset_from_idx(&parsed, &short_labels, Split::Train),
            Err(DataError::LengthMismatch(_))
        ));
    }
}
