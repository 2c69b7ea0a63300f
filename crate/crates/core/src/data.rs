//! Datasets: IDX ingestion, synthetic generators and class-biased splits.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Environment variable naming the directory that holds the MNIST IDX files.
pub const DATA_DIR_ENV: &str = "REBASIN_DATA_DIR";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Feature rows with integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T = f32> {
    features: Array2<T>,
    labels: Vec<usize>,
    num_classes: usize,
    pub split: Split,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(
        features: Array2<T>,
        labels: Vec<usize>,
        num_classes: usize,
        split: Split,
    ) -> Result<Self> {
        if features.nrows() != labels.len() {
            return Err(Error::invalid(format!(
                "{} feature rows but {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::invalid(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        Ok(Dataset {
            features,
            labels,
            num_classes,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn features(&self) -> ArrayView2<'_, T> {
        self.features.view()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Rows selected by `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Self {
        Dataset {
            features: self.features.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
            split: self.split,
        }
    }

    /// The first `n` rows (or all of them if fewer).
    pub fn head(&self, n: usize) -> Self {
        let n = n.min(self.len());
        self.select(&(0..n).collect::<Vec<_>>())
    }

    /// A seeded random subset holding `round(frac * n)` rows, in original order.
    pub fn sample_fraction(&self, frac: f64, seed: u64) -> Result<Self> {
        if !(frac > 0.0 && frac <= 1.0) {
            return Err(Error::invalid(format!("fraction {frac} outside (0, 1]")));
        }
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        idx.truncate((frac * self.len() as f64).round() as usize);
        idx.sort_unstable();
        Ok(self.select(&idx))
    }

    pub fn cast<U: Scalar>(&self) -> Dataset<U> {
        Dataset {
            features: self.features.mapv(|v| U::from_f64(v.to_f64())),
            labels: self.labels.clone(),
            num_classes: self.num_classes,
            split: self.split,
        }
    }
}

fn read_u32_be(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Parse {
            path: path.to_path_buf(),
            offset: offset as u64,
            message: format!("truncated header: need 4 bytes, file has {}", bytes.len()),
        })
}

fn check_magic(bytes: &[u8], expected: u32, path: &Path) -> Result<()> {
    let found = read_u32_be(bytes, 0, path)?;
    if found != expected {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            offset: 0,
            message: format!("bad magic: expected {expected:#010x}, found {found:#010x}"),
        });
    }
    Ok(())
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Parses an IDX image file (magic `0x803`) into `n x (rows*cols)` features
/// scaled to `[0, 1]`.
pub fn parse_idx_images(bytes: &[u8], path: &Path) -> Result<Array2<f32>> {
    check_magic(bytes, IDX_IMAGES_MAGIC, path)?;
    let n = read_u32_be(bytes, 4, path)? as usize;
    let rows = read_u32_be(bytes, 8, path)? as usize;
    let cols = read_u32_be(bytes, 12, path)? as usize;
    let dim = rows * cols;
    let body = &bytes[16..];
    if body.len() < n * dim {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            offset: (16 + body.len()) as u64,
            message: format!(
                "truncated pixel data: header promises {n} images of {rows}x{cols} ({} bytes), found {}",
                n * dim,
                body.len()
            ),
        });
    }
    let pixels: Vec<f32> = body[..n * dim].iter().map(|&p| p as f32 / 255.0).collect();
    Ok(Array2::from_shape_vec((n, dim), pixels).expect("length checked"))
}

/// Parses an IDX label file (magic `0x801`).
pub fn parse_idx_labels(bytes: &[u8], path: &Path) -> Result<Vec<usize>> {
    check_magic(bytes, IDX_LABELS_MAGIC, path)?;
    let n = read_u32_be(bytes, 4, path)? as usize;
    let body = &bytes[8..];
    if body.len() < n {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            offset: (8 + body.len()) as u64,
            message: format!("truncated labels: header promises {n}, found {}", body.len()),
        });
    }
    Ok(body[..n].iter().map(|&l| l as usize).collect())
}

/// Loads an image/label IDX pair. The class count is `max(label) + 1`, but
/// never below 10 so MNIST subsets keep a ten-way output.
pub fn load_idx(images_path: &Path, labels_path: &Path, split: Split) -> Result<Dataset> {
    let features = parse_idx_images(&read_file(images_path)?, images_path)?;
    let labels = parse_idx_labels(&read_file(labels_path)?, labels_path)?;
    if features.nrows() != labels.len() {
        return Err(Error::invalid(format!(
            "{} has {} images but {} has {} labels",
            images_path.display(),
            features.nrows(),
            labels_path.display(),
            labels.len()
        )));
    }
    let num_classes = labels.iter().max().map_or(10, |m| (m + 1).max(10));
    Dataset::new(features, labels, num_classes, split)
}

/// Train and test splits loaded from the standard MNIST file names in `dir`.
pub fn load_mnist(dir: &Path) -> Result<(Dataset, Dataset)> {
    let train = load_idx(
        &dir.join("train-images-idx3-ubyte"),
        &dir.join("train-labels-idx1-ubyte"),
        Split::Train,
    )?;
    let test = load_idx(
        &dir.join("t10k-images-idx3-ubyte"),
        &dir.join("t10k-labels-idx1-ubyte"),
        Split::Test,
    )?;
    Ok((train, test))
}

/// `$REBASIN_DATA_DIR` if set, otherwise `fallback`.
pub fn data_dir_or(fallback: impl Into<PathBuf>) -> PathBuf {
    std::env::var_os(DATA_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| fallback.into())
}

/// Label rule of the two-dimensional quadrant task: positive exactly when
/// `x1 < 0` and `x2 > 0`.
pub fn quadrant_label(x1: f64, x2: f64) -> usize {
    usize::from(x1 < 0.0 && x2 > 0.0)
}

/// `n` points uniform on `[-1, 1]^2`, labelled by [`quadrant_label`].
pub fn gen_quadrant_dataset<T: Scalar>(n: usize, seed: u64) -> Result<Dataset<T>> {
    if n == 0 {
        return Err(Error::invalid("quadrant dataset needs n > 0"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = Array2::zeros((n, 2));
    let mut labels = Vec::with_capacity(n);
    for mut row in features.rows_mut() {
        let x1: f64 = rng.random_range(-1.0..=1.0);
        let x2: f64 = rng.random_range(-1.0..=1.0);
        row[0] = T::from_f64(x1);
        row[1] = T::from_f64(x2);
        labels.push(quadrant_label(x1, x2));
    }
    Dataset::new(features, labels, 2, Split::Train)
}

/// Isotropic Gaussian blobs: `classes` centers drawn from `N(0, spread²)` in
/// `dim` dimensions, unit-variance points around them, labels cycling over
/// the classes.
pub fn gen_blobs<T: Scalar>(
    n: usize,
    classes: usize,
    dim: usize,
    spread: f64,
    seed: u64,
) -> Result<Dataset<T>> {
    if n == 0 || classes == 0 || dim == 0 {
        return Err(Error::invalid("blobs need n, classes and dim > 0"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let center_dist = Normal::new(0.0, spread).map_err(|e| Error::invalid(e.to_string()))?;
    let centers = Array2::from_shape_fn((classes, dim), |_| center_dist.sample(&mut rng));
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    let features = Array2::from_shape_fn((n, dim), |(i, j)| {
        T::from_f64(centers[[labels[i], j]] + noise.sample(&mut rng))
    });
    Dataset::new(features, labels, classes, Split::Train)
}

/// Splits `data` into two disjoint parts biased by class: part A receives the
/// first `round(frac * count)` rows of every class below `class_cut` and the
/// first `round((1 - frac) * count)` rows of every other class; part B gets the
/// remainder. Both parts keep the original row order.
pub fn split_dataset_biased<T: Scalar>(
    data: &Dataset<T>,
    class_cut: usize,
    frac: f64,
) -> Result<(Dataset<T>, Dataset<T>)> {
    if !(frac > 0.0 && frac < 1.0) {
        return Err(Error::invalid(format!("split fraction {frac} outside (0, 1)")));
    }
    let mut per_class = vec![0usize; data.num_classes()];
    for &l in data.labels() {
        per_class[l] += 1;
    }
    let quota: Vec<usize> = per_class
        .iter()
        .enumerate()
        .map(|(c, &count)| {
            let share = if c < class_cut { frac } else { 1.0 - frac };
            (share * count as f64).round() as usize
        })
        .collect();
    let mut taken = vec![0usize; data.num_classes()];
    let (mut a, mut b) = (Vec::new(), Vec::new());
    for (i, &l) in data.labels().iter().enumerate() {
        if taken[l] < quota[l] {
            taken[l] += 1;
            a.push(i);
        } else {
            b.push(i);
        }
    }
    Ok((data.select(&a), data.select(&b)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn idx_images(n: u32, rows: u32, cols: u32, pixels: &[u8]) -> Vec<u8> {
        let mut v = Vec::new();
        for x in [IDX_IMAGES_MAGIC, n, rows, cols] {
            v.extend_from_slice(&x.to_be_bytes());
        }
        v.extend_from_slice(pixels);
        v
    }

    #[test]
    fn single_zero_image() {
        let bytes = idx_images(1, 28, 28, &[0u8; 784]);
        let x = parse_idx_images(&bytes, Path::new("img")).unwrap();
        assert_eq!(x.dim(), (1, 784));
        assert!(x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn pixels_scale_to_unit_interval() {
        let bytes = idx_images(1, 1, 3, &[0, 51, 255]);
        let x = parse_idx_images(&bytes, Path::new("img")).unwrap();
        assert_eq!(x.row(0).to_vec(), vec![0.0, 0.2, 1.0]);
    }

    #[test]
    fn wrong_magic_names_both_values() {
        let mut bytes = idx_images(1, 1, 1, &[0]);
        bytes[3] = 0x01;
        let err = parse_idx_images(&bytes, Path::new("img")).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("0x00000803"), "{msg}");
        assert!(msg.contains("0x00000801"), "{msg}");
    }

    #[test]
    fn truncated_files_report_offsets() {
        let bytes = idx_images(2, 2, 2, &[1, 2, 3]);
        match parse_idx_images(&bytes, Path::new("img")) {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 19),
            other => panic!("expected parse error, got {other:?}"),
        }
        match parse_idx_images(&bytes[..6], Path::new("img")) {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 4),
            other => panic!("expected parse error, got {other:?}"),
        }
        let mut labels = IDX_LABELS_MAGIC.to_be_bytes().to_vec();
        labels.extend_from_slice(&5u32.to_be_bytes());
        labels.extend_from_slice(&[1, 2]);
        assert!(matches!(
            parse_idx_labels(&labels, Path::new("lbl")),
            Err(Error::Parse { offset: 10, .. })
        ));
    }

    #[test]
    fn load_idx_from_files() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("img");
        let lbl = dir.path().join("lbl");
        fs::write(&img, idx_images(2, 1, 2, &[0, 255, 255, 0])).unwrap();
        let mut labels = IDX_LABELS_MAGIC.to_be_bytes().to_vec();
        labels.extend_from_slice(&2u32.to_be_bytes());
        labels.extend_from_slice(&[3, 7]);
        fs::write(&lbl, labels).unwrap();
        let d = load_idx(&img, &lbl, Split::Test).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.labels(), &[3, 7]);
        assert_eq!(d.num_classes(), 10);

        let missing = load_idx(&dir.path().join("nope"), &lbl, Split::Test).unwrap_err();
        assert!(missing.to_string().contains("nope"));
    }

    #[test]
    fn quadrant_labels_and_balance() {
        assert_eq!(quadrant_label(-0.5, 0.5), 1);
        assert_eq!(quadrant_label(0.5, 0.5), 0);
        let d = gen_quadrant_dataset::<f64>(100_000, 3).unwrap();
        let frac = d.labels().iter().sum::<usize>() as f64 / d.len() as f64;
        assert!((0.24..=0.26).contains(&frac), "{frac}");
        assert_eq!(d, gen_quadrant_dataset::<f64>(100_000, 3).unwrap());
        assert!(gen_quadrant_dataset::<f64>(0, 3).is_err());
    }

    #[test]
    fn biased_split_semantics() {
        let d = gen_blobs::<f32>(1000, 2, 3, 3.0, 1).unwrap();
        let (a, b) = split_dataset_biased(&d, 1, 0.2).unwrap();
        let count = |ds: &Dataset, c| ds.labels().iter().filter(|&&l| l == c).count();
        assert_eq!(count(&a, 0), 100);
        assert_eq!(count(&a, 1), 400);
        assert_eq!(a.len() + b.len(), d.len());

        let (h1, h2) = split_dataset_biased(&d, 1, 0.5).unwrap();
        assert_eq!(h1.len(), 500);
        assert_eq!(h2.len(), 500);
        assert!(split_dataset_biased(&d, 1, 1.0).is_err());
    }

    #[test]
    fn biased_split_reconstructs_rows() {
        let d = gen_blobs::<f32>(257, 5, 4, 2.0, 9).unwrap();
        let (a, b) = split_dataset_biased(&d, 2, 0.3).unwrap();
        let key = |ds: &Dataset| {
            let mut rows: Vec<(Vec<u32>, usize)> = ds
                .features()
                .rows()
                .into_iter()
                .zip(ds.labels())
                .map(|(r, &l)| (r.iter().map(|v| v.to_bits()).collect(), l))
                .collect();
            rows.sort();
            rows
        };
        let mut union = key(&a);
        union.extend(key(&b));
        union.sort();
        assert_eq!(union, key(&d));
    }

    #[test]
    fn dataset_validation() {
        assert!(Dataset::new(Array2::<f32>::zeros((2, 1)), vec![0], 2, Split::Train).is_err());
        assert!(Dataset::new(Array2::<f32>::zeros((1, 1)), vec![2], 2, Split::Train).is_err());
    }
}
