//! MNIST-format dataset loading and the train / validation / pool split.
//!
//! IDX layout (all integers big-endian):
//!
//! ```text
//! images: magic 0x00000803 | n | rows | cols | n*rows*cols unsigned bytes
//! labels: magic 0x00000801 | n | n unsigned bytes
//! ```

use std::fs;
use std::path::Path;

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::DataError;
use crate::pool::PoolState;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

pub const TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
pub const TRAIN_LABELS: &str = "train-labels-idx1-ubyte";
pub const TEST_IMAGES: &str = "t10k-images-idx3-ubyte";
pub const TEST_LABELS: &str = "t10k-labels-idx1-ubyte";

/// Images decoded from an IDX rank-3 file, intensities in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RawImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<f32>,
}

/// A labelled image dataset. Images are stored row-major, one
/// `height * width` block per item.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSet {
    pixels: Vec<f32>,
    labels: Vec<u8>,
    height: usize,
    width: usize,
    num_classes: usize,
}

impl ImageSet {
    pub fn new(
        images: RawImages,
        labels: Vec<u8>,
        num_classes: usize,
    ) -> Result<Self, DataError> {
        if images.count != labels.len() {
            return Err(DataError::CountMismatch {
                images: images.count,
                labels: labels.len(),
            });
        }
        if let Some((index, &label)) = labels
            .iter()
            .enumerate()
            .find(|(_, &l)| l as usize >= num_classes)
        {
            return Err(DataError::LabelOutOfRange {
                index,
                label,
                num_classes,
            });
        }
        debug_assert!(images.pixels.iter().all(|p| (0.0..=1.0).contains(p)));
        Ok(Self {
            pixels: images.pixels,
            labels,
            height: images.rows,
            width: images.cols,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn image_len(&self) -> usize {
        self.height * self.width
    }

    pub fn image(&self, index: usize) -> &[f32] {
        let len = self.image_len();
        &self.pixels[index * len..(index + 1) * len]
    }

    pub fn label(&self, index: usize) -> u8 {
        self.labels[index]
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    /// Copies the selected images into one contiguous batch.
    pub fn gather(&self, indices: &[usize]) -> Vec<f32> {
        let mut out = Vec::with_capacity(indices.len() * self.image_len());
        for &i in indices {
            out.extend_from_slice(self.image(i));
        }
        out
    }

    pub fn gather_labels(&self, indices: &[usize]) -> Vec<u8> {
        indices.iter().map(|&i| self.labels[i]).collect()
    }

    /// Number of examples per class.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.labels {
            counts[l as usize] += 1;
        }
        counts
    }

    /// Restricts the dataset to `indices`, keeping their order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            pixels: self.gather(indices),
            labels: self.gather_labels(indices),
            height: self.height,
            width: self.width,
            num_classes: self.num_classes,
        }
    }
}

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32, DataError> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or(DataError::Truncated {
            expected: offset + 4,
            found: bytes.len(),
        })
}

fn check_magic(bytes: &[u8], expected: u32) -> Result<(), DataError> {
    let found = read_u32(bytes, 0)?;
    if found != expected {
        return Err(DataError::BadMagic { expected, found });
    }
    Ok(())
}

/// Decodes an IDX rank-3 unsigned-byte image file, scaling bytes by 1/255.
pub fn parse_idx_images(bytes: &[u8]) -> Result<RawImages, DataError> {
    check_magic(bytes, IMAGES_MAGIC)?;
    let count = read_u32(bytes, 4)? as usize;
    let rows = read_u32(bytes, 8)? as usize;
    let cols = read_u32(bytes, 12)? as usize;
    let expected = 16 + count * rows * cols;
    if bytes.len() < expected {
        return Err(DataError::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    let pixels = bytes[16..expected]
        .iter()
        .map(|&b| b as f32 / 255.0)
        .collect();
    Ok(RawImages {
        count,
        rows,
        cols,
        pixels,
    })
}

/// Decodes an IDX rank-1 unsigned-byte label file.
pub fn parse_idx_labels(bytes: &[u8], num_classes: usize) -> Result<Vec<u8>, DataError> {
    check_magic(bytes, LABELS_MAGIC)?;
    let count = read_u32(bytes, 4)? as usize;
    let expected = 8 + count;
    if bytes.len() < expected {
        return Err(DataError::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    let labels = bytes[8..expected].to_vec();
    if let Some((index, &label)) = labels
        .iter()
        .enumerate()
        .find(|(_, &l)| l as usize >= num_classes)
    {
        return Err(DataError::LabelOutOfRange {
            index,
            label,
            num_classes,
        });
    }
    Ok(labels)
}

/// Encodes images back into IDX bytes. Intensities are rounded to the
/// nearest byte, so images loaded from IDX round-trip exactly.
pub fn encode_idx_images(images: &RawImages) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.pixels.len());
    for v in [
        IMAGES_MAGIC,
        images.count as u32,
        images.rows as u32,
        images.cols as u32,
    ] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend(
        images
            .pixels
            .iter()
            .map(|&p| (p.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

fn read_file(path: &Path) -> Result<Vec<u8>, DataError> {
    fs::read(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_idx_images(path: impl AsRef<Path>) -> Result<RawImages, DataError> {
    parse_idx_images(&read_file(path.as_ref())?)
}

pub fn load_idx_labels(path: impl AsRef<Path>, num_classes: usize) -> Result<Vec<u8>, DataError> {
    parse_idx_labels(&read_file(path.as_ref())?, num_classes)
}

/// Loads the canonical four MNIST files from `dir` as `(train, test)`.
pub fn load_mnist_dir(dir: impl AsRef<Path>) -> Result<(ImageSet, ImageSet), DataError> {
    let dir = dir.as_ref();
    let train = ImageSet::new(
        load_idx_images(dir.join(TRAIN_IMAGES))?,
        load_idx_labels(dir.join(TRAIN_LABELS), 10)?,
        10,
    )?;
    let test = ImageSet::new(
        load_idx_images(dir.join(TEST_IMAGES))?,
        load_idx_labels(dir.join(TEST_LABELS), 10)?,
        10,
    )?;
    Ok((train, test))
}

/// Keeps only `class_a` and `class_b`, relabelled to 0 and 1.
pub fn make_binary_task(
    data: &ImageSet,
    class_a: usize,
    class_b: usize,
) -> Result<ImageSet, DataError> {
    let c = data.num_classes();
    if class_a == class_b || class_a >= c || class_b >= c {
        return Err(DataError::InvalidClassPair {
            a: class_a,
            b: class_b,
            num_classes: c,
        });
    }
    let keep: Vec<usize> = (0..data.len())
        .filter(|&i| {
            let l = data.label(i) as usize;
            l == class_a || l == class_b
        })
        .collect();
    let mut out = data.subset(&keep);
    for l in out.labels.iter_mut() {
        *l = u8::from(*l as usize == class_b);
    }
    out.num_classes = 2;
    let counts = out.class_counts();
    if counts[0] == 0 {
        return Err(DataError::EmptyClass(class_a));
    }
    if counts[1] == 0 {
        return Err(DataError::EmptyClass(class_b));
    }
    Ok(out)
}

/// How the initial labelled set and the validation set are carved out.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    pub initial_train_size: usize,
    pub validation_size: usize,
    /// Named split used for evaluation (`test` for the IDX t10k files).
    pub test_source: String,
    pub balanced: bool,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            initial_train_size: 20,
            validation_size: 100,
            test_source: "test".to_string(),
            balanced: true,
            seed: 0,
        }
    }
}

/// Draws the initial labelled set (balanced per class when requested), then
/// the validation set from the remainder; everything left is the pool.
pub fn initial_split<R: Rng + ?Sized>(
    data: &ImageSet,
    spec: &SplitSpec,
    test_len: usize,
    rng: &mut R,
) -> Result<PoolState, DataError> {
    let c = data.num_classes();
    let n = data.len();
    if spec.initial_train_size + spec.validation_size > n {
        return Err(DataError::InfeasibleSplit(format!(
            "{} initial + {} validation points requested from {} items",
            spec.initial_train_size, spec.validation_size, n
        )));
    }
    let mut taken = vec![false; n];
    let mut train = Vec::with_capacity(spec.initial_train_size);
    if spec.balanced {
        if spec.initial_train_size % c != 0 {
            return Err(DataError::InfeasibleSplit(format!(
                "initial size {} is not divisible by {} classes",
                spec.initial_train_size, c
            )));
        }
        let per_class = spec.initial_train_size / c;
        let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); c];
        for i in 0..n {
            by_class[data.label(i) as usize].push(i);
        }
        for (class, members) in by_class.iter().enumerate() {
            if members.len() < per_class {
                return Err(DataError::InfeasibleSplit(format!(
                    "class {class} has {} examples, {per_class} needed",
                    members.len()
                )));
            }
            for j in sample(rng, members.len(), per_class) {
                train.push(members[j]);
            }
        }
    } else {
        train.extend(sample(rng, n, spec.initial_train_size));
    }
    for &i in &train {
        taken[i] = true;
    }
    let remaining: Vec<usize> = (0..n).filter(|&i| !taken[i]).collect();
    let mut validation: Vec<usize> = sample(rng, remaining.len(), spec.validation_size)
        .into_iter()
        .map(|j| remaining[j])
        .collect();
    validation.sort_unstable();
    for &i in &validation {
        taken[i] = true;
    }
    let pool: Vec<usize> = (0..n).filter(|&i| !taken[i]).collect();
    train.sort_unstable();
    let train_labels = data.gather_labels(&train);
    Ok(PoolState::new(train, train_labels, validation, pool, test_len))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn header(magic: u32, dims: &[u32]) -> Vec<u8> {
        let mut out = magic.to_be_bytes().to_vec();
        for d in dims {
            out.extend_from_slice(&d.to_be_bytes());
        }
        out
    }

    pub(crate) fn synthetic(n_per_class: usize, classes: usize) -> ImageSet {
        let n = n_per_class * classes;
        let mut pixels = Vec::with_capacity(n * 16);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let class = i % classes;
            for p in 0..16 {
                pixels.push(((class * 16 + p + i) % 256) as f32 / 255.0);
            }
            labels.push(class as u8);
        }
        let raw = RawImages {
            count: n,
            rows: 4,
            cols: 4,
            pixels,
        };
        ImageSet::new(raw, labels, classes).unwrap()
    }

    #[test]
    fn pixel_endpoints_scale_to_unit_interval() {
        let mut bytes = header(IMAGES_MAGIC, &[1, 1, 2]);
        bytes.extend_from_slice(&[0, 255]);
        let raw = parse_idx_images(&bytes).unwrap();
        assert_eq!(raw.pixels, vec![0.0, 1.0]);
        assert_eq!((raw.count, raw.rows, raw.cols), (1, 1, 2));
    }

    #[test]
    fn label_magic_rejected_as_images() {
        let bytes = header(LABELS_MAGIC, &[0, 0, 0]);
        match parse_idx_images(&bytes) {
            Err(DataError::BadMagic { expected, found }) => {
                assert_eq!(expected, IMAGES_MAGIC);
                assert_eq!(found, LABELS_MAGIC);
            }
            other => panic!("expected bad magic, got {other:?}"),
        }
    }

    #[test]
    fn truncated_payload_is_a_length_error() {
        let mut bytes = header(IMAGES_MAGIC, &[2, 28, 28]);
        bytes.extend(std::iter::repeat_n(0u8, 784));
        assert!(matches!(
            parse_idx_images(&bytes),
            Err(DataError::Truncated { expected: 1584, found: 800 })
        ));
    }

    #[test]
    fn labels_fixture_and_empty() {
        let mut bytes = header(LABELS_MAGIC, &[3]);
        bytes.extend_from_slice(&[7, 0, 9]);
        assert_eq!(parse_idx_labels(&bytes, 10).unwrap(), vec![7, 0, 9]);
        assert!(parse_idx_labels(&header(LABELS_MAGIC, &[0]), 10)
            .unwrap()
            .is_empty());
        let mut bad = header(LABELS_MAGIC, &[1]);
        bad.push(10);
        assert!(matches!(
            parse_idx_labels(&bad, 10),
            Err(DataError::LabelOutOfRange { label: 10, .. })
        ));
        assert!(matches!(
            parse_idx_labels(&header(IMAGES_MAGIC, &[0]), 10),
            Err(DataError::BadMagic { .. })
        ));
    }

    #[test]
    fn binary_task_relabels_and_validates() {
        let data = synthetic(5, 10);
        let bin = make_binary_task(&data, 3, 8).unwrap();
        assert_eq!(bin.len(), 10);
        assert_eq!(bin.num_classes(), 2);
        assert_eq!(bin.class_counts(), vec![5, 5]);
        assert!(matches!(
            make_binary_task(&data, 3, 3),
            Err(DataError::InvalidClassPair { .. })
        ));
        let sevens_removed: Vec<usize> = (0..data.len()).filter(|&i| data.label(i) != 7).collect();
        let no_seven = data.subset(&sevens_removed);
        assert!(matches!(
            make_binary_task(&no_seven, 1, 7),
            Err(DataError::EmptyClass(7))
        ));
    }

    #[test]
    fn balanced_split_sizes_and_determinism() {
        let data = synthetic(30, 10);
        let spec = SplitSpec {
            seed: 1,
            ..SplitSpec::default()
        };
        let a = initial_split(&data, &spec, 0, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let b = initial_split(&data, &spec, 0, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.labeled().len(), 20);
        assert_eq!(a.validation().len(), 100);
        assert_eq!(a.pool().len(), 300 - 120);
        let mut hist = [0usize; 10];
        for &l in a.labeled_labels() {
            hist[l as usize] += 1;
        }
        assert_eq!(hist, [2; 10]);
        a.check_partition().unwrap();
    }

    #[test]
    fn binary_split_takes_ten_per_class() {
        let data = make_binary_task(&synthetic(60, 10), 0, 1).unwrap();
        let split = initial_split(
            &data,
            &SplitSpec::default(),
            0,
            &mut ChaCha8Rng::seed_from_u64(3),
        )
        .unwrap();
        let ones = split.labeled_labels().iter().filter(|&&l| l == 1).count();
        assert_eq!(ones, 10);
        assert_eq!(split.labeled().len(), 20);
    }

    #[test]
    fn infeasible_split_reported() {
        let data = synthetic(1, 10);
        let err = initial_split(
            &data,
            &SplitSpec {
                validation_size: 0,
                ..SplitSpec::default()
            },
            0,
            &mut ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap_err();
        assert!(matches!(err, DataError::InfeasibleSplit(_)));
    }
}
