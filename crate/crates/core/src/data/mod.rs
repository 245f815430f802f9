//! Dataset loaders, splits and generated toy data.
//!
//! MNIST comes as IDX binaries (big-endian headers, one byte per pixel or
//! label); Iris as a CSV of four measurements plus the species name.

mod idx;
mod iris;
mod split;
mod synthetic;

pub use idx::{
    load_mnist_idx, mnist_dataset, parse_idx_images, parse_idx_labels, write_idx_images, write_idx_labels,
    IdxImages, ImageLayout, IMAGES_MAGIC, LABELS_MAGIC,
};
pub use iris::{load_iris_csv, parse_iris_csv};
pub use split::{split, split_indices, stratified_subset, SplitIndices, SplitSpec};
pub use synthetic::{synthetic_blobs, BLOB_SEPARATION};

use std::path::{Path, PathBuf};

/// Standard MNIST file names inside a directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MnistFiles {
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
}

impl MnistFiles {
    pub fn in_dir(dir: impl AsRef<Path>) -> Self {
        let d = dir.as_ref();
        Self {
            train_images: d.join("train-images-idx3-ubyte"),
            train_labels: d.join("train-labels-idx1-ubyte"),
            test_images: d.join("t10k-images-idx3-ubyte"),
            test_labels: d.join("t10k-labels-idx1-ubyte"),
        }
    }

    /// First missing file, if any.
    pub fn missing(&self) -> Option<&Path> {
        [&self.train_images, &self.train_labels, &self.test_images, &self.test_labels]
            .into_iter()
            .find(|p| !p.is_file())
            .map(PathBuf::as_path)
    }
}
