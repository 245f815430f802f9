use std::io::Write;
use std::path::Path;

use crate::error::{Error, Location, Result};
use crate::model::{LabeledDataset, OneHotLabels};

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

/// Sample shape of loaded images.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageLayout {
    /// `[rows * cols]`, for dense models.
    Flat,
    /// `[rows, cols, 1]`, for convolutional models.
    Grid,
}

/// Raw contents of an IDX image file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub rows: usize,
    pub cols: usize,
    /// Row-major pixels, one image after another.
    pub pixels: Vec<u8>,
}

impl IdxImages {
    pub fn len(&self) -> usize {
        self.pixels.len() / (self.rows * self.cols).max(1)
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::format(
                Location::Byte(self.bytes.len() as u64),
                format!("file truncated while reading {what}: needed {n} bytes at offset {}", self.at),
            )
        })?;
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u32_be(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_be_bytes(self.take(4, what)?.try_into().expect("four bytes")))
    }

    fn finish(&self) -> Result<()> {
        if self.at != self.bytes.len() {
            return Err(Error::format(
                Location::Byte(self.at as u64),
                format!("{} unexpected trailing bytes", self.bytes.len() - self.at),
            ));
        }
        Ok(())
    }
}

fn magic(c: &mut Cursor<'_>, expected: u32) -> Result<()> {
    let m = c.u32_be("magic number")?;
    if m != expected {
        return Err(Error::format(
            Location::Byte(0),
            format!("bad magic 0x{m:08x}, expected 0x{expected:08x}"),
        ));
    }
    Ok(())
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<IdxImages> {
    let mut c = Cursor { bytes, at: 0 };
    magic(&mut c, IMAGES_MAGIC)?;
    let count = c.u32_be("image count")? as usize;
    let rows = c.u32_be("row count")? as usize;
    let cols = c.u32_be("column count")? as usize;
    let size = count
        .checked_mul(rows)
        .and_then(|v| v.checked_mul(cols))
        .ok_or_else(|| Error::format(Location::Byte(4), "image dimensions overflow"))?;
    let pixels = c.take(size, "pixels")?.to_vec();
    c.finish()?;
    Ok(IdxImages { rows, cols, pixels })
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let mut c = Cursor { bytes, at: 0 };
    magic(&mut c, LABELS_MAGIC)?;
    let count = c.u32_be("label count")? as usize;
    let labels = c.take(count, "labels")?.to_vec();
    c.finish()?;
    Ok(labels)
}

pub fn write_idx_images<W: Write>(images: &IdxImages, mut out: W) -> Result<()> {
    out.write_all(&IMAGES_MAGIC.to_be_bytes())?;
    for v in [images.len(), images.rows, images.cols] {
        out.write_all(&u32::try_from(v).map_err(|_| Error::invalid("IDX dimension exceeds u32"))?.to_be_bytes())?;
    }
    out.write_all(&images.pixels)?;
    Ok(())
}

pub fn write_idx_labels<W: Write>(labels: &[u8], mut out: W) -> Result<()> {
    out.write_all(&LABELS_MAGIC.to_be_bytes())?;
    out.write_all(&u32::try_from(labels.len()).map_err(|_| Error::invalid("too many labels"))?.to_be_bytes())?;
    out.write_all(labels)?;
    Ok(())
}

/// Loads an IDX image/label pair. Pixels are scaled to `[0, 1]`; labels
/// must be digits 0-9.
pub fn load_mnist_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>, layout: ImageLayout) -> Result<LabeledDataset> {
    let images_path = images_path.as_ref();
    let images = parse_idx_images(&std::fs::read(images_path)?)?;
    let labels = parse_idx_labels(&std::fs::read(labels_path)?)?;
    let name = images_path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "mnist".into());
    mnist_dataset(name, &images, &labels, layout)
}

/// Builds a dataset from parsed IDX contents.
pub fn mnist_dataset(name: impl Into<String>, images: &IdxImages, labels: &[u8], layout: ImageLayout) -> Result<LabeledDataset> {
    if images.len() != labels.len() {
        return Err(Error::format(
            Location::Byte(4),
            format!("{} images but {} labels", images.len(), labels.len()),
        ));
    }
    if let Some(pos) = labels.iter().position(|&l| l > 9) {
        return Err(Error::format(
            Location::Byte(8 + pos as u64),
            format!("label {} is not a digit", labels[pos]),
        ));
    }
    let features = images.pixels.iter().map(|&p| f64::from(p) / 255.0).collect();
    let shape = match layout {
        ImageLayout::Flat => vec![images.rows * images.cols],
        ImageLayout::Grid => vec![images.rows, images.cols, 1],
    };
    let labels = OneHotLabels::from_indices(10, labels.iter().map(|&l| usize::from(l)).collect())?;
    LabeledDataset::new(name, features, shape, labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Two 2x3 images written out byte by byte.
    fn fixture() -> (Vec<u8>, Vec<u8>) {
        let images = vec![
            0, 0, 8, 3, // magic
            0, 0, 0, 2, // count
            0, 0, 0, 2, // rows
            0, 0, 0, 3, // cols
            0, 51, 255, 102, 0, 0, // image 0
            255, 255, 0, 1, 2, 3, // image 1
        ];
        let labels = vec![0, 0, 8, 1, 0, 0, 0, 2, 7, 0];
        (images, labels)
    }

    #[test]
    fn hand_built_fixture() {
        let (img, lab) = fixture();
        let images = parse_idx_images(&img).unwrap();
        let labels = parse_idx_labels(&lab).unwrap();
        let data = mnist_dataset("fx", &images, &labels, ImageLayout::Flat).unwrap();
        assert_eq!(data.len(), 2);
        assert_eq!(data.sample_shape(), &[6]);
        assert_eq!(data.sample(0), &[0.0, 0.2, 1.0, 0.4, 0.0, 0.0]);
        assert_eq!(data.sample(1)[3], 1.0 / 255.0);
        assert_eq!(data.labels().indices(), &[7, 0]);
        let grid = mnist_dataset("fx", &images, &labels, ImageLayout::Grid).unwrap();
        assert_eq!(grid.sample_shape(), &[2, 3, 1]);
    }

    #[test]
    fn truncation_and_magic() {
        let (img, lab) = fixture();
        for cut in 0..img.len() {
            match parse_idx_images(&img[..cut]).unwrap_err() {
                Error::Format { location: Location::Byte(b), .. } => assert_eq!(b, cut as u64),
                e => panic!("{e}"),
            }
        }
        assert!(matches!(parse_idx_images(&lab), Err(Error::Format { location: Location::Byte(0), .. })));
        assert!(matches!(parse_idx_labels(&img), Err(Error::Format { location: Location::Byte(0), .. })));
        let mut long = lab.clone();
        long.push(1);
        assert!(matches!(parse_idx_labels(&long), Err(Error::Format { location: Location::Byte(10), .. })));
    }

    #[test]
    fn mismatched_or_invalid_labels() {
        let (img, _) = fixture();
        let images = parse_idx_images(&img).unwrap();
        assert!(mnist_dataset("x", &images, &[1], ImageLayout::Flat).is_err());
        assert!(matches!(
            mnist_dataset("x", &images, &[1, 10], ImageLayout::Flat),
            Err(Error::Format { location: Location::Byte(9), .. })
        ));
    }

    #[test]
    fn load_from_files() {
        let dir = tempfile::tempdir().unwrap();
        let (img, lab) = fixture();
        std::fs::write(dir.path().join("i"), img).unwrap();
        std::fs::write(dir.path().join("l"), lab).unwrap();
        let d = load_mnist_idx(dir.path().join("i"), dir.path().join("l"), ImageLayout::Flat).unwrap();
        assert_eq!(d.len(), 2);
        assert!(matches!(
            load_mnist_idx(dir.path().join("missing"), dir.path().join("l"), ImageLayout::Flat),
            Err(Error::Io(_))
        ));
    }

    proptest! {
        #[test]
        fn write_read_round_trip(rows in 1usize..6, cols in 1usize..6, n in 0usize..5, seed in any::<u64>()) {
            use rand::Rng;
            let mut r = crate::rng::seeded(seed);
            let images = IdxImages { rows, cols, pixels: (0..n * rows * cols).map(|_| r.random()).collect() };
            let labels: Vec<u8> = (0..n).map(|_| r.random_range(0..10)).collect();
            let mut ib = Vec::new();
            write_idx_images(&images, &mut ib).unwrap();
            let mut lb = Vec::new();
            write_idx_labels(&labels, &mut lb).unwrap();
            prop_assert_eq!(ib.len(), 16 + n * rows * cols);
            prop_assert_eq!(parse_idx_images(&ib).unwrap(), images);
            prop_assert_eq!(parse_idx_labels(&lb).unwrap(), labels);
        }
    }
}
