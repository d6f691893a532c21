//! MNIST in the IDX container, plus the 14×14 preprocessing and block layout.
//!
//! Files may be raw or gzip-compressed; compression is detected from the
//! leading bytes, not the file name.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use flate2::read::MultiGzDecoder;

use super::{LabeledDataset, Split};
use crate::error::{Error, Result};
use crate::kernel::{KernelSpec, SampleMatrix};
use crate::regression::OutputMatrix;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;
pub const NUM_CLASSES: usize = 10;

const SIDE: usize = 28;
const HALF: usize = 14;

/// An unsigned-byte IDX tensor.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

impl IdxArray {
    pub fn magic(&self) -> u32 {
        0x0800 | self.dims.len() as u32
    }

    /// Big-endian header followed by the payload.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(4 + 4 * self.dims.len() + self.data.len());
        out.extend_from_slice(&self.magic().to_be_bytes());
        for &d in &self.dims {
            out.extend_from_slice(&(d as u32).to_be_bytes());
        }
        out.extend_from_slice(&self.data);
        out
    }

    pub fn from_bytes(bytes: &[u8], expected_magic: u32, path: &Path) -> Result<Self> {
        let truncated = |expected: usize| Error::Truncated {
            path: path.to_path_buf(),
            expected,
            found: bytes.len(),
        };
        if bytes.len() < 4 {
            return Err(truncated(4));
        }
        let magic = u32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]);
        if magic != expected_magic {
            return Err(Error::BadMagic {
                path: path.to_path_buf(),
                expected: expected_magic,
                found: magic,
            });
        }
        let ndim = (magic & 0xff) as usize;
        let header = 4 + 4 * ndim;
        if bytes.len() < header {
            return Err(truncated(header));
        }
        let dims: Vec<usize> = bytes[4..header]
            .chunks_exact(4)
            .map(|c| u32::from_be_bytes([c[0], c[1], c[2], c[3]]) as usize)
            .collect();
        let total = header + dims.iter().product::<usize>();
        if bytes.len() < total {
            return Err(truncated(total));
        }
        if bytes.len() > total {
            return Err(Error::Format(format!(
                "{}: {} trailing bytes after IDX payload",
                path.display(),
                bytes.len() - total
            )));
        }
        Ok(Self {
            dims,
            data: bytes[header..].to_vec(),
        })
    }
}

fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path)?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        MultiGzDecoder::new(raw.as_slice()).read_to_end(&mut out)?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

/// Reads an IDX file whose magic must equal `expected_magic`.
pub fn read_idx(path: impl AsRef<Path>, expected_magic: u32) -> Result<IdxArray> {
    let path = path.as_ref();
    IdxArray::from_bytes(&read_maybe_gz(path)?, expected_magic, path)
}

/// Writes an uncompressed IDX file.
pub fn write_idx(path: impl AsRef<Path>, array: &IdxArray) -> Result<()> {
    fs::write(path, array.to_bytes())?;
    Ok(())
}

/// Images scaled to `[0, 1]` by `/255`, one flattened image per column
/// (pixel `(r, c)` at index `r·cols + c`), with one-hot labels.
pub fn load_mnist_idx(
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
    split: Split,
) -> Result<LabeledDataset> {
    let images = read_idx(images_path.as_ref(), IMAGE_MAGIC)?;
    let labels = read_idx(labels_path.as_ref(), LABEL_MAGIC)?;
    let (n, d) = (images.dims[0], images.dims[1] * images.dims[2]);
    if n != labels.dims[0] {
        return Err(Error::CountMismatch {
            images: n,
            labels: labels.dims[0],
        });
    }
    if n == 0 {
        return Err(Error::Empty("MNIST image file"));
    }
    let pixels: Vec<f64> = images.data.iter().map(|&b| b as f64 / 255.0).collect();
    let x = SampleMatrix::from_column_slice(d, n, &pixels)?;
    let classes: Vec<usize> = labels.data.iter().map(|&b| b as usize).collect();
    let y = OutputMatrix::one_hot(&classes, NUM_CLASSES)?;
    LabeledDataset::new(x, y, split)
}

fn find_file(dir: &Path, stem: &str) -> Result<PathBuf> {
    for name in [stem.to_string(), format!("{stem}.gz")] {
        let p = dir.join(name);
        if p.is_file() {
            return Ok(p);
        }
    }
    Err(Error::Io(std::io::Error::new(
        std::io::ErrorKind::NotFound,
        format!("{stem}[.gz] not found in {}", dir.display()),
    )))
}

/// Loads a split from a directory using the standard MNIST file names.
pub fn load_mnist_dir(dir: impl AsRef<Path>, split: Split) -> Result<LabeledDataset> {
    let dir = dir.as_ref();
    let prefix = match split {
        Split::Train => "train",
        Split::Test => "t10k",
    };
    load_mnist_idx(
        find_file(dir, &format!("{prefix}-images-idx3-ubyte"))?,
        find_file(dir, &format!("{prefix}-labels-idx1-ubyte"))?,
        split,
    )
}

fn check_side(x: &SampleMatrix) -> Result<()> {
    if x.dim() != SIDE * SIDE {
        return Err(Error::DimensionMismatch {
            expected: SIDE * SIDE,
            found: x.dim(),
        });
    }
    Ok(())
}

/// 28×28 → 14×14 by averaging each 2×2 block.
pub fn downsample_2x2(x: &SampleMatrix) -> Result<SampleMatrix> {
    check_side(x)?;
    let mut buf = Vec::with_capacity(HALF * HALF * x.len());
    for img in x.columns() {
        for r in 0..HALF {
            for c in 0..HALF {
                let (r0, c0) = (2 * r * SIDE, 2 * c);
                let s = img[r0 + c0] + img[r0 + c0 + 1] + img[r0 + SIDE + c0] + img[r0 + SIDE + c0 + 1];
                buf.push(s / 4.0);
            }
        }
    }
    SampleMatrix::from_column_slice(HALF * HALF, x.len(), &buf)
}

/// Divides each image by its largest pixel; all-zero images stay zero.
pub fn normalize_max(x: &SampleMatrix) -> SampleMatrix {
    let mut m = x.as_matrix().clone();
    for mut col in m.column_iter_mut() {
        let top = col.iter().cloned().fold(0.0f64, f64::max);
        if top > 0.0 {
            col /= top;
        }
    }
    SampleMatrix::new(m).expect("scaling keeps values finite")
}

/// [`downsample_2x2`] followed by [`normalize_max`].
pub fn downsample_and_normalize(x: &SampleMatrix) -> Result<SampleMatrix> {
    Ok(normalize_max(&downsample_2x2(x)?))
}

/// Nine disjoint 4×4 blocks tiling the central 12×12 of a 14×14 image
/// (a one-pixel frame is left out), listed block-row by block-row.
pub fn block_layout_14x14() -> Vec<Vec<usize>> {
    let mut blocks = Vec::with_capacity(9);
    for br in 0..3 {
        for bc in 0..3 {
            let mut b = Vec::with_capacity(16);
            for r in 0..4 {
                for c in 0..4 {
                    b.push((1 + 4 * br + r) * HALF + 1 + 4 * bc + c);
                }
            }
            blocks.push(b);
        }
    }
    blocks
}

/// The block-composite cosine kernel over [`block_layout_14x14`].
pub fn mnist_kernel(kappa: f64) -> Result<KernelSpec> {
    KernelSpec::block_composite(kappa, block_layout_14x14())
}
