//! Binary dump of a [`LabeledDataset`] for fast reloads.
//!
//! Layout (little endian): 8-byte magic `KFSADSET`, `u32` version, `u8` split,
//! `u8` encoding (0 regression, 1 one-hot), `u64` class count, `u64` d,
//! `u64` d′, `u64` m, then `X` and `Y` as column-major `f64`.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;

use super::{LabeledDataset, Split};
use crate::error::{Error, Result};
use crate::kernel::SampleMatrix;
use crate::regression::{Encoding, OutputMatrix};

const MAGIC: &[u8; 8] = b"KFSADSET";
pub const CACHE_VERSION: u32 = 1;
const HEADER: usize = 8 + 4 + 1 + 1 + 8 * 4;

pub fn encode_dataset(ds: &LabeledDataset) -> Vec<u8> {
    let (enc, classes) = match ds.y.encoding() {
        Encoding::Regression => (0u8, 0u64),
        Encoding::OneHot { num_classes } => (1, num_classes as u64),
    };
    let mut out = Vec::with_capacity(HEADER + 8 * (ds.x.dim() + ds.y.dim()) * ds.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&CACHE_VERSION.to_le_bytes());
    out.push(match ds.split {
        Split::Train => 0,
        Split::Test => 1,
    });
    out.push(enc);
    for v in [classes, ds.x.dim() as u64, ds.y.dim() as u64, ds.len() as u64] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for v in ds.x.as_matrix().iter().chain(ds.y.values().iter()) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_dataset(bytes: &[u8], path: &Path) -> Result<LabeledDataset> {
    let truncated = |expected| Error::Truncated {
        path: path.to_path_buf(),
        expected,
        found: bytes.len(),
    };
    if bytes.len() < HEADER {
        return Err(truncated(HEADER));
    }
    if &bytes[..8] != MAGIC {
        return Err(Error::Format(format!("{}: not a dataset cache", path.display())));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != CACHE_VERSION {
        return Err(Error::Format(format!(
            "{}: cache version {version}, expected {CACHE_VERSION}",
            path.display()
        )));
    }
    let split = match bytes[12] {
        0 => Split::Train,
        1 => Split::Test,
        s => return Err(Error::Format(format!("unknown split tag {s}"))),
    };
    let enc = bytes[13];
    let u = |k: usize| u64::from_le_bytes(bytes[14 + 8 * k..22 + 8 * k].try_into().unwrap()) as usize;
    let (classes, d, dout, m) = (u(0), u(1), u(2), u(3));
    let total = HEADER + 8 * (d + dout) * m;
    if bytes.len() != total {
        return Err(truncated(total));
    }
    let floats: Vec<f64> = bytes[HEADER..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let (xs, ys) = floats.split_at(d * m);
    let x = SampleMatrix::from_column_slice(d, m, xs)?;
    let yv = DMatrix::from_column_slice(dout, m, ys);
    let y = match enc {
        0 => OutputMatrix::regression(yv)?,
        1 => {
            let labels: Vec<usize> = yv
                .column_iter()
                .map(|c| c.iter().position(|&v| v == 1.0).unwrap_or(0))
                .collect();
            OutputMatrix::one_hot(&labels, classes)?
        }
        e => return Err(Error::Format(format!("unknown encoding tag {e}"))),
    };
    LabeledDataset::new(x, y, split)
}

pub fn write_cache(path: impl AsRef<Path>, ds: &LabeledDataset) -> Result<()> {
    fs::write(path, encode_dataset(ds))?;
    Ok(())
}

pub fn read_cache(path: impl AsRef<Path>) -> Result<LabeledDataset> {
    let path = path.as_ref();
    decode_dataset(&fs::read(path)?, path)
}
