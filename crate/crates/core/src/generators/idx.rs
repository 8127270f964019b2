use std::path::Path;

use byteorder::{BigEndian, ByteOrder};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{check_len, Error, Result};

use super::structure::ImageGrid;

/// Magic number of an unsigned-byte, three-dimensional IDX file.
pub const IDX3_MAGIC: u32 = 0x0000_0803;

/// Images scaled to `[-1, 1]`, each a row-major vector over `grid`.
#[derive(Debug, Clone, PartialEq)]
pub struct IdxImages {
    pub grid: ImageGrid,
    pub images: Vec<Vec<f64>>,
}

pub fn load_idx_images(path: impl AsRef<Path>) -> Result<IdxImages> {
    parse_idx_images(&std::fs::read(path)?)
}

/// Header: magic, count, rows, cols as big-endian `u32`, followed by
/// `count * rows * cols` bytes. Byte `v` maps to `2 v / 255 - 1`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<IdxImages> {
    if bytes.len() < 16 {
        return Err(Error::Truncated {
            expected: 16,
            found: bytes.len(),
        });
    }
    let magic = BigEndian::read_u32(&bytes[0..4]);
    if magic != IDX3_MAGIC {
        return Err(Error::BadMagic(magic));
    }
    let count = BigEndian::read_u32(&bytes[4..8]);
    let rows = BigEndian::read_u32(&bytes[8..12]);
    let cols = BigEndian::read_u32(&bytes[12..16]);
    let overflow = Error::DimensionOverflow { count, rows, cols };
    let pixels = (rows as usize).checked_mul(cols as usize);
    let total = pixels.and_then(|p| p.checked_mul(count as usize));
    let (Some(pixels), Some(total)) = (pixels, total) else {
        return Err(overflow);
    };
    let grid = ImageGrid::new(rows as usize, cols as usize)?;
    let data = &bytes[16..];
    if data.len() < total {
        return Err(Error::Truncated {
            expected: total,
            found: data.len(),
        });
    }
    let images = data[..total]
        .chunks_exact(pixels)
        .map(|img| img.iter().map(|&v| 2.0 * (f64::from(v) / 255.0) - 1.0).collect())
        .collect();
    Ok(IdxImages { grid, images })
}

/// Mean of `min(k, len)` images drawn without replacement with ChaCha8 seeded
/// by `seed`.
pub fn mean_bias(images: &[Vec<f64>], k: usize, seed: u64) -> Result<Vec<f64>> {
    let first = images.first().ok_or(Error::EmptyInput("mean_bias needs at least one image"))?;
    if k == 0 {
        return Err(Error::InvalidParameter("mean_bias needs k >= 1".into()));
    }
    for img in images {
        check_len("image length", first.len(), img.len())?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chosen = rand::seq::index::sample(&mut rng, images.len(), k.min(images.len()));
    let mut mean = vec![0.0; first.len()];
    for idx in chosen.iter() {
        for (m, v) in mean.iter_mut().zip(&images[idx]) {
            *m += v;
        }
    }
    let count = chosen.len() as f64;
    mean.iter_mut().for_each(|m| *m /= count);
    Ok(mean)
}
