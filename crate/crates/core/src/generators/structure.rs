use crate::baselines::BlockPartition;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::GaussianDefModel;

/// Image dimensions; pixel `(r, c)` has index `r * width + c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ImageGrid {
    height: usize,
    width: usize,
}

impl ImageGrid {
    pub fn new(height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidParameter(format!("grid {height}x{width} must be at least 1x1")));
        }
        Ok(Self { height, width })
    }

    pub fn mnist() -> Self {
        Self { height: 28, width: 28 }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    #[inline]
    pub fn index(&self, r: usize, c: usize) -> usize {
        r * self.width + c
    }
}

/// One binary latent per top-left anchor pixel, covering the `s x s` window
/// clipped to the grid. `m = n = height * width`.
pub fn window_model(grid: ImageGrid, s: usize, bias: Vec<f64>, sigma_x2: f64, sigma_y2: f64) -> Result<GaussianDefModel> {
    if s == 0 || s > grid.height.max(grid.width) {
        return Err(Error::InvalidWindow {
            side: s,
            height: grid.height,
            width: grid.width,
        });
    }
    let n = grid.pixels();
    let mut w = Matrix::zeros(n, n);
    for r in 0..grid.height {
        for c in 0..grid.width {
            let j = grid.index(r, c);
            for rr in r..(r + s).min(grid.height) {
                for cc in c..(c + s).min(grid.width) {
                    w.set(grid.index(rr, cc), j, 1.0);
                }
            }
        }
    }
    GaussianDefModel::new(w, bias, sigma_x2, sigma_y2)
}

/// Splits the grid into `region_side x region_side` regions; inside each
/// region every anchor gets a `region_side` window clipped to that region.
/// Latents are ordered region by region (regions row-major), anchors
/// row-major within a region; the returned partition has one block per region.
pub fn region_block_model(
    grid: ImageGrid,
    region_side: usize,
    bias: Vec<f64>,
    sigma_x2: f64,
    sigma_y2: f64,
) -> Result<(GaussianDefModel, BlockPartition)> {
    if region_side == 0 || !grid.height.is_multiple_of(region_side) || !grid.width.is_multiple_of(region_side) {
        return Err(Error::IndivisibleGrid {
            height: grid.height,
            width: grid.width,
            region_side,
        });
    }
    let n = grid.pixels();
    let mut w = Matrix::zeros(n, n);
    let mut blocks = Vec::new();
    let mut j = 0;
    for r0 in (0..grid.height).step_by(region_side) {
        for c0 in (0..grid.width).step_by(region_side) {
            let mut block = Vec::with_capacity(region_side * region_side);
            let (r_end, c_end) = (r0 + region_side, c0 + region_side);
            for r in r0..r_end {
                for c in c0..c_end {
                    for rr in r..r_end {
                        for cc in c..c_end {
                            w.set(grid.index(rr, cc), j, 1.0);
                        }
                    }
                    block.push(j);
                    j += 1;
                }
            }
            blocks.push(block);
        }
    }
    let model = GaussianDefModel::new(w, bias, sigma_x2, sigma_y2)?;
    let partition = BlockPartition::new(blocks, n)?;
    Ok((model, partition))
}

/// Forest with `w[i][parent[i]] = weights[i]` (0-based parents).
pub fn forest_model(
    m: usize,
    parent: &[usize],
    weights: &[f64],
    bias: Vec<f64>,
    sigma_x2: f64,
    sigma_y2: f64,
) -> Result<GaussianDefModel> {
    crate::error::check_len("forest weights vs parents", parent.len(), weights.len())?;
    let mut w = Matrix::zeros(parent.len(), m);
    for (i, (&j, &v)) in parent.iter().zip(weights).enumerate() {
        if j >= m {
            return Err(Error::IndexOutOfRange { index: j, len: m });
        }
        w.set(i, j, v);
    }
    GaussianDefModel::new(w, bias, sigma_x2, sigma_y2)
}

/// Every observed variable has exactly one nonzero weight.
pub fn is_forest(model: &GaussianDefModel) -> bool {
    let p = model.pattern();
    (0..model.n()).all(|i| p.row_range(i).len() == 1)
}

/// `sum_{j < j'} |w_j| . |w_j'|` over distinct columns.
pub fn column_overlap(model: &GaussianDefModel) -> f64 {
    let p = model.pattern();
    (0..model.n())
        .map(|i| {
            let (l1, l2) = p.row_entries(i).fold((0.0, 0.0), |(a, b), (_, w)| (a + w.abs(), b + w * w));
            0.5 * (l1 * l1 - l2)
        })
        .sum()
}
