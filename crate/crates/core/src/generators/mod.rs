//! Model builders for the image-window experiments, forest and forest-mixture
//! samplers, and MNIST IDX ingestion.

mod fmm;
mod idx;
mod structure;

pub use fmm::{sample_fmm, FmmSample, FmmSpec};
pub use idx::{load_idx_images, mean_bias, parse_idx_images, IdxImages, IDX3_MAGIC};
pub use structure::{column_overlap, forest_model, is_forest, region_block_model, window_model, ImageGrid};
