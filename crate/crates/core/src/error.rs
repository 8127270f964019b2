use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("{name} must be positive, got {value}")]
    NonPositiveVariance { name: &'static str, value: f64 },

    #[error("non-finite entry in {what} at index {index}")]
    NonFiniteEntry { what: &'static str, index: usize },

    #[error("model must have at least one observed and one latent variable (n={n}, m={m})")]
    EmptyModel { n: usize, m: usize },

    /// `eps[row][col]` is zero while the weight at the same position is not,
    /// so `w / eps` is undefined.
    #[error("division hazard: eps[{row}][{col}] = 0 but w[{row}][{col}] != 0")]
    DivisionHazard { row: usize, col: usize },

    #[error("invalid auxiliary parameters: {0}")]
    InvalidAux(String),

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("invalid window side {side} for a {height}x{width} grid")]
    InvalidWindow {
        side: usize,
        height: usize,
        width: usize,
    },

    #[error("grid {height}x{width} is not divisible into regions of side {region_side}")]
    IndivisibleGrid {
        height: usize,
        width: usize,
        region_side: usize,
    },

    #[error("invalid generator parameter: {0}")]
    InvalidParameter(String),

    #[error("bad IDX magic number {0:#010x}, expected 0x00000803")]
    BadMagic(u32),

    #[error("truncated IDX file: expected {expected} bytes of pixel data, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("IDX dimensions overflow: {count} x {rows} x {cols}")]
    DimensionOverflow { count: u32, rows: u32, cols: u32 },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("config parse error: {0}")]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            what,
            expected,
            found,
        })
    }
}
