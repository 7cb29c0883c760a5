use thiserror::Error;

use crate::pp_core::Variant;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("operand width {0} outside supported range 2..=32")]
    InvalidWidth(u32),

    #[error("unsupported configuration: {variant} with {mode} operands at width {width} ({reason})")]
    UnsupportedConfig {
        variant: Variant,
        mode: &'static str,
        width: u32,
        reason: &'static str,
    },

    #[error("operand {value:#b} does not fit in {width} bits")]
    OperandOutOfRange { value: u64, width: u32 },

    #[error("fp-mode operand {value:#b} is missing its leading 1 at bit {bit}")]
    MissingHiddenBit { value: u64, bit: u32 },

    #[error("format {format} has a {expected}-bit significand but the multiplier is configured for {got} bits (fp_mode={fp_mode})")]
    FormatMismatch {
        format: String,
        expected: u32,
        got: u32,
        fp_mode: bool,
    },

    #[error("exhaustive sweep requested at width {width}, limit is {limit}")]
    SweepTooLarge { width: u32, limit: u32 },

    #[error("bank of {size_bytes} bytes is not a square power-of-two array")]
    NonSquareBank { size_bytes: u64 },

    #[error("bank {rows}x{cols} cannot hold one element ({needed_rows} rows x {needed_cols} bit columns)")]
    BankTooSmall {
        rows: u32,
        cols: u32,
        needed_rows: u32,
        needed_cols: u32,
    },

    #[error("mapping needs {needed} row-groups but the banks hold {available} (short by {shortfall}; {kernel_elements} kernel elements requested)")]
    CapacityExceeded {
        needed: u64,
        available: u64,
        shortfall: u64,
        kernel_elements: u64,
    },

    #[error("invalid architecture: {0}")]
    InvalidArch(String),

    #[error("invalid workload: {0}")]
    InvalidWorkload(String),

    #[error("{name} must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },

    #[error("invalid cost config: {0}")]
    InvalidCost(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("malformed model file: {0}")]
    MalformedModel(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
