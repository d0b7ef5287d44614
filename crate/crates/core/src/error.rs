use crate::grid::ShapeHW;

/// Errors raised by grid construction, loss evaluation and geometry.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SegLossError {
    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: ShapeHW, found: ShapeHW },

    #[error("invalid shape {height}x{width}: {reason}")]
    InvalidShape {
        height: usize,
        width: usize,
        reason: &'static str,
    },

    #[error("buffer holds {found} values but shape {shape} needs {expected}")]
    LengthMismatch {
        shape: ShapeHW,
        expected: usize,
        found: usize,
    },

    #[error("value {value} at ({row}, {col}) is outside {range}")]
    OutOfRange {
        row: usize,
        col: usize,
        value: f64,
        range: &'static str,
    },

    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("empty grid")]
    EmptyGrid,

    #[error("empty pixel set")]
    EmptySet,

    #[error("pixel ({row}, {col}) is out of bounds for {shape}")]
    PixelOutOfBounds { row: usize, col: usize, shape: ShapeHW },

    #[error("duplicate pixel ({row}, {col})")]
    DuplicatePixel { row: usize, col: usize },

    #[error("dice ratio is undefined: smooth = 0 and both masks are empty")]
    UndefinedDice,

    #[error("loss `{0}` needs a distance map")]
    MissingDistanceMap(&'static str),

    #[error("unknown loss `{name}`; valid names: {valid}")]
    UnknownLoss { name: String, valid: String },

    #[error("unknown config key `{key}`; valid keys: {valid}")]
    UnknownConfigKey { key: String, valid: String },

    #[error("config value `{value}` for `{key}` does not parse")]
    BadConfigValue { key: String, value: String },

    #[error("invalid mask spec `{spec}`: {reason}")]
    InvalidMaskSpec { spec: String, reason: String },

    #[error("line {line}, column {column}: {reason}")]
    Parse {
        line: usize,
        column: usize,
        reason: String,
    },
}

pub type Result<T> = std::result::Result<T, SegLossError>;

pub(crate) fn param(name: &'static str, value: f64, reason: &'static str) -> SegLossError {
    SegLossError::InvalidParameter {
        name,
        value,
        reason,
    }
}
