use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("width mismatch: expected {expected}, got {got}")]
    WidthMismatch { expected: usize, got: usize },

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("gold span out of range: [{start}, {end}] with {len} context tokens")]
    GoldOutOfRange { start: usize, end: usize, len: usize },

    #[error("split of {requested} articles requested but only {available} present")]
    SplitTooLarge { requested: usize, available: usize },

    #[error("non-finite loss on sample {sample}")]
    NonFiniteLoss { sample: String },

    #[error("parameter shape mismatch for {name}")]
    ShapeMismatch { name: String },
}
