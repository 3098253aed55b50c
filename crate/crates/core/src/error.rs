use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value at index {0}")]
    NonFinite(usize),

    #[error("length mismatch: {left} vs {right} bits")]
    LengthMismatch { left: usize, right: usize },

    #[error("invalid layer shape: {0}")]
    InvalidShape(String),

    #[error("shape overflow: {0}")]
    ShapeOverflow(String),

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("truncated header")]
    TruncatedHeader,

    #[error("truncated at channel {0}")]
    TruncatedAtChannel(usize),

    #[error("truncated activation payload")]
    TruncatedPayload,

    #[error("nonzero padding bits in record {0}")]
    NonZeroPadding(usize),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("empty graph")]
    EmptyGraph,

    #[error("vertex {vertex} out of range for {n} vertices")]
    VertexOutOfRange { vertex: usize, n: usize },

    #[error("invalid distance graph: {0}")]
    InvalidGraph(String),

    #[error("invalid tree: {0}")]
    InvalidTree(String),

    #[error("center count {r} out of range 1..={n}")]
    CenterCount { r: usize, n: usize },

    #[error("instance too large for exact Hamiltonian path ({n} > {cap} vertices)")]
    TooLargeForHamiltonian { n: usize, cap: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("diff position {position} out of range for channel {channel} ({full} bits)")]
    DiffOutOfRange { channel: usize, position: usize, full: usize },

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },

    #[error(transparent)]
    Io(#[from] io::Error),
}
