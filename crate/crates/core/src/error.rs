use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix entries must be finite")]
    NonFinite,

    #[error("unsupported QAM order {0}; expected 4, 16, 64 or 256")]
    UnsupportedOrder(usize),
    #[error("bit sequence of length {len} is not a multiple of {bits_per_symbol}")]
    BitLength { len: usize, bits_per_symbol: usize },

    #[error("1 + {offset}*{m} = {exponent} is not coprime with K = {k}")]
    NotCoprime {
        offset: i64,
        m: i64,
        exponent: i64,
        k: i64,
    },
    #[error("lattice offsets must be pairwise distinct")]
    DuplicateOffsets,
    #[error("offsets {0} and {1} give the same exponent modulo K; rotation would be singular")]
    CollidingExponents(i64, i64),
    #[error("invalid rotation parameters: {0}")]
    RotationParams(String),
    #[error("rotation angle {0} rad makes an entry of the 2x2 rotation vanish")]
    AxisAligned(f64),

    #[error("block length T = {t} is shorter than M = {m}")]
    BlockTooShort { m: usize, t: usize },
    #[error("unsupported layer layout: {0}")]
    Layout(String),
    #[error("three-layer design is not defined for M = {0}")]
    UnsupportedAntennas(usize),
    #[error("expected {expected} symbols, got {got}")]
    SymbolCount { expected: usize, got: usize },
    #[error("unknown code `{0}`")]
    UnknownCode(String),

    #[error("exhaustive search over {evals} candidates exceeds the guard of {limit}")]
    SearchSpace { evals: u128, limit: u128 },
    #[error("equivalent channel is rank deficient ({rank} < {needed}){}", stage.map(|s| format!(" at stage {s}")).unwrap_or_default())]
    RankDeficient {
        rank: usize,
        needed: usize,
        stage: Option<usize>,
    },

    #[error("need at least two SNR points with nonzero error rate, have {0}")]
    InsufficientPoints(usize),
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures that stem from a decoder's feasibility limits
    /// rather than from bad input.
    pub fn is_decoder_guard(&self) -> bool {
        matches!(
            self,
            Error::SearchSpace { .. } | Error::RankDeficient { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
