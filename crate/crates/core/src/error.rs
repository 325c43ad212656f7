use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid sequence spec: {0}")]
    InvalidSequence(String),

    #[error("invalid channel parameters: {0}")]
    InvalidChannel(String),

    #[error("systematic offset {epsilon} outside [-{half_chip}, {half_chip}]")]
    EpsilonOutOfRange { epsilon: f64, half_chip: f64 },

    #[error("correlation window [{start}, {end}) exceeds chip buffer of length {len}")]
    Window { start: i64, end: i64, len: usize },

    #[error("empty search window")]
    EmptyWindow,

    #[error("parameter out of domain: {0}")]
    Domain(String),

    #[error("side-peak offset 2m={two_m} infeasible for alpha*L={alpha_l} (flank limit {flank_limit})")]
    Infeasible {
        two_m: i64,
        alpha_l: f64,
        flank_limit: f64,
    },

    #[error("invalid bound configuration: {0}")]
    InvalidConfig(String),

    #[error("objective returned a non-finite value at alpha={0}")]
    NonFiniteObjective(f64),

    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
}
