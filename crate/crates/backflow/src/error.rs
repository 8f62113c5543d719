use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("grid size {n} has prime factor {factor} > {max}; choose a product of small primes")]
    UnfriendlySize { n: usize, factor: usize, max: usize },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("starting vector is numerically zero")]
    ZeroStart,

    #[error("non-finite value in power iterate at iteration {iteration}")]
    NonFinite { iteration: usize },

    #[error("dense kernel of size {n} exceeds cap {cap}")]
    TooLarge { n: usize, cap: usize },

    #[error("least-squares fit needs at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("least-squares design matrix is rank deficient")]
    RankDeficient,

    #[error("h = {h}: {source}")]
    AtRefinement {
        h: u32,
        #[source]
        source: Box<Error>,
    },
}
