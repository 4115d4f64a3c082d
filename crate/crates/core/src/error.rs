use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A parameter violates a documented precondition. `name` is the field
    /// or argument as the caller spelled it, so it can be surfaced verbatim.
    #[error("invalid parameter `{name}`: {message}")]
    InvalidParameter { name: &'static str, message: String },

    /// Both switching rates are zero, so the chain has no unique
    /// stationary distribution.
    #[error("charge chain is degenerate: g_ion + g_rec = 0")]
    DegenerateChain,

    /// Readout error rates sum to one or more; the spin projection noise
    /// has no finite value there.
    #[error("readout noise diverges: eps0 + eps1 = {sum} >= 1")]
    Divergent { sum: f64 },

    /// No threshold in the scanned range yields finite projection noise.
    #[error("no threshold in range gives eps0 + eps1 < 1")]
    AllThresholdsDivergent,

    /// Post-selection removed every shot.
    #[error("no shots survive post-selection at threshold {threshold}")]
    EmptySelection { threshold: i64 },

    /// The count ladder was capped before the tail mass dropped below
    /// tolerance; results at this cap would be biased.
    #[error("count distribution truncated at n_max = {n_max} with tail mass {tail:.3e}")]
    Truncation { n_max: usize, tail: f64 },

    /// An estimator was handed fewer samples than it can digest.
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, message: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            message: message.into(),
        }
    }
}
