use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument `{name}`: {reason}")]
    InvalidArgument { name: &'static str, reason: String },

    #[error("block length rule is not strictly increasing at block {block} ({prev} -> {next})")]
    NonIncreasingRule { block: u32, prev: u64, next: u64 },

    #[error(
        "constellation `{label}` has no tail certificate; request a window-only evaluation instead"
    )]
    UncertifiableTail { label: String },

    #[error("window [{lo}, {hi}] is too small: certified comparison needs [{need_lo}, {need_hi}]")]
    WindowTooSmall {
        lo: i64,
        hi: i64,
        need_lo: i64,
        need_hi: i64,
    },

    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepSizeUnderflow { t: f64, h: f64 },

    #[error("step budget of {max_steps} exhausted at t = {t}")]
    TooManySteps { t: f64, max_steps: usize },

    #[error("divergence at t = {t}: state norm {norm:e} exceeds {limit:e}")]
    Diverged { t: f64, norm: f64, limit: f64 },

    #[error("rate fit needs at least 4 usable points, found {found}")]
    TooFewPoints { found: usize },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument {
            name,
            reason: reason.into(),
        }
    }

    /// True for failures of the numerics (as opposed to bad input).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::StepSizeUnderflow { .. } | Error::TooManySteps { .. } | Error::Diverged { .. }
        )
    }
}
