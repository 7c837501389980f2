use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("non-finite input: {0}")]
    NonFinite(&'static str),

    #[error("value {value} outside admissible range [{lo}, {hi}] for {what}")]
    OutOfRange {
        what: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("wave speed {c} is below the minimal speed {c_star}: no monotone connection")]
    BelowMinimalSpeed { c: f64, c_star: f64 },

    #[error("tail constant is only defined at the minimal speed (got c = {c}, c* = {c_star})")]
    NotMinimalSpeed { c: f64, c_star: f64 },

    #[error("iteration did not converge: {0}")]
    NoConvergence(String),

    #[error("time step {dt} violates the stability bound {bound}")]
    UnstableTimeStep { dt: f64, bound: f64 },

    #[error("window collision at t = {t}: front at offset {front_offset} of window width {width}")]
    WindowCollision {
        t: f64,
        front_offset: f64,
        width: f64,
    },

    #[error("NaN detected at t = {t}")]
    NaNDetected { t: f64 },

    #[error("no crossing of level {level} found: {detail}")]
    NoCrossing { level: f64, detail: String },

    #[error("coverage failure: requested {what} = [{lo}, {hi}] but data covers [{have_lo}, {have_hi}]")]
    Coverage {
        what: &'static str,
        lo: f64,
        hi: f64,
        have_lo: f64,
        have_hi: f64,
    },

    #[error("ill-conditioned fit: {0}")]
    IllConditioned(String),

    #[error("frame validity violated: {0}")]
    FrameValidity(String),

    #[error("numerical overflow: {0}")]
    Overflow(String),

    #[error("non-positive amplitude estimate at theta index {index}: {value}")]
    NonPositiveAlpha { index: usize, value: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
