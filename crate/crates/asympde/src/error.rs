//! Error type shared by the whole crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Everything that can go wrong when assembling or running an experiment.
///
/// Numerical guards (Picard divergence, boundary breaches, invalid moment
/// quadrature) abort with a diagnostic instead of returning silently wrong
/// numbers.
#[derive(Debug, Error)]
pub enum Error {
    /// A scalar argument left its mathematical domain.
    #[error("domain error in {name}: {reason}")]
    Domain { name: &'static str, reason: String },

    /// Grid construction rejected its parameters.
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    /// An operation received fields living on different grids.
    #[error("grid mismatch between operands")]
    GridMismatch,

    /// A moment table was used at a time other than the one it was built at.
    #[error("moment table built at t = {table_time} used at t = {requested}")]
    TimeMismatch { table_time: f64, requested: f64 },

    /// Moment order cap exceeded (tables support |α| ≤ 6).
    #[error("moment order cap exceeded: requested {requested}, maximum {max}")]
    MomentCapExceeded { requested: usize, max: usize },

    /// Boundary samples are too large for polynomial-weighted quadrature to
    /// be trustworthy at the requested order.
    #[error(
        "moment quadrature invalid: boundary magnitude {boundary:.3e} times \
         half-extent^{order} = {amplified:.3e} exceeds {limit:.1e}"
    )]
    MomentQuadratureInvalid {
        boundary: f64,
        order: usize,
        amplified: f64,
        limit: f64,
    },

    /// Picard iteration failed to reach the fixed-point tolerance.
    #[error(
        "Picard iteration diverged on segment ending at t = {t}: \
         residual {residual:.3e} after {iters} sweeps (tolerance {tol:.1e})"
    )]
    PicardDiverged {
        t: f64,
        iters: usize,
        residual: f64,
        tol: f64,
    },

    /// A solution sample grew beyond the boundary-smallness guard.
    #[error(
        "boundary guard breached at t = {t}: |u| = {value:.3e} on the outermost \
         grid layer (tolerance {tol:.1e}); enlarge the domain or shorten the horizon"
    )]
    BoundaryBreach { t: f64, value: f64, tol: f64 },

    /// A field stopped being finite during time stepping.
    #[error("non-finite sample produced at t = {t}")]
    NonFinite { t: f64 },

    /// A time that must be a recorded trajectory node is not one.
    #[error("t = {t} is not a recorded trajectory time")]
    MissingTime { t: f64 },

    /// Chemotaxis history does not cover the requested time.
    #[error("chemical-field history does not cover t = {t}")]
    HistoryGap { t: f64 },

    /// The auxiliary chemical field is required but absent.
    #[error("chemotaxis state required but not provided")]
    MissingChemotaxisState,

    /// Slope fitting needs more samples than the window contains.
    #[error("slope fit needs at least {needed} points, window contains {got}")]
    TooFewPoints { needed: usize, got: usize },

    /// A parameter combination outside the supported regime.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// Reading or writing an artifact failed.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// An artifact file did not parse.
    #[error("malformed file {path}: {reason}")]
    Malformed { path: String, reason: String },
}

impl Error {
    pub(crate) fn domain(name: &'static str, reason: impl Into<String>) -> Self {
        Error::Domain {
            name,
            reason: reason.into(),
        }
    }
}
