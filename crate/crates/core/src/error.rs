use thiserror::Error;

/// Errors raised by the analysis and simulation pipeline.
///
/// The "mathematical refusal" variants mark inputs that fall outside the
/// regime this crate handles (no multiplicity, degenerate modes, the
/// switching boundary). They are reported, never papered over.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("service rates are not of product form (|det| = {det:.3e})")]
    NotProductForm { det: f64 },

    #[error("LP optimum rho* = {rho:.12} is not critical (extended heavy traffic requires rho* = 1)")]
    NotCritical { rho: f64 },

    #[error("nondegeneracy violated: lambda_{class} = mu_{class}{server}", class = .class + 1, server = .server + 1)]
    Nondegeneracy { class: usize, server: usize },

    #[error("degenerate mode: allocation {xi:?} has more than one zero entry")]
    DegenerateMode { xi: [[f64; 2]; 2] },

    #[error("switching boundary: max lambda_i/alpha_i = {load:.12} equals max beta_k = {speed:.12}")]
    BoundaryCase { load: f64, speed: f64 },

    #[error("LP infeasible (internal error)")]
    LpInfeasible,

    #[error("no sign change of the smooth-fit residual found up to z = {limit:e}")]
    NoBracket { limit: f64 },

    #[error("discounting tail bound {bound:.3e} exceeds tolerance {tol:.3e}")]
    TailBoundExceeded { bound: f64, tol: f64 },

    #[error("nonpositive scaled rate {what} = {value} at n = {n}")]
    NonpositiveRate { what: String, value: f64, n: f64 },

    #[error("policy does not match the problem case: {0}")]
    PolicyCaseMismatch(String),

    #[error("precondition failed: {0}")]
    Precondition(String),
}

impl Error {
    /// True for errors that signal the instance is outside the supported
    /// regime (as opposed to malformed input or internal failure).
    pub fn is_refusal(&self) -> bool {
        matches!(
            self,
            Error::NotProductForm { .. }
                | Error::NotCritical { .. }
                | Error::Nondegeneracy { .. }
                | Error::DegenerateMode { .. }
                | Error::BoundaryCase { .. }
                | Error::NoBracket { .. }
                | Error::PolicyCaseMismatch(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
