use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid LCT parameters: {0}")]
    InvalidParams(String),

    #[error("quadrature configuration: {0}")]
    Configuration(String),

    #[error("decay fit failed: {0}")]
    FittingFailure(String),

    #[error("magnitude assembly: {0}")]
    Magnitude(String),

    /// No admissible anchor in `(from, from + r]`.
    #[error(
        "no admissible anchor in ({from:.6}, {to:.6}]: detector stays below {gamma_tilde} \
         (lower gamma_tilde, enlarge r, or shrink s)"
    )]
    AnchorGap {
        from: f64,
        to: f64,
        gamma_tilde: f64,
    },

    #[error("endpoint t = {point} has detector value {value:.6e} below threshold {gamma_tilde}")]
    Endpoint {
        point: f64,
        value: f64,
        gamma_tilde: f64,
    },

    #[error("anchor {j} has non-positive magnitude {value:.6e}")]
    NonpositiveAnchor { j: usize, value: f64 },

    #[error("phase transition factor rho_{j} undefined: local reconstruction vanishes at the next anchor")]
    ZeroTransition { j: usize },

    #[error("|f(p)| = {value:.3e} is below the base-point threshold")]
    ZeroBasePoint { value: f64 },

    #[error("lattice inconsistent with margins: {0}")]
    Consistency(String),

    #[error("infeasible tolerance: {0}")]
    InfeasibleTolerance(String),

    #[error("validation: {0}")]
    Validation(String),

    #[error("dataset format: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
