use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported Dirac representation `{0}`")]
    UnsupportedRepresentation(String),
    #[error("invalid value for `{field}`: {reason}")]
    InvalidSpec { field: String, reason: String },
    #[error("dense storage needs {required} bytes, budget is {budget} bytes")]
    DenseBudget { required: u128, budget: u64 },
    #[error("operator is not skew-Hermitian (relative defect {0:e})")]
    NotSkew(f64),
    #[error("operator is not unitary (defect {0:e})")]
    NotUnitary(f64),
    #[error("stochastic estimator needs at least 2 probes, got {0}")]
    TooFewProbes(usize),
    #[error("negative estimate {value:e} beyond {sigmas} standard errors")]
    NegativeEstimate { value: f64, sigmas: f64 },
    #[error("potential has a nonzero magnetic component (index {0})")]
    MagneticComponent(usize),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("matrix is rank deficient (smallest singular value {0:e})")]
    RankDeficient(f64),
    #[error(
        "ill-conditioned truncation: singular value {value:e} inside gray zone [{low:e}, {high:e}]"
    )]
    GrayZone { value: f64, low: f64, high: f64 },
    #[error("relative charge nonzero ({0}); no lift exists")]
    RelativeChargeNonzero(i64),
    #[error(
        "overlap is near singular (smallest singular value {sigma_min:e} below {threshold:e})"
    )]
    Conditioning { sigma_min: f64, threshold: f64 },
    #[error("matrix is singular")]
    Singular,
    #[error("vector lies outside the mode window (residual {0:e})")]
    OutsideWindow(f64),
    #[error("quadrature did not converge: {0}")]
    Quadrature(String),
    #[error("iteration diverged: {0}")]
    Divergence(String),
    #[error("infeasible cutoff list: {0}")]
    InfeasibleCutoff(String),
    #[error("malformed matrix container: {0}")]
    Container(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn spec(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidSpec {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
