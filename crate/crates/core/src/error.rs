use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("matrix is not skew-symmetric (symmetric part {asym:.3e} > {tol:.1e})")]
    NotSkew { asym: f64, tol: f64 },

    #[error("rotation angle {angle} is within {margin:.1e} of pi; logarithm is ill-conditioned")]
    NearCutLocus { angle: f64, margin: f64 },

    #[error("matrix is off the group: orthogonality defect {orth:.3e}, det {det}")]
    OffGroup { orth: f64, det: f64 },

    #[error("jump map produced a matrix off the group (orthogonality defect {orth:.3e}, det {det})")]
    ResultOffGroup { orth: f64, det: f64 },

    #[error("invalid group description: {0}")]
    InvalidGroup(String),

    #[error("step-doubling error estimate {estimate:.3e} exceeds {limit:.1e} at t = {t}")]
    StepTooLarge { t: f64, estimate: f64, limit: f64 },

    #[error("non-transversal contact with the switching surface at t = {t} (transversality {value:.3e})")]
    NonTransversal { t: f64, value: f64 },

    #[error("surface differential vanishes (norm {norm:.3e}); normal is undefined")]
    DegenerateNormal { norm: f64 },

    #[error("running cost `{0}` has no closed-form minimizer and no hook was supplied")]
    MissingMinimizer(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("Levenberg-Marquardt damping exhausted at residual {residual:.3e}")]
    SingularJacobian { residual: f64 },

    #[error("none of {starts} shooting starts converged (best residual {best_residual:.3e})")]
    NoConvergedStart { starts: usize, best_residual: f64 },

    #[error("no root of the Hamiltonian continuity equation: {0}")]
    NoRoot(String),

    #[error("gradient calibration failed: {0}")]
    GradientCalibrationFailed(String),

    #[error("line search failed: step underflow without decrease at iteration {iteration}")]
    LineSearchFailed { iteration: usize },

    #[error("unknown {kind} `{name}`")]
    UnknownStrategy { kind: &'static str, name: String },

    #[error("invalid configuration field `{field}`: {reason}")]
    InvalidConfig { field: String, reason: String },
}

impl Error {
    pub fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
