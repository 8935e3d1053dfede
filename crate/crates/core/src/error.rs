use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid corner angle {0}: must lie strictly between 0 and pi")]
    InvalidAngle(f64),
    #[error("degenerate contrast k = {0}: spectral parameter undefined or never attained")]
    DegenerateContrast(f64),
    #[error("no real dispersion root for k = {k} (2k/(k^2+1) = {level} <= F(0, alpha) = {floor})")]
    NoRealRoot { k: f64, level: f64, floor: f64 },
    #[error("no imaginary dispersion root for k = {k}: outside ({k_plus}, {k_minus})")]
    NoImaginaryRoot { k: f64, k_plus: f64, k_minus: f64 },
    #[error("dispersion matrix is not singular (sigma_min / sigma_max = {0:e})")]
    NotSingular(f64),
    #[error("contrast k = {k} lies in the critical interval [{k_plus}, {k_minus}]")]
    CriticalContrast { k: f64, k_plus: f64, k_minus: f64 },
    #[error("eigensolver failed: {0}")]
    EigensolveFailure(String),
    #[error("linear system nearly singular (condition estimate {0:e})")]
    NearSingularSystem(f64),
    #[error("linear solve failed: {0}")]
    SolveFailure(String),
    #[error("mesh generation failed: {0}")]
    MeshGenerationFailure(String),
    #[error("mesh too coarse: corner element size {size:e} exceeds {limit:e}")]
    MeshTooCoarse { size: f64, limit: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

impl Error {
    /// True for errors that signal violated preconditions rather than
    /// numerical breakdown.
    pub fn is_precondition(&self) -> bool {
        !matches!(
            self,
            Error::EigensolveFailure(_)
                | Error::NearSingularSystem(_)
                | Error::SolveFailure(_)
                | Error::MeshGenerationFailure(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
