use crate::expr::ParseError;

/// Errors surfaced by the analysis pipeline.
#[derive(Debug, Clone, thiserror::Error)]
pub enum Error {
    #[error("cannot parse `{field}`: {source}")]
    Parse {
        field: String,
        #[source]
        source: ParseError,
    },
    #[error("configuration: {0}")]
    Config(String),
    #[error("solution blew up near t = {t}")]
    BlowUp { t: f64 },
    #[error("step size underflow at t = {t}")]
    StepUnderflow { t: f64 },
    #[error("step budget exhausted at t = {t}")]
    TooManySteps { t: f64 },
    #[error("(A0) violated: nontrivial multiplier mu = {mu} is within 1e-6 of +-1")]
    HypothesisA0 { mu: f64 },
    #[error("(A1) violated: {0}")]
    HypothesisA1(String),
    #[error("vector field vanishes on the boundary (min norm {min_norm:e})")]
    DegenerateField { min_norm: f64 },
    #[error("geometry: {0}")]
    Geometry(String),
    #[error("numerical failure: {0}")]
    Numeric(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
