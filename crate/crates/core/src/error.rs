use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParameters(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid switch combination: {0}")]
    InvalidSwitch(String),

    #[error("MANA matrix is singular for sigma = {sigma}")]
    Singular { sigma: u8 },

    #[error("sign pattern {pattern:04b} does not decode to a rectifier state (m1 = {m1}, m2 = {m2})")]
    Decode { pattern: u8, m1: f64, m2: f64 },

    #[error("no self-consistent rectifier state after {iterations} iterations\n{dump}")]
    NoConvergence { iterations: usize, dump: String },

    #[error("step {step} (t = {t:e} s) failed: {source}\nstate: {state}")]
    Step {
        step: usize,
        t: f64,
        state: String,
        #[source]
        source: Box<Error>,
    },

    #[error("bundle: {0}")]
    Bundle(String),

    #[error("fixed-point range: {0}")]
    FixedPointRange(String),

    #[error("scenario: {0}")]
    Scenario(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
