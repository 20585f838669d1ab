use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("argument outside domain: {0}")]
    Domain(String),

    #[error("evaluation at root {index} (theta = {theta})")]
    Pole { index: usize, theta: f64 },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("initial data violates the slope floor m = {m}: worst slope {slope} at theta = {theta}")]
    HmViolation { m: f64, slope: f64, theta: f64 },

    #[error("step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn at_step(self, step: usize) -> Self {
        Error::AtStep {
            step,
            source: Box::new(self),
        }
    }

    /// Innermost error, with step context stripped.
    pub fn root_cause(&self) -> &Error {
        match self {
            Error::AtStep { source, .. } => source.root_cause(),
            e => e,
        }
    }
}
