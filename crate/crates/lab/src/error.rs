use thiserror::Error;

pub type Result<T> = std::result::Result<T, LabError>;

#[derive(Debug, Error)]
pub enum LabError {
    /// Malformed or inconsistent experiment configuration.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("{context}: {source}")]
    Core {
        context: String,
        #[source]
        source: rootflow_core::Error,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl LabError {
    /// 2 for usage and configuration problems (including rejected initial
    /// data), 3 for numerical or i/o failures.
    pub fn exit_code(&self) -> i32 {
        use rootflow_core::Error as E;
        match self {
            LabError::Config(_) => 2,
            LabError::Core { source, .. } => match source.root_cause() {
                E::Config(_) | E::InvalidMeasure(_) | E::HmViolation { .. } | E::Domain(_) => 2,
                _ => 3,
            },
            LabError::Io { .. } => 3,
        }
    }
}

pub(crate) trait Context<T> {
    fn context(self, what: impl Into<String>) -> Result<T>;
}

impl<T> Context<T> for rootflow_core::Result<T> {
    fn context(self, what: impl Into<String>) -> Result<T> {
        self.map_err(|source| LabError::Core {
            context: what.into(),
            source,
        })
    }
}
