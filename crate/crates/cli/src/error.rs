use thiserror::Error;

/// Exit status 2 for usage, 1 for everything the data or storage rejects.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Domain(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Domain(_) => 1,
        }
    }
}

macro_rules! domain_from {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Domain(e.to_string())
            }
        }
    )*};
}

domain_from!(
    std::io::Error,
    csv::Error,
    serde_json::Error,
    airidx::storage::StorageError,
    airidx::data::DataError,
    airidx::format::FormatError,
    airidx::tuner::TuneError,
    airidx::builders::BuilderError,
    airidx::cost::CostError,
    airidx::query::QueryError
);
