use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        source: std::io::Error,
    },
}

impl CliError {
    pub fn invalid(msg: impl std::fmt::Display) -> Self {
        Self::Validation(msg.to_string())
    }

    pub fn io(context: impl std::fmt::Display, source: std::io::Error) -> Self {
        Self::Io {
            context: context.to_string(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Validation(_) => 2,
            Self::Io { .. } => 1,
        }
    }
}

macro_rules! validation_from {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                Self::invalid(e)
            }
        }
    )*};
}

validation_from!(
    gjn_core::SpecError,
    gjn_core::analysis::AnalysisError,
    gjn_core::bar::BarError,
    gjn_core::sim::RunError,
    gjn_core::sim::RegistrationError,
    gjn_core::testfn::TestFunctionError,
    gjn_core::testfn::SelectorError
);
