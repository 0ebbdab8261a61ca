use thiserror::Error;

/// Exit code 1 for validation failures, 2 for runtime failures.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        CliError::Validation(msg.into())
    }

    pub fn runtime(msg: impl Into<String>) -> Self {
        CliError::Runtime(msg.into())
    }
}

fn is_runtime(e: &latent_treat::Error) -> bool {
    use latent_treat::Error as E;
    match e {
        E::Io { .. } | E::RankDeficient | E::NoResidualVariation => true,
        E::Fold { source, .. } | E::Column { source, .. } => is_runtime(source),
        _ => false,
    }
}

impl From<latent_treat::Error> for CliError {
    fn from(e: latent_treat::Error) -> Self {
        if is_runtime(&e) {
            CliError::Runtime(e.to_string())
        } else {
            CliError::Validation(e.to_string())
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
