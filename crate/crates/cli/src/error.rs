use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] fpwell::Error),
    #[error("i/o on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    /// 2 for anything the user can fix in the configuration, 3 for
    /// failures during the computation or while writing results.
    pub fn exit_code(&self) -> i32 {
        use fpwell::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Core(e) => match e {
                E::Config(_)
                | E::InvalidArgument(_)
                | E::Regime { .. }
                | E::Degenerate(_)
                | E::SingularIntegral(_)
                | E::Mode(_)
                | E::Method(_)
                | E::Window { .. }
                | E::Alignment { .. }
                | E::Stability { .. }
                | E::Unsupported(_) => 2,
                _ => 3,
            },
            CliError::Io { .. } | CliError::Csv(_) => 3,
        }
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
