use std::fmt;

/// Failure of a subcommand, classified by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Invalid or inconsistent configuration, including missing input files.
    Config(String),
    /// Input data that cannot be read or violates its schema.
    Data(String),
    /// The sampler could not produce draws.
    Sampler(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Sampler(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Data(m) => write!(f, "data error: {m}"),
            CliError::Sampler(m) => write!(f, "sampler error: {m}"),
        }
    }
}

impl From<polyanchor::Error> for CliError {
    fn from(e: polyanchor::Error) -> Self {
        use polyanchor::Error;
        match e {
            Error::InvalidInput(m) => CliError::Config(m),
            Error::Sampler(m) => CliError::Sampler(m),
            other @ (Error::Domain(_) | Error::Data(_) | Error::Row { .. } | Error::Io { .. } | Error::Csv { .. }) => {
                CliError::Data(other.to_string())
            }
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Prefixes a configuration error with the field it concerns.
pub fn at_field(field: &str) -> impl Fn(polyanchor::Error) -> CliError + '_ {
    move |e| match CliError::from(e) {
        CliError::Config(m) => CliError::Config(format!("{field}: {m}")),
        other => other,
    }
}

impl CliError {
    pub fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Data(m) | CliError::Sampler(m) => m,
        }
    }
}
