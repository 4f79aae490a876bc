use std::fmt;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const OTHER: i32 = 1;
    pub const PARSE: i32 = 2;
    pub const CONFIG_MISMATCH: i32 = 3;
    pub const CORRUPT_STREAM: i32 = 4;
    pub const VERIFY_FAILED: i32 = 5;
}

#[derive(Debug)]
pub enum CliError {
    Core(hintpc::Error),
    Usage(String),
    Verify(String),
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        use hintpc::Error as E;
        match self {
            CliError::Usage(_) => exit::PARSE,
            CliError::Verify(_) => exit::VERIFY_FAILED,
            CliError::Other(_) => exit::OTHER,
            CliError::Core(e) => match e.root() {
                E::Parse { .. } => exit::PARSE,
                E::HashMismatch { .. } | E::Config(_) | E::DepthMismatch(_) => exit::CONFIG_MISMATCH,
                E::CorruptStream(_)
                | E::BadMagic { .. }
                | E::UnsupportedVersion(_)
                | E::CorruptPyramid(_)
                | E::CorruptLevel(_) => exit::CORRUPT_STREAM,
                _ => exit::OTHER,
            },
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Usage(m) | CliError::Verify(m) | CliError::Other(m) => f.write_str(m),
        }
    }
}

impl From<hintpc::Error> for CliError {
    fn from(e: hintpc::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Other(format!("csv: {e}"))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Other(format!("json: {e}"))
    }
}
