use std::io;

use ccl_core::corpus::CorpusError;
use ccl_core::embedstore::StoreError;
use ccl_core::evalharness::EvalError;
use ccl_core::pairgen::PairGenError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
/// Missing store files, missing embeddings or a missing input file.
pub const EXIT_MISSING: i32 = 2;
/// Malformed input.
pub const EXIT_MALFORMED: i32 = 3;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub error: anyhow::Error,
}

impl CliError {
    pub fn new(code: i32, error: impl Into<anyhow::Error>) -> Self {
        CliError {
            code,
            error: error.into(),
        }
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::new(EXIT_USAGE, anyhow::anyhow!(msg.into()))
    }

    pub fn malformed(msg: impl Into<String>) -> Self {
        CliError::new(EXIT_MALFORMED, anyhow::anyhow!(msg.into()))
    }

    pub fn context(self, ctx: impl std::fmt::Display + Send + Sync + 'static) -> Self {
        CliError {
            code: self.code,
            error: self.error.context(ctx),
        }
    }
}

fn io_code(e: &io::Error) -> i32 {
    if e.kind() == io::ErrorKind::NotFound {
        EXIT_MISSING
    } else {
        EXIT_FAILURE
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::new(io_code(&e), e)
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        CliError::new(EXIT_MALFORMED, e)
    }
}

impl From<StoreError> for CliError {
    fn from(e: StoreError) -> Self {
        let code = match &e {
            StoreError::MissingEmbedding(_) | StoreError::EncoderUnavailable(_) => EXIT_MISSING,
            StoreError::Io(io) => io_code(io),
            StoreError::DimTooSmall(_) => EXIT_USAGE,
            _ => EXIT_MALFORMED,
        };
        CliError::new(code, e)
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Store(s) => s.into(),
            EvalError::Io(io) => io.into(),
            EvalError::CandidateFileMissing(_) => CliError::new(EXIT_MISSING, e),
            EvalError::InvalidConfig(_) => CliError::new(EXIT_USAGE, e),
            EvalError::Candidates { .. } | EvalError::Score(_) => CliError::new(EXIT_MALFORMED, e),
        }
    }
}

impl From<PairGenError> for CliError {
    fn from(e: PairGenError) -> Self {
        let code = match &e {
            PairGenError::Io(io) => io_code(io),
            PairGenError::InvalidWindow | PairGenError::WrongMode { .. } => EXIT_USAGE,
            _ => EXIT_MALFORMED,
        };
        CliError::new(code, e)
    }
}
