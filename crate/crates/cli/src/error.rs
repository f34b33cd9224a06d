//! Error type and exit-code policy for the `downwind` binary.
//!
//! Every failure funnels into a [`CliError`] carrying one of three exit
//! codes:
//!
//! * **2** — I/O: a file could not be read or written. The message always
//!   names the path.
//! * **3** — schema or configuration: malformed config JSON, unknown keys,
//!   a design naming a column the panel does not declare, an empty
//!   coefficient table, invalid parameter values.
//! * **4** — computation: the inputs parsed but the numbers cannot be
//!   produced (zero variance, rank deficiency, missing data discovered
//!   mid-chain).

use downwind_core::accounting::AccountingError;
use downwind_core::aoe::AoeError;
use downwind_core::econometrics::EconError;
use downwind_core::ingest::IngestError;
use downwind_core::shiftshare::ShiftShareError;
use downwind_core::windfield::WindError;

/// Exit code for I/O failures (messages name the path).
pub const EXIT_IO: i32 = 2;
/// Exit code for schema, validation, and configuration failures.
pub const EXIT_SCHEMA: i32 = 3;
/// Exit code for computation failures on well-formed inputs.
pub const EXIT_COMPUTE: i32 = 4;

/// A fatal CLI error: what to print and what to exit with.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn io(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_IO,
            message: message.into(),
        }
    }

    pub fn schema(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_SCHEMA,
            message: message.into(),
        }
    }

    pub fn compute(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_COMPUTE,
            message: message.into(),
        }
    }

    /// An I/O error reading `path`, with the path in the message.
    pub fn read(path: &std::path::Path, source: std::io::Error) -> Self {
        Self::io(format!("cannot read {}: {source}", path.display()))
    }

    /// An I/O error writing `path`, with the path in the message.
    pub fn write(path: &std::path::Path, source: std::io::Error) -> Self {
        Self::io(format!("cannot write {}: {source}", path.display()))
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.message)
    }
}

impl std::error::Error for CliError {}

pub type Result<T> = std::result::Result<T, CliError>;

// ---------------------------------------------------------------------------
// Mapping from library errors
// ---------------------------------------------------------------------------

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        let code = match &e {
            IngestError::Read { .. } | IngestError::Write { .. } | IngestError::Csv { .. } => {
                EXIT_IO
            }
            _ => EXIT_SCHEMA,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<AoeError> for CliError {
    fn from(e: AoeError) -> Self {
        let code = match &e {
            AoeError::Read { .. } | AoeError::Write { .. } | AoeError::Csv { .. } => EXIT_IO,
            AoeError::InvalidParams(_)
            | AoeError::Schema(_)
            | AoeError::UnknownSender(_)
            | AoeError::UnknownId(_)
            | AoeError::MissingField(_)
            | AoeError::ArrivalOutsidePeriod(_) => EXIT_SCHEMA,
            AoeError::InsufficientPositiveScores { .. } | AoeError::NegativeScore(_) => {
                EXIT_COMPUTE
            }
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<WindError> for CliError {
    fn from(e: WindError) -> Self {
        let code = match &e {
            WindError::Write { .. } => EXIT_IO,
            WindError::InvalidConfig(_)
            | WindError::DegenerateExtent
            | WindError::NoSamplesForDate(_) => EXIT_SCHEMA,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<EconError> for CliError {
    fn from(e: EconError) -> Self {
        let code = match &e {
            EconError::UnknownColumn(_)
            | EconError::InvalidSpec(_)
            | EconError::DuplicateColumn(_)
            | EconError::LengthMismatch { .. }
            | EconError::EmptyPanel
            | EconError::MissingBin(_) => EXIT_SCHEMA,
            EconError::NonFinite { .. }
            | EconError::NonConvergence { .. }
            | EconError::RankDeficient
            | EconError::WeakRank(_)
            | EconError::SingleCluster(_)
            | EconError::ZeroVariance(_) => EXIT_COMPUTE,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<ShiftShareError> for CliError {
    fn from(e: ShiftShareError) -> Self {
        match e {
            ShiftShareError::Econ(inner) => inner.into(),
            ShiftShareError::InvalidReps(_)
            | ShiftShareError::OutOfRangeP(_)
            | ShiftShareError::InvalidValue(_) => Self {
                code: EXIT_SCHEMA,
                message: e.to_string(),
            },
            ShiftShareError::BothZero
            | ShiftShareError::ZeroBaseExports { .. }
            | ShiftShareError::MissingYear { .. }
            | ShiftShareError::ZeroDenominator { .. }
            | ShiftShareError::ZeroPopulation { .. } => Self {
                code: EXIT_COMPUTE,
                message: e.to_string(),
            },
        }
    }
}

impl From<AccountingError> for CliError {
    fn from(e: AccountingError) -> Self {
        let code = match &e {
            // Mismatched or incomplete tables are declaration problems.
            AccountingError::MissingBin(_) | AccountingError::InvalidValue(_) => EXIT_SCHEMA,
            AccountingError::ZeroVariance(_)
            | AccountingError::MissingPopulation { .. }
            | AccountingError::MissingLoss { .. }
            | AccountingError::ZeroExports => EXIT_COMPUTE,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}
