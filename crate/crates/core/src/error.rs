use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

use crate::model::Action;

/// A single broken invariant found while validating a dataset or candidate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    UnmappedPriority { rule: String, priority: i64 },
    ActionMismatch { rule: String, priority: i64, rule_action: Action, mapped: Action },
    UnsortedTimestamps { row: usize },
    ColumnCountMismatch { expected: usize, found: usize },
    RowCountMismatch { what: &'static str, expected: usize, found: usize },
    MandatoryInactive { rule: String },
    FrozenChanged { rule: String, expected: i64, found: i64 },
    InvalidPriority { rule: String, priority: i64 },
    DuplicateRuleId { rule: String },
    VectorLength { expected: usize, found: usize },
    MissingTriggerColumn { rule: String },
    UnknownTriggerColumn { column: String },
    NonBinaryCell { row: usize, column: String, value: String },
    NonBinaryLabel { row: usize, value: String },
    BadTimestamp { row: usize, value: String },
    BadField { row: usize, value: String },
    BadRuleRecord { line: usize, reason: String },
    RaggedRow { file: &'static str, row: usize, expected: usize, found: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use Violation::*;
        match self {
            UnmappedPriority { rule, priority } => {
                write!(f, "unmapped priority {priority} on rule {rule}")
            }
            ActionMismatch { rule, priority, rule_action, mapped } => write!(
                f,
                "rule {rule} has action {rule_action} but priority {priority} maps to {mapped}"
            ),
            UnsortedTimestamps { row } => write!(f, "unsorted timestamps at row {row}"),
            ColumnCountMismatch { expected, found } => {
                write!(f, "trigger column count {found} does not match {expected} rules")
            }
            RowCountMismatch { what, expected, found } => {
                write!(f, "{what} has {found} rows, expected {expected}")
            }
            MandatoryInactive { rule } => write!(f, "mandatory rule {rule} is inactive"),
            FrozenChanged { rule, expected, found } => {
                write!(f, "frozen rule {rule} has priority {found}, expected {expected}")
            }
            InvalidPriority { rule, priority } => {
                write!(f, "rule {rule} has invalid priority {priority}")
            }
            DuplicateRuleId { rule } => write!(f, "duplicate rule id {rule}"),
            VectorLength { expected, found } => {
                write!(f, "priority vector has {found} entries, expected {expected}")
            }
            MissingTriggerColumn { rule } => write!(f, "no trigger column for rule {rule}"),
            UnknownTriggerColumn { column } => {
                write!(f, "trigger column {column} is not a declared rule")
            }
            NonBinaryCell { row, column, value } => {
                write!(f, "non-binary trigger cell {value:?} at row {row}, column {column}")
            }
            NonBinaryLabel { row, value } => write!(f, "non-binary label {value:?} at row {row}"),
            BadTimestamp { row, value } => write!(f, "unparseable timestamp {value:?} at row {row}"),
            BadField { row, value } => write!(f, "malformed field entry {value:?} at row {row}"),
            BadRuleRecord { line, reason } => write!(f, "rules.csv line {line}: {reason}"),
            RaggedRow { file, row, expected, found } => {
                write!(f, "{file} row {row} has {found} cells, expected {expected}")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violations(pub Vec<Violation>);

impl fmt::Display for Violations {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("validation failed: {0}")]
    Validation(Violations),
    #[error("blacklist rule {rule} references unknown field {field}")]
    UnknownField { rule: String, field: String },
    #[error("loss function needs a baseline report but none was given")]
    MissingBaseline,
    #[error("invalid loss specification: {0}")]
    InvalidLoss(String),
    #[error("invalid parameters: {0}")]
    InvalidTheta(String),
    #[error("invalid fold specification: {0}")]
    Folds(String),
    #[error("empty ordering")]
    EmptyOrder,
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn violations(v: Vec<Violation>) -> Self {
        Error::Validation(Violations(v))
    }

    /// Process exit code for the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_) | Error::UnknownField { .. } => 1,
            Error::Io { .. } => 3,
            _ => 2,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
