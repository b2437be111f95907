use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot open repository {path}: {source}")]
    Repository {
        path: PathBuf,
        #[source]
        source: git2::Error,
    },
    #[error("shallow clone at {0} is not supported; fetch the full history first")]
    ShallowClone(PathBuf),
    #[error("unknown branch `{0}`")]
    UnknownBranch(String),
    #[error("unknown commit `{0}`")]
    UnknownCommit(String),
    #[error("path `{path}` does not exist at commit {commit}")]
    PathMissing { commit: String, path: String },
    #[error("line {line} is out of range for `{path}` at {commit} ({len} lines)")]
    LineOutOfRange {
        commit: String,
        path: String,
        line: u32,
        len: usize,
    },
    #[error("git: {0}")]
    Git(#[from] git2::Error),

    #[error("malformed issue-id pattern `{pattern}`: {reason}")]
    Pattern { pattern: String, reason: String },
    #[error("duplicate {kind} ids: {ids:?}")]
    Duplicate { kind: &'static str, ids: Vec<String> },
    #[error("issue {0} has no reported time")]
    MissingReportedTime(String),

    #[error("unknown issue `{0}`")]
    UnknownIssue(String),
    #[error("unknown rule `{0}`")]
    UnknownRule(String),
    #[error("rule {rule_id} belongs to the {section} section and cannot justify a {verdict} verdict")]
    RuleMismatch {
        rule_id: String,
        section: String,
        verdict: String,
    },
    #[error("stale label for issue {issue_id} by {rater}: expected revision {expected:?}, found {found:?}")]
    StaleRevision {
        issue_id: String,
        rater: String,
        expected: Option<u64>,
        found: Option<u64>,
    },
    #[error("unresolved rater disagreements on issues {0:?}")]
    UnresolvedDisagreements(Vec<String>),
    #[error("no issue was rated by two or more raters")]
    NoOverlap,

    #[error("invalid review record for {change_id}: {reason}")]
    InvalidReview { change_id: String, reason: String },

    #[error("{0}")]
    InvalidInput(String),
    #[error("{0}")]
    Numerical(String),

    #[error("stage `{stage}` failed (input checksum {checksum}): {source}")]
    Stage {
        stage: String,
        checksum: String,
        #[source]
        source: Box<Error>,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("config: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad user data rather than tool defects.
    pub fn is_data_error(&self) -> bool {
        match self {
            Error::Numerical(_) => false,
            Error::Stage { source, .. } => source.is_data_error(),
            _ => true,
        }
    }
}
