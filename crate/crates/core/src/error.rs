use std::path::PathBuf;

use thiserror::Error;

use crate::solver::SolveReport;

/// Which genericity check tripped inside a triangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum DegeneracyKind {
    /// The two sites differ (almost) only along the triangle normal.
    ProjectedGap,
    /// A cell collapsed to a zero-width sliver: two of its bisectors coincide.
    CollapsedCell,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("degenerate configuration ({kind:?}) between sites {sites:?} on triangle {triangle}")]
    Degenerate {
        kind: DegeneracyKind,
        sites: Vec<usize>,
        triangle: usize,
    },

    #[error("initialization failed: cells {sites:?} still carry no mass")]
    Initialization { sites: Vec<usize> },

    #[error("cell {site} has zero mass")]
    EmptyCell { site: usize },

    #[error("singular Newton system after {iterations} CG iterations (relative residual {residual:e}); support is probably not strongly connected")]
    SingularSystem { iterations: usize, residual: f64 },

    #[error("line search exceeded 2^-{max_exponent} at Newton iteration {iteration}")]
    LineSearch {
        iteration: usize,
        max_exponent: u32,
        report: Box<SolveReport>,
    },

    #[error("no convergence after {iterations} Newton iterations (residual {residual:e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        report: Box<SolveReport>,
    },

    #[error("registration error: {0}")]
    Registration(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// True for errors caused by bad inputs rather than by the numerics.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Validation(_) | Error::Parse { .. } | Error::Io { .. } | Error::Geometry(_) => {
                true
            }
            Error::Context { source, .. } => source.is_validation(),
            _ => false,
        }
    }

    pub fn with_context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error, skipping context wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            e => e,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
