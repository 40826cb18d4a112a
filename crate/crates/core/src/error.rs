use thiserror::Error;

/// Errors surfaced by the selection library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("record `{id}`: vector has dimension {got}, expected {expected}")]
    DimensionMismatch {
        id: String,
        expected: usize,
        got: usize,
    },

    #[error("record `{id}`: zero-norm vector has no cosine direction")]
    ZeroNorm { id: String },

    #[error("duplicate record id `{id}`")]
    DuplicateId { id: String },

    #[error("embedding sets have mismatched dimensions: {left} vs {right}")]
    SetDimensionMismatch { left: usize, right: usize },

    #[error("record `{id}` contains a tab or newline and cannot be written in text format")]
    TextUnrepresentable { id: String },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("malformed binary stream: {0}")]
    Binary(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("index {index} out of bounds for kernel of size {size}")]
    IndexOutOfBounds { index: usize, size: usize },

    #[error("index {index} appears more than once")]
    DuplicateIndex { index: usize },

    #[error("candidate {index} is already selected")]
    AlreadySelected { index: usize },

    #[error("candidate {index} belongs to the conditioning set")]
    InConditioningSet { index: usize },

    #[error("universe is empty")]
    EmptyUniverse,

    #[error("selection is empty")]
    EmptySelection,

    #[error("subset must contain at least {min} indices, got {got}")]
    SubsetTooSmall { min: usize, got: usize },

    #[error("universe of {n} elements exceeds the enumeration guard of {guard}")]
    EnumerationGuard { n: usize, guard: usize },

    #[error("{count} orderings exceed the permutation limit of {limit}")]
    PermutationLimit { count: u64, limit: u64 },

    #[error("template is missing required placeholder `{{{name}}}`")]
    MissingPlaceholder { name: String },

    #[error("{path}: {source}")]
    InFile {
        path: String,
        #[source]
        source: Box<Error>,
    },

    #[error("embedding set at `{path}` is empty")]
    EmptySet { path: String },
}

impl Error {
    /// Attach a file path to an error raised while reading that file.
    pub fn in_file(self, path: &std::path::Path) -> Error {
        Error::InFile {
            path: path.display().to_string(),
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
