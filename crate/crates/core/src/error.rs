use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

/// Everything that can go wrong inside the core crate.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Tensor shapes incompatible with the requested primitive.
    Shape { op: &'static str, detail: String },
    /// A graph leaf has no tensor bound to it.
    Unbound { node: usize },
    /// A node evaluated to NaN or infinity.
    NonFinite { node: usize },
    /// The loss handed to `gradients` is not a single value.
    NonScalarLoss { shape: Vec<usize> },
    /// Node id does not exist in the graph.
    NotInGraph { node: usize },
    /// Node id exists but is not a parameter leaf.
    NotAParameter { node: usize },
    /// Finite-difference step must be strictly positive.
    InvalidStep,
    UnknownGroup(String),
    ClassOutOfRange { class: usize, classes: usize },
    InvalidProbability,
    InvalidConfig(String),
    /// A method that needs UC supervision was given an empty labeled set.
    EmptyLabeledSet,
    /// Batch without any location-labelled record.
    NoLocationLabels,
    LengthMismatch { left: usize, right: usize },
    UnknownSequence(u32),
    /// A probe needs at least two distinct classes.
    SingleClass,
    /// Loss became NaN/inf during training.
    NumericFailure { epoch: usize },
    /// Stored hash does not match the content it describes.
    Integrity(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Shape { op, detail } => write!(f, "shape mismatch in {op}: {detail}"),
            Error::Unbound { node } => write!(f, "leaf node {node} is not bound"),
            Error::NonFinite { node } => write!(f, "node {node} produced a non-finite value"),
            Error::NonScalarLoss { shape } => write!(f, "loss must be scalar, got shape {shape:?}"),
            Error::NotInGraph { node } => write!(f, "node {node} is not part of the graph"),
            Error::NotAParameter { node } => write!(f, "node {node} is not a parameter leaf"),
            Error::InvalidStep => write!(f, "finite-difference step must be > 0"),
            Error::UnknownGroup(name) => write!(f, "unknown parameter group `{name}`"),
            Error::ClassOutOfRange { class, classes } => {
                write!(f, "class index {class} out of range for {classes} classes")
            }
            Error::InvalidProbability => write!(f, "not a valid probability vector"),
            Error::InvalidConfig(msg) => write!(f, "invalid configuration: {msg}"),
            Error::EmptyLabeledSet => write!(f, "labeled set is empty"),
            Error::NoLocationLabels => write!(f, "batch carries no location labels"),
            Error::LengthMismatch { left, right } => {
                write!(f, "length mismatch: {left} vs {right}")
            }
            Error::UnknownSequence(id) => write!(f, "unknown sequence id {id}"),
            Error::SingleClass => write!(f, "probe labels contain a single class"),
            Error::NumericFailure { epoch } => write!(f, "non-finite loss during epoch {epoch}"),
            Error::Integrity(msg) => write!(f, "integrity check failed: {msg}"),
        }
    }
}

impl core::error::Error for Error {}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn shape_err(op: &'static str, detail: String) -> Error {
    Error::Shape { op, detail }
}
