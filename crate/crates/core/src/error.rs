use crate::qstate::QubitLabel;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("qubit label {0} appears in both registers")]
    LabelCollision(QubitLabel),
    #[error("qubit label {0} is listed more than once")]
    DuplicateLabel(QubitLabel),
    #[error("qubit {0} is not part of the register")]
    MissingQubit(QubitLabel),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("register of {requested} qubits exceeds the cap of {cap}")]
    RegisterTooLarge { requested: usize, cap: usize },
    #[error("matrix is not Hermitian (max deviation {0:.3e})")]
    NotHermitian(f64),
    #[error("invalid density operator: {0}")]
    InvalidDensity(String),
    #[error("invalid probability vector: {0}")]
    InvalidProbabilities(String),
    #[error("ancilla {label} is not in |0> (population of |1> is {population:.3e})")]
    AncillaNotFresh { label: QubitLabel, population: f64 },
    #[error("no branches to sample from")]
    EmptyBranches,
    #[error("projector set is not complete and orthogonal (defect {0:.3e})")]
    IncompleteProjectors(f64),
    #[error("{name} = {value} is out of range {range}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        range: String,
    },
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("branch has zero probability")]
    ZeroProbabilityBranch,
    #[error("unknown event label `{0}`")]
    UnknownEvent(String),
    #[error("event `{0}` has already been measured")]
    AlreadyMeasured(String),
    #[error("bit vector has length {actual}, expected {expected}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("invalid history spec: {0}")]
    InvalidSpec(String),
}
