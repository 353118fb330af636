use crate::model::{InstancePhase, ValueReference};

/// Errors produced anywhere in the runtime.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid model description: {0}")]
    InvalidDescription(String),
    #[error("operation `{op}` not allowed in phase {phase:?}")]
    Phase { op: &'static str, phase: InstancePhase },
    #[error("operation `{0}` not supported by this model kind")]
    WrongKind(&'static str),
    #[error("unknown value reference {0}")]
    UnknownValueReference(ValueReference),
    #[error("variable `{name}` ({causality}) cannot be written in phase {phase:?}")]
    Causality {
        name: String,
        causality: &'static str,
        phase: InstancePhase,
    },
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("capability `{0}` not provided by the model")]
    Capability(&'static str),
    #[error("snapshot belongs to a different instance")]
    ForeignSnapshot,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("step size underflow at t = {t}: h = {h:e}")]
    StepUnderflow { t: f64, h: f64 },
    #[error("maximum number of steps ({0}) exceeded")]
    MaxSteps(usize),
    #[error("no sign change of the event indicator on [{t_lo}, {t_hi}]")]
    NoSignChange { t_lo: f64, t_hi: f64 },

    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    Dimension {
        context: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("model layer has no Jacobian provider: {0}")]
    MissingJacobian(String),

    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("xml: {0}")]
    Xml(String),
    #[error("unsupported FMI version `{0}`")]
    UnsupportedVersion(String),
    #[error("missing attribute `{attr}` on <{element}>")]
    MissingAttribute { element: &'static str, attr: &'static str },
    #[error("archive: {0}")]
    Archive(String),
    #[error("csv (line {line}): {message}")]
    Csv { line: u64, message: String },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for failures of the numerics (solver, divergence) as opposed to
    /// malformed input or misuse of the API.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::StepUnderflow { .. } | Error::MaxSteps(_) | Error::NonFinite(_) | Error::Diverged { .. }
        )
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
