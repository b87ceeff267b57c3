use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown family: {0}")]
    UnknownFamily(String),
    #[error("outside domain: {0}")]
    OutsideDomain(String),
    #[error("derivative chart: the derivative is only defined in the finite chart")]
    DerivativeChart,
    #[error("unclassifiable: {0}")]
    Unclassifiable(String),
    #[error("singular value index {index} out of range for family {family}")]
    SingularIndex { family: String, index: usize },
    #[error("family {0} has no inverse branches")]
    MissingInverse(String),
    #[error("cycle is not repelling (|multiplier| = {0})")]
    NotRepelling(f64),
    #[error("no reference cycle")]
    NoReferenceCycle,
    #[error("no boundary to hit: family {0} has no poles to truncate at")]
    NoBoundary(String),
    #[error("target cycle unstable on disk")]
    TargetUnstable,
    #[error("virtual cycle not confirmed ({0} verified entries)")]
    VirtualCycleNotConfirmed(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
