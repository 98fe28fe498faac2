use crate::map::Side;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("x = c needs an explicit side")]
    Singularity,

    #[error("coordinate {0} lies outside [0, 1]")]
    Domain(f64),

    #[error("parameter {name} = {value} is invalid: {reason}")]
    Parameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("map is not expanding: derivative floor {0} <= 1")]
    NotExpanding(f64),

    #[error("{y} is outside the image of the {side} branch")]
    NoPreimage { side: Side, y: f64 },

    #[error("maps do not share (c, alpha, beta)")]
    IncompatibleFamily,

    #[error("word {0} has no admissible periodic point")]
    NoPeriodicPoint(String),

    #[error("forward error budget exhausted at step {0}")]
    Budget(usize),

    #[error("singular orbit on the {side} comes within {distance:e} of c: recurrence constants are unavailable")]
    FastRecurrence { side: Side, distance: f64 },

    #[error("precondition fails at step {step}: {reason}")]
    Precondition { step: usize, reason: &'static str },

    #[error("hypothesis not satisfied: {0}")]
    Inapplicable(String),

    #[error("no admissible periodic word up to length {0}")]
    SearchExhausted(usize),

    #[error("branch {word} returns onto a proper subinterval of J at step {step}")]
    MarkovViolation { word: String, step: usize },

    #[error("no connection with |delta d| < {eps} up to depth {depth}")]
    Infeasible { eps: f64, depth: usize },

    #[error("no single sign change on the bracket: {0}")]
    Bracket(String),

    #[error("preimage chain does not approach {target} within depth {depth}")]
    ChainNotFound { target: f64, depth: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
