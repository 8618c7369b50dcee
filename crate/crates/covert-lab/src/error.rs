use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("{name} = {value} outside {domain}")]
    Domain {
        name: &'static str,
        value: f64,
        domain: &'static str,
    },

    #[error("invalid parameter: {0}")]
    Invalid(String),

    #[error("channel schedule exhausted: {requested} uses requested, {remaining} remaining")]
    ChannelExhausted { requested: usize, remaining: usize },

    #[error("unknown prompt id {0:?}")]
    UnknownPrompt(String),

    #[error("message has zero probability under the model: {0}")]
    ZeroProbability(String),

    #[error("seed space 2^{bits} exceeds exact-mode cap 2^{cap_bits}; use monte_carlo mode")]
    SeedSpaceTooLarge { bits: u32, cap_bits: u32 },

    #[error("support of {count} atoms exceeds enumeration cap {cap}")]
    EnumerationCap { count: u64, cap: u64 },

    #[error("public parameters reused")]
    ParamsReused,

    #[error("PRF label reused: round {round}, speaker {speaker}, index {index}")]
    LabelReused { round: u64, speaker: u8, index: u64 },

    #[error("session key reused")]
    KeyReused,

    #[error("rejection embedding aborted after {0} tries")]
    Aborted(usize),

    #[error("not enough eligible rounds: needed {needed} for speaker {speaker}, budget of {rounds} rounds spent")]
    RoundBudget {
        needed: usize,
        speaker: char,
        rounds: usize,
    },

    #[error("bi-degree index set has {count} pairs, cap is {cap}")]
    IndexCap { count: u64, cap: u64 },

    #[error("malformed message: {0}")]
    Malformed(String),

    #[error("config: {0}")]
    Config(String),

    #[error("unknown experiment {0:?}")]
    UnknownExperiment(String),

    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn check_prob(name: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::Domain {
            name,
            value,
            domain: "[0, 1]",
        })
    }
}

pub(crate) fn check_crossover(name: &'static str, value: f64) -> Result<()> {
    if (0.0..0.5).contains(&value) {
        Ok(())
    } else {
        Err(Error::Domain {
            name,
            value,
            domain: "[0, 1/2)",
        })
    }
}
