//! Mapping of errors onto the stable exit-code contract.

use std::fmt;

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_VERSION: u8 = 4;

/// Errors raised by the CLI itself, tagged with their exit class.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Data(String),
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Data(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for Failure {}

fn core_code(e: &tapgroove::Error) -> u8 {
    use tapgroove::Error as E;
    match e {
        E::Io { .. } | E::Config(_) => EXIT_USAGE,
        _ => EXIT_DATA,
    }
}

fn model_code(e: &tapgroove_model::Error) -> u8 {
    use tapgroove_model::Error as E;
    match e {
        E::CheckpointVersion { .. } => EXIT_VERSION,
        E::Io { .. } | E::Config(_) => EXIT_USAGE,
        E::Audio(inner) => core_code(inner),
        _ => EXIT_DATA,
    }
}

/// First classifiable error in the chain decides; anything else is a generic failure.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(f) = cause.downcast_ref::<Failure>() {
            return match f {
                Failure::Usage(_) => EXIT_USAGE,
                Failure::Data(_) => EXIT_DATA,
            };
        }
        if let Some(e) = cause.downcast_ref::<tapgroove_model::Error>() {
            return model_code(e);
        }
        if let Some(e) = cause.downcast_ref::<tapgroove::Error>() {
            return core_code(e);
        }
        if cause.downcast_ref::<toml::de::Error>().is_some() {
            return EXIT_USAGE;
        }
    }
    1
}
