use std::fmt;
use std::process::ExitCode;

pub const OK: u8 = 0;
pub const INVALID: u8 = 1;
pub const USAGE: u8 = 2;
pub const FAILURE: u8 = 3;

/// Bad flags or settings that contradict each other.
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

/// Result of a command that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Done,
    /// The input was read fine but did not pass the check the command performs.
    Invalid,
}

pub fn code_for(result: &anyhow::Result<Outcome>) -> ExitCode {
    ExitCode::from(match result {
        Ok(Outcome::Done) => OK,
        Ok(Outcome::Invalid) => INVALID,
        Err(e) if e.downcast_ref::<Usage>().is_some() => USAGE,
        Err(_) => FAILURE,
    })
}
