use serde::Serialize;

pub const EXIT_PASS: u8 = 0;
pub const EXIT_THRESHOLD: u8 = 1;
pub const EXIT_INPUT: u8 = 2;
pub const EXIT_RESOURCE: u8 = 3;

/// An error that stops a run, with its exit code and a machine-readable reason.
#[derive(Clone, Debug, Serialize)]
pub struct Failure {
    #[serde(skip)]
    pub code: u8,
    pub reason: String,
    pub message: String,
}

impl Failure {
    pub fn input(reason: &str, message: impl Into<String>) -> Self {
        Failure { code: EXIT_INPUT, reason: reason.to_string(), message: message.into() }
    }
}

impl From<thermoqm::Error> for Failure {
    fn from(e: thermoqm::Error) -> Self {
        let code = match e {
            thermoqm::Error::ResourceLimit { .. } => EXIT_RESOURCE,
            _ => EXIT_INPUT,
        };
        Failure { code, reason: e.reason().to_string(), message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::input("io_error", e.to_string())
    }
}
