use std::fmt;

/// Failure class, mapped to the process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Class {
    Config,
    Data,
    Numeric,
}

impl Class {
    pub fn exit_code(self) -> i32 {
        match self {
            Class::Config => 2,
            Class::Data => 3,
            Class::Numeric => 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub class: Class,
    pub kind: String,
    pub message: String,
}

impl CliError {
    pub fn new(class: Class, kind: &str, message: impl Into<String>) -> Self {
        Self { class, kind: kind.to_string(), message: message.into() }
    }

    pub fn config(kind: &str, message: impl Into<String>) -> Self {
        Self::new(Class::Config, kind, message)
    }

    pub fn data(kind: &str, message: impl Into<String>) -> Self {
        Self::new(Class::Data, kind, message)
    }

    pub fn io(path: &std::path::Path, err: impl fmt::Display) -> Self {
        Self::data("Io", format!("{}: {err}", path.display()))
    }
}

impl fmt::Display for CliError {
    // one line: `error code=<n> kind=<Kind> message=<json string>`
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let message = self.message.replace(['\n', '\r'], " ");
        write!(f, "error code={} kind={} message={:?}", self.class.exit_code(), self.kind, message)
    }
}

impl std::error::Error for CliError {}
