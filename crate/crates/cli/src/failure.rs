use distmc::Error;
use serde::Serialize;

/// Error reported on standard error as one JSON object.
#[derive(Debug, Serialize)]
pub struct Failure {
    pub error: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub line: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub row: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub col: Option<String>,
}

impl Failure {
    pub fn new(error: &'static str, message: impl Into<String>) -> Self {
        Self {
            error,
            message: message.into(),
            line: None,
            row: None,
            col: None,
        }
    }

    pub fn at(mut self, row: &str, col: &str) -> Self {
        self.row = Some(row.to_owned());
        self.col = Some(col.to_owned());
        self
    }

    /// 2 when no neighbors could be found, 1 otherwise.
    pub fn exit_code(&self) -> u8 {
        if self.error == "no_neighbors" {
            2
        } else {
            1
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("failure serializes")
    }
}

pub fn kind_of(e: &Error) -> &'static str {
    match e {
        Error::NoNeighbors { .. } | Error::AllTrialsFailed => "no_neighbors",
        Error::NoObservedCells { .. } => "cannot_tune",
        Error::Parse { .. } => "parse",
        Error::Io(_) => "io",
        Error::Json(_) => "json",
        _ => "invalid",
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let mut f = Failure::new(kind_of(&e), e.to_string());
        if let Error::Parse { line, .. } = e {
            f.line = Some(line);
        }
        f
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::new("io", e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::new("json", e.to_string())
    }
}
