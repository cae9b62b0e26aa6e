use std::fmt;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 1;
    pub const CONFIG: i32 = 2;
    pub const RUNTIME: i32 = 3;
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Config(String),
    Runtime(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => exit::USAGE,
            CliError::Config(_) => exit::CONFIG,
            CliError::Runtime(_) => exit::RUNTIME,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Config(_) => "config",
            CliError::Runtime(_) => "runtime",
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Config(m) | CliError::Runtime(m) => m,
        }
    }

    /// The JSON record written to stderr.
    pub fn record(&self) -> Value {
        serde_json::json!({
            "error": self.kind(),
            "exit_code": self.code(),
            "message": self.message(),
        })
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} error: {}", self.kind(), self.message())
    }
}

impl From<qut::Error> for CliError {
    fn from(e: qut::Error) -> Self {
        use qut::Error as E;
        match e {
            E::InvalidParameter(_)
            | E::InvalidFolds(_)
            | E::TooFewReplicates(_)
            | E::InvalidSize(_)
            | E::InsufficientData(_) => CliError::Config(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Reads a JSON config file. The file is an object whose keys are the
/// parameters of the chosen command.
pub fn read_config_file(path: &Path) -> CliResult<Map<String, Value>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    match serde_json::from_str(&text) {
        Ok(Value::Object(m)) => Ok(m),
        Ok(_) => Err(CliError::Config("config file must hold a JSON object".into())),
        Err(e) => Err(CliError::Config(format!("invalid JSON in {}: {e}", path.display()))),
    }
}

/// `defaults` with the file's keys laid over it. Unknown keys are rejected.
pub fn merge<T: Serialize + DeserializeOwned>(defaults: &T, file: &Map<String, Value>) -> CliResult<T> {
    let mut base = match serde_json::to_value(defaults) {
        Ok(Value::Object(m)) => m,
        _ => unreachable!("parameter structs serialize to objects"),
    };
    for (k, v) in file {
        if !base.contains_key(k) {
            let mut known: Vec<&String> = base.keys().collect();
            known.sort();
            return Err(CliError::Config(format!(
                "unknown config key '{k}' (expected one of {known:?})"
            )));
        }
        base.insert(k.clone(), v.clone());
    }
    serde_json::from_value(Value::Object(base)).map_err(|e| CliError::Config(format!("invalid config: {e}")))
}

/// A number or a keyword such as `qut` or `rcv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NumOr {
    Num(f64),
    Word(String),
}

impl NumOr {
    pub fn parse(s: &str) -> NumOr {
        match s.trim().parse::<f64>() {
            Ok(v) => NumOr::Num(v),
            Err(_) => NumOr::Word(s.trim().to_ascii_lowercase()),
        }
    }
}

/// Comma-separated list parser for flags like `--snr 0.25,0.5,1`.
pub fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>, String>
where
    T::Err: fmt::Display,
{
    s.split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| t.trim().parse::<T>().map_err(|e| format!("'{t}': {e}")))
        .collect()
}
