use std::fs;
use std::path::Path;

use persuasion::{ProblemInstance, SignalingScheme};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::Failure;

/// Scheme on disk: the support and weights, plus whatever the command that
/// produced it wants to report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SchemeFile {
    #[serde(flatten)]
    pub scheme: SignalingScheme,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<Value>,
}

impl SchemeFile {
    pub fn bare(scheme: SignalingScheme) -> Self {
        Self {
            scheme,
            value: None,
            report: None,
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

pub fn load_instance(path: &Path) -> Result<ProblemInstance, Failure> {
    serde_json::from_str(&read(path)?)
        .map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

pub fn load_scheme(path: &Path) -> Result<SchemeFile, Failure> {
    serde_json::from_str(&read(path)?)
        .map_err(|e| Failure::input(format!("{}: {e}", path.display())))
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

/// Writes to `path`, or to standard output when there is none.
pub fn emit(path: Option<&Path>, text: &str) -> Result<(), Failure> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| Failure::input(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
