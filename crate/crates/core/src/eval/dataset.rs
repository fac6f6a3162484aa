use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::agents::SampleVerdict;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionSource {
    pub file: String,
    pub function: String,
    pub source: String,
    /// Source line of the first line of `source`.
    #[serde(default = "first_line", skip_serializing_if = "is_first_line")]
    pub start_line: u32,
}

fn first_line() -> u32 {
    1
}

fn is_first_line(l: &u32) -> bool {
    *l == 1
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairSample {
    pub pair_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cwe: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repo_ref: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diff_text: Option<String>,
    pub vulnerable: FunctionSource,
    pub patched: FunctionSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Side {
    VulnSide,
    PatchSide,
}

impl Side {
    pub const BOTH: [Side; 2] = [Side::VulnSide, Side::PatchSide];

    /// Ground-truth label: the vulnerable side is the positive class.
    pub fn is_vulnerable(self) -> bool {
        self == Side::VulnSide
    }

    pub fn suffix(self) -> &'static str {
        match self {
            Side::VulnSide => "vuln",
            Side::PatchSide => "patch",
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::VulnSide => "VulnSide",
            Side::PatchSide => "PatchSide",
        })
    }
}

impl PairSample {
    pub fn side(&self, side: Side) -> &FunctionSource {
        match side {
            Side::VulnSide => &self.vulnerable,
            Side::PatchSide => &self.patched,
        }
    }

    /// Identifier of one side's pipeline run.
    pub fn run_id(&self, side: Side) -> String {
        format!("{}-{}", self.pair_id, side.suffix())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub sample_id: String,
    pub target: Side,
    pub verdict: SampleVerdict,
}

fn read(path: &Path) -> Result<String, EvalError> {
    std::fs::read_to_string(path).map_err(|source| EvalError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn parse_pair_dataset(text: &str) -> Result<Vec<PairSample>, EvalError> {
    let pairs: Vec<PairSample> =
        serde_json::from_str(text).map_err(|e| EvalError::SchemaViolation(e.to_string()))?;
    let mut seen = BTreeSet::new();
    for p in &pairs {
        if p.pair_id.trim().is_empty() {
            return Err(EvalError::SchemaViolation("empty pair_id".into()));
        }
        if !seen.insert(p.pair_id.as_str()) {
            return Err(EvalError::DuplicateId(p.pair_id.clone()));
        }
        for side in Side::BOTH {
            let f = p.side(side);
            if f.start_line == 0 {
                return Err(EvalError::SchemaViolation(format!(
                    "pair {}: start_line must be 1-based",
                    p.pair_id
                )));
            }
            if f.source.trim().is_empty() || f.function.trim().is_empty() || f.file.trim().is_empty() {
                return Err(EvalError::SchemaViolation(format!(
                    "pair {}: {side} function is incomplete",
                    p.pair_id
                )));
            }
        }
    }
    Ok(pairs)
}

pub fn load_pair_dataset(path: &Path) -> Result<Vec<PairSample>, EvalError> {
    parse_pair_dataset(&read(path)?)
}

pub fn parse_predictions(text: &str) -> Result<Vec<Prediction>, EvalError> {
    let preds: Vec<Prediction> =
        serde_json::from_str(text).map_err(|e| EvalError::SchemaViolation(e.to_string()))?;
    let mut seen = BTreeSet::new();
    for p in &preds {
        if !seen.insert((p.sample_id.as_str(), p.target)) {
            return Err(EvalError::DuplicateId(format!("{}/{}", p.sample_id, p.target)));
        }
    }
    Ok(preds)
}

pub fn load_predictions(path: &Path) -> Result<Vec<Prediction>, EvalError> {
    parse_predictions(&read(path)?)
}

pub fn predictions_to_json(preds: &[Prediction]) -> String {
    let mut s = serde_json::to_string_pretty(preds).expect("predictions serialize");
    s.push('\n');
    s
}
