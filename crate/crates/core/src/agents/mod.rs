//! Clue discovery, the expansion oracle, dialectical verification and the
//! meta-audit, with structured-output validation and retry.

pub mod prompts;
mod roles;
mod schema;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::llm::{LlmError, Stage};
use crate::slicer::Clue;

pub use roles::{
    audit, decide_expansion, discover_clues, finalize_verdict, select_top_k, skipped_audit,
    validate_and_retry, verify, AgentOptions, Audited, LlmExpansionOracle, Retried, Verified,
};
pub use schema::{
    check_audit_consistency, last_fenced_block, parse_audit, parse_clues, parse_verifier,
    parse_yes_no, structured_block, ValidationError,
};

pub const DEFAULT_MAX_RETRIES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Verdict {
    Vulnerable,
    NotVulnerable,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Vulnerable => "VULNERABLE",
            Verdict::NotVulnerable => "NOT_VULNERABLE",
        }
    }

    pub fn flipped(self) -> Verdict {
        match self {
            Verdict::Vulnerable => Verdict::NotVulnerable,
            Verdict::NotVulnerable => Verdict::Vulnerable,
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifierVerdict {
    pub verdict: Verdict,
    pub confidence: f64,
    pub cwe_id: Option<String>,
    pub vulnerability_type: Option<String>,
    pub key_evidence: String,
    #[serde(skip)]
    pub reasoning_text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AuditJudgment {
    Agree,
    Disagree,
    Defer,
}

impl AuditJudgment {
    pub const ALL: [AuditJudgment; 3] = [AuditJudgment::Agree, AuditJudgment::Disagree, AuditJudgment::Defer];
}

pub const CANONICAL_FLAWS: [&str; 10] = [
    "Phantom Mitigation",
    "Speculation",
    "Anchoring",
    "Over-Trust",
    "Pattern-Matching",
    "Semantic Misunderstanding",
    "Absence-as-Evidence",
    "Scope Creep",
    "Incomplete Protection",
    "Evidence Fabrication",
];

/// A reasoning-flaw label as the auditor wrote it.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FlawLabel {
    pub value: String,
    canonical: Option<&'static str>,
}

impl FlawLabel {
    pub fn new(value: &str) -> Self {
        let value = value.trim();
        let stem = value
            .strip_suffix(" Flaw")
            .or_else(|| value.strip_suffix(" flaw"))
            .unwrap_or(value)
            .trim();
        let canonical = CANONICAL_FLAWS
            .iter()
            .copied()
            .find(|c| c.eq_ignore_ascii_case(stem));
        FlawLabel {
            value: value.to_string(),
            canonical,
        }
    }

    pub fn is_canonical(&self) -> bool {
        self.canonical.is_some()
    }

    pub fn canonical(&self) -> Option<&'static str> {
        self.canonical
    }

    /// Reporting category: the canonical name, or "Other".
    pub fn category(&self) -> &'static str {
        self.canonical.unwrap_or("Other")
    }
}

impl Serialize for FlawLabel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.value)
    }
}

impl<'de> Deserialize<'de> for FlawLabel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        Ok(FlawLabel::new(&String::deserialize(d)?))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditDecision {
    pub audit_verdict: AuditJudgment,
    pub original_verdict: Verdict,
    pub final_verdict: Verdict,
    pub confidence: f64,
    pub audit_rationale: String,
    pub reasoning_flaws_found: Vec<FlawLabel>,
    #[serde(skip)]
    pub reasoning_text: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SampleVerdict {
    Safe,
    Vulnerable,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClueVerdict {
    pub clue: Clue,
    pub verifier: VerifierVerdict,
    pub audit: AuditDecision,
}

/// A clue whose verification or audit never produced a valid response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InconclusiveClue {
    pub clue: Clue,
    pub stage: Stage,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalVerdict {
    pub sample_id: String,
    pub verdict: SampleVerdict,
    pub per_clue: Vec<ClueVerdict>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub inconclusive: Vec<InconclusiveClue>,
}

impl FinalVerdict {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("verdict serializes");
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum AblationMode {
    #[default]
    Full,
    NoDialectics,
    NoAudit,
}

impl std::str::FromStr for AblationMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "full" => Ok(AblationMode::Full),
            "nodialectics" => Ok(AblationMode::NoDialectics),
            "noaudit" => Ok(AblationMode::NoAudit),
            _ => Err(format!("unknown ablation mode `{s}`")),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum AgentError {
    #[error("{stage}: no valid response after {} attempts: {last}", attempts.len())]
    Exhausted {
        stage: Stage,
        attempts: Vec<String>,
        last: ValidationError,
    },
    #[error("{stage}: {source}")]
    Llm {
        stage: Stage,
        #[source]
        source: LlmError,
    },
    #[error("{0}")]
    InvalidInput(String),
}

impl AgentError {
    pub fn stage(&self) -> Option<Stage> {
        match self {
            AgentError::Exhausted { stage, .. } | AgentError::Llm { stage, .. } => Some(*stage),
            AgentError::InvalidInput(_) => None,
        }
    }
}
