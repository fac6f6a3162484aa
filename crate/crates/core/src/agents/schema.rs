//! Structured-output extraction and validation.

use serde_json::{Map, Value};

use super::{AuditDecision, AuditJudgment, FlawLabel, Verdict, VerifierVerdict};
use crate::slicer::Clue;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ValidationError {
    #[error("no fenced block in response")]
    NoBlock,
    #[error("non-ASCII byte 0x{byte:02x} at offset {offset} of the structured block")]
    IllegalCharacter { byte: u8, offset: usize },
    #[error("malformed JSON: {0}")]
    Json(String),
    #[error("schema violation: {0}")]
    Schema(String),
    #[error("consistency violation: {0}")]
    Consistency(String),
}

/// Body of the last ```-fenced block in `text`.
pub fn last_fenced_block(text: &str) -> Option<&str> {
    let mut fences = Vec::new();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        if line.trim_start().starts_with("```") {
            fences.push((offset, offset + line.len()));
        }
        offset += line.len();
    }
    if fences.len() < 2 {
        return None;
    }
    let pairs = fences.len() / 2;
    let open = fences[2 * (pairs - 1)];
    let close = fences[2 * (pairs - 1) + 1];
    Some(&text[open.1..close.0])
}

/// Extracts the last block and rejects non-ASCII content.
pub fn structured_block(text: &str) -> Result<&str, ValidationError> {
    let block = last_fenced_block(text).ok_or(ValidationError::NoBlock)?;
    if let Some((offset, &byte)) = block.as_bytes().iter().enumerate().find(|(_, b)| !b.is_ascii()) {
        return Err(ValidationError::IllegalCharacter { byte, offset });
    }
    Ok(block)
}

fn json(block: &str) -> Result<Value, ValidationError> {
    serde_json::from_str(block.trim()).map_err(|e| ValidationError::Json(e.to_string()))
}

fn field<'a>(obj: &'a Map<String, Value>, name: &str) -> Result<&'a Value, ValidationError> {
    obj.get(name)
        .ok_or_else(|| ValidationError::Schema(format!("missing field `{name}`")))
}

fn string(obj: &Map<String, Value>, name: &str) -> Result<String, ValidationError> {
    field(obj, name)?
        .as_str()
        .map(str::to_string)
        .ok_or_else(|| ValidationError::Schema(format!("`{name}` must be a string")))
}

fn optional_string(obj: &Map<String, Value>, name: &str) -> Result<Option<String>, ValidationError> {
    match obj.get(name) {
        None | Some(Value::Null) => Ok(None),
        Some(Value::String(s)) => {
            let t = s.trim();
            if t.is_empty() || t.eq_ignore_ascii_case("null") || t.eq_ignore_ascii_case("none") {
                Ok(None)
            } else {
                Ok(Some(t.to_string()))
            }
        }
        Some(_) => Err(ValidationError::Schema(format!("`{name}` must be a string or null"))),
    }
}

fn number(obj: &Map<String, Value>, name: &str, lo: f64, hi: f64) -> Result<f64, ValidationError> {
    let v = field(obj, name)?
        .as_f64()
        .ok_or_else(|| ValidationError::Schema(format!("`{name}` must be a number")))?;
    if !(lo..=hi).contains(&v) {
        return Err(ValidationError::Schema(format!("`{name}` = {v} outside [{lo}, {hi}]")));
    }
    Ok(v)
}

fn verdict(obj: &Map<String, Value>, name: &str) -> Result<Verdict, ValidationError> {
    match string(obj, name)?.trim() {
        "VULNERABLE" => Ok(Verdict::Vulnerable),
        "NOT_VULNERABLE" => Ok(Verdict::NotVulnerable),
        other => Err(ValidationError::Schema(format!("`{name}` has unknown value `{other}`"))),
    }
}

fn object(v: &Value) -> Result<&Map<String, Value>, ValidationError> {
    v.as_object()
        .ok_or_else(|| ValidationError::Schema("expected a JSON object".into()))
}

/// Tagged transcript section, or everything before the structured block.
fn transcript(raw: &str, tag: &str) -> String {
    let open = format!("<{tag}>");
    let close = format!("</{tag}>");
    if let (Some(a), Some(b)) = (raw.find(&open), raw.rfind(&close)) {
        if a + open.len() <= b {
            return raw[a + open.len()..b].trim().to_string();
        }
    }
    match raw.rfind("```") {
        Some(_) => raw
            .split("```")
            .next()
            .unwrap_or_default()
            .trim()
            .to_string(),
        None => raw.trim().to_string(),
    }
}

pub fn parse_clues(raw: &str) -> Result<Vec<Clue>, ValidationError> {
    let value = json(structured_block(raw)?)?;
    let items = value
        .as_array()
        .ok_or_else(|| ValidationError::Schema("expected a JSON array of clues".into()))?;
    let mut clues = Vec::with_capacity(items.len());
    for (i, item) in items.iter().enumerate() {
        let obj = object(item)?;
        let line = field(obj, "line_number")?
            .as_u64()
            .filter(|&l| l >= 1 && l <= u32::MAX as u64)
            .ok_or_else(|| ValidationError::Schema(format!("clue {i}: bad `line_number`")))?;
        let clue = Clue {
            line: line as u32,
            code_line: string(obj, "code_line")?,
            suspicion_reason: string(obj, "suspicion_reason")?,
            confidence: number(obj, "confidence_score", 0.1, 1.0)?,
        };
        clue.validate()
            .map_err(|e| ValidationError::Schema(format!("clue {i}: {e}")))?;
        clues.push(clue);
    }
    Ok(clues)
}

fn valid_cwe(s: &str) -> bool {
    s.strip_prefix("CWE-")
        .map_or(false, |d| !d.is_empty() && d.bytes().all(|b| b.is_ascii_digit()))
}

pub fn parse_verifier(raw: &str) -> Result<VerifierVerdict, ValidationError> {
    let value = json(structured_block(raw)?)?;
    let obj = object(&value)?;
    let cwe_id = optional_string(obj, "cwe_id")?;
    if let Some(c) = &cwe_id {
        if !valid_cwe(c) {
            return Err(ValidationError::Schema(format!("`cwe_id` `{c}` is not CWE-<digits>")));
        }
    }
    let key_evidence = string(obj, "key_evidence")?;
    if key_evidence.trim().is_empty() {
        return Err(ValidationError::Schema("`key_evidence` is empty".into()));
    }
    Ok(VerifierVerdict {
        verdict: verdict(obj, "verdict")?,
        confidence: number(obj, "confidence", 0.0, 1.0)?,
        cwe_id,
        vulnerability_type: optional_string(obj, "vulnerability_type")?,
        key_evidence,
        reasoning_text: transcript(raw, "thinking"),
    })
}

/// Enforces the judgment rule on an audit decision.
pub fn check_audit_consistency(d: &AuditDecision) -> Result<(), ValidationError> {
    match d.audit_verdict {
        AuditJudgment::Agree | AuditJudgment::Defer if d.final_verdict != d.original_verdict => {
            Err(ValidationError::Consistency(format!(
                "{:?} must keep the original verdict",
                d.audit_verdict
            )))
        }
        AuditJudgment::Disagree if d.final_verdict == d.original_verdict => Err(
            ValidationError::Consistency("DISAGREE must flip the verdict".into()),
        ),
        AuditJudgment::Disagree if d.reasoning_flaws_found.is_empty() => Err(
            ValidationError::Consistency("DISAGREE must name at least one flaw".into()),
        ),
        _ => Ok(()),
    }
}

pub fn parse_audit(raw: &str) -> Result<AuditDecision, ValidationError> {
    let value = json(structured_block(raw)?)?;
    let obj = object(&value)?;
    let audit_verdict = match string(obj, "audit_verdict")?.trim() {
        "AGREE" => AuditJudgment::Agree,
        "DISAGREE" => AuditJudgment::Disagree,
        "DEFER" => AuditJudgment::Defer,
        other => {
            return Err(ValidationError::Schema(format!(
                "`audit_verdict` has unknown value `{other}`"
            )))
        }
    };
    let flaws = field(obj, "reasoning_flaws_found")?
        .as_array()
        .ok_or_else(|| ValidationError::Schema("`reasoning_flaws_found` must be a list".into()))?
        .iter()
        .map(|v| {
            v.as_str()
                .map(|s| FlawLabel::new(s))
                .ok_or_else(|| ValidationError::Schema("flaw labels must be strings".into()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let decision = AuditDecision {
        audit_verdict,
        original_verdict: verdict(obj, "original_verdict")?,
        final_verdict: verdict(obj, "final_verdict")?,
        confidence: number(obj, "confidence", 0.0, 1.0)?,
        audit_rationale: string(obj, "audit_rationale")?,
        reasoning_flaws_found: flaws,
        reasoning_text: transcript(raw, "audit_reasoning"),
    };
    check_audit_consistency(&decision)?;
    Ok(decision)
}

/// Reads a YES/NO oracle reply: `Some(true)` iff the first token is YES,
/// `None` when neither word appears.
pub fn parse_yes_no(raw: &str) -> Option<bool> {
    let words: Vec<String> = raw
        .split_whitespace()
        .map(|w| {
            w.trim_matches(|c: char| c.is_ascii_punctuation())
                .to_ascii_uppercase()
        })
        .collect();
    if !words.iter().any(|w| w == "YES" || w == "NO") {
        return None;
    }
    Some(words.first().map_or(false, |w| w == "YES"))
}
