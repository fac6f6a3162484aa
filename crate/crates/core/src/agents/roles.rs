use super::prompts::{self, ExpansionFields};
use super::schema::{parse_audit, parse_clues, parse_verifier, parse_yes_no, ValidationError};
use super::{
    AblationMode, AgentError, AuditDecision, AuditJudgment, ClueVerdict, FinalVerdict,
    InconclusiveClue, SampleVerdict, Verdict, VerifierVerdict, DEFAULT_MAX_RETRIES,
};
use crate::expander::{ExpansionOracle, OracleError, OracleQuery};
use crate::llm::{LlmClient, LlmError, Stage};
use crate::slicer::Clue;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AgentOptions {
    pub max_retries: usize,
    pub mode: AblationMode,
}

impl Default for AgentOptions {
    fn default() -> Self {
        AgentOptions {
            max_retries: DEFAULT_MAX_RETRIES,
            mode: AblationMode::Full,
        }
    }
}

/// A parsed value with the raw text it came from and the re-queries spent.
#[derive(Debug, Clone, PartialEq)]
pub struct Retried<T> {
    pub value: T,
    pub raw: String,
    pub retries: usize,
}

/// Parses `first`; on failure re-queries up to `max_retries` times and
/// returns the first valid parse.
pub fn validate_and_retry<T, P, Q>(
    stage: Stage,
    first: String,
    parse: P,
    max_retries: usize,
    mut requery: Q,
) -> Result<Retried<T>, AgentError>
where
    P: Fn(&str) -> Result<T, ValidationError>,
    Q: FnMut() -> Result<String, LlmError>,
{
    let mut attempts = Vec::new();
    let mut raw = first;
    loop {
        match parse(&raw) {
            Ok(value) => {
                return Ok(Retried {
                    value,
                    raw,
                    retries: attempts.len(),
                })
            }
            Err(last) => {
                tracing::warn!(%stage, attempt = attempts.len() + 1, error = %last, "rejected response");
                attempts.push(raw);
                if attempts.len() > max_retries {
                    return Err(AgentError::Exhausted {
                        stage,
                        attempts,
                        last,
                    });
                }
                raw = requery().map_err(|source| AgentError::Llm { stage, source })?;
            }
        }
    }
}

fn ask<T>(
    client: &LlmClient,
    stage: Stage,
    system: &str,
    user: &str,
    max_retries: usize,
    parse: impl Fn(&str) -> Result<T, ValidationError>,
) -> Result<Retried<T>, AgentError> {
    let request = client.request(stage, system, user);
    let send = || {
        client
            .send(&request)
            .map(|r| r.text)
    };
    let first = send().map_err(|source| AgentError::Llm { stage, source })?;
    validate_and_retry(stage, first, parse, max_retries, send)
}

/// Asks for suspicious lines in one function. `first_line` is the source
/// line of the function's first line.
pub fn discover_clues(
    client: &LlmClient,
    file: &str,
    function_text: &str,
    first_line: u32,
    options: &AgentOptions,
) -> Result<Retried<Vec<Clue>>, AgentError> {
    if function_text.trim().is_empty() {
        return Err(AgentError::InvalidInput("function text is empty".into()));
    }
    let user = prompts::discovery_user(file, function_text, first_line);
    ask(
        client,
        Stage::Discovery,
        prompts::DISCOVERY_SYSTEM,
        &user,
        options.max_retries,
        parse_clues,
    )
}

/// The `k` most confident clues; ties go to the earlier line.
pub fn select_top_k(clues: &[Clue], k: usize) -> Vec<Clue> {
    let mut sorted = clues.to_vec();
    sorted.sort_by(|a, b| {
        b.confidence
            .total_cmp(&a.confidence)
            .then(a.line.cmp(&b.line))
    });
    sorted.truncate(k);
    sorted
}

/// Fills the expansion template and reads a YES/NO answer.
pub fn decide_expansion(
    client: &LlmClient,
    query: &OracleQuery<'_>,
    max_retries: usize,
) -> Result<bool, OracleError> {
    let user = prompts::expansion_user(&ExpansionFields {
        file_path: query.target_file,
        line_number: query.clue.line,
        code_line: query.clue.code_line.trim(),
        suspicion_reason: &query.clue.suspicion_reason,
        current_context: query.context,
        target_func_name: &query.candidate.callee_name,
        target_file_path: &query.candidate.callee_file,
    });
    let request = client.request(Stage::Expansion, "", &user);
    for attempt in 1..=max_retries + 1 {
        let reply = client
            .send(&request)
            .map_err(|e| OracleError::Backend(e.to_string()))?;
        match parse_yes_no(&reply.text) {
            Some(decision) => return Ok(decision),
            None => tracing::warn!(attempt, reply = %reply.text.trim(), "oracle reply is neither YES nor NO"),
        }
    }
    Err(OracleError::Protocol {
        attempts: max_retries + 1,
    })
}

/// Expansion oracle backed by a chat model.
pub struct LlmExpansionOracle<'a> {
    pub client: &'a LlmClient,
    pub max_retries: usize,
}

impl ExpansionOracle for LlmExpansionOracle<'_> {
    fn decide(&self, query: &OracleQuery<'_>) -> Result<bool, OracleError> {
        decide_expansion(self.client, query, self.max_retries)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verified {
    pub verdict: VerifierVerdict,
    pub raw: String,
    pub retries: usize,
}

pub fn verify(
    client: &LlmClient,
    file: &str,
    clue: &Clue,
    context_text: &str,
    trace_text: &str,
    options: &AgentOptions,
) -> Result<Verified, AgentError> {
    let system = match options.mode {
        AblationMode::NoDialectics => prompts::SINGLE_PASS_SYSTEM,
        AblationMode::Full | AblationMode::NoAudit => prompts::VERIFIER_SYSTEM,
    };
    let user = prompts::verifier_user(file, clue, context_text, trace_text);
    let r = ask(client, Stage::Verification, system, &user, options.max_retries, parse_verifier)?;
    Ok(Verified {
        verdict: r.value,
        raw: r.raw,
        retries: r.retries,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Audited {
    pub decision: AuditDecision,
    pub raw: String,
    pub retries: usize,
}

/// Stand-in decision used when the audit stage is disabled.
pub fn skipped_audit(verifier: &VerifierVerdict) -> AuditDecision {
    AuditDecision {
        audit_verdict: AuditJudgment::Defer,
        original_verdict: verifier.verdict,
        final_verdict: verifier.verdict,
        confidence: verifier.confidence,
        audit_rationale: "audit disabled".into(),
        reasoning_flaws_found: Vec::new(),
        reasoning_text: String::new(),
    }
}

pub fn audit(
    client: &LlmClient,
    file: &str,
    clue: &Clue,
    context_text: &str,
    trace_text: &str,
    verified: &Verified,
    options: &AgentOptions,
) -> Result<Audited, AgentError> {
    if options.mode == AblationMode::NoAudit {
        return Ok(Audited {
            decision: skipped_audit(&verified.verdict),
            raw: String::new(),
            retries: 0,
        });
    }
    let user = prompts::auditor_user(file, clue, context_text, trace_text, &verified.raw);
    let expected = verified.verdict.verdict;
    let parse = |raw: &str| {
        let d = parse_audit(raw)?;
        if d.original_verdict != expected {
            return Err(ValidationError::Consistency(format!(
                "original_verdict {} differs from the verifier's {}",
                d.original_verdict, expected
            )));
        }
        Ok(d)
    };
    let r = ask(client, Stage::Audit, prompts::AUDITOR_SYSTEM, &user, options.max_retries, parse)?;
    Ok(Audited {
        decision: r.value,
        raw: r.raw,
        retries: r.retries,
    })
}

/// Vulnerable iff some completed clue ends VULNERABLE.
pub fn finalize_verdict(
    sample_id: &str,
    per_clue: Vec<ClueVerdict>,
    inconclusive: Vec<InconclusiveClue>,
) -> FinalVerdict {
    let vulnerable = per_clue
        .iter()
        .any(|c| c.audit.final_verdict == Verdict::Vulnerable);
    FinalVerdict {
        sample_id: sample_id.to_string(),
        verdict: if vulnerable {
            SampleVerdict::Vulnerable
        } else {
            SampleVerdict::Safe
        },
        per_clue,
        inconclusive,
    }
}
