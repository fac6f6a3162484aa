//! Evaluates a small pair dataset end to end with a scripted backend and
//! prints the metrics table with and without the audit.
//!
//! cargo run --example evaluate_pairs

use std::sync::Arc;

use aegis::agents::AblationMode;
use aegis::eval::{evaluate, FunctionSource, PairSample};
use aegis::llm::{LlmClient, ScriptedBackend, Stage};
use aegis::pipeline::PipelineConfig;

const VULN: &str = "int put(char *b, int n)\n{\n    int i = n;\n    b[i] = 0;\n    return i;\n}\n";
const PATCHED: &str = "int put(char *b, int n)\n{\n    int i = n;\n    if (i < 8)\n        b[i] = 0;\n    return i;\n}\n";

fn pair(id: &str) -> PairSample {
    let side = |source: &str| FunctionSource {
        file: "src/put.c".into(),
        function: "put".into(),
        source: source.into(),
        start_line: 1,
    };
    PairSample {
        pair_id: id.into(),
        cwe: Some("CWE-787".into()),
        repo_ref: None,
        diff_text: Some(
            "--- a/src/put.c\n+++ b/src/put.c\n@@ -4,1 +4,2 @@\n-    b[i] = 0;\n+    if (i < 8)\n+        b[i] = 0;\n"
                .into(),
        ),
        vulnerable: side(VULN),
        patched: side(PATCHED),
    }
}

fn block(body: &str) -> String {
    format!("```json\n{body}\n```")
}

/// Flags the store on both sides; the auditor vetoes it once a guard is in
/// the context.
fn backend() -> ScriptedBackend {
    ScriptedBackend::empty().with_responder(|r| {
        let guarded = r.user.contains("if (i < 8)");
        Some(match r.stage {
            Stage::Discovery => {
                let line = if guarded { 5 } else { 4 };
                block(&format!(
                    r#"[{{"line_number": {line}, "code_line": "b[i] = 0;", "suspicion_reason": "index from caller", "confidence_score": 0.8}}]"#
                ))
            }
            Stage::Expansion => "NO".into(),
            Stage::Verification => block(
                r#"{"verdict": "VULNERABLE", "confidence": 0.8, "cwe_id": "CWE-787", "vulnerability_type": "write", "key_evidence": "put.c store"}"#,
            ),
            Stage::Audit if guarded => block(
                r#"{"audit_verdict": "DISAGREE", "original_verdict": "VULNERABLE", "final_verdict": "NOT_VULNERABLE", "confidence": 0.9, "audit_rationale": "the store is guarded", "reasoning_flaws_found": ["Trace Fidelity Flaw"]}"#,
            ),
            Stage::Audit => block(
                r#"{"audit_verdict": "AGREE", "original_verdict": "VULNERABLE", "final_verdict": "VULNERABLE", "confidence": 0.9, "audit_rationale": "unchecked", "reasoning_flaws_found": []}"#,
            ),
        })
    })
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let pairs: Vec<_> = (1..=3).map(|i| pair(&format!("pair-{i}"))).collect();
    for mode in [AblationMode::Full, AblationMode::NoAudit] {
        let client = LlmClient::new(Arc::new(backend()), "scripted");
        let config = PipelineConfig {
            mode,
            ..PipelineConfig::default()
        };
        let (report, runs) = evaluate(&pairs, &config, &client)?;
        for r in &runs {
            println!("{} {:?}: {:?}", r.pair_id, r.side, r.run.verdict.verdict);
        }
        println!("{}", report.to_table());
    }
    Ok(())
}
