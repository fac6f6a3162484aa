//! Embedded prompt resources and their builders.

use sha2::{Digest, Sha256};

use crate::slicer::Clue;

pub const DISCOVERY_SYSTEM: &str = include_str!("../../prompts/discovery_system.txt");
pub const EXPANSION_TEMPLATE: &str = include_str!("../../prompts/expansion_template.txt");
pub const VERIFIER_SYSTEM: &str = include_str!("../../prompts/verifier_system.txt");
pub const AUDITOR_SYSTEM: &str = include_str!("../../prompts/auditor_system.txt");
pub const SINGLE_PASS_SYSTEM: &str = include_str!("../../prompts/single_pass_system.txt");

/// Version tag recorded with run artifacts.
pub const PROMPT_VERSION: &str = "1";

/// (name, text, sha256) for every embedded prompt.
pub fn manifest() -> Vec<(&'static str, &'static str, String)> {
    [
        ("discovery_system", DISCOVERY_SYSTEM),
        ("expansion_template", EXPANSION_TEMPLATE),
        ("verifier_system", VERIFIER_SYSTEM),
        ("auditor_system", AUDITOR_SYSTEM),
        ("single_pass_system", SINGLE_PASS_SYSTEM),
    ]
    .into_iter()
    .map(|(n, t)| (n, t, hex::encode(Sha256::digest(t.as_bytes()))))
    .collect()
}

/// The function under review with its source line numbers.
pub fn discovery_user(file: &str, function_text: &str, first_line: u32) -> String {
    let mut out = format!("File: {file}\n\n");
    for (i, line) in function_text.lines().enumerate() {
        out.push_str(&format!("{:>5} | {}\n", first_line as usize + i, line));
    }
    out
}

#[derive(Debug, Clone, Copy)]
pub struct ExpansionFields<'a> {
    pub file_path: &'a str,
    pub line_number: u32,
    pub code_line: &'a str,
    pub suspicion_reason: &'a str,
    pub current_context: &'a str,
    pub target_func_name: &'a str,
    pub target_file_path: &'a str,
}

/// Fills the expansion template placeholders.
pub fn expansion_user(f: &ExpansionFields<'_>) -> String {
    EXPANSION_TEMPLATE
        .replace("{file_path}", f.file_path)
        .replace("{line_number}", &f.line_number.to_string())
        .replace("{code_line}", f.code_line)
        .replace("{suspicion_reason}", f.suspicion_reason)
        .replace("{target_func_name}", f.target_func_name)
        .replace("{target_file_path}", f.target_file_path)
        .replace("{current_context}", f.current_context)
}

fn analysis_input(file: &str, clue: &Clue, context: &str, trace: &str) -> String {
    format!(
        "## Suspicious Code Line\nFile: {file}\nLine: {}\nCode: `{}`\n\n\
         ## Suspicion Reason\n{}\n\n\
         ## Project-level Code Context\n```c\n{}```\n\n\
         ## Data Flow Trace\n{}",
        clue.line,
        clue.code_line.trim(),
        clue.suspicion_reason,
        context,
        trace
    )
}

pub fn verifier_user(file: &str, clue: &Clue, context: &str, trace: &str) -> String {
    analysis_input(file, clue, context, trace)
}

pub fn auditor_user(file: &str, clue: &Clue, context: &str, trace: &str, verifier_raw: &str) -> String {
    format!(
        "# Part 1: Original Analysis Input\n\n{}\n\n# Part 2: Verifier's Reasoning\n\n{}\n",
        analysis_input(file, clue, context, trace),
        verifier_raw.trim_end()
    )
}
