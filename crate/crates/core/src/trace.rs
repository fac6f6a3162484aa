//! Per-variable evidence traces and annotated code context.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::cpg::{Cpg, NodeId, NodeKind};
use crate::expander::{CandidateKind, ExpansionResult, SliceKey};
use crate::slicer::{BoundaryReason, Clue, LocalSlice};

/// Rendered lines longer than this many characters are truncated.
pub const MAX_RENDERED_LINE: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Marker {
    Source,
    Prop,
    Cond,
    Call,
    Ret,
    Target,
    Sink,
    Alias,
}

impl Marker {
    pub fn as_str(self) -> &'static str {
        match self {
            Marker::Source => "[SOURCE]",
            Marker::Prop => "[PROP]",
            Marker::Cond => "[COND]",
            Marker::Call => "[CALL]",
            Marker::Ret => "[RET]",
            Marker::Target => "[TARGET]",
            Marker::Sink => "[SINK]",
            Marker::Alias => "[ALIAS]",
        }
    }
}

impl fmt::Display for Marker {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TraceStep {
    pub marker: Marker,
    pub file: String,
    pub line: u32,
    pub code: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct VariableChain {
    pub variable: String,
    pub steps: Vec<TraceStep>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceTrace {
    pub clue: Clue,
    pub chains: Vec<VariableChain>,
    pub files_crossed: Vec<String>,
}

impl EvidenceTrace {
    /// Every (file, line) cited by a step.
    pub fn cited_lines(&self) -> BTreeSet<(String, u32)> {
        self.chains
            .iter()
            .flat_map(|c| c.steps.iter())
            .map(|s| (s.file.clone(), s.line))
            .collect()
    }
}

/// Position of a step relative to the rest of its chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MarkerRole {
    pub is_clue_line: bool,
    /// The step opens its chain after ordering.
    pub first_in_chain: bool,
    /// The step is the first line of its node.
    pub node_first_line: bool,
}

/// Marker for a step at `node` given its role in the chain.
pub fn classify_marker(cpg: &Cpg, node: NodeId, role: MarkerRole) -> Marker {
    if role.is_clue_line {
        return Marker::Target;
    }
    let Some(n) = cpg.node(node) else {
        return Marker::Prop;
    };
    match n.kind {
        NodeKind::FunctionDef if role.node_first_line => {
            if role.first_in_chain {
                Marker::Source
            } else {
                Marker::Ret
            }
        }
        NodeKind::FunctionDef | NodeKind::Parameter => Marker::Prop,
        NodeKind::ControlStructure => Marker::Cond,
        NodeKind::Return => Marker::Ret,
        _ => {
            let has_call = !cpg.calls_in(node).is_empty()
                || cpg.facts(node).map_or(false, |f| !f.calls.is_empty());
            if has_call {
                Marker::Call
            } else {
                Marker::Prop
            }
        }
    }
}

/// Source lines a node contributes: headers for control structures, the
/// first line for function entries, every line otherwise.
fn node_lines(cpg: &Cpg, node: NodeId) -> Vec<u32> {
    let Some(n) = cpg.node(node) else { return Vec::new() };
    let last = match n.kind {
        NodeKind::FunctionDef => n.line,
        NodeKind::ControlStructure => cpg.header_end_line(node),
        _ => n.end_line(),
    };
    (n.line..=last.max(n.line))
        .filter(|&l| cpg.line_text(l).map_or(false, |t| !t.trim().is_empty()))
        .collect()
}

fn line_code(cpg: &Cpg, line: u32) -> String {
    cpg.line_text(line).unwrap_or("").trim_end().to_string()
}

struct Row {
    file: String,
    line: u32,
    node: NodeId,
    first_line: bool,
    priority: u8,
}

fn priority(cpg: &Cpg, node: NodeId, first_line: bool) -> u8 {
    match cpg.node(node).map(|n| n.kind) {
        Some(NodeKind::FunctionDef) if first_line => 0,
        Some(NodeKind::Parameter) => 1,
        Some(NodeKind::ControlStructure) => 2,
        Some(NodeKind::Return) => 3,
        _ => 4,
    }
}

fn push_node(rows: &mut Vec<Row>, cpg: &Cpg, file: &str, node: NodeId) {
    for (i, line) in node_lines(cpg, node).into_iter().enumerate() {
        rows.push(Row {
            file: file.to_string(),
            line,
            node,
            first_line: i == 0,
            priority: priority(cpg, node, i == 0),
        });
    }
}

fn chain_variables(result: &ExpansionResult, clue_code: &str) -> Vec<String> {
    let mut anchor: Vec<&String> = result.anchor_vars.iter().collect();
    anchor.sort_by_key(|v| (clue_code.find(v.as_str()).unwrap_or(usize::MAX), v.len()));
    let mut out: Vec<String> = anchor.into_iter().cloned().collect();
    let target_slice = result.slices.get(&result.target);
    let boundary: HashSet<&str> = target_slice
        .map(|s| {
            s.boundary
                .iter()
                .filter(|b| {
                    matches!(
                        b.reason,
                        BoundaryReason::ExternalCallReturn | BoundaryReason::ExternalCallArgument
                    )
                })
                .map(|b| b.variable.as_str())
                .collect()
        })
        .unwrap_or_default();
    for link in &result.links {
        if link.caller != result.target || link.kind != CandidateKind::External {
            continue;
        }
        for v in &link.vars {
            if boundary.contains(v.as_str()) && !out.contains(v) {
                out.push(v.clone());
            }
        }
    }
    out
}

/// Functions contributing to the chain of `var`, in discovery order.
fn chain_functions(result: &ExpansionResult, var: &str) -> Vec<SliceKey> {
    let mut included = vec![result.target.clone()];
    for link in &result.links {
        if included.contains(&link.callee) || !included.contains(&link.caller) {
            continue;
        }
        let relevant = link.caller != result.target || link.vars.contains(var);
        if relevant {
            included.push(link.callee.clone());
        }
    }
    included
}

fn chain_rows(result: &ExpansionResult, var: &str) -> Vec<Row> {
    let mut rows = Vec::new();
    for key in chain_functions(result, var) {
        let (Some(cpg), Some(slice)) = (result.cpg(&key), result.slices.get(&key)) else {
            continue;
        };
        let nodes: Vec<NodeId> = if key == result.target {
            target_nodes(cpg, slice, result, var)
        } else {
            let mut n = vec![slice.anchor];
            n.extend(slice.nodes());
            n
        };
        for node in nodes {
            push_node(&mut rows, cpg, &key.file, node);
        }
    }
    rows
}

fn target_nodes(cpg: &Cpg, slice: &LocalSlice, result: &ExpansionResult, var: &str) -> Vec<NodeId> {
    let mut nodes = vec![result.anchor];
    let own: Vec<NodeId> = slice
        .steps
        .iter()
        .filter(|s| s.variable == var)
        .map(|s| s.node)
        .collect();
    if own.is_empty() {
        // a boundary chain: the call sites that carry the variable
        for link in &result.links {
            if link.caller == result.target && link.vars.contains(var) {
                if let Some(stmt) = enclosing_statement(cpg, link.call_site) {
                    nodes.push(stmt);
                }
            }
        }
    }
    nodes.extend(own);
    nodes
}

fn enclosing_statement(cpg: &Cpg, node: NodeId) -> Option<NodeId> {
    let mut cur = Some(node);
    while let Some(c) = cur {
        if cpg.node(c)?.kind.is_statement() {
            return Some(c);
        }
        cur = cpg.parent(c);
    }
    None
}

fn build_chain(result: &ExpansionResult, clue: &Clue, var: &str) -> VariableChain {
    let mut rows = chain_rows(result, var);
    // stable: discovery order breaks line ties
    rows.sort_by_key(|r| r.line);
    let mut best: HashMap<(String, u32), usize> = HashMap::new();
    let mut kept: Vec<Row> = Vec::new();
    for row in rows {
        let key = (row.file.clone(), row.line);
        match best.get(&key) {
            Some(&i) => {
                if row.priority < kept[i].priority {
                    kept[i] = row;
                }
            }
            None => {
                best.insert(key, kept.len());
                kept.push(row);
            }
        }
    }
    let steps = kept
        .iter()
        .enumerate()
        .map(|(i, row)| {
            let cpg = result
                .stitched
                .member(&row.file)
                .expect("row file is a member graph");
            let role = MarkerRole {
                is_clue_line: row.file == result.target.file && row.line == clue.line,
                first_in_chain: i == 0,
                node_first_line: row.first_line,
            };
            TraceStep {
                marker: classify_marker(cpg, row.node, role),
                file: row.file.clone(),
                line: row.line,
                code: line_code(cpg, row.line),
            }
        })
        .collect();
    VariableChain {
        variable: var.to_string(),
        steps,
    }
}

/// Assembles one chain per tracked variable from an expansion result.
pub fn build_evidence_trace(result: &ExpansionResult, clue: &Clue) -> EvidenceTrace {
    let chains: Vec<VariableChain> = chain_variables(result, &clue.code_line)
        .iter()
        .map(|v| build_chain(result, clue, v))
        .collect();
    let mut files_crossed: Vec<String> = Vec::new();
    for s in chains.iter().flat_map(|c| c.steps.iter()) {
        if !files_crossed.contains(&s.file) {
            files_crossed.push(s.file.clone());
        }
    }
    EvidenceTrace {
        clue: clue.clone(),
        chains,
        files_crossed,
    }
}

fn clip(text: &str) -> String {
    if text.chars().count() > MAX_RENDERED_LINE {
        let mut s: String = text.chars().take(MAX_RENDERED_LINE).collect();
        s.push('…');
        s
    } else {
        text.to_string()
    }
}

/// Text form: a `Variable:` header per chain followed by marker lines.
pub fn render_trace(trace: &EvidenceTrace) -> String {
    let mut out = String::new();
    for chain in &trace.chains {
        out.push_str(&format!("Variable: {}\n", chain.variable));
        for s in &chain.steps {
            out.push_str(&format!(
                "{} {}:{} (`{}`)\n",
                s.marker,
                s.file,
                s.line,
                clip(s.code.trim())
            ));
        }
    }
    out
}

/// Sliced source of every function in the result with inline annotations.
pub fn render_context(result: &ExpansionResult) -> String {
    let mut blocks = Vec::new();
    for (key, slice) in &result.slices {
        let Some(cpg) = result.cpg(key) else { continue };
        let Some(func) = cpg.function(&key.function) else {
            continue;
        };
        let Some(fnode) = cpg.node(func) else { continue };
        let mut lines: BTreeSet<u32> = BTreeSet::new();
        let sig_end = cpg
            .parameters(func)
            .iter()
            .filter_map(|&p| cpg.node(p).map(|n| n.end_line()))
            .max()
            .unwrap_or(fnode.line)
            .max(fnode.line);
        lines.extend(fnode.line..=sig_end);
        for node in slice.nodes() {
            if cpg.node(node).map(|n| n.kind) == Some(NodeKind::FunctionDef) {
                continue;
            }
            lines.extend(node_lines(cpg, node));
        }
        let is_target = *key == result.target;
        if is_target {
            lines.insert(result.clue.line);
        }
        let cross: BTreeSet<u32> = result
            .links
            .iter()
            .filter(|l| l.caller == *key && l.kind == CandidateKind::External)
            .filter_map(|l| enclosing_statement(cpg, l.call_site))
            .filter_map(|s| cpg.node(s).map(|n| n.line))
            .collect();
        lines.extend(cross.iter().copied());

        let mut block = format!("// File: {}\n", key.file);
        for line in lines {
            let Some(text) = cpg.line_text(line) else { continue };
            let mut row = clip(text.trim_end());
            if line == fnode.line {
                row.push_str("  // [FUNCTION ENTRY]");
            }
            if is_target && line == result.clue.line {
                row.push_str("  // [TARGET]");
            }
            if cross.contains(&line) {
                row.push_str("  // [CROSS-FILE CALL]");
            }
            block.push_str(&row);
            block.push('\n');
        }
        blocks.push(block);
    }
    blocks.join("\n")
}
