//! JSON interchange documents for CPGs.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{Cpg, CpgEdge, CpgError, CpgNode, DefStrength, EdgeKind, NodeId, NodeKind, StmtFacts};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CpgDocument {
    pub schema_version: u32,
    pub file: String,
    pub nodes: Vec<CpgNode>,
    pub edges: Vec<CpgEdge>,
}

impl CpgDocument {
    pub fn from_cpg(cpg: &Cpg) -> Self {
        let mut nodes = cpg.nodes().to_vec();
        nodes.sort_by_key(|n| n.id);
        CpgDocument {
            schema_version: SCHEMA_VERSION,
            file: cpg.file().to_string(),
            nodes,
            edges: cpg.edges().to_vec(),
        }
    }
}

/// Serializes a CPG as a pretty-printed interchange document, nodes in id order.
pub fn export_cpg(cpg: &Cpg) -> String {
    let doc = CpgDocument::from_cpg(cpg);
    let mut text = serde_json::to_string_pretty(&doc).expect("document serializes");
    text.push('\n');
    text
}

/// Parses and validates an interchange document.
pub fn import_cpg(text: &str) -> Result<Cpg, CpgError> {
    let value: Value =
        serde_json::from_str(text).map_err(|e| CpgError::SchemaViolation(e.to_string()))?;
    let version = value
        .get("schema_version")
        .ok_or_else(|| CpgError::SchemaViolation("missing field `schema_version`".into()))?;
    if version.as_u64() != Some(SCHEMA_VERSION as u64) {
        return Err(CpgError::SchemaViolation(format!(
            "unsupported schema_version {version}"
        )));
    }
    let doc: CpgDocument =
        serde_json::from_value(value).map_err(|e| CpgError::SchemaViolation(e.to_string()))?;
    Cpg::from_document(doc)
}

impl Cpg {
    pub fn from_document(doc: CpgDocument) -> Result<Cpg, CpgError> {
        let mut ids = HashSet::new();
        for n in &doc.nodes {
            if !ids.insert(n.id) {
                return Err(CpgError::SchemaViolation(format!("duplicate node id {}", n.id)));
            }
            if n.line == 0 || n.column == 0 {
                return Err(CpgError::SchemaViolation(format!(
                    "node {} has a zero line or column",
                    n.id
                )));
            }
        }
        for e in &doc.edges {
            for end in [e.src, e.dst] {
                if !ids.contains(&end) {
                    return Err(CpgError::DanglingEdge(end));
                }
            }
            if e.kind.requires_variable() && e.variable.as_deref().map_or(true, str::is_empty) {
                return Err(CpgError::SchemaViolation(format!(
                    "{:?} edge {} -> {} lacks a variable",
                    e.kind, e.src, e.dst
                )));
            }
        }
        let source = doc
            .nodes
            .iter()
            .filter(|n| n.kind == NodeKind::TranslationUnit)
            .min_by_key(|n| n.id)
            .map(|n| n.code.clone())
            .unwrap_or_default();
        let bare = Cpg::assemble(
            doc.file.clone(),
            doc.nodes,
            doc.edges,
            HashMap::new(),
            &source,
            Vec::new(),
        );
        let facts = derive_facts(&bare);
        Ok(bare.with_facts(facts))
    }
}

/// Recovers statement facts from graph structure: defs from outgoing
/// reaching-def labels, uses from identifiers and member paths in the
/// statement's own subtree.
fn derive_facts(cpg: &Cpg) -> HashMap<NodeId, StmtFacts> {
    let mut facts = HashMap::new();
    for n in cpg.nodes() {
        let relevant = n.kind.is_statement()
            || n.kind == NodeKind::Parameter
            || n.kind == NodeKind::FunctionDef;
        if !relevant {
            continue;
        }
        let mut f = StmtFacts::default();
        for e in cpg.out_edges(n.id) {
            if e.kind == EdgeKind::ReachingDef {
                if let Some(v) = &e.variable {
                    if !f.defines(v) {
                        f.defs.push((v.clone(), DefStrength::Strong));
                    }
                }
            }
        }
        if n.kind == NodeKind::Parameter {
            if let Some(name) = &n.name {
                if !f.defines(name) {
                    f.defs.push((name.clone(), DefStrength::Strong));
                }
            }
        }
        if n.kind.is_statement() {
            let mut skip = HashSet::new();
            for id in cpg.own_subtree(n.id) {
                if skip.contains(&id) {
                    continue;
                }
                let Some(x) = cpg.node(id) else { continue };
                match x.kind {
                    NodeKind::Call => {
                        if let Some(name) = &x.name {
                            f.calls.push(name.clone());
                        }
                    }
                    NodeKind::Identifier | NodeKind::Expression => {
                        if let Some(name) = &x.name {
                            if !f.uses.contains(name) && !f.defines(name) {
                                f.uses.push(name.clone());
                            }
                            // a named member path already covers its base
                            skip.extend(cpg.subtree(id));
                        }
                    }
                    _ => {}
                }
            }
        }
        facts.insert(n.id, f);
    }
    facts
}
