//! Code property graphs: a C-subset frontend, the interchange format and a
//! repository-wide function index.

mod ast;
mod builder;
mod index;
mod interchange;
mod lexer;
mod parser;

use std::collections::HashMap;
use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

pub use index::{build_function_index, FunctionIndex, FunctionLocation, SkippedFile};
pub use interchange::{export_cpg, import_cpg, CpgDocument, SCHEMA_VERSION};
pub use lexer::{tokenize, Token, TokenKind};

/// Default bound on syntactic nesting accepted by the parser.
pub const DEFAULT_MAX_DEPTH: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u64);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeKind {
    TranslationUnit,
    FunctionDef,
    Parameter,
    Statement,
    Expression,
    Call,
    Return,
    Identifier,
    Literal,
    ControlStructure,
}

impl NodeKind {
    /// Kinds that stand for a whole statement in the CFG.
    pub fn is_statement(self) -> bool {
        matches!(
            self,
            NodeKind::Statement | NodeKind::Return | NodeKind::ControlStructure
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EdgeKind {
    Ast,
    Cfg,
    ReachingDef,
    ControlDep,
    CallTo,
    VirtualArgParam,
    VirtualReturnSite,
}

impl EdgeKind {
    pub fn is_virtual(self) -> bool {
        matches!(self, EdgeKind::VirtualArgParam | EdgeKind::VirtualReturnSite)
    }

    pub fn requires_variable(self) -> bool {
        matches!(
            self,
            EdgeKind::ReachingDef | EdgeKind::VirtualArgParam | EdgeKind::VirtualReturnSite
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CpgNode {
    pub id: NodeId,
    pub kind: NodeKind,
    pub file: String,
    pub line: u32,
    pub column: u32,
    pub code: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

impl CpgNode {
    /// Last source line covered by the node's text.
    pub fn end_line(&self) -> u32 {
        self.line + self.code.matches('\n').count() as u32
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CpgEdge {
    pub src: NodeId,
    pub dst: NodeId,
    pub kind: EdgeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variable: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub line: u32,
    pub message: String,
}

#[derive(Debug, thiserror::Error)]
pub enum CpgError {
    #[error("lex error at {line}:{column}: {message}")]
    Lex {
        line: u32,
        column: u32,
        message: String,
    },
    #[error("nesting deeper than {max_depth} at line {line}")]
    NestingOverflow { line: u32, max_depth: usize },
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error("edge references missing node {0}")]
    DanglingEdge(NodeId),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Strength of a definition for the reaching-definitions kill rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DefStrength {
    Strong,
    Weak,
}

/// Variables a statement-level node defines and uses.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct StmtFacts {
    pub defs: Vec<(String, DefStrength)>,
    pub uses: Vec<String>,
    /// Callee names of calls made by the statement, in source order.
    pub calls: Vec<String>,
}

impl StmtFacts {
    pub fn defines(&self, key: &str) -> bool {
        self.defs.iter().any(|(k, _)| k == key)
    }
}

/// Base identifier of a member-path key (`conn->cq.x` → `conn`).
pub fn base_of(key: &str) -> &str {
    let end = key
        .find(|c: char| c == '.' || c == '-')
        .unwrap_or(key.len());
    &key[..end]
}

/// Whether `key` is `prefix` or a member path extending it.
pub fn extends_path(key: &str, prefix: &str) -> bool {
    key == prefix
        || (key.starts_with(prefix)
            && (key[prefix.len()..].starts_with('.') || key[prefix.len()..].starts_with("->")))
}

#[derive(Debug, Clone, Default)]
pub struct ParseOptions {
    pub max_depth: usize,
    /// First node id handed out.
    pub id_base: u64,
}

impl ParseOptions {
    pub fn new() -> Self {
        ParseOptions {
            max_depth: DEFAULT_MAX_DEPTH,
            id_base: 0,
        }
    }
}

/// An immutable code property graph for one translation unit.
#[derive(Debug, Clone)]
pub struct Cpg {
    file: String,
    nodes: Vec<CpgNode>,
    edges: Vec<CpgEdge>,
    functions: IndexMap<String, NodeId>,
    pos: HashMap<NodeId, usize>,
    parent: HashMap<NodeId, NodeId>,
    children: HashMap<NodeId, Vec<NodeId>>,
    out_edges: HashMap<NodeId, Vec<usize>>,
    in_edges: HashMap<NodeId, Vec<usize>>,
    facts: HashMap<NodeId, StmtFacts>,
    lines: Vec<String>,
    diagnostics: Vec<Diagnostic>,
}

/// Parses `source` into a CPG with default options.
pub fn parse_translation_unit(source: &str, file_path: &str) -> Result<Cpg, CpgError> {
    parse_translation_unit_with(source, file_path, &ParseOptions::new())
}

pub fn parse_translation_unit_with(
    source: &str,
    file_path: &str,
    opts: &ParseOptions,
) -> Result<Cpg, CpgError> {
    let tokens = lexer::tokenize(source)?;
    let max_depth = if opts.max_depth == 0 {
        DEFAULT_MAX_DEPTH
    } else {
        opts.max_depth
    };
    let mut parser = parser::Parser::new(source, &tokens, max_depth);
    let functions = parser.parse_translation_unit()?;
    let diagnostics = std::mem::take(&mut parser.diagnostics);
    let built = builder::build(source, file_path, &tokens, &functions, opts.id_base);
    Ok(Cpg::assemble(
        file_path.to_string(),
        built.nodes,
        built.edges,
        built.facts,
        source,
        diagnostics,
    ))
}

impl Cpg {
    pub(crate) fn assemble(
        file: String,
        mut nodes: Vec<CpgNode>,
        edges: Vec<CpgEdge>,
        facts: HashMap<NodeId, StmtFacts>,
        source: &str,
        diagnostics: Vec<Diagnostic>,
    ) -> Cpg {
        nodes.sort_by_key(|n| n.id);
        let pos = nodes.iter().enumerate().map(|(i, n)| (n.id, i)).collect();
        let mut parent = HashMap::new();
        let mut children: HashMap<NodeId, Vec<NodeId>> = HashMap::new();
        let mut out_edges: HashMap<NodeId, Vec<usize>> = HashMap::new();
        let mut in_edges: HashMap<NodeId, Vec<usize>> = HashMap::new();
        for (i, e) in edges.iter().enumerate() {
            if e.kind == EdgeKind::Ast {
                parent.insert(e.dst, e.src);
                children.entry(e.src).or_default().push(e.dst);
            }
            out_edges.entry(e.src).or_default().push(i);
            in_edges.entry(e.dst).or_default().push(i);
        }
        for list in children.values_mut() {
            list.sort();
        }
        let mut functions = IndexMap::new();
        for n in &nodes {
            if n.kind == NodeKind::FunctionDef {
                if let Some(name) = &n.name {
                    functions.entry(name.clone()).or_insert(n.id);
                }
            }
        }
        let lines = source.lines().map(|l| l.to_string()).collect();
        Cpg {
            file,
            nodes,
            edges,
            functions,
            pos,
            parent,
            children,
            out_edges,
            in_edges,
            facts,
            lines,
            diagnostics,
        }
    }

    pub(crate) fn with_facts(mut self, facts: HashMap<NodeId, StmtFacts>) -> Cpg {
        self.facts = facts;
        self
    }

    pub fn file(&self) -> &str {
        &self.file
    }

    pub fn nodes(&self) -> &[CpgNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[CpgEdge] {
        &self.edges
    }

    pub fn functions(&self) -> &IndexMap<String, NodeId> {
        &self.functions
    }

    pub fn function(&self, name: &str) -> Option<NodeId> {
        self.functions.get(name).copied()
    }

    pub fn diagnostics(&self) -> &[Diagnostic] {
        &self.diagnostics
    }

    pub fn node(&self, id: NodeId) -> Option<&CpgNode> {
        self.pos.get(&id).map(|&i| &self.nodes[i])
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.pos.contains_key(&id)
    }

    pub fn max_id(&self) -> Option<NodeId> {
        self.nodes.last().map(|n| n.id)
    }

    pub fn parent(&self, id: NodeId) -> Option<NodeId> {
        self.parent.get(&id).copied()
    }

    /// AST children in id (source) order.
    pub fn children(&self, id: NodeId) -> &[NodeId] {
        self.children.get(&id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn out_edges(&self, id: NodeId) -> impl Iterator<Item = &CpgEdge> {
        self.out_edges
            .get(&id)
            .into_iter()
            .flatten()
            .map(|&i| &self.edges[i])
    }

    pub fn in_edges(&self, id: NodeId) -> impl Iterator<Item = &CpgEdge> {
        self.in_edges
            .get(&id)
            .into_iter()
            .flatten()
            .map(|&i| &self.edges[i])
    }

    /// Source line text (1-based) with trailing whitespace removed.
    pub fn line_text(&self, line: u32) -> Option<&str> {
        if line == 0 {
            return None;
        }
        self.lines.get(line as usize - 1).map(|l| l.trim_end())
    }

    pub fn line_count(&self) -> u32 {
        self.lines.len() as u32
    }

    pub fn facts(&self, id: NodeId) -> Option<&StmtFacts> {
        self.facts.get(&id)
    }

    pub fn parameters(&self, func: NodeId) -> Vec<NodeId> {
        self.children(func)
            .iter()
            .copied()
            .filter(|&c| self.node(c).map(|n| n.kind) == Some(NodeKind::Parameter))
            .collect()
    }

    /// Every node in the AST subtree rooted at `id`, in pre-order.
    pub fn subtree(&self, id: NodeId) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut stack = vec![id];
        while let Some(n) = stack.pop() {
            out.push(n);
            for &c in self.children(n).iter().rev() {
                stack.push(c);
            }
        }
        out
    }

    /// Subtree nodes that belong to `stmt` itself, not to nested statements.
    pub fn own_subtree(&self, stmt: NodeId) -> Vec<NodeId> {
        let mut out = Vec::new();
        let mut stack = vec![stmt];
        while let Some(n) = stack.pop() {
            out.push(n);
            for &c in self.children(n).iter().rev() {
                let nested = self
                    .node(c)
                    .map(|x| x.kind.is_statement() || x.kind == NodeKind::Parameter)
                    .unwrap_or(false);
                if !nested {
                    stack.push(c);
                }
            }
        }
        out
    }

    /// The FunctionDef enclosing `id` (or `id` itself).
    pub fn enclosing_function(&self, id: NodeId) -> Option<NodeId> {
        let mut cur = Some(id);
        while let Some(c) = cur {
            if self.node(c)?.kind == NodeKind::FunctionDef {
                return Some(c);
            }
            cur = self.parent(c);
        }
        None
    }

    /// Statement-level nodes belonging to `func`, in id order.
    pub fn function_statements(&self, func: NodeId) -> Vec<NodeId> {
        self.subtree(func)
            .into_iter()
            .filter(|&n| self.node(n).map(|x| x.kind.is_statement()).unwrap_or(false))
            .collect()
    }

    /// Calls syntactically inside `stmt` (excluding nested statements).
    pub fn calls_in(&self, stmt: NodeId) -> Vec<NodeId> {
        self.own_subtree(stmt)
            .into_iter()
            .filter(|&n| self.node(n).map(|x| x.kind) == Some(NodeKind::Call))
            .collect()
    }

    /// Last line of the header of a control structure (or of any statement).
    pub fn header_end_line(&self, id: NodeId) -> u32 {
        let Some(n) = self.node(id) else { return 0 };
        if n.kind != NodeKind::ControlStructure {
            return n.end_line();
        }
        if n.name.as_deref() == Some("do") {
            return n.line;
        }
        let mut end = n.line;
        for &c in self.children(id) {
            if let Some(cn) = self.node(c) {
                if !cn.kind.is_statement() {
                    end = end.max(cn.end_line());
                }
            }
        }
        end
    }
}
