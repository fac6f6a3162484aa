//! Clue-anchored slicing over the program dependence edges of a CPG.

use std::collections::{BTreeSet, HashMap, HashSet, VecDeque};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::cpg::{base_of, Cpg, CpgEdge, EdgeKind, NodeId, NodeKind};

/// Default number of dependency edges followed from an anchor.
pub const DEFAULT_DEPTH_LIMIT: u32 = 10;

/// A suspicious location reported by clue discovery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clue {
    pub line: u32,
    pub code_line: String,
    pub suspicion_reason: String,
    pub confidence: f64,
}

impl Clue {
    pub fn new(line: u32, code_line: &str, suspicion_reason: &str, confidence: f64) -> Self {
        Clue {
            line,
            code_line: code_line.to_string(),
            suspicion_reason: suspicion_reason.to_string(),
            confidence,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(0.1..=1.0).contains(&self.confidence) {
            return Err(format!(
                "confidence {} outside [0.1, 1.0]",
                self.confidence
            ));
        }
        if self.code_line.trim().is_empty() {
            return Err("code_line is empty".into());
        }
        if self.line == 0 {
            return Err("line must be 1-based".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Direction {
    Backward,
    Forward,
    Control,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SliceStep {
    pub node: NodeId,
    /// The tracked variable whose traversal reached this node.
    pub variable: String,
    pub direction: Direction,
    pub hop: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BoundaryReason {
    Parameter,
    Global,
    ExternalCallReturn,
    ExternalCallArgument,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoundaryVariable {
    pub variable: String,
    pub reason: BoundaryReason,
    pub site: NodeId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalSlice {
    pub anchor: NodeId,
    pub steps: Vec<SliceStep>,
    pub boundary: Vec<BoundaryVariable>,
}

impl LocalSlice {
    /// Distinct nodes in the slice, in first-step order.
    pub fn nodes(&self) -> Vec<NodeId> {
        let mut seen = HashSet::new();
        self.steps
            .iter()
            .filter(|s| seen.insert(s.node))
            .map(|s| s.node)
            .collect()
    }

    pub fn node_set(&self) -> BTreeSet<NodeId> {
        self.steps.iter().map(|s| s.node).collect()
    }

    pub fn variables(&self) -> BTreeSet<String> {
        self.steps
            .iter()
            .filter(|s| !s.variable.is_empty())
            .map(|s| s.variable.clone())
            .collect()
    }

    pub fn contains(&self, node: NodeId) -> bool {
        self.steps.iter().any(|s| s.node == node)
    }

    /// Merges another slice of the same function, keeping the lower hop per
    /// (node, variable).
    pub fn merge(&mut self, other: &LocalSlice) {
        let mut index: HashMap<(NodeId, String), usize> = self
            .steps
            .iter()
            .enumerate()
            .map(|(i, s)| ((s.node, s.variable.clone()), i))
            .collect();
        for s in &other.steps {
            match index.get(&(s.node, s.variable.clone())) {
                Some(&i) => {
                    if s.hop < self.steps[i].hop {
                        self.steps[i] = s.clone();
                    }
                }
                None => {
                    index.insert((s.node, s.variable.clone()), self.steps.len());
                    self.steps.push(s.clone());
                }
            }
        }
        for b in &other.boundary {
            if !self.boundary.contains(b) {
                self.boundary.push(b.clone());
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SliceError {
    #[error("no statement starts at line {line}")]
    NoStatementAtLine { line: u32 },
    #[error("line {line} lies outside function {function}")]
    LineOutsideFunction { line: u32, function: NodeId },
    #[error("node {0} is not a function definition")]
    NotAFunction(NodeId),
}

/// Whether a reaching-def label concerns `var`.
pub fn label_matches(label: &str, var: &str) -> bool {
    label == var || base_of(label) == var || label == base_of(var)
}

/// Walks AST parents until a statement-level node (or a function/parameter).
pub fn expand_to_statement_boundary(cpg: &Cpg, node: NodeId) -> NodeId {
    let mut cur = node;
    loop {
        let Some(n) = cpg.node(cur) else { return cur };
        let stop = n.kind.is_statement()
            || matches!(
                n.kind,
                NodeKind::Parameter | NodeKind::FunctionDef | NodeKind::TranslationUnit
            );
        if stop {
            return cur;
        }
        match cpg.parent(cur) {
            Some(p) => cur = p,
            None => return cur,
        }
    }
}

/// Variables a statement-level node defines or uses, plus their bases.
pub fn statement_variables(cpg: &Cpg, stmt: NodeId) -> BTreeSet<String> {
    let mut vars = BTreeSet::new();
    let Some(node) = cpg.node(stmt) else { return vars };
    match node.kind {
        NodeKind::FunctionDef => {
            for p in cpg.parameters(stmt) {
                if let Some(name) = cpg.node(p).and_then(|n| n.name.clone()) {
                    vars.insert(name);
                }
            }
        }
        NodeKind::Parameter => {
            if let Some(name) = &node.name {
                vars.insert(name.clone());
            }
        }
        _ => {
            if let Some(f) = cpg.facts(stmt) {
                for k in f.defs.iter().map(|(k, _)| k).chain(f.uses.iter()) {
                    vars.insert(k.clone());
                    vars.insert(base_of(k).to_string());
                }
            }
        }
    }
    vars
}

/// Resolves a clue to its statement node and the variables it touches.
pub fn anchor_clue(
    cpg: &Cpg,
    function: NodeId,
    clue: &Clue,
) -> Result<(NodeId, BTreeSet<String>), SliceError> {
    let func = cpg
        .node(function)
        .filter(|n| n.kind == NodeKind::FunctionDef)
        .ok_or(SliceError::NotAFunction(function))?;
    if clue.line < func.line || clue.line > func.end_line() {
        return Err(SliceError::LineOutsideFunction {
            line: clue.line,
            function,
        });
    }
    let start = cpg
        .subtree(function)
        .into_iter()
        .filter_map(|id| cpg.node(id))
        .filter(|n| n.line == clue.line)
        .min_by_key(|n| (n.column, n.id))
        .map(|n| n.id)
        .ok_or(SliceError::NoStatementAtLine { line: clue.line })?;
    let anchor = expand_to_statement_boundary(cpg, start);
    Ok((anchor, statement_variables(cpg, anchor)))
}

fn rd_in(cpg: &Cpg, n: NodeId) -> impl Iterator<Item = &CpgEdge> {
    cpg.in_edges(n).filter(|e| e.kind == EdgeKind::ReachingDef)
}

fn rd_out(cpg: &Cpg, n: NodeId) -> impl Iterator<Item = &CpgEdge> {
    cpg.out_edges(n).filter(|e| e.kind == EdgeKind::ReachingDef)
}

struct StepSet {
    steps: IndexMap<(NodeId, String), SliceStep>,
}

impl StepSet {
    fn new() -> Self {
        StepSet {
            steps: IndexMap::new(),
        }
    }

    /// Adds a step only when the node has none yet for this variable, so
    /// data hops stay shortest edge distances.
    fn insert_absent(&mut self, node: NodeId, variable: &str, direction: Direction, hop: u32) {
        self.steps
            .entry((node, variable.to_string()))
            .or_insert_with(|| SliceStep {
                node,
                variable: variable.to_string(),
                direction,
                hop,
            });
    }

    fn offer(&mut self, node: NodeId, variable: &str, direction: Direction, hop: u32) {
        let key = (node, variable.to_string());
        let step = SliceStep {
            node,
            variable: variable.to_string(),
            direction,
            hop,
        };
        match self.steps.get_mut(&key) {
            Some(existing) => {
                let better = hop < existing.hop
                    || (hop == existing.hop && direction < existing.direction);
                if better {
                    *existing = step;
                }
            }
            None => {
                self.steps.insert(key, step);
            }
        }
    }
}

/// Backward then forward traversal for a single tracked variable. Forward
/// propagation starts from the anchor and from every backward-reached node at
/// its backward hop, so no path exceeds `depth` edges.
fn data_closure(
    cpg: &Cpg,
    anchor: NodeId,
    var: &str,
    depth: u32,
) -> (HashMap<NodeId, u32>, HashMap<NodeId, u32>) {
    let mut back: HashMap<NodeId, u32> = HashMap::new();
    back.insert(anchor, 0);
    let mut queue = VecDeque::from([(anchor, 0u32)]);
    while let Some((n, h)) = queue.pop_front() {
        if h >= depth {
            continue;
        }
        for e in rd_in(cpg, n) {
            if n == anchor && !label_matches(e.variable.as_deref().unwrap_or(""), var) {
                continue;
            }
            if !back.contains_key(&e.src) {
                back.insert(e.src, h + 1);
                queue.push_back((e.src, h + 1));
            }
        }
    }

    // multi-source BFS with start distances, processed level by level
    let mut dist: HashMap<NodeId, u32> = back.clone();
    let mut buckets: Vec<Vec<NodeId>> = vec![Vec::new(); depth as usize + 1];
    for (&n, &h) in &back {
        buckets[h as usize].push(n);
    }
    for b in &mut buckets {
        b.sort();
    }
    let mut fwd: HashMap<NodeId, u32> = HashMap::new();
    for level in 0..=depth {
        let current = std::mem::take(&mut buckets[level as usize]);
        for n in current {
            if dist.get(&n) != Some(&level) || level >= depth {
                continue;
            }
            for e in rd_out(cpg, n) {
                if n == anchor && !label_matches(e.variable.as_deref().unwrap_or(""), var) {
                    continue;
                }
                let nd = level + 1;
                let f = fwd.entry(e.dst).or_insert(u32::MAX);
                if nd < *f {
                    *f = nd;
                }
                if dist.get(&e.dst).map_or(true, |&d| nd < d) {
                    dist.insert(e.dst, nd);
                    buckets[nd as usize].push(e.dst);
                }
            }
        }
    }
    fwd.remove(&anchor);
    back.remove(&anchor);
    (back, fwd)
}

/// Adds control guards of every data step, plus one backward hop from each guard.
fn add_guards(cpg: &Cpg, set: &mut StepSet, var: &str, depth: u32) {
    let data: Vec<(NodeId, u32)> = set
        .steps
        .values()
        .filter(|s| s.variable == var)
        .map(|s| (s.node, s.hop))
        .collect();
    let mut guard_hop: HashMap<NodeId, u32> = HashMap::new();
    for (node, hop) in data {
        let mut stack = vec![node];
        let mut seen = HashSet::new();
        while let Some(n) = stack.pop() {
            for e in cpg.in_edges(n) {
                if e.kind == EdgeKind::ControlDep && seen.insert(e.src) {
                    let h = guard_hop.entry(e.src).or_insert(hop);
                    *h = (*h).min(hop);
                    stack.push(e.src);
                }
            }
        }
    }
    let mut guards: Vec<(NodeId, u32)> = guard_hop.into_iter().collect();
    guards.sort();
    for &(g, h) in &guards {
        set.insert_absent(g, var, Direction::Control, h);
    }
    let mut extra: HashMap<NodeId, u32> = HashMap::new();
    for &(g, _) in &guards {
        let h = set.steps[&(g, var.to_string())].hop;
        if h < depth {
            for e in rd_in(cpg, g) {
                let x = extra.entry(e.src).or_insert(h + 1);
                *x = (*x).min(h + 1);
            }
        }
    }
    let mut extra: Vec<(NodeId, u32)> = extra.into_iter().collect();
    extra.sort_by_key(|&(n, h)| (h, n));
    for (n, h) in extra {
        set.insert_absent(n, var, Direction::Backward, h);
    }
}

/// Bidirectional slice from `anchor` for each variable in `vars`.
pub fn slice_bidirectional(
    cpg: &Cpg,
    anchor: NodeId,
    vars: &BTreeSet<String>,
    depth_limit: u32,
) -> LocalSlice {
    let depth = depth_limit.max(1);
    let mut set = StepSet::new();
    if vars.is_empty() {
        set.offer(anchor, "", Direction::Backward, 0);
    }
    for v in vars {
        set.offer(anchor, v, Direction::Backward, 0);
        let (back, fwd) = data_closure(cpg, anchor, v, depth);
        let mut back: Vec<_> = back.into_iter().collect();
        back.sort_by_key(|&(n, h)| (h, n));
        for (n, h) in back {
            set.offer(n, v, Direction::Backward, h);
        }
        let mut fwd: Vec<_> = fwd.into_iter().collect();
        fwd.sort_by_key(|&(n, h)| (h, n));
        for (n, h) in fwd {
            set.offer(n, v, Direction::Forward, h);
        }
        add_guards(cpg, &mut set, v, depth);
    }
    let mut slice = LocalSlice {
        anchor,
        steps: set.steps.into_values().collect(),
        boundary: Vec::new(),
    };
    slice.boundary = find_boundary_variables(cpg, &slice);
    slice
}

/// Forward-only slice of `function` from the parameters named in `entry_vars`.
pub fn slice_forward(
    cpg: &Cpg,
    function: NodeId,
    entry_vars: &BTreeSet<String>,
    depth_limit: u32,
) -> LocalSlice {
    let depth = depth_limit.max(1);
    let mut set = StepSet::new();
    let params: Vec<(NodeId, String)> = cpg
        .parameters(function)
        .into_iter()
        .filter_map(|p| cpg.node(p).and_then(|n| n.name.clone()).map(|name| (p, name)))
        .filter(|(_, name)| entry_vars.contains(name))
        .collect();
    if params.is_empty() {
        set.offer(function, "", Direction::Forward, 0);
    }
    for (param, v) in &params {
        set.offer(function, v, Direction::Forward, 0);
        set.offer(*param, v, Direction::Forward, 0);
        let mut dist: HashMap<NodeId, u32> = HashMap::from([(*param, 0)]);
        let mut queue = VecDeque::from([(*param, 0u32)]);
        while let Some((n, h)) = queue.pop_front() {
            if h >= depth {
                continue;
            }
            for e in rd_out(cpg, n) {
                if !dist.contains_key(&e.dst) {
                    dist.insert(e.dst, h + 1);
                    queue.push_back((e.dst, h + 1));
                }
            }
        }
        let mut reached: Vec<_> = dist.into_iter().filter(|(n, _)| n != param).collect();
        reached.sort_by_key(|&(n, h)| (h, n));
        for (n, h) in reached {
            set.offer(n, v, Direction::Forward, h);
        }
        add_guards(cpg, &mut set, v, depth);
    }
    let mut slice = LocalSlice {
        anchor: function,
        steps: set.steps.into_values().collect(),
        boundary: Vec::new(),
    };
    slice.boundary = find_boundary_variables(cpg, &slice);
    slice
}

/// A call inside a sliced statement that touches tracked data.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CallSite {
    pub call: NodeId,
    pub statement: NodeId,
    pub callee: String,
    /// Tracked variables mentioned by each argument, by position.
    pub argument_vars: Vec<Vec<String>>,
    /// Variables defined by the statement holding the call.
    pub assigned: Vec<String>,
}

fn mentioned(cpg: &Cpg, root: NodeId) -> BTreeSet<String> {
    let mut out = BTreeSet::new();
    for id in cpg.subtree(root) {
        if let Some(n) = cpg.node(id) {
            if matches!(n.kind, NodeKind::Identifier | NodeKind::Expression) {
                if let Some(name) = &n.name {
                    out.insert(name.clone());
                    out.insert(base_of(name).to_string());
                }
            }
        }
    }
    out
}

/// Calls in sliced statements whose arguments mention a tracked variable or
/// whose result is assigned.
pub fn call_sites(cpg: &Cpg, slice: &LocalSlice) -> Vec<CallSite> {
    let tracked = slice.variables();
    let mut out = Vec::new();
    let mut stmts: Vec<NodeId> = slice
        .nodes()
        .into_iter()
        .filter(|&n| cpg.node(n).map_or(false, |x| x.kind.is_statement()))
        .collect();
    stmts.sort();
    for stmt in stmts {
        let assigned: Vec<String> = cpg
            .facts(stmt)
            .map(|f| {
                f.defs
                    .iter()
                    .filter(|(_, s)| *s == crate::cpg::DefStrength::Strong)
                    .map(|(k, _)| k.clone())
                    .collect()
            })
            .unwrap_or_default();
        for call in cpg.calls_in(stmt) {
            let Some(callee) = cpg.node(call).and_then(|n| n.name.clone()) else {
                continue;
            };
            let argument_vars: Vec<Vec<String>> = cpg
                .children(call)
                .iter()
                .map(|&arg| {
                    mentioned(cpg, arg)
                        .into_iter()
                        .filter(|m| tracked.iter().any(|t| label_matches(m, t)))
                        .collect()
                })
                .collect();
            let touches = argument_vars.iter().any(|a| !a.is_empty());
            if touches || !assigned.is_empty() {
                out.push(CallSite {
                    call,
                    statement: stmt,
                    callee,
                    argument_vars,
                    assigned: assigned.clone(),
                });
            }
        }
    }
    out
}

/// Variables whose origin or destination lies outside the sliced function.
pub fn find_boundary_variables(cpg: &Cpg, slice: &LocalSlice) -> Vec<BoundaryVariable> {
    let mut out: Vec<BoundaryVariable> = Vec::new();
    let mut push = |b: BoundaryVariable| {
        if !out.contains(&b) {
            out.push(b);
        }
    };
    for step in &slice.steps {
        let Some(n) = cpg.node(step.node) else { continue };
        match n.kind {
            NodeKind::Parameter if step.direction == Direction::Backward => {
                if let Some(name) = &n.name {
                    push(BoundaryVariable {
                        variable: name.clone(),
                        reason: BoundaryReason::Parameter,
                        site: n.id,
                    });
                }
            }
            NodeKind::FunctionDef if step.direction == Direction::Backward && step.hop > 0 => {
                // synthetic entry definitions of globals reaching sliced statements
                let sliced = slice.node_set();
                for e in rd_out(cpg, n.id) {
                    if sliced.contains(&e.dst) {
                        if let Some(v) = &e.variable {
                            push(BoundaryVariable {
                                variable: v.clone(),
                                reason: BoundaryReason::Global,
                                site: n.id,
                            });
                        }
                    }
                }
            }
            _ => {}
        }
    }
    for site in call_sites(cpg, slice) {
        if cpg.function(&site.callee).is_some() {
            continue;
        }
        for v in &site.assigned {
            push(BoundaryVariable {
                variable: v.clone(),
                reason: BoundaryReason::ExternalCallReturn,
                site: site.call,
            });
        }
        for v in site.argument_vars.iter().flatten() {
            push(BoundaryVariable {
                variable: v.clone(),
                reason: BoundaryReason::ExternalCallArgument,
                site: site.call,
            });
        }
    }
    out
}
