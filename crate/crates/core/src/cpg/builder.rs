//! Lowers parsed functions into CPG nodes and computes CFG, reaching-def and
//! control-dependence edges.

use std::collections::{BTreeSet, HashMap, HashSet};

use super::ast::*;
use super::lexer::Token;
use super::{base_of, extends_path, CpgEdge, CpgNode, DefStrength, EdgeKind, NodeId, NodeKind, StmtFacts};

pub(crate) struct Built {
    pub nodes: Vec<CpgNode>,
    pub edges: Vec<CpgEdge>,
    pub facts: HashMap<NodeId, StmtFacts>,
}

/// Statement-level shape used for CFG and control-dependence construction.
enum Lowered {
    Simple(NodeId),
    If {
        node: NodeId,
        then: Vec<Lowered>,
        els: Vec<Lowered>,
    },
    While {
        node: NodeId,
        body: Vec<Lowered>,
    },
    DoWhile {
        node: NodeId,
        body: Vec<Lowered>,
    },
    For {
        init: Option<NodeId>,
        node: NodeId,
        step: Option<NodeId>,
        body: Vec<Lowered>,
    },
    Switch {
        node: NodeId,
        body: Vec<Lowered>,
    },
    Case {
        node: NodeId,
        default: bool,
    },
    Label(String, NodeId),
    Break(NodeId),
    Continue(NodeId),
    Goto(String, NodeId),
    Return(NodeId),
}

impl Lowered {
    /// Nodes that sit directly in the enclosing statement list.
    fn heads(&self, out: &mut Vec<NodeId>) {
        match self {
            Lowered::For { init, node, .. } => {
                out.extend(init.iter().copied());
                out.push(*node);
            }
            Lowered::Simple(n)
            | Lowered::Label(_, n)
            | Lowered::Break(n)
            | Lowered::Continue(n)
            | Lowered::Goto(_, n)
            | Lowered::Return(n)
            | Lowered::Case { node: n, .. }
            | Lowered::If { node: n, .. }
            | Lowered::While { node: n, .. }
            | Lowered::DoWhile { node: n, .. }
            | Lowered::Switch { node: n, .. } => out.push(*n),
        }
    }
}

const KEYWORDS: &[&str] = &[
    "if", "else", "while", "do", "for", "switch", "case", "default", "return", "break",
    "continue", "goto", "sizeof", "void", "char", "short", "int", "long", "float", "double",
    "signed", "unsigned", "struct", "union", "enum", "const", "volatile", "static", "extern",
    "register", "inline", "typedef", "auto", "_Bool", "bool",
];

struct Builder<'a> {
    src: &'a str,
    file: &'a str,
    toks: &'a [Token],
    next_id: u64,
    nodes: Vec<CpgNode>,
    edges: Vec<CpgEdge>,
    facts: HashMap<NodeId, StmtFacts>,
    /// Names declared anywhere in the current function.
    locals: HashSet<String>,
}

pub(crate) fn build(
    src: &str,
    file: &str,
    toks: &[Token],
    functions: &[Function],
    id_base: u64,
) -> Built {
    let mut b = Builder {
        src,
        file,
        toks,
        next_id: id_base,
        nodes: Vec::new(),
        edges: Vec::new(),
        facts: HashMap::new(),
        locals: HashSet::new(),
    };
    let tu = b.alloc(NodeKind::TranslationUnit, 1, 1, src.to_string(), None);
    for f in functions {
        b.function(tu, f);
    }
    Built {
        nodes: b.nodes,
        edges: b.edges,
        facts: b.facts,
    }
}

impl<'a> Builder<'a> {
    fn alloc(
        &mut self,
        kind: NodeKind,
        line: u32,
        column: u32,
        code: String,
        name: Option<String>,
    ) -> NodeId {
        let id = NodeId(self.next_id);
        self.next_id += 1;
        self.nodes.push(CpgNode {
            id,
            kind,
            file: self.file.to_string(),
            line,
            column,
            code,
            name,
        });
        id
    }

    fn text(&self, span: Span) -> String {
        let a = self.toks[span.first].start;
        let b = self.toks[span.last].end;
        self.src[a..b].to_string()
    }

    fn node_at(&mut self, kind: NodeKind, span: Span, name: Option<String>, parent: NodeId) -> NodeId {
        let t = self.toks[span.first];
        let code = self.text(span);
        let id = self.alloc(kind, t.line, t.column, code, name);
        self.edge(parent, id, EdgeKind::Ast, None);
        id
    }

    fn edge(&mut self, src: NodeId, dst: NodeId, kind: EdgeKind, variable: Option<String>) {
        self.edges.push(CpgEdge {
            src,
            dst,
            kind,
            variable,
        });
    }

    fn function(&mut self, tu: NodeId, f: &Function) {
        self.locals.clear();
        let func = self.node_at(NodeKind::FunctionDef, f.span, Some(f.name.clone()), tu);
        let mut params = Vec::new();
        for p in &f.params {
            let id = self.node_at(NodeKind::Parameter, p.span, p.name.clone(), func);
            if let Some(name) = &p.name {
                params.push((id, name.clone()));
            }
        }
        let body = self.stmts(&f.body, func);

        // CFG
        let mut cfg = CfgBuilder::default();
        let frag = cfg.seq(&body);
        if let Some(entry) = frag.entry {
            cfg.edges.push((func, entry));
        }
        for (from, label) in std::mem::take(&mut cfg.gotos) {
            if let Some(&to) = cfg.labels.get(&label) {
                cfg.edges.push((from, to));
            }
        }
        let mut seen = HashSet::new();
        let cfg_edges: Vec<(NodeId, NodeId)> = cfg
            .edges
            .into_iter()
            .filter(|e| seen.insert(*e))
            .collect();
        for &(a, b) in &cfg_edges {
            self.edge(a, b, EdgeKind::Cfg, None);
        }

        // control dependence
        let mut cd = Vec::new();
        control_deps(&body, &mut cd);
        for (a, b) in cd {
            self.edge(a, b, EdgeKind::ControlDep, None);
        }

        self.reaching_defs(func, &params, &body, &cfg_edges);
    }

    fn stmts(&mut self, stmts: &[Stmt], parent: NodeId) -> Vec<Lowered> {
        let mut out = Vec::new();
        for s in stmts {
            self.stmt(s, parent, &mut out);
        }
        out
    }

    fn stmt(&mut self, s: &Stmt, parent: NodeId, out: &mut Vec<Lowered>) {
        match &s.kind {
            StmtKind::Empty => {}
            StmtKind::Block(items) => {
                for item in items {
                    self.stmt(item, parent, out);
                }
            }
            StmtKind::Expr(e) => {
                let id = self.node_at(NodeKind::Statement, s.span, None, parent);
                self.expr(e, id);
                let mut facts = StmtFacts::default();
                walk_uses(e, &mut facts);
                self.facts.insert(id, finish(facts));
                out.push(Lowered::Simple(id));
            }
            StmtKind::Decl(decls) => {
                let id = self.node_at(NodeKind::Statement, s.span, None, parent);
                let mut facts = StmtFacts::default();
                for d in decls {
                    self.node_at(
                        NodeKind::Identifier,
                        Span::new(d.name_tok, d.name_tok),
                        Some(d.name.clone()),
                        id,
                    );
                    for dim in &d.dims {
                        self.expr(dim, id);
                        walk_uses(dim, &mut facts);
                    }
                    if let Some(init) = &d.init {
                        self.expr(init, id);
                        walk_uses(init, &mut facts);
                    }
                    facts.defs.push((d.name.clone(), DefStrength::Strong));
                    self.locals.insert(d.name.clone());
                }
                self.facts.insert(id, finish(facts));
                out.push(Lowered::Simple(id));
            }
            StmtKind::Return(value) => {
                let id = self.node_at(NodeKind::Return, s.span, None, parent);
                let mut facts = StmtFacts::default();
                if let Some(v) = value {
                    self.expr(v, id);
                    walk_uses(v, &mut facts);
                }
                self.facts.insert(id, finish(facts));
                out.push(Lowered::Return(id));
            }
            StmtKind::If { cond, then, els } => {
                let id = self.control(s.span, "if", cond, parent);
                let mut t = Vec::new();
                self.stmt(then, id, &mut t);
                let mut e = Vec::new();
                if let Some(els) = els {
                    self.stmt(els, id, &mut e);
                }
                out.push(Lowered::If {
                    node: id,
                    then: t,
                    els: e,
                });
            }
            StmtKind::While { cond, body } => {
                let id = self.control(s.span, "while", cond, parent);
                let mut b = Vec::new();
                self.stmt(body, id, &mut b);
                out.push(Lowered::While { node: id, body: b });
            }
            StmtKind::DoWhile { body, cond } => {
                let id = self.node_at(
                    NodeKind::ControlStructure,
                    s.span,
                    Some("do".into()),
                    parent,
                );
                let mut b = Vec::new();
                self.stmt(body, id, &mut b);
                self.expr(cond, id);
                let mut facts = StmtFacts::default();
                walk_uses(cond, &mut facts);
                self.facts.insert(id, finish(facts));
                out.push(Lowered::DoWhile { node: id, body: b });
            }
            StmtKind::For {
                init,
                cond,
                step,
                body,
            } => {
                let id = self.node_at(
                    NodeKind::ControlStructure,
                    s.span,
                    Some("for".into()),
                    parent,
                );
                let init_id = init.as_ref().map(|i| self.sub_statement(i, id));
                let mut facts = StmtFacts::default();
                if let Some(c) = cond {
                    self.expr(c, id);
                    walk_uses(c, &mut facts);
                }
                self.facts.insert(id, finish(facts));
                let step_id = step.as_ref().map(|st| self.sub_statement(st, id));
                let mut b = Vec::new();
                self.stmt(body, id, &mut b);
                out.push(Lowered::For {
                    init: init_id,
                    node: id,
                    step: step_id,
                    body: b,
                });
            }
            StmtKind::Switch { cond, body } => {
                let id = self.control(s.span, "switch", cond, parent);
                let mut b = Vec::new();
                self.stmt(body, id, &mut b);
                out.push(Lowered::Switch { node: id, body: b });
            }
            StmtKind::Case(value) => {
                let id = self.node_at(NodeKind::Statement, s.span, None, parent);
                let mut facts = StmtFacts::default();
                if let Some(v) = value {
                    self.expr(v, id);
                    walk_uses(v, &mut facts);
                }
                self.facts.insert(id, finish(facts));
                out.push(Lowered::Case {
                    node: id,
                    default: value.is_none(),
                });
            }
            StmtKind::Labeled { label, stmt } => {
                // label node covers `name:` only
                let colon = s.span.first + 1;
                let id = self.node_at(
                    NodeKind::Statement,
                    Span::new(s.span.first, colon),
                    Some(label.clone()),
                    parent,
                );
                self.facts.insert(id, StmtFacts::default());
                out.push(Lowered::Label(label.clone(), id));
                self.stmt(stmt, parent, out);
            }
            StmtKind::Break => {
                let id = self.node_at(NodeKind::Statement, s.span, None, parent);
                self.facts.insert(id, StmtFacts::default());
                out.push(Lowered::Break(id));
            }
            StmtKind::Continue => {
                let id = self.node_at(NodeKind::Statement, s.span, None, parent);
                self.facts.insert(id, StmtFacts::default());
                out.push(Lowered::Continue(id));
            }
            StmtKind::Goto(label) => {
                let id = self.node_at(NodeKind::Statement, s.span, None, parent);
                self.facts.insert(id, StmtFacts::default());
                out.push(Lowered::Goto(label.clone(), id));
            }
            StmtKind::Opaque(idents) => {
                let id = self.node_at(NodeKind::Statement, s.span, None, parent);
                let mut facts = StmtFacts::default();
                for (name, tok) in idents {
                    if KEYWORDS.contains(&name.as_str()) {
                        continue;
                    }
                    let next = self.toks.get(tok + 1).map(|t| t.text(self.src));
                    let prev = tok
                        .checked_sub(1)
                        .and_then(|p| self.toks.get(p))
                        .map(|t| t.text(self.src));
                    if matches!(prev, Some(".") | Some("->")) {
                        continue;
                    }
                    self.node_at(
                        NodeKind::Identifier,
                        Span::new(*tok, *tok),
                        Some(name.clone()),
                        id,
                    );
                    if next == Some("(") {
                        facts.calls.push(name.clone());
                    } else {
                        facts.uses.push(name.clone());
                    }
                }
                self.facts.insert(id, finish(facts));
                out.push(Lowered::Simple(id));
            }
        }
    }

    fn control(&mut self, span: Span, keyword: &str, cond: &Expr, parent: NodeId) -> NodeId {
        let id = self.node_at(
            NodeKind::ControlStructure,
            span,
            Some(keyword.to_string()),
            parent,
        );
        self.expr(cond, id);
        let mut facts = StmtFacts::default();
        walk_uses(cond, &mut facts);
        self.facts.insert(id, finish(facts));
        id
    }

    /// For-loop init/step clauses become standalone statements.
    fn sub_statement(&mut self, s: &Stmt, parent: NodeId) -> NodeId {
        let mut tmp = Vec::new();
        self.stmt(s, parent, &mut tmp);
        match tmp.first() {
            Some(Lowered::Simple(id)) => *id,
            _ => unreachable!("for clauses lower to simple statements"),
        }
    }

    fn expr(&mut self, e: &Expr, parent: NodeId) {
        match &e.kind {
            ExprKind::Ident(name) => {
                self.node_at(NodeKind::Identifier, e.span, Some(name.clone()), parent);
            }
            ExprKind::Literal | ExprKind::SizeofType => {
                let kind = if matches!(e.kind, ExprKind::Literal) {
                    NodeKind::Literal
                } else {
                    NodeKind::Expression
                };
                self.node_at(kind, e.span, None, parent);
            }
            ExprKind::Call { callee, args, .. } => {
                let id = self.node_at(NodeKind::Call, e.span, Some(callee.clone()), parent);
                for a in args {
                    self.expr(a, id);
                }
            }
            ExprKind::Member { base, .. } => {
                let id = self.node_at(NodeKind::Expression, e.span, member_path(e), parent);
                self.expr(base, id);
            }
            ExprKind::Index { base, index } => {
                let id = self.node_at(NodeKind::Expression, e.span, None, parent);
                self.expr(base, id);
                self.expr(index, id);
            }
            ExprKind::Unary { operand, .. }
            | ExprKind::Postfix { operand, .. }
            | ExprKind::Cast { operand }
            | ExprKind::Sizeof(operand) => {
                let id = self.node_at(NodeKind::Expression, e.span, None, parent);
                self.expr(operand, id);
            }
            ExprKind::Binary { lhs, rhs, .. } | ExprKind::Assign { lhs, rhs, .. } => {
                let id = self.node_at(NodeKind::Expression, e.span, None, parent);
                self.expr(lhs, id);
                self.expr(rhs, id);
            }
            ExprKind::Ternary { cond, then, els } => {
                let id = self.node_at(NodeKind::Expression, e.span, None, parent);
                self.expr(cond, id);
                if let Some(t) = then {
                    self.expr(t, id);
                }
                self.expr(els, id);
            }
            ExprKind::InitList(items) | ExprKind::Comma(items) => {
                let id = self.node_at(NodeKind::Expression, e.span, None, parent);
                for i in items {
                    self.expr(i, id);
                }
            }
        }
    }

    fn reaching_defs(
        &mut self,
        func: NodeId,
        params: &[(NodeId, String)],
        body: &[Lowered],
        cfg_edges: &[(NodeId, NodeId)],
    ) {
        let mut stmt_nodes = Vec::new();
        collect_nodes(body, &mut stmt_nodes);

        // locals vs globals
        let mut locals: HashSet<String> = params.iter().map(|(_, n)| n.clone()).collect();
        locals.extend(self.locals.iter().cloned());
        let mut globals = BTreeSet::new();
        for n in &stmt_nodes {
            if let Some(f) = self.facts.get(n) {
                for k in f.uses.iter().chain(f.defs.iter().map(|(k, _)| k)) {
                    let b = base_of(k);
                    if !locals.contains(b) {
                        globals.insert(b.to_string());
                    }
                }
            }
        }

        // entry definitions
        let mut entry: Vec<(NodeId, String)> = params.to_vec();
        entry.extend(globals.iter().map(|g| (func, g.clone())));

        let mut succs: HashMap<NodeId, Vec<NodeId>> = HashMap::new();
        let mut preds: HashMap<NodeId, Vec<NodeId>> = HashMap::new();
        for &(a, b) in cfg_edges {
            succs.entry(a).or_default().push(b);
            preds.entry(b).or_default().push(a);
        }

        type Def = (NodeId, String);
        let mut out_sets: HashMap<NodeId, BTreeSet<Def>> = HashMap::new();
        out_sets.insert(func, entry.into_iter().collect());
        let empty = StmtFacts::default();
        let mut work: Vec<NodeId> = stmt_nodes.clone();
        work.reverse();
        let mut queued: HashSet<NodeId> = stmt_nodes.iter().copied().collect();
        while let Some(n) = work.pop() {
            queued.remove(&n);
            let input = in_set(n, &preds, &out_sets);
            let facts = self.facts.get(&n).unwrap_or(&empty);
            let out = transfer(n, &input, facts);
            if out_sets.get(&n) != Some(&out) {
                out_sets.insert(n, out);
                for &s in succs.get(&n).map(Vec::as_slice).unwrap_or(&[]) {
                    if s != func && queued.insert(s) {
                        work.push(s);
                    }
                }
            }
        }

        let mut emitted = HashSet::new();
        for &n in &stmt_nodes {
            let Some(facts) = self.facts.get(&n) else { continue };
            let input = in_set(n, &preds, &out_sets);
            let mut new_edges = Vec::new();
            for u in &facts.uses {
                let ub = base_of(u);
                for (d, k) in &input {
                    let label = if k == u {
                        u.as_str()
                    } else if u != ub && k == ub {
                        ub
                    } else {
                        continue;
                    };
                    if emitted.insert((*d, n, label.to_string())) {
                        new_edges.push((*d, n, label.to_string()));
                    }
                }
            }
            for (d, n, label) in new_edges {
                self.edge(d, n, EdgeKind::ReachingDef, Some(label));
            }
        }
    }
}

fn in_set(
    n: NodeId,
    preds: &HashMap<NodeId, Vec<NodeId>>,
    out_sets: &HashMap<NodeId, BTreeSet<(NodeId, String)>>,
) -> BTreeSet<(NodeId, String)> {
    let mut input = BTreeSet::new();
    for p in preds.get(&n).map(Vec::as_slice).unwrap_or(&[]) {
        if let Some(s) = out_sets.get(p) {
            input.extend(s.iter().cloned());
        }
    }
    input
}

fn transfer(
    n: NodeId,
    input: &BTreeSet<(NodeId, String)>,
    facts: &StmtFacts,
) -> BTreeSet<(NodeId, String)> {
    let mut out = input.clone();
    for (k, strength) in &facts.defs {
        if *strength == DefStrength::Strong {
            let plain = base_of(k) == k.as_str();
            out.retain(|(_, dk)| {
                if plain {
                    base_of(dk) != k.as_str()
                } else {
                    !extends_path(dk, k)
                }
            });
        }
    }
    for (k, _) in &facts.defs {
        out.insert((n, k.clone()));
    }
    out
}

fn collect_nodes(items: &[Lowered], out: &mut Vec<NodeId>) {
    for item in items {
        match item {
            Lowered::Simple(n)
            | Lowered::Label(_, n)
            | Lowered::Break(n)
            | Lowered::Continue(n)
            | Lowered::Goto(_, n)
            | Lowered::Return(n)
            | Lowered::Case { node: n, .. } => out.push(*n),
            Lowered::If { node, then, els } => {
                out.push(*node);
                collect_nodes(then, out);
                collect_nodes(els, out);
            }
            Lowered::While { node, body }
            | Lowered::DoWhile { node, body }
            | Lowered::Switch { node, body } => {
                out.push(*node);
                collect_nodes(body, out);
            }
            Lowered::For {
                init,
                node,
                step,
                body,
            } => {
                out.extend(init.iter().copied());
                out.push(*node);
                out.extend(step.iter().copied());
                collect_nodes(body, out);
            }
        }
    }
}

fn control_deps(items: &[Lowered], out: &mut Vec<(NodeId, NodeId)>) {
    for item in items {
        let mut guarded = |guard: NodeId, lists: &[&[Lowered]], extra: Option<NodeId>| {
            let mut heads = Vec::new();
            if let Some(x) = extra {
                heads.push(x);
            }
            for list in lists {
                for l in list.iter() {
                    l.heads(&mut heads);
                }
            }
            for h in heads {
                out.push((guard, h));
            }
        };
        match item {
            Lowered::If { node, then, els } => {
                guarded(*node, &[then, els], None);
                control_deps(then, out);
                control_deps(els, out);
            }
            Lowered::While { node, body }
            | Lowered::DoWhile { node, body }
            | Lowered::Switch { node, body } => {
                guarded(*node, &[body], None);
                control_deps(body, out);
            }
            Lowered::For {
                node, step, body, ..
            } => {
                guarded(*node, &[body], *step);
                control_deps(body, out);
            }
            _ => {}
        }
    }
}

#[derive(Default)]
struct Frag {
    entry: Option<NodeId>,
    exits: Vec<NodeId>,
}

#[derive(Default)]
struct CfgBuilder {
    edges: Vec<(NodeId, NodeId)>,
    /// (break sources, continue target) per enclosing loop/switch
    loops: Vec<(Vec<NodeId>, Option<NodeId>)>,
    labels: HashMap<String, NodeId>,
    gotos: Vec<(NodeId, String)>,
}

impl CfgBuilder {
    fn link(&mut self, from: &[NodeId], to: NodeId) {
        for &f in from {
            self.edges.push((f, to));
        }
    }

    fn seq(&mut self, items: &[Lowered]) -> Frag {
        let mut entry = None;
        let mut exits: Vec<NodeId> = Vec::new();
        let mut started = false;
        for item in items {
            let f = self.one(item);
            if let Some(e) = f.entry {
                if started {
                    self.link(&exits, e);
                } else {
                    entry = Some(e);
                    started = true;
                }
                exits = f.exits;
            }
        }
        Frag { entry, exits }
    }

    fn continue_target(&self) -> Option<NodeId> {
        self.loops.iter().rev().find_map(|(_, c)| *c)
    }

    fn one(&mut self, item: &Lowered) -> Frag {
        match item {
            Lowered::Simple(n) | Lowered::Case { node: n, .. } => Frag {
                entry: Some(*n),
                exits: vec![*n],
            },
            Lowered::Label(name, n) => {
                self.labels.insert(name.clone(), *n);
                Frag {
                    entry: Some(*n),
                    exits: vec![*n],
                }
            }
            Lowered::Return(n) => Frag {
                entry: Some(*n),
                exits: vec![],
            },
            Lowered::Break(n) => {
                if let Some((breaks, _)) = self.loops.last_mut() {
                    breaks.push(*n);
                }
                Frag {
                    entry: Some(*n),
                    exits: vec![],
                }
            }
            Lowered::Continue(n) => {
                if let Some(t) = self.continue_target() {
                    self.edges.push((*n, t));
                }
                Frag {
                    entry: Some(*n),
                    exits: vec![],
                }
            }
            Lowered::Goto(label, n) => {
                self.gotos.push((*n, label.clone()));
                Frag {
                    entry: Some(*n),
                    exits: vec![],
                }
            }
            Lowered::If { node, then, els } => {
                let t = self.seq(then);
                let e = self.seq(els);
                let mut exits = Vec::new();
                for branch in [t, e] {
                    match branch.entry {
                        Some(en) => {
                            self.edges.push((*node, en));
                            exits.extend(branch.exits);
                        }
                        None => exits.push(*node),
                    }
                }
                exits.dedup();
                Frag {
                    entry: Some(*node),
                    exits,
                }
            }
            Lowered::While { node, body } => {
                self.loops.push((Vec::new(), Some(*node)));
                let b = self.seq(body);
                let (breaks, _) = self.loops.pop().unwrap_or_default();
                match b.entry {
                    Some(en) => {
                        self.edges.push((*node, en));
                        self.link(&b.exits, *node);
                    }
                    None => self.edges.push((*node, *node)),
                }
                let mut exits = vec![*node];
                exits.extend(breaks);
                Frag {
                    entry: Some(*node),
                    exits,
                }
            }
            Lowered::DoWhile { node, body } => {
                self.loops.push((Vec::new(), Some(*node)));
                let b = self.seq(body);
                let (breaks, _) = self.loops.pop().unwrap_or_default();
                let entry = match b.entry {
                    Some(en) => {
                        self.edges.push((*node, en));
                        self.link(&b.exits, *node);
                        en
                    }
                    None => {
                        self.edges.push((*node, *node));
                        *node
                    }
                };
                let mut exits = vec![*node];
                exits.extend(breaks);
                Frag {
                    entry: Some(entry),
                    exits,
                }
            }
            Lowered::For {
                init,
                node,
                step,
                body,
            } => {
                if let Some(i) = init {
                    self.edges.push((*i, *node));
                }
                let cont = step.unwrap_or(*node);
                self.loops.push((Vec::new(), Some(cont)));
                let b = self.seq(body);
                let (breaks, _) = self.loops.pop().unwrap_or_default();
                let back = match b.entry {
                    Some(en) => {
                        self.edges.push((*node, en));
                        b.exits
                    }
                    None => vec![*node],
                };
                self.link(&back, cont);
                if let Some(s) = step {
                    self.edges.push((*s, *node));
                }
                let mut exits = vec![*node];
                exits.extend(breaks);
                Frag {
                    entry: Some(init.unwrap_or(*node)),
                    exits,
                }
            }
            Lowered::Switch { node, body } => {
                self.loops.push((Vec::new(), None));
                let b = self.seq(body);
                let (breaks, _) = self.loops.pop().unwrap_or_default();
                let mut has_default = false;
                for item in body {
                    if let Lowered::Case { node: c, default } = item {
                        self.edges.push((*node, *c));
                        has_default |= *default;
                    }
                }
                let mut exits = b.exits;
                exits.extend(breaks);
                if !has_default {
                    exits.push(*node);
                }
                Frag {
                    entry: Some(*node),
                    exits,
                }
            }
        }
    }
}

/// Member-access path rooted at an identifier, whitespace-free.
pub(crate) fn member_path(e: &Expr) -> Option<String> {
    match &e.kind {
        ExprKind::Ident(name) => Some(name.clone()),
        ExprKind::Member { base, field, arrow } => {
            let b = member_path(base)?;
            Some(format!("{b}{}{field}", if *arrow { "->" } else { "." }))
        }
        _ => None,
    }
}

fn root_ident(e: &Expr) -> Option<String> {
    match &e.kind {
        ExprKind::Ident(name) => Some(name.clone()),
        ExprKind::Member { base, .. } | ExprKind::Index { base, .. } => root_ident(base),
        ExprKind::Unary { op, operand } if op == "*" => root_ident(operand),
        ExprKind::Cast { operand } => root_ident(operand),
        ExprKind::Binary { lhs, .. } => root_ident(lhs),
        _ => None,
    }
}

fn lvalue(e: &Expr, compound: bool, facts: &mut StmtFacts) {
    match &e.kind {
        ExprKind::Ident(name) => {
            facts.defs.push((name.clone(), DefStrength::Strong));
            if compound {
                facts.uses.push(name.clone());
            }
        }
        ExprKind::Member { .. } if member_path(e).is_some() => {
            let p = member_path(e).unwrap_or_default();
            facts.defs.push((p.clone(), DefStrength::Strong));
            facts
                .defs
                .push((base_of(&p).to_string(), DefStrength::Weak));
            if compound {
                facts.uses.push(p);
            }
        }
        _ => {
            walk_uses(e, facts);
            if let Some(r) = root_ident(e) {
                facts.defs.push((r, DefStrength::Weak));
            }
        }
    }
}

fn walk_uses(e: &Expr, facts: &mut StmtFacts) {
    match &e.kind {
        ExprKind::Ident(name) => facts.uses.push(name.clone()),
        ExprKind::Literal | ExprKind::SizeofType => {}
        ExprKind::Call {
            callee,
            callee_expr,
            args,
        } => {
            facts.calls.push(callee.clone());
            if let Some(c) = callee_expr {
                walk_uses(c, facts);
            }
            for a in args {
                walk_uses(a, facts);
            }
        }
        ExprKind::Member { base, .. } => match member_path(e) {
            Some(p) => facts.uses.push(p),
            None => walk_uses(base, facts),
        },
        ExprKind::Index { base, index } => {
            walk_uses(base, facts);
            walk_uses(index, facts);
        }
        ExprKind::Unary { op, operand } | ExprKind::Postfix { op, operand }
            if op == "++" || op == "--" =>
        {
            lvalue(operand, true, facts);
        }
        ExprKind::Unary { operand, .. }
        | ExprKind::Postfix { operand, .. }
        | ExprKind::Cast { operand }
        | ExprKind::Sizeof(operand) => walk_uses(operand, facts),
        ExprKind::Binary { lhs, rhs, .. } => {
            walk_uses(lhs, facts);
            walk_uses(rhs, facts);
        }
        ExprKind::Assign { op, lhs, rhs } => {
            walk_uses(rhs, facts);
            lvalue(lhs, op != "=", facts);
        }
        ExprKind::Ternary { cond, then, els } => {
            walk_uses(cond, facts);
            if let Some(t) = then {
                walk_uses(t, facts);
            }
            walk_uses(els, facts);
        }
        ExprKind::InitList(items) | ExprKind::Comma(items) => {
            for i in items {
                walk_uses(i, facts);
            }
        }
    }
}

fn finish(mut facts: StmtFacts) -> StmtFacts {
    let mut seen = HashSet::new();
    facts.uses.retain(|u| seen.insert(u.clone()));
    let mut seen = HashSet::new();
    facts.defs.retain(|d| seen.insert(d.clone()));
    // a strong def subsumes a weak def of the same key
    let strong: HashSet<String> = facts
        .defs
        .iter()
        .filter(|(_, s)| *s == DefStrength::Strong)
        .map(|(k, _)| k.clone())
        .collect();
    facts
        .defs
        .retain(|(k, s)| *s == DefStrength::Strong || !strong.contains(k));
    facts
}
