#![allow(dead_code)]

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::path::{Path, PathBuf};

use aegis::cpg::{import_cpg, Cpg, CpgDocument, CpgEdge, CpgNode, EdgeKind, NodeId, NodeKind, SCHEMA_VERSION};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    rand::SeedableRng::seed_from_u64(seed)
}

// ---------------------------------------------------------------------------
// Random dependence graphs

pub const PDG_LABELS: [&str; 4] = ["a", "b", "c", "p->f"];

pub struct RandomPdg {
    pub cpg: Cpg,
    pub anchor: NodeId,
    pub vars: BTreeSet<String>,
    pub depth: u32,
}

pub fn random_pdg(rng: &mut ChaCha8Rng) -> RandomPdg {
    let n = rng.gen_range(2..=50u64);
    let nodes: Vec<CpgNode> = (1..=n)
        .map(|i| CpgNode {
            id: NodeId(i),
            kind: NodeKind::Statement,
            file: "g.c".into(),
            line: i as u32,
            column: 1,
            code: format!("s{i};"),
            name: None,
        })
        .collect();
    let mut edges = BTreeSet::new();
    let rd = rng.gen_range(0..=n * 3);
    for _ in 0..rd {
        let src = NodeId(rng.gen_range(1..=n));
        let dst = NodeId(rng.gen_range(1..=n));
        if src == dst {
            continue;
        }
        let label = PDG_LABELS.choose(rng).unwrap().to_string();
        edges.insert(CpgEdge {
            src,
            dst,
            kind: EdgeKind::ReachingDef,
            variable: Some(label),
        });
    }
    let cd = rng.gen_range(0..=n);
    for _ in 0..cd {
        let src = NodeId(rng.gen_range(1..=n));
        let dst = NodeId(rng.gen_range(1..=n));
        if src != dst {
            edges.insert(CpgEdge {
                src,
                dst,
                kind: EdgeKind::ControlDep,
                variable: None,
            });
        }
    }
    let doc = CpgDocument {
        schema_version: SCHEMA_VERSION,
        file: "g.c".into(),
        nodes,
        edges: edges.into_iter().collect(),
    };
    let cpg = import_cpg(&serde_json::to_string(&doc).unwrap()).unwrap();
    let vars: BTreeSet<String> = PDG_LABELS
        .iter()
        .filter(|_| rng.gen_bool(0.4))
        .map(|s| s.to_string())
        .collect();
    RandomPdg {
        cpg,
        anchor: NodeId(rng.gen_range(1..=n)),
        vars,
        depth: rng.gen_range(1..=10),
    }
}

fn base(l: &str) -> &str {
    let end = l.find(|c: char| c == '.' || c == '-').unwrap_or(l.len());
    &l[..end]
}

fn matches(label: &str, var: &str) -> bool {
    label == var || base(label) == var || label == base(var)
}

/// Depth-limited closure computed by layered set iteration, independent of
/// the slicer's queue-based traversal.
pub fn brute_force_slice(cpg: &Cpg, anchor: NodeId, vars: &BTreeSet<String>, depth: u32) -> BTreeSet<NodeId> {
    let edges: Vec<&CpgEdge> = cpg.edges().iter().collect();
    let rd: Vec<(NodeId, NodeId, &str)> = edges
        .iter()
        .filter(|e| e.kind == EdgeKind::ReachingDef)
        .map(|e| (e.src, e.dst, e.variable.as_deref().unwrap_or("")))
        .collect();
    let cd: Vec<(NodeId, NodeId)> = edges
        .iter()
        .filter(|e| e.kind == EdgeKind::ControlDep)
        .map(|e| (e.src, e.dst))
        .collect();

    let mut all = BTreeSet::from([anchor]);
    for v in vars {
        let allowed = |src: NodeId, dst: NodeId, label: &str, backward: bool| {
            let at_anchor = if backward { dst == anchor } else { src == anchor };
            !at_anchor || matches(label, v)
        };
        // hop[n] = smallest total path length reaching n as a data step
        let mut hop: HashMap<NodeId, u32> = HashMap::from([(anchor, 0)]);
        let mut back_layer = BTreeSet::from([anchor]);
        let mut back_upto: Vec<BTreeSet<NodeId>> = vec![back_layer.clone()];
        for k in 1..=depth {
            let next: BTreeSet<NodeId> = rd
                .iter()
                .filter(|(s, d, l)| back_layer.contains(d) && allowed(*s, *d, l, true))
                .map(|(s, _, _)| *s)
                .collect();
            for &n in &next {
                hop.entry(n).or_insert(k);
            }
            let mut upto = back_upto.last().unwrap().clone();
            upto.extend(next.iter().copied());
            back_upto.push(upto);
            back_layer = next;
        }
        let mut total = back_upto[0].clone();
        for k in 1..=depth {
            let stepped: BTreeSet<NodeId> = rd
                .iter()
                .filter(|(s, d, l)| total.contains(s) && allowed(*s, *d, l, false))
                .map(|(_, d, _)| *d)
                .collect();
            for &n in &stepped {
                hop.entry(n).and_modify(|h| *h = (*h).min(k)).or_insert(k);
            }
            total = back_upto[k as usize].union(&stepped).copied().collect();
        }
        let data: Vec<(NodeId, u32)> = hop.iter().map(|(&n, &h)| (n, h)).collect();
        let mut guard_hop: HashMap<NodeId, u32> = HashMap::new();
        for (n, h) in data {
            let mut reach = BTreeSet::from([n]);
            loop {
                let more: BTreeSet<NodeId> = cd
                    .iter()
                    .filter(|(_, d)| reach.contains(d))
                    .map(|(s, _)| *s)
                    .collect();
                let before = reach.len();
                reach.extend(more);
                if reach.len() == before {
                    break;
                }
            }
            let guards: BTreeSet<NodeId> = cd
                .iter()
                .filter(|(_, d)| reach.contains(d))
                .map(|(s, _)| *s)
                .collect();
            for g in guards {
                guard_hop.entry(g).and_modify(|x| *x = (*x).min(h)).or_insert(h);
            }
        }
        all.extend(hop.keys().copied());
        for (&g, &gh) in &guard_hop {
            all.insert(g);
            let h = hop.get(&g).copied().unwrap_or(gh);
            if h < depth {
                all.extend(rd.iter().filter(|(_, d, _)| *d == g).map(|(s, _, _)| *s));
            }
        }
    }
    all
}

// ---------------------------------------------------------------------------
// Random C-subset functions with their own reaching-definition oracle

const PARAMS: [&str; 2] = ["a", "b"];
const LOCALS: [&str; 3] = ["x", "y", "z"];
const GLOBALS: [&str; 1] = ["g"];

#[derive(Debug, Clone)]
pub enum G {
    Assign { var: String, uses: Vec<String>, compound: bool },
    Decl { var: String, uses: Vec<String> },
    If { cond: Vec<String>, then: Vec<G>, els: Option<Vec<G>> },
    While { cond: Vec<String>, body: Vec<G> },
    Return(Vec<String>),
}

fn any_var(rng: &mut ChaCha8Rng) -> String {
    let pool: Vec<&str> = PARAMS.iter().chain(LOCALS.iter()).chain(GLOBALS.iter()).copied().collect();
    pool.choose(rng).unwrap().to_string()
}

fn operands(rng: &mut ChaCha8Rng) -> Vec<String> {
    let n = rng.gen_range(0..=2);
    (0..n).map(|_| any_var(rng)).collect()
}

fn gen_block(rng: &mut ChaCha8Rng, budget: &mut usize, nest: u32, min: usize) -> Vec<G> {
    let mut out = Vec::new();
    let want = rng.gen_range(min..=4);
    while out.len() < want && *budget > 0 {
        *budget -= 1;
        let roll = rng.gen_range(0..100);
        let g = if roll < 12 && nest < 3 && *budget >= 2 {
            let then = gen_block(rng, budget, nest + 1, 1);
            let els = if rng.gen_bool(0.5) && *budget >= 1 {
                Some(gen_block(rng, budget, nest + 1, 1))
            } else {
                None
            };
            G::If { cond: vec![any_var(rng)], then, els }
        } else if roll < 20 && nest < 3 && *budget >= 2 {
            G::While {
                cond: vec![any_var(rng)],
                body: gen_block(rng, budget, nest + 1, 1),
            }
        } else if roll < 25 {
            G::Return(operands(rng))
        } else if roll < 35 {
            G::Decl {
                var: LOCALS.choose(rng).unwrap().to_string(),
                uses: operands(rng),
            }
        } else {
            let var = any_var(rng);
            G::Assign { var, uses: operands(rng), compound: rng.gen_bool(0.2) }
        };
        out.push(g);
    }
    out
}

pub struct GenFunction {
    pub body: Vec<G>,
    pub source: String,
    /// Source line of every generated statement, in generation order.
    pub lines: Vec<u32>,
}

fn expr(uses: &[String]) -> String {
    if uses.is_empty() {
        "1".into()
    } else {
        uses.join(" + ")
    }
}

fn emit(stmts: &[G], indent: usize, out: &mut Vec<String>) {
    let pad = "    ".repeat(indent);
    for s in stmts {
        match s {
            G::Assign { var, uses, compound } => {
                let op = if *compound { "+=" } else { "=" };
                out.push(format!("{pad}{var} {op} {};", expr(uses)));
            }
            G::Decl { var, uses } => {
                if uses.is_empty() {
                    out.push(format!("{pad}int {var};"));
                } else {
                    out.push(format!("{pad}int {var} = {};", expr(uses)));
                }
            }
            G::If { cond, then, els } => {
                out.push(format!("{pad}if ({} > 0) {{", cond.join(" + ")));
                emit(then, indent + 1, out);
                if let Some(e) = els {
                    out.push(format!("{pad}}} else {{"));
                    emit(e, indent + 1, out);
                }
                out.push(format!("{pad}}}"));
            }
            G::While { cond, body } => {
                out.push(format!("{pad}while ({} < 9) {{", cond.join(" + ")));
                emit(body, indent + 1, out);
                out.push(format!("{pad}}}"));
            }
            G::Return(uses) => out.push(format!("{pad}return {};", expr(uses))),
        }
    }
}

pub fn gen_function(rng: &mut ChaCha8Rng, name: &str) -> GenFunction {
    let mut budget = rng.gen_range(1..=30usize);
    let mut body = Vec::new();
    while budget > 0 {
        let mut block = gen_block(rng, &mut budget, 0, 1);
        body.append(&mut block);
    }
    let mut text = vec![format!("int {name}(int a, int b) {{")];
    emit(&body, 1, &mut text);
    text.push("}".into());
    let source = text.join("\n") + "\n";
    let lines = source
        .lines()
        .enumerate()
        .filter(|(_, l)| {
            let t = l.trim();
            !(t == "}" || t == "} else {" || t.starts_with("int ") && t.ends_with('{'))
        })
        .map(|(i, _)| i as u32 + 1)
        .collect();
    GenFunction { body, source, lines }
}

/// Where a definition comes from.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DefSite {
    Entry,
    Param(String),
    Line(u32),
}

struct OracleNode {
    defs: Vec<String>,
    uses: Vec<String>,
}

fn uses_of(g: &G) -> Vec<String> {
    match g {
        G::Assign { var, uses, compound } => {
            let mut u = uses.clone();
            if *compound {
                u.push(var.clone());
            }
            u
        }
        G::Decl { uses, .. } | G::Return(uses) => uses.clone(),
        G::If { cond, .. } | G::While { cond, .. } => cond.clone(),
    }
}

fn defs_of(g: &G) -> Vec<String> {
    match g {
        G::Assign { var, .. } | G::Decl { var, .. } => vec![var.clone()],
        _ => Vec::new(),
    }
}

/// Builds statement nodes and control-flow successors from the generator's
/// own structure. Node 0 is the function entry.
fn oracle_cfg(
    stmts: &[G],
    lines: &mut std::slice::Iter<'_, u32>,
    preds_in: Vec<usize>,
    nodes: &mut Vec<(u32, OracleNode)>,
    edges: &mut Vec<(usize, usize)>,
) -> Vec<usize> {
    let mut preds = preds_in;
    for s in stmts {
        let line = *lines.next().expect("line for statement");
        nodes.push((line, OracleNode { defs: defs_of(s), uses: uses_of(s) }));
        let id = nodes.len() - 1;
        for &p in &preds {
            edges.push((p, id));
        }
        preds = match s {
            G::Assign { .. } | G::Decl { .. } => vec![id],
            G::Return(_) => Vec::new(),
            G::If { then, els, .. } => {
                let mut exits = oracle_cfg(then, lines, vec![id], nodes, edges);
                match els {
                    Some(e) => exits.extend(oracle_cfg(e, lines, vec![id], nodes, edges)),
                    None => exits.push(id),
                }
                exits
            }
            G::While { body, .. } => {
                let exits = oracle_cfg(body, lines, vec![id], nodes, edges);
                for x in exits {
                    edges.push((x, id));
                }
                vec![id]
            }
        };
    }
    preds
}

/// Expected reaching-definition edges as (def site, use line, variable).
pub fn rd_oracle(f: &GenFunction) -> BTreeSet<(DefSite, u32, String)> {
    let mut nodes = vec![(0u32, OracleNode { defs: vec![], uses: vec![] })];
    let mut edges = Vec::new();
    let mut lines = f.lines.iter();
    oracle_cfg(&f.body, &mut lines, vec![0], &mut nodes, &mut edges);

    let mut declared: BTreeSet<String> = PARAMS.iter().map(|s| s.to_string()).collect();
    fn collect_decls(stmts: &[G], out: &mut BTreeSet<String>) {
        for s in stmts {
            match s {
                G::Decl { var, .. } => {
                    out.insert(var.clone());
                }
                G::If { then, els, .. } => {
                    collect_decls(then, out);
                    if let Some(e) = els {
                        collect_decls(e, out);
                    }
                }
                G::While { body, .. } => collect_decls(body, out),
                _ => {}
            }
        }
    }
    collect_decls(&f.body, &mut declared);
    let mut globals = BTreeSet::new();
    for (_, n) in &nodes[1..] {
        for v in n.defs.iter().chain(n.uses.iter()) {
            if !declared.contains(v) {
                globals.insert(v.clone());
            }
        }
    }

    let site = |i: usize| DefSite::Line(nodes[i].0);
    let mut entry: BTreeSet<(DefSite, String)> = PARAMS
        .iter()
        .map(|p| (DefSite::Param(p.to_string()), p.to_string()))
        .collect();
    entry.extend(globals.iter().map(|g| (DefSite::Entry, g.clone())));

    let count = nodes.len();
    let mut out_sets: Vec<BTreeSet<(DefSite, String)>> = vec![BTreeSet::new(); count];
    out_sets[0] = entry;
    let preds = |i: usize| edges.iter().filter(move |(_, d)| *d == i).map(|(s, _)| *s);
    loop {
        let mut changed = false;
        for i in 1..count {
            let input: BTreeSet<(DefSite, String)> =
                preds(i).flat_map(|p| out_sets[p].iter().cloned()).collect();
            let mut out: BTreeSet<(DefSite, String)> = input
                .into_iter()
                .filter(|(_, v)| !nodes[i].1.defs.contains(v))
                .collect();
            for d in &nodes[i].1.defs {
                out.insert((site(i), d.clone()));
            }
            if out != out_sets[i] {
                out_sets[i] = out;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let mut expected = BTreeSet::new();
    for i in 1..count {
        let input: BTreeSet<(DefSite, String)> =
            preds(i).flat_map(|p| out_sets[p].iter().cloned()).collect();
        for (d, v) in input {
            if nodes[i].1.uses.contains(&v) {
                expected.insert((d, nodes[i].0, v));
            }
        }
    }
    expected
}

/// Reaching-definition edges of a parsed CPG in oracle coordinates.
pub fn rd_edges(cpg: &Cpg) -> BTreeSet<(DefSite, u32, String)> {
    cpg.edges()
        .iter()
        .filter(|e| e.kind == EdgeKind::ReachingDef)
        .map(|e| {
            let src = cpg.node(e.src).unwrap();
            let site = match src.kind {
                NodeKind::FunctionDef => DefSite::Entry,
                NodeKind::Parameter => DefSite::Param(src.name.clone().unwrap_or_default()),
                _ => DefSite::Line(src.line),
            };
            (site, cpg.node(e.dst).unwrap().line, e.variable.clone().unwrap_or_default())
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Random multi-file repositories

pub struct RandomRepo {
    pub dir: tempfile::TempDir,
    pub files: Vec<String>,
    /// (file, function, first line, last line)
    pub functions: Vec<(String, String, u32, u32)>,
}

pub fn random_repo(rng: &mut ChaCha8Rng) -> RandomRepo {
    let dir = tempfile::tempdir().unwrap();
    let n_files = rng.gen_range(1..=4);
    let n_funcs = rng.gen_range(2..=8);
    let names: Vec<String> = (0..n_funcs).map(|i| format!("fn_{i}")).collect();
    let mut per_file: Vec<Vec<String>> = vec![Vec::new(); n_files];
    let mut functions = Vec::new();
    for (i, name) in names.iter().enumerate() {
        let mut body = Vec::new();
        body.push("    int x = a + b;".to_string());
        let calls = rng.gen_range(0..=3);
        for _ in 0..calls {
            let callee = names.choose(rng).unwrap();
            let args = match rng.gen_range(0..3) {
                0 => "x".to_string(),
                1 => "x, b".to_string(),
                _ => "x, b, a".to_string(),
            };
            body.push(format!("    x = {callee}({args});"));
            if rng.gen_bool(0.3) {
                body.push("    if (x > 3) {".into());
                body.push(format!("        x = {}(a, x);", names.choose(rng).unwrap()));
                body.push("    }".into());
            }
        }
        body.push("    return x;".into());
        let mut text = format!("int {name}(int a, int b)\n{{\n");
        for l in &body {
            text.push_str(l);
            text.push('\n');
        }
        text.push_str("}\n");
        per_file[i % n_files].push(text);
    }
    let mut files = Vec::new();
    for (fi, texts) in per_file.iter().enumerate() {
        let file = format!("src/f{fi}.c");
        let mut src = String::new();
        let mut line = 1u32;
        for t in texts {
            let first = line;
            let count = t.lines().count() as u32;
            let name = t.split('(').next().unwrap().trim_start_matches("int ").to_string();
            functions.push((file.clone(), name, first, first + count - 1));
            src.push_str(t);
            src.push('\n');
            line += count + 1;
        }
        let path = dir.path().join(&file);
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, src).unwrap();
        files.push(file);
    }
    RandomRepo { dir, files, functions }
}

/// Nodes reachable from `start` over RD edges, for sanity checks.
pub fn rd_reachable(cpg: &Cpg, start: NodeId) -> BTreeSet<NodeId> {
    let mut seen = BTreeSet::from([start]);
    let mut q = VecDeque::from([start]);
    while let Some(n) = q.pop_front() {
        for e in cpg.out_edges(n).filter(|e| e.kind == EdgeKind::ReachingDef) {
            if seen.insert(e.dst) {
                q.push_back(e.dst);
            }
        }
    }
    seen
}

// ---------------------------------------------------------------------------
// Stitch fixtures with hand-countable arity

pub struct StitchFixture {
    pub caller: Cpg,
    pub callee: Cpg,
    pub call_site: NodeId,
    pub callee_def: NodeId,
    pub args: usize,
    pub params: usize,
    pub returns: usize,
}

pub fn stitch_fixture(rng: &mut ChaCha8Rng) -> StitchFixture {
    use aegis::cpg::{parse_translation_unit, parse_translation_unit_with, ParseOptions};
    const ARGS: [&str; 5] = ["a", "b", "a + 1", "r", "b * 2"];
    let args = rng.gen_range(0..=5);
    let params = rng.gen_range(0..=5);
    let returns = rng.gen_range(0..=4);
    let caller_src = format!(
        "int caller(int a, int b)\n{{\n\tint r = 0;\n\tr = callee_fn({});\n\treturn r;\n}}\n",
        ARGS[..args].join(", ")
    );
    let plist = if params == 0 {
        "void".to_string()
    } else {
        (0..params).map(|i| format!("int p{i}")).collect::<Vec<_>>().join(", ")
    };
    let mut callee_src = format!(
        "{} callee_fn({plist})\n{{\n",
        if returns == 0 { "void" } else { "int" }
    );
    if returns == 0 {
        callee_src.push_str("\tg = 1;\n");
    } else {
        for j in 1..returns {
            callee_src.push_str(&format!("\tif (g > {j})\n\t\treturn {j};\n"));
        }
        callee_src.push_str("\treturn 0;\n");
    }
    callee_src.push_str("}\n");
    let caller = parse_translation_unit(&caller_src, "a/caller.c").unwrap();
    let opts = ParseOptions {
        id_base: caller.max_id().unwrap().0 + 1,
        ..ParseOptions::new()
    };
    let callee = parse_translation_unit_with(&callee_src, "b/callee.c", &opts).unwrap();
    let call_site = caller
        .nodes()
        .iter()
        .find(|n| n.kind == NodeKind::Call && n.name.as_deref() == Some("callee_fn"))
        .unwrap()
        .id;
    let callee_def = callee.function("callee_fn").unwrap();
    StitchFixture {
        caller,
        callee,
        call_site,
        callee_def,
        args,
        params,
        returns,
    }
}

// ---------------------------------------------------------------------------
// Budgeted expansion over random repositories

pub struct BudgetRun {
    pub cap: u32,
    pub depth: u32,
    pub result: aegis::expander::ExpansionResult,
}

/// Expands a random clue in a random repository with a seeded oracle.
pub fn budget_run(seed: u64) -> BudgetRun {
    use aegis::cpg::{build_function_index, parse_translation_unit};
    use aegis::expander::{expand_iteratively, Budgets, OracleError, OracleQuery};
    use aegis::slicer::Clue;
    let mut r = rng(seed);
    let repo = random_repo(&mut r);
    let cap = r.gen_range(1..=6);
    let depth = 10;
    let (file, func, first, _) = repo.functions.choose(&mut r).unwrap().clone();
    let index = build_function_index(repo.dir.path()).unwrap();
    let text = std::fs::read_to_string(repo.dir.path().join(&file)).unwrap();
    let cpg = parse_translation_unit(&text, &file).unwrap();
    let clue = Clue::new(first + 2, "int x = a + b;", "generated", 0.5);
    let budgets = Budgets {
        depth_limit: depth,
        expansion_cap: cap,
        k: 2,
    };
    let oracle = move |q: &OracleQuery<'_>| -> Result<bool, OracleError> {
        let h = q
            .candidate
            .callee_name
            .bytes()
            .fold(seed, |h, b| h.wrapping_mul(31).wrapping_add(b as u64));
        Ok(h % 3 != 0)
    };
    let result = expand_iteratively(&cpg, &func, &clue, &index, &budgets, &oracle).unwrap();
    BudgetRun { cap, depth, result }
}

// ---------------------------------------------------------------------------
// Cross-file expansion of the fpga_cq clue with a YES-answering oracle

pub fn fpga_cq_expansion() -> aegis::expander::ExpansionResult {
    use aegis::cpg::{build_function_index, parse_translation_unit};
    use aegis::expander::{expand_iteratively, Budgets, FixedOracle};
    use aegis::slicer::Clue;
    let root = fixture("fpga_cq/repo");
    let index = build_function_index(&root).unwrap();
    let text = std::fs::read_to_string(root.join("fpga/conn.c")).unwrap();
    let cpg = parse_translation_unit(&text, "fpga/conn.c").unwrap();
    let clue = Clue::new(460, "in = kvzalloc(inlen, GFP_KERNEL);", "allocation size", 0.7);
    expand_iteratively(
        &cpg,
        "mlx5_fpga_conn_create_cq",
        &clue,
        &index,
        &Budgets::default(),
        &FixedOracle(true),
    )
    .unwrap()
}

/// Collapses runs of whitespace to one space and trims.
pub fn normalize_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// (marker, file:line, code) rows expected in the `in` and `inlen` chains.
pub const FPGA_CQ_GOLDEN: [(&str, &str, &str); 3] = [
    (
        "[SOURCE]",
        "core/cq.c:90",
        "int mlx5_core_create_cq(struct mlx5_core_dev *dev, struct mlx5_core_cq *cq,",
    ),
    ("[TARGET]", "fpga/conn.c:460", "in = kvzalloc(inlen, GFP_KERNEL);"),
    (
        "[CALL]",
        "fpga/conn.c:481",
        "err = mlx5_core_create_cq(mdev, &conn->cq.mcq, in, inlen, out, sizeof(out));",
    ),
];

/// Rows of one `Variable:` section of a rendered trace.
pub fn chain_rows(rendered: &str, var: &str) -> Vec<(String, String, String)> {
    let header = format!("Variable: {var}");
    let mut rows = Vec::new();
    let mut inside = false;
    for line in rendered.lines() {
        if line.starts_with("Variable: ") {
            inside = line == header;
            continue;
        }
        if !inside {
            continue;
        }
        let (marker, rest) = line.split_once(' ').unwrap();
        let (loc, code) = rest.split_once(" (`").unwrap();
        rows.push((
            marker.to_string(),
            loc.to_string(),
            normalize_ws(code.trim_end_matches("`)")),
        ));
    }
    rows
}

// ---------------------------------------------------------------------------
// Audit candidates

pub struct AuditCandidate {
    pub judgment: &'static str,
    pub original: &'static str,
    pub final_: &'static str,
    pub flaws: Vec<&'static str>,
    pub raw: String,
}

impl AuditCandidate {
    /// The judgment rule, written out independently of the validator.
    pub fn satisfies_rule(&self) -> bool {
        match self.judgment {
            "AGREE" | "DEFER" => self.original == self.final_,
            "DISAGREE" => self.original != self.final_ && !self.flaws.is_empty(),
            _ => false,
        }
    }
}

pub fn audit_candidate(rng: &mut ChaCha8Rng) -> AuditCandidate {
    const J: [&str; 3] = ["AGREE", "DISAGREE", "DEFER"];
    const V: [&str; 2] = ["VULNERABLE", "NOT_VULNERABLE"];
    const F: [&str; 4] = ["Speculation Flaw", "Anchoring", "Absence-as-Evidence Flaw", "Made-up Flaw"];
    let judgment = *J.choose(rng).unwrap();
    let original = *V.choose(rng).unwrap();
    let final_ = *V.choose(rng).unwrap();
    let flaws: Vec<&str> = F.iter().copied().filter(|_| rng.gen_bool(0.3)).collect();
    let body = serde_json::json!({
        "audit_verdict": judgment,
        "original_verdict": original,
        "final_verdict": final_,
        "confidence": rng.gen_range(0..=100) as f64 / 100.0,
        "audit_rationale": "checked",
        "reasoning_flaws_found": flaws,
    });
    let raw = format!(
        "<audit_reasoning>\nstep\n</audit_reasoning>\n```json\n{}\n```\n",
        serde_json::to_string_pretty(&body).unwrap()
    );
    AuditCandidate {
        judgment,
        original,
        final_,
        flaws,
        raw,
    }
}

/// Reference text with LaTeX escapes removed and whitespace collapsed.
pub fn normalized_reference() -> String {
    let text = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("../../paper.md")).unwrap();
    let mut t = text;
    for (a, b) in [
        ("\\_", "_"),
        ("\\#", "#"),
        ("\\%", "%"),
        ("\\&", "&"),
        ("\\{", "{"),
        ("\\}", "}"),
        ("\\$", "$"),
    ] {
        t = t.replace(a, b);
    }
    normalize_ws(&t)
}

// ---------------------------------------------------------------------------
// Cassette replay of the recorded scenarios

pub const GRE_ERR: (&str, &str, &str) = ("gre_err", "ipv6/ip6_gre.c", "ip6gre_err");
pub const FPGA_CQ: (&str, &str, &str) = ("fpga_cq", "fpga/conn.c", "mlx5_fpga_conn_create_cq");
pub const PCL_DELEGATE: (&str, &str, &str) = ("pcl_delegate", "coders/pcl.c", "InvokePCLDelegate");

pub fn replay_config(name: &str) -> aegis::pipeline::PipelineConfig {
    aegis::pipeline::PipelineConfig {
        cassette: Some(fixture(name).join("cassette.json")),
        ..Default::default()
    }
}

pub fn replay_input((name, file, function): (&str, &str, &str)) -> aegis::pipeline::SampleInput {
    aegis::pipeline::SampleInput {
        sample_id: name.to_string(),
        repo_root: fixture(name).join("repo"),
        file: file.to_string(),
        function: function.to_string(),
    }
}

/// Replays one recorded scenario under `config`.
pub fn replay_with(
    scenario: (&str, &str, &str),
    config: &aegis::pipeline::PipelineConfig,
) -> Result<aegis::pipeline::SampleRun, aegis::pipeline::PipelineError> {
    let backend = config.backend()?;
    let client = config.client(backend);
    aegis::pipeline::run_sample(&replay_input(scenario), config, &client)
}

pub fn replay(scenario: (&str, &str, &str)) -> aegis::pipeline::SampleRun {
    replay_with(scenario, &replay_config(scenario.0)).unwrap()
}

// ---------------------------------------------------------------------------
// Unified diff hunks with known pre-image lines

/// One random hunk over a whole file: (diff text, expected pre-image lines).
pub fn random_hunk(seed: u64) -> (String, aegis::eval::LineSet) {
    let mut r = rng(seed);
    let start: u32 = r.gen_range(1..200);
    let mut body = Vec::new();
    let mut want = aegis::eval::LineSet::new();
    let (mut old, mut new) = (0u32, 0u32);
    let blocks = r.gen_range(1..6);
    for b in 0..blocks {
        if b > 0 || r.gen_bool(0.5) {
            for _ in 0..r.gen_range(1..4) {
                body.push(" ctx".to_string());
                old += 1;
                new += 1;
            }
        }
        let (d, i) = (r.gen_range(0..3u32), r.gen_range(0..3u32));
        for _ in 0..d {
            want.insert(("x.c".to_string(), start + old));
            body.push("-gone".to_string());
            old += 1;
        }
        if d == 0 && i > 0 {
            want.insert(("x.c".to_string(), if old == 0 { start } else { start + old - 1 }));
        }
        for _ in 0..i {
            body.push("+added".to_string());
            new += 1;
        }
    }
    body.push(" tail".to_string());
    old += 1;
    new += 1;
    let diff = format!(
        "--- a/x.c\n+++ b/x.c\n@@ -{start},{old} +{start},{new} @@\n{}\n",
        body.join("\n")
    );
    (diff, want)
}
