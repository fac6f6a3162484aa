//! Demand-driven cross-function expansion and graph stitching.

use std::collections::{BTreeSet, HashSet, VecDeque};
use std::fmt;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::cpg::{
    parse_translation_unit_with, Cpg, CpgEdge, EdgeKind, FunctionIndex, NodeId, NodeKind,
    ParseOptions,
};
use crate::slicer::{
    anchor_clue, call_sites, slice_bidirectional, slice_forward, CallSite, Clue, LocalSlice,
    SliceError, DEFAULT_DEPTH_LIMIT,
};

pub const DEFAULT_EXPANSION_CAP: u32 = 50;
pub const DEFAULT_K: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budgets {
    pub depth_limit: u32,
    pub expansion_cap: u32,
    pub k: usize,
}

impl Default for Budgets {
    fn default() -> Self {
        Budgets {
            depth_limit: DEFAULT_DEPTH_LIMIT,
            expansion_cap: DEFAULT_EXPANSION_CAP,
            k: DEFAULT_K,
        }
    }
}

impl Budgets {
    pub fn validate(&self) -> Result<(), String> {
        if self.depth_limit < 1 || self.expansion_cap < 1 || self.k < 1 {
            return Err(format!("budgets must all be at least 1: {self:?}"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CandidateKind {
    Internal,
    External,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ExpansionCandidate {
    pub callee_name: String,
    pub callee_file: String,
    pub call_site: NodeId,
    pub kind: CandidateKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Classification {
    Candidate(ExpansionCandidate),
    NotFound { callee_name: String },
}

/// Decides whether a call is internal, external (defined elsewhere in the
/// repository), or unresolvable.
pub fn classify_call(
    cpg: &Cpg,
    call_site: NodeId,
    index: &FunctionIndex,
    current_file: &str,
) -> Classification {
    let callee_name = cpg
        .node(call_site)
        .and_then(|n| n.name.clone())
        .unwrap_or_default();
    if cpg.function(&callee_name).is_some() || index.is_defined_in(&callee_name, current_file) {
        return Classification::Candidate(ExpansionCandidate {
            callee_name,
            callee_file: current_file.to_string(),
            call_site,
            kind: CandidateKind::Internal,
        });
    }
    match index.lookup(&callee_name).first() {
        Some(loc) => Classification::Candidate(ExpansionCandidate {
            callee_name,
            callee_file: loc.file.clone(),
            call_site,
            kind: CandidateKind::External,
        }),
        None => Classification::NotFound { callee_name },
    }
}

/// What the expansion oracle is shown for one external candidate.
#[derive(Debug, Clone, Copy)]
pub struct OracleQuery<'a> {
    pub clue: &'a Clue,
    pub target_file: &'a str,
    pub context: &'a str,
    pub candidate: &'a ExpansionCandidate,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum OracleError {
    #[error("oracle reply contained neither YES nor NO after {attempts} attempts")]
    Protocol { attempts: usize },
    #[error("oracle backend failed: {0}")]
    Backend(String),
}

/// Gate for external expansions.
pub trait ExpansionOracle {
    fn decide(&self, query: &OracleQuery<'_>) -> Result<bool, OracleError>;
}

impl<F> ExpansionOracle for F
where
    F: Fn(&OracleQuery<'_>) -> Result<bool, OracleError>,
{
    fn decide(&self, query: &OracleQuery<'_>) -> Result<bool, OracleError> {
        self(query)
    }
}

/// Answers every query with the same decision.
#[derive(Debug, Clone, Copy)]
pub struct FixedOracle(pub bool);

impl ExpansionOracle for FixedOracle {
    fn decide(&self, _query: &OracleQuery<'_>) -> Result<bool, OracleError> {
        Ok(self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SliceKey {
    pub file: String,
    pub function: String,
}

impl SliceKey {
    pub fn new(file: &str, function: &str) -> Self {
        SliceKey {
            file: file.to_string(),
            function: function.to_string(),
        }
    }
}

impl fmt::Display for SliceKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.file, self.function)
    }
}

#[derive(Debug, Clone, Default)]
pub struct StitchedGraph {
    members: IndexMap<String, Cpg>,
    pub virtual_edges: Vec<CpgEdge>,
    pub expansions_used: u32,
}

impl StitchedGraph {
    pub fn member(&self, file: &str) -> Option<&Cpg> {
        self.members.get(file)
    }

    pub fn member_cpgs(&self) -> impl Iterator<Item = &Cpg> {
        self.members.values()
    }

    pub fn files(&self) -> impl Iterator<Item = &str> {
        self.members.keys().map(String::as_str)
    }

    /// The member graph that owns `node`.
    pub fn owner(&self, node: NodeId) -> Option<&Cpg> {
        self.members.values().find(|c| c.contains(node))
    }

    fn next_id_base(&self) -> u64 {
        self.members
            .values()
            .filter_map(|c| c.max_id())
            .map(|id| id.0 + 1)
            .max()
            .unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Decision {
    Yes,
    No,
    Internal,
    Budget,
    NotFound,
}

impl Decision {
    pub fn as_str(self) -> &'static str {
        match self {
            Decision::Yes => "YES",
            Decision::No => "NO",
            Decision::Internal => "INTERNAL",
            Decision::Budget => "BUDGET",
            Decision::NotFound => "NOTFOUND",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpansionLogEntry {
    pub caller_file: String,
    pub call_site: NodeId,
    pub callee_name: String,
    pub candidate: Option<ExpansionCandidate>,
    pub decision: Decision,
    pub reason: String,
}

impl ExpansionLogEntry {
    /// `EXPAND <file>:<func> decision=<...>`
    pub fn line(&self) -> String {
        let file = self
            .candidate
            .as_ref()
            .map(|c| c.callee_file.as_str())
            .unwrap_or("?");
        format!(
            "EXPAND {}:{} decision={}",
            file,
            self.callee_name,
            self.decision.as_str()
        )
    }
}

/// A performed expansion: which call brought which callee into scope.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExpansionLink {
    pub caller: SliceKey,
    pub call_site: NodeId,
    pub callee: SliceKey,
    pub kind: CandidateKind,
    /// Tracked caller variables flowing through the call.
    pub vars: BTreeSet<String>,
}

#[derive(Debug, Clone)]
pub struct ExpansionResult {
    pub clue: Clue,
    pub target: SliceKey,
    pub anchor: NodeId,
    pub anchor_vars: BTreeSet<String>,
    pub stitched: StitchedGraph,
    pub slices: IndexMap<SliceKey, LocalSlice>,
    pub links: Vec<ExpansionLink>,
    pub expansion_log: Vec<ExpansionLogEntry>,
}

impl ExpansionResult {
    pub fn cpg(&self, key: &SliceKey) -> Option<&Cpg> {
        self.stitched.member(&key.file)
    }

    pub fn log_text(&self) -> String {
        self.expansion_log
            .iter()
            .map(|e| e.line() + "\n")
            .collect()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ExpansionError {
    #[error("function `{0}` not found in target file")]
    UnknownFunction(String),
    #[error(transparent)]
    Anchor(#[from] SliceError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

/// Virtual edges joining a call site to a callee definition.
pub fn stitch(caller: &Cpg, callee: &Cpg, call_site: NodeId, callee_def: NodeId) -> Vec<CpgEdge> {
    let args = caller.children(call_site);
    let params = callee.parameters(callee_def);
    if args.len() != params.len() {
        tracing::debug!(
            call_site = %call_site,
            args = args.len(),
            params = params.len(),
            "arity mismatch, unmatched positions skipped"
        );
    }
    let mut edges = Vec::new();
    for (i, (&a, &p)) in args.iter().zip(params.iter()).enumerate() {
        let name = callee
            .node(p)
            .and_then(|n| n.name.clone())
            .unwrap_or_else(|| format!("#{i}"));
        edges.push(CpgEdge {
            src: a,
            dst: p,
            kind: EdgeKind::VirtualArgParam,
            variable: Some(name),
        });
    }
    let callee_name = callee
        .node(callee_def)
        .and_then(|n| n.name.clone())
        .unwrap_or_default();
    for n in callee.subtree(callee_def) {
        if callee.node(n).map(|x| x.kind) == Some(NodeKind::Return) {
            edges.push(CpgEdge {
                src: n,
                dst: call_site,
                kind: EdgeKind::VirtualReturnSite,
                variable: Some(format!("{callee_name}()")),
            });
        }
    }
    edges
}

fn entry_vars(callee: &Cpg, def: NodeId, site: &CallSite) -> BTreeSet<String> {
    let params = callee.parameters(def);
    let names = params
        .iter()
        .map(|&p| callee.node(p).and_then(|n| n.name.clone()));
    if !site.assigned.is_empty() {
        return names.flatten().collect();
    }
    names
        .zip(site.argument_vars.iter())
        .filter(|(_, vars)| !vars.is_empty())
        .filter_map(|(name, _)| name)
        .collect()
}

fn link_vars(site: &CallSite) -> BTreeSet<String> {
    site.argument_vars
        .iter()
        .flatten()
        .chain(site.assigned.iter())
        .cloned()
        .collect()
}

struct Pending {
    caller: SliceKey,
    site: CallSite,
}

fn enqueue(queue: &mut VecDeque<Pending>, cpg: &Cpg, key: &SliceKey, slice: &LocalSlice) {
    for site in call_sites(cpg, slice) {
        queue.push_back(Pending {
            caller: key.clone(),
            site,
        });
    }
}

/// Slices the clue in its function, then expands callees breadth-first until
/// the worklist empties or the expansion cap is reached.
pub fn expand_iteratively(
    cpg: &Cpg,
    function: &str,
    clue: &Clue,
    index: &FunctionIndex,
    budgets: &Budgets,
    oracle: &dyn ExpansionOracle,
) -> Result<ExpansionResult, ExpansionError> {
    let func = cpg
        .function(function)
        .ok_or_else(|| ExpansionError::UnknownFunction(function.to_string()))?;
    let (anchor, vars) = anchor_clue(cpg, func, clue)?;
    let target = SliceKey::new(cpg.file(), function);
    let slice = slice_bidirectional(cpg, anchor, &vars, budgets.depth_limit);

    let mut queue = VecDeque::new();
    enqueue(&mut queue, cpg, &target, &slice);

    let mut stitched = StitchedGraph::default();
    stitched.members.insert(cpg.file().to_string(), cpg.clone());
    let mut result = ExpansionResult {
        clue: clue.clone(),
        target: target.clone(),
        anchor,
        anchor_vars: vars,
        stitched,
        slices: IndexMap::from([(target, slice)]),
        links: Vec::new(),
        expansion_log: Vec::new(),
    };

    let mut seen: HashSet<(String, String, NodeId)> = HashSet::new();
    while let Some(Pending { caller, site }) = queue.pop_front() {
        let caller_cpg = result
            .stitched
            .member(&caller.file)
            .expect("caller graph is a member");
        let class = classify_call(caller_cpg, site.call, index, &caller.file);
        let candidate = match class {
            Classification::NotFound { callee_name } => {
                if seen.insert(("?".into(), callee_name.clone(), site.call)) {
                    result.expansion_log.push(ExpansionLogEntry {
                        caller_file: caller.file.clone(),
                        call_site: site.call,
                        callee_name,
                        candidate: None,
                        decision: Decision::NotFound,
                        reason: "no definition in repository".into(),
                    });
                }
                continue;
            }
            Classification::Candidate(c) => c,
        };
        let key = (
            candidate.callee_file.clone(),
            candidate.callee_name.clone(),
            site.call,
        );
        if !seen.insert(key) {
            continue;
        }
        let log = |result: &mut ExpansionResult, decision: Decision, reason: String| {
            result.expansion_log.push(ExpansionLogEntry {
                caller_file: caller.file.clone(),
                call_site: site.call,
                callee_name: candidate.callee_name.clone(),
                candidate: Some(candidate.clone()),
                decision,
                reason,
            });
        };
        if result.stitched.expansions_used >= budgets.expansion_cap {
            log(
                &mut result,
                Decision::Budget,
                format!("expansion cap {} reached", budgets.expansion_cap),
            );
            continue;
        }
        if candidate.kind == CandidateKind::External {
            let context = crate::trace::render_context(&result);
            let approved = oracle.decide(&OracleQuery {
                clue,
                target_file: &result.target.file,
                context: &context,
                candidate: &candidate,
            })?;
            if !approved {
                log(&mut result, Decision::No, "oracle declined".into());
                continue;
            }
            if result.stitched.member(&candidate.callee_file).is_none() {
                let path = index.absolute(&candidate.callee_file);
                let opts = ParseOptions {
                    id_base: result.stitched.next_id_base(),
                    ..ParseOptions::new()
                };
                let parsed = std::fs::read_to_string(&path)
                    .map_err(|e| e.to_string())
                    .and_then(|text| {
                        parse_translation_unit_with(&text, &candidate.callee_file, &opts)
                            .map_err(|e| e.to_string())
                    });
                match parsed {
                    Ok(g) => {
                        result.stitched.members.insert(candidate.callee_file.clone(), g);
                    }
                    Err(reason) => {
                        tracing::warn!(file = %candidate.callee_file, %reason, "skipping callee");
                        log(&mut result, Decision::NotFound, format!("parse failed: {reason}"));
                        continue;
                    }
                }
            }
        }
        let callee_cpg = result
            .stitched
            .member(&candidate.callee_file)
            .expect("callee graph is a member");
        let Some(def) = callee_cpg.function(&candidate.callee_name) else {
            log(&mut result, Decision::NotFound, "definition missing after parse".into());
            continue;
        };
        let caller_cpg = result.stitched.member(&caller.file).expect("member");
        let edges = stitch(caller_cpg, callee_cpg, site.call, def);
        let entry = entry_vars(callee_cpg, def, &site);
        let callee_slice = slice_forward(callee_cpg, def, &entry, budgets.depth_limit);
        let callee_key = SliceKey::new(&candidate.callee_file, &candidate.callee_name);
        enqueue(&mut queue, callee_cpg, &callee_key, &callee_slice);

        result.stitched.virtual_edges.extend(edges);
        result.stitched.expansions_used += 1;
        match result.slices.get_mut(&callee_key) {
            Some(existing) => existing.merge(&callee_slice),
            None => {
                result.slices.insert(callee_key.clone(), callee_slice);
            }
        }
        result.links.push(ExpansionLink {
            caller: caller.clone(),
            call_site: site.call,
            callee: callee_key,
            kind: candidate.kind,
            vars: link_vars(&site),
        });
        let decision = match candidate.kind {
            CandidateKind::Internal => Decision::Internal,
            CandidateKind::External => Decision::Yes,
        };
        log(&mut result, decision, format!("entry variables {:?}", entry));
    }
    Ok(result)
}
