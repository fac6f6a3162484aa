use serde::{Deserialize, Serialize};

use super::diff::LineSet;
use crate::slicer::Clue;
use crate::trace::EvidenceTrace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CoverageMode {
    /// Clue lines only.
    PhaseI,
    /// Clue lines plus every line cited by the evidence traces.
    PhaseIAndII,
}

/// True when one path equals the other or ends with it on a `/` boundary.
pub fn paths_match(a: &str, b: &str) -> bool {
    let a = a.trim_start_matches("./");
    let b = b.trim_start_matches("./");
    let (long, short) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    long == short
        || (long.ends_with(short) && long.as_bytes()[long.len() - short.len() - 1] == b'/')
}

pub fn coverage(mode: CoverageMode, target_file: &str, clues: &[Clue], traces: &[EvidenceTrace]) -> LineSet {
    let mut out: LineSet = clues
        .iter()
        .map(|c| (target_file.to_string(), c.line))
        .collect();
    if mode == CoverageMode::PhaseIAndII {
        for t in traces {
            out.extend(t.cited_lines());
        }
    }
    out
}

/// Fraction of ground-truth lines covered; `None` when there are none.
pub fn localization_recall(covered: &LineSet, gt: &LineSet) -> Option<f64> {
    if gt.is_empty() {
        return None;
    }
    let hit = gt
        .iter()
        .filter(|(gf, gl)| covered.iter().any(|(cf, cl)| cl == gl && paths_match(cf, gf)))
        .count();
    Some(hit as f64 / gt.len() as f64)
}

/// Mean over defined values.
pub fn mean_recall(values: &[Option<f64>]) -> Option<f64> {
    let defined: Vec<f64> = values.iter().flatten().copied().collect();
    if defined.is_empty() {
        None
    } else {
        Some(defined.iter().sum::<f64>() / defined.len() as f64)
    }
}
