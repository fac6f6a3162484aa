use std::collections::BTreeSet;
use std::sync::Mutex;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::{ChatResponse, Stage};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsageEntry {
    pub sample_id: String,
    pub stage: Stage,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub wall_ms: u64,
    #[serde(default)]
    pub estimated: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageTotals {
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub wall_ms: u64,
    pub calls: u64,
}

impl StageTotals {
    fn add(&mut self, e: &UsageEntry) {
        self.input_tokens += e.input_tokens;
        self.output_tokens += e.output_tokens;
        self.wall_ms += e.wall_ms;
        self.calls += 1;
    }
}

/// Append-only token ledger; appends are serialized internally.
#[derive(Debug, Default)]
pub struct UsageLedger {
    entries: Mutex<Vec<UsageEntry>>,
}

impl UsageLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entries(entries: Vec<UsageEntry>) -> Self {
        UsageLedger {
            entries: Mutex::new(entries),
        }
    }

    pub fn accrue(&self, sample_id: &str, stage: Stage, usage: &ChatResponse, wall_ms: u64) {
        self.push(UsageEntry {
            sample_id: sample_id.to_string(),
            stage,
            input_tokens: usage.input_tokens,
            output_tokens: usage.output_tokens,
            wall_ms,
            estimated: usage.estimated,
        });
    }

    pub fn push(&self, entry: UsageEntry) {
        self.entries.lock().expect("ledger lock").push(entry);
    }

    pub fn entries(&self) -> Vec<UsageEntry> {
        self.entries.lock().expect("ledger lock").clone()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("ledger lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn totals(&self) -> StageTotals {
        let mut t = StageTotals::default();
        for e in self.entries().iter() {
            t.add(e);
        }
        t
    }

    /// Totals per stage, every stage present.
    pub fn per_stage(&self) -> IndexMap<Stage, StageTotals> {
        let mut out: IndexMap<Stage, StageTotals> =
            Stage::ALL.iter().map(|&s| (s, StageTotals::default())).collect();
        for e in self.entries().iter() {
            out.get_mut(&e.stage).expect("all stages present").add(e);
        }
        out
    }

    /// Entries belonging to `sample_id`.
    pub fn for_sample(&self, sample_id: &str) -> Vec<UsageEntry> {
        self.entries()
            .into_iter()
            .filter(|e| e.sample_id == sample_id)
            .collect()
    }

    pub fn sample_ids(&self) -> BTreeSet<String> {
        self.entries().into_iter().map(|e| e.sample_id).collect()
    }
}
