use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::llm::{Stage, UsageLedger};

pub const DEFAULT_INPUT_PRICE: f64 = 0.56;
pub const DEFAULT_OUTPUT_PRICE: f64 = 1.68;

/// Dollar prices per million tokens.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PricingConfig {
    pub input_price_per_million: f64,
    pub output_price_per_million: f64,
}

impl Default for PricingConfig {
    fn default() -> Self {
        PricingConfig {
            input_price_per_million: DEFAULT_INPUT_PRICE,
            output_price_per_million: DEFAULT_OUTPUT_PRICE,
        }
    }
}

impl PricingConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.input_price_per_million >= 0.0 && self.output_price_per_million >= 0.0) {
            return Err(format!("prices must be non-negative: {self:?}"));
        }
        Ok(())
    }

    pub fn cost(&self, input_tokens: u64, output_tokens: u64) -> f64 {
        input_tokens as f64 * self.input_price_per_million / 1e6
            + output_tokens as f64 * self.output_price_per_million / 1e6
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub per_stage: IndexMap<Stage, f64>,
    pub total: f64,
    pub samples: usize,
    pub avg_per_sample: f64,
    pub input_tokens: u64,
    pub output_tokens: u64,
    /// True when any ledger entry carries estimated token counts.
    pub estimated: bool,
}

/// Prices each stage's token totals; the total is the sum of the stages.
pub fn cost_report(ledger: &UsageLedger, pricing: &PricingConfig) -> CostReport {
    let per_stage: IndexMap<Stage, f64> = ledger
        .per_stage()
        .into_iter()
        .map(|(stage, t)| (stage, pricing.cost(t.input_tokens, t.output_tokens)))
        .collect();
    let total = per_stage.values().sum();
    let samples = ledger.sample_ids().len();
    let totals = ledger.totals();
    CostReport {
        per_stage,
        total,
        samples,
        avg_per_sample: if samples == 0 { 0.0 } else { total / samples as f64 },
        input_tokens: totals.input_tokens,
        output_tokens: totals.output_tokens,
        estimated: ledger.entries().iter().any(|e| e.estimated),
    }
}
