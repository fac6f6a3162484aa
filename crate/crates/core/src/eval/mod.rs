//! Pair-wise and standard metrics, localization recall, cost reports and
//! ablation runs.

mod cost;
mod dataset;
mod diff;
mod localization;
mod metrics;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::agents::AblationMode;
use crate::llm::{LlmClient, Stage, UsageLedger};
use crate::pipeline::{run_pairs, PairRun, PipelineConfig, PipelineError};

pub use cost::{cost_report, CostReport, PricingConfig, DEFAULT_INPUT_PRICE, DEFAULT_OUTPUT_PRICE};
pub use dataset::{
    load_pair_dataset, load_predictions, parse_pair_dataset, parse_predictions,
    predictions_to_json, FunctionSource, PairSample, Prediction, Side,
};
pub use diff::{ground_truth_lines, LineSet};
pub use localization::{coverage, localization_recall, mean_recall, paths_match, CoverageMode};
pub use metrics::{
    confusion, pairwise_metrics, round4, standard_metrics, Confusion, PairwiseCounts,
    StandardMetrics,
};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("schema violation: {0}")]
    SchemaViolation(String),
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("no prediction for pair `{pair_id}` side {side}")]
    MissingPrediction { pair_id: String, side: Side },
    #[error("malformed diff: {0}")]
    MalformedDiff(String),
}

/// Mean localization recall for the two coverage modes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalizationSummary {
    pub samples: usize,
    pub phase_i: Option<f64>,
    pub phase_i_ii: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mode: AblationMode,
    pub k: Option<usize>,
    pub n_pairs: usize,
    pub pc_count: usize,
    pub pr_count: usize,
    pub vps_count: i64,
    pub pc_rate: f64,
    pub accuracy: f64,
    pub precision: f64,
    pub precision_degenerate: bool,
    pub recall: f64,
    pub f1: f64,
    pub fpr: f64,
    pub confusion: Confusion,
    pub per_stage_cost: IndexMap<Stage, f64>,
    pub total_cost: f64,
    pub avg_cost_per_sample: f64,
    pub input_tokens: u64,
    pub output_tokens: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub localization: Option<LocalizationSummary>,
}

impl MetricsReport {
    pub fn build(
        mode: AblationMode,
        k: Option<usize>,
        pairs: &[PairSample],
        preds: &[Prediction],
        ledger: &UsageLedger,
        pricing: &PricingConfig,
    ) -> Result<Self, EvalError> {
        let pw = pairwise_metrics(preds, pairs)?;
        let c = confusion(preds, pairs)?;
        let m = c.metrics();
        let cost = cost_report(ledger, pricing);
        Ok(MetricsReport {
            mode,
            k,
            n_pairs: pw.n_pairs,
            pc_count: pw.pc_count,
            pr_count: pw.pr_count,
            vps_count: pw.vps_count,
            pc_rate: round4(pw.pc_rate),
            accuracy: round4(m.accuracy),
            precision: round4(m.precision),
            precision_degenerate: m.precision_degenerate,
            recall: round4(m.recall),
            f1: round4(m.f1),
            fpr: round4(m.fpr),
            confusion: c,
            per_stage_cost: cost.per_stage,
            total_cost: cost.total,
            avg_cost_per_sample: cost.avg_per_sample,
            input_tokens: cost.input_tokens,
            output_tokens: cost.output_tokens,
            localization: None,
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Human-readable table.
    pub fn to_table(&self) -> String {
        let mut out = format!("mode: {:?}", self.mode);
        if let Some(k) = self.k {
            out.push_str(&format!("  k: {k}"));
        }
        out.push('\n');
        let pct = |x: f64| format!("{:.2}%", x * 100.0);
        let mut rows = vec![
            ("pairs".to_string(), self.n_pairs.to_string()),
            ("P-C".into(), format!("{} ({})", self.pc_count, pct(self.pc_rate))),
            ("P-R".into(), self.pr_count.to_string()),
            ("VP-S".into(), self.vps_count.to_string()),
            ("accuracy".into(), format!("{:.4}", self.accuracy)),
            (
                "precision".into(),
                format!(
                    "{:.4}{}",
                    self.precision,
                    if self.precision_degenerate { " (no positive predictions)" } else { "" }
                ),
            ),
            ("recall".into(), format!("{:.4}", self.recall)),
            ("F1".into(), format!("{:.4}", self.f1)),
            ("FPR".into(), format!("{:.4}", self.fpr)),
        ];
        for (stage, cost) in &self.per_stage_cost {
            rows.push((format!("cost {stage}"), format!("${cost:.4}")));
        }
        rows.push(("cost total".into(), format!("${:.4}", self.total_cost)));
        rows.push(("cost per sample".into(), format!("${:.4}", self.avg_cost_per_sample)));
        rows.push((
            "tokens in/out".into(),
            format!("{}/{}", self.input_tokens, self.output_tokens),
        ));
        if let Some(l) = &self.localization {
            let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.4}"));
            rows.push(("loc. recall I".into(), fmt(l.phase_i)));
            rows.push(("loc. recall I+II".into(), fmt(l.phase_i_ii)));
        }
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        for (k, v) in rows {
            out.push_str(&format!("{k:<width$}  {v}\n"));
        }
        out
    }
}

/// Mean localization recall of the vulnerable-side runs against each pair's
/// fixing diff.
pub fn localization_summary(pairs: &[PairSample], runs: &[PairRun]) -> Result<LocalizationSummary, EvalError> {
    let (mut one, mut both) = (Vec::new(), Vec::new());
    for run in runs.iter().filter(|r| r.side == Side::VulnSide) {
        let Some(pair) = pairs.iter().find(|p| p.pair_id == run.pair_id) else {
            continue;
        };
        let Some(diff) = &pair.diff_text else { continue };
        let gt = ground_truth_lines(diff)?;
        let traces = run.run.traces();
        let file = &run.run.input.file;
        one.push(localization_recall(
            &coverage(CoverageMode::PhaseI, file, &run.run.selected, &traces),
            &gt,
        ));
        both.push(localization_recall(
            &coverage(CoverageMode::PhaseIAndII, file, &run.run.selected, &traces),
            &gt,
        ));
    }
    Ok(LocalizationSummary {
        samples: one.iter().flatten().count(),
        phase_i: mean_recall(&one).map(round4),
        phase_i_ii: mean_recall(&both).map(round4),
    })
}

/// Runs the pipeline over every pair and scores the predictions.
pub fn evaluate(
    pairs: &[PairSample],
    config: &PipelineConfig,
    client: &LlmClient,
) -> Result<(MetricsReport, Vec<PairRun>), PipelineError> {
    let ledger = std::sync::Arc::new(UsageLedger::new());
    let client = client.clone().with_ledger(ledger.clone());
    let runs = run_pairs(pairs, config, &client)?;
    let preds: Vec<Prediction> = runs.iter().map(PairRun::prediction).collect();
    let eval_err = |e: EvalError| PipelineError::new(crate::pipeline::PipelineStage::Eval, e.to_string());
    let mut report = MetricsReport::build(config.mode, Some(config.k), pairs, &preds, &ledger, &config.pricing)
        .map_err(eval_err)?;
    if pairs.iter().any(|p| p.diff_text.is_some()) {
        report.localization = Some(localization_summary(pairs, &runs).map_err(eval_err)?);
    }
    Ok((report, runs))
}

/// Evaluates `pairs` with the given ablation mode.
pub fn run_ablation(
    mode: AblationMode,
    pairs: &[PairSample],
    config: &PipelineConfig,
    client: &LlmClient,
) -> Result<MetricsReport, PipelineError> {
    let config = PipelineConfig {
        mode,
        ..config.clone()
    };
    evaluate(pairs, &config, client).map(|(r, _)| r)
}
