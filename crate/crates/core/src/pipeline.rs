//! End-to-end orchestration of one target function and of dataset runs.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::agents::{
    self, AblationMode, AgentError, AgentOptions, ClueVerdict, FinalVerdict, InconclusiveClue,
    LlmExpansionOracle, DEFAULT_MAX_RETRIES,
};
use crate::cpg::{build_function_index, parse_translation_unit, CpgError};
use crate::eval::{PairSample, PricingConfig, Prediction, Side};
use crate::expander::{expand_iteratively, Budgets, ExpansionError};
use crate::llm::{
    load_cassette, ChatBackend, HttpBackend, HttpConfig, LlmClient, LlmError, Stage, Temperature,
    Temperatures, UsageEntry,
};
use crate::slicer::Clue;
use crate::trace::{build_evidence_trace, render_context, render_trace, EvidenceTrace};

pub const DEFAULT_MODEL: &str = "deepseek-v3.1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    #[default]
    Replay,
    Live,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub k: usize,
    pub depth_limit: u32,
    pub expansion_cap: u32,
    pub model: String,
    pub temperatures: Temperatures,
    pub max_retries: usize,
    pub pricing: PricingConfig,
    pub parallelism: usize,
    pub mode: AblationMode,
    pub backend: BackendKind,
    pub cassette: Option<PathBuf>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let b = Budgets::default();
        PipelineConfig {
            k: b.k,
            depth_limit: b.depth_limit,
            expansion_cap: b.expansion_cap,
            model: DEFAULT_MODEL.into(),
            temperatures: Temperatures::default(),
            max_retries: DEFAULT_MAX_RETRIES,
            pricing: PricingConfig::default(),
            parallelism: 1,
            mode: AblationMode::Full,
            backend: BackendKind::Replay,
            cassette: None,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::new(PipelineStage::Config, format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| PipelineError::new(PipelineStage::Config, format!("{}: {e}", path.display())))
    }

    pub fn budgets(&self) -> Budgets {
        Budgets {
            depth_limit: self.depth_limit,
            expansion_cap: self.expansion_cap,
            k: self.k,
        }
    }

    pub fn agent_options(&self) -> AgentOptions {
        AgentOptions {
            max_retries: self.max_retries,
            mode: self.mode,
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let config = |m: String| PipelineError::new(PipelineStage::Config, m);
        self.budgets().validate().map_err(config)?;
        self.pricing.validate().map_err(config)?;
        if self.parallelism < 1 {
            return Err(config("parallelism must be at least 1".into()));
        }
        if self.model.trim().is_empty() {
            return Err(config("model name is empty".into()));
        }
        if self.temperatures.audit != Temperature::Fixed(0.0) {
            tracing::warn!(temperature = %self.temperatures.audit, "audit temperature overridden");
        }
        Ok(())
    }

    /// Backend named by the configuration.
    pub fn backend(&self) -> Result<Arc<dyn ChatBackend>, PipelineError> {
        match self.backend {
            BackendKind::Replay => {
                let path = self.cassette.as_ref().ok_or_else(|| {
                    PipelineError::new(PipelineStage::Config, "replay mode needs a cassette".into())
                })?;
                let replay = load_cassette(path)
                    .map_err(|e| PipelineError::new(PipelineStage::Config, e.to_string()))?;
                Ok(Arc::new(replay))
            }
            BackendKind::Live => {
                let cfg = HttpConfig::from_env()
                    .map_err(|e| PipelineError::new(PipelineStage::Config, e.to_string()))?;
                Ok(Arc::new(HttpBackend::new(cfg)))
            }
        }
    }

    pub fn client(&self, backend: Arc<dyn ChatBackend>) -> LlmClient {
        LlmClient::new(backend, &self.model).with_temperatures(self.temperatures)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PipelineStage {
    Config,
    Parse,
    Discovery,
    Expansion,
    Verification,
    Audit,
    Eval,
    Other,
}

impl PipelineStage {
    pub fn exit_code(self) -> i32 {
        match self {
            PipelineStage::Other => 1,
            PipelineStage::Config => 2,
            PipelineStage::Parse => 3,
            PipelineStage::Discovery => 4,
            PipelineStage::Expansion => 5,
            PipelineStage::Verification => 6,
            PipelineStage::Audit => 7,
            PipelineStage::Eval => 8,
        }
    }
}

impl From<Stage> for PipelineStage {
    fn from(s: Stage) -> Self {
        match s {
            Stage::Discovery => PipelineStage::Discovery,
            Stage::Expansion => PipelineStage::Expansion,
            Stage::Verification => PipelineStage::Verification,
            Stage::Audit => PipelineStage::Audit,
        }
    }
}

#[derive(Debug, thiserror::Error)]
#[error("[{stage:?}] {message}")]
pub struct PipelineError {
    pub stage: PipelineStage,
    pub message: String,
}

impl PipelineError {
    pub fn new(stage: PipelineStage, message: String) -> Self {
        PipelineError { stage, message }
    }

    pub fn exit_code(&self) -> i32 {
        self.stage.exit_code()
    }
}

impl From<CpgError> for PipelineError {
    fn from(e: CpgError) -> Self {
        PipelineError::new(PipelineStage::Parse, e.to_string())
    }
}

impl From<AgentError> for PipelineError {
    fn from(e: AgentError) -> Self {
        let stage = e.stage().map_or(PipelineStage::Other, PipelineStage::from);
        PipelineError::new(stage, e.to_string())
    }
}

impl From<LlmError> for PipelineError {
    fn from(e: LlmError) -> Self {
        PipelineError::new(PipelineStage::Other, e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleInput {
    pub sample_id: String,
    pub repo_root: PathBuf,
    /// Path relative to `repo_root`.
    pub file: String,
    pub function: String,
}

/// Intermediate products for one verified clue.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClueArtifacts {
    pub clue: Clue,
    pub trace: EvidenceTrace,
    pub trace_text: String,
    pub context_text: String,
    pub expansion_log: String,
    pub expansions_used: u32,
    pub verifier_raw: String,
    pub audit_raw: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleRun {
    pub input: SampleInput,
    pub clues: Vec<Clue>,
    pub selected: Vec<Clue>,
    pub artifacts: Vec<ClueArtifacts>,
    pub verdict: FinalVerdict,
    pub usage: Vec<UsageEntry>,
    /// Hash of the inputs and settings that determine the run.
    pub run_hash: String,
}

impl SampleRun {
    pub fn traces(&self) -> Vec<EvidenceTrace> {
        self.artifacts.iter().map(|a| a.trace.clone()).collect()
    }
}

fn run_hash(input: &SampleInput, source: &str, config: &PipelineConfig) -> String {
    let mut h = Sha256::new();
    for part in [
        input.sample_id.as_str(),
        input.file.as_str(),
        input.function.as_str(),
        source,
        config.model.as_str(),
        &format!(
            "k={} depth={} cap={} retries={} mode={:?}",
            config.k, config.depth_limit, config.expansion_cap, config.max_retries, config.mode
        ),
    ] {
        h.update(part.as_bytes());
        h.update([0]);
    }
    hex::encode(h.finalize())[..12].to_string()
}

fn normalize(file: &str) -> String {
    file.replace('\\', "/").trim_start_matches("./").to_string()
}

/// Runs discovery, expansion, verification and audit on one function.
pub fn run_sample(
    input: &SampleInput,
    config: &PipelineConfig,
    client: &LlmClient,
) -> Result<SampleRun, PipelineError> {
    config.validate()?;
    let client = client.for_sample(&input.sample_id);
    let options = config.agent_options();
    let budgets = config.budgets();
    let file = normalize(&input.file);

    let index = build_function_index(&input.repo_root)?;
    let path = index.absolute(&file);
    let source = std::fs::read_to_string(&path).map_err(|source| CpgError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let cpg = parse_translation_unit(&source, &file)?;
    let func = cpg.function(&input.function).ok_or_else(|| {
        PipelineError::new(
            PipelineStage::Parse,
            format!("function `{}` not found in {file}", input.function),
        )
    })?;
    let def = cpg.node(func).expect("function node exists");
    let function_text: String = (def.line..=def.end_line())
        .map(|l| format!("{}\n", cpg.line_text(l).unwrap_or_default()))
        .collect();

    let clues = agents::discover_clues(&client, &file, &function_text, def.line, &options)?.value;
    let selected = agents::select_top_k(&clues, budgets.k);
    tracing::info!(sample = %input.sample_id, discovered = clues.len(), selected = selected.len(), "clues");

    let oracle = LlmExpansionOracle {
        client: &client,
        max_retries: options.max_retries,
    };
    let mut artifacts = Vec::new();
    let mut per_clue = Vec::new();
    let mut inconclusive = Vec::new();
    for clue in &selected {
        let result = match expand_iteratively(&cpg, &input.function, clue, &index, &budgets, &oracle) {
            Ok(r) => r,
            Err(ExpansionError::Anchor(e)) => {
                tracing::warn!(line = clue.line, error = %e, "clue could not be anchored");
                inconclusive.push(InconclusiveClue {
                    clue: clue.clone(),
                    stage: Stage::Expansion,
                    error: e.to_string(),
                });
                continue;
            }
            Err(e) => return Err(PipelineError::new(PipelineStage::Expansion, e.to_string())),
        };
        let trace = build_evidence_trace(&result, clue);
        let trace_text = render_trace(&trace);
        let context_text = render_context(&result);
        let mut artifact = ClueArtifacts {
            clue: clue.clone(),
            trace,
            trace_text,
            context_text,
            expansion_log: result.log_text(),
            expansions_used: result.stitched.expansions_used,
            verifier_raw: String::new(),
            audit_raw: String::new(),
        };
        let outcome = agents::verify(&client, &file, clue, &artifact.context_text, &artifact.trace_text, &options)
            .and_then(|v| {
                agents::audit(&client, &file, clue, &artifact.context_text, &artifact.trace_text, &v, &options)
                    .map(|a| (v, a))
            });
        match outcome {
            Ok((v, a)) => {
                artifact.verifier_raw = v.raw;
                artifact.audit_raw = a.raw;
                per_clue.push(ClueVerdict {
                    clue: clue.clone(),
                    verifier: v.verdict,
                    audit: a.decision,
                });
            }
            Err(AgentError::Exhausted { stage, attempts, last }) => {
                tracing::warn!(line = clue.line, %stage, attempts = attempts.len(), "clue inconclusive");
                inconclusive.push(InconclusiveClue {
                    clue: clue.clone(),
                    stage,
                    error: last.to_string(),
                });
            }
            Err(e) => return Err(e.into()),
        }
        artifacts.push(artifact);
    }

    let verdict = agents::finalize_verdict(&input.sample_id, per_clue, inconclusive);
    Ok(SampleRun {
        run_hash: run_hash(input, &source, config),
        input: input.clone(),
        clues,
        selected,
        artifacts,
        verdict,
        usage: client.ledger().for_sample(&input.sample_id),
    })
}

fn sanitize(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect()
}

fn write(path: &Path, text: &str) -> Result<(), PipelineError> {
    std::fs::write(path, text)
        .map_err(|e| PipelineError::new(PipelineStage::Other, format!("{}: {e}", path.display())))
}

fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("artifact serializes");
    s.push('\n');
    s
}

/// Writes every artifact of `run` under `<out_dir>/<sample_id>-<hash>/`.
pub fn write_run_dir(out_dir: &Path, run: &SampleRun) -> Result<PathBuf, PipelineError> {
    let dir = out_dir.join(format!("{}-{}", sanitize(&run.input.sample_id), run.run_hash));
    std::fs::create_dir_all(&dir)
        .map_err(|e| PipelineError::new(PipelineStage::Other, format!("{}: {e}", dir.display())))?;
    write(&dir.join("verdict.json"), &run.verdict.to_json())?;
    write(&dir.join("clues.json"), &json(&run.clues))?;
    write(&dir.join("traces.json"), &json(&run.traces()))?;
    write(&dir.join("ledger.json"), &json(&run.usage))?;
    for (i, a) in run.artifacts.iter().enumerate() {
        let n = i + 1;
        write(&dir.join(format!("trace_{n}.txt")), &a.trace_text)?;
        write(&dir.join(format!("context_{n}.txt")), &a.context_text)?;
        write(&dir.join(format!("expansion_{n}.log")), &a.expansion_log)?;
    }
    Ok(dir)
}

/// One function of a pair materialized as a single-file repository.
pub struct MaterializedSide {
    pub dir: tempfile::TempDir,
    pub input: SampleInput,
}

pub fn materialize(pair: &PairSample, side: Side) -> Result<MaterializedSide, PipelineError> {
    let f = pair.side(side);
    let dir = tempfile::tempdir()
        .map_err(|e| PipelineError::new(PipelineStage::Other, e.to_string()))?;
    let file = normalize(&f.file);
    let path = dir.path().join(&file);
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .map_err(|e| PipelineError::new(PipelineStage::Other, e.to_string()))?;
    }
    let padding = "\n".repeat(f.start_line.saturating_sub(1) as usize);
    write(&path, &format!("{padding}{}", f.source))?;
    Ok(MaterializedSide {
        input: SampleInput {
            sample_id: pair.run_id(side),
            repo_root: dir.path().to_path_buf(),
            file,
            function: f.function.clone(),
        },
        dir,
    })
}

pub struct PairRun {
    pub pair_id: String,
    pub side: Side,
    pub run: SampleRun,
}

impl PairRun {
    pub fn prediction(&self) -> Prediction {
        Prediction {
            sample_id: self.pair_id.clone(),
            target: self.side,
            verdict: self.run.verdict.verdict,
        }
    }
}

/// Runs both sides of every pair with up to `config.parallelism` samples
/// in flight.
pub fn run_pairs(
    pairs: &[PairSample],
    config: &PipelineConfig,
    client: &LlmClient,
) -> Result<Vec<PairRun>, PipelineError> {
    use rayon::prelude::*;

    config.validate()?;
    let jobs: Vec<(&PairSample, Side)> = pairs
        .iter()
        .flat_map(|p| Side::BOTH.into_iter().map(move |s| (p, s)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.parallelism)
        .build()
        .map_err(|e| PipelineError::new(PipelineStage::Config, e.to_string()))?;
    pool.install(|| {
        jobs.par_iter()
            .map(|&(pair, side)| {
                let m = materialize(pair, side)?;
                let run = run_sample(&m.input, config, client)?;
                Ok(PairRun {
                    pair_id: pair.pair_id.clone(),
                    side,
                    run,
                })
            })
            .collect()
    })
}
