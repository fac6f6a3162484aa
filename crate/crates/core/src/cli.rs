//! Command-line front end: `run`, `eval` and `cpg`.

use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};

use crate::agents::AblationMode;
use crate::cpg::{export_cpg, import_cpg, parse_translation_unit, Cpg};
use crate::eval::{
    evaluate, load_pair_dataset, load_predictions, predictions_to_json, MetricsReport,
};
use crate::llm::{ChatBackend, HttpBackend, HttpConfig, RecordingBackend, UsageEntry, UsageLedger};
use crate::pipeline::{
    run_sample, write_run_dir, BackendKind, PipelineConfig, PipelineError, PipelineStage,
    SampleInput,
};

#[derive(Debug, Parser)]
#[command(name = "aegis", version, about = "Clue-anchored vulnerability verification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Verify one function of a repository.
    Run(RunArgs),
    /// Score predictions, or run the pipeline over a pair dataset.
    Eval(EvalArgs),
    /// Parse, import or export code property graphs.
    Cpg {
        #[command(subcommand)]
        command: CpgCommand,
    },
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// JSON configuration file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub depth_limit: Option<u32>,
    #[arg(long)]
    pub expansion_cap: Option<u32>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub max_retries: Option<usize>,
    /// Cassette to replay, or to record into with --live.
    #[arg(long)]
    pub cassette: Option<PathBuf>,
    /// Call the live endpoint instead of replaying.
    #[arg(long)]
    pub live: bool,
    #[arg(long)]
    pub parallel: Option<usize>,
    #[arg(long, default_value = "runs")]
    pub out_dir: PathBuf,
    /// Full, NoDialectics or NoAudit.
    #[arg(long)]
    pub ablation: Option<AblationMode>,
}

impl CommonArgs {
    pub fn config(&self) -> Result<PipelineConfig, PipelineError> {
        let mut c = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        if let Some(k) = self.k {
            c.k = k;
        }
        if let Some(d) = self.depth_limit {
            c.depth_limit = d;
        }
        if let Some(e) = self.expansion_cap {
            c.expansion_cap = e;
        }
        if let Some(m) = &self.model {
            c.model = m.clone();
        }
        if let Some(r) = self.max_retries {
            c.max_retries = r;
        }
        if let Some(p) = self.parallel {
            c.parallelism = p;
        }
        if let Some(m) = self.ablation {
            c.mode = m;
        }
        if self.cassette.is_some() {
            c.cassette = self.cassette.clone();
        }
        if self.live {
            c.backend = BackendKind::Live;
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Repository root.
    #[arg(long)]
    pub repo: PathBuf,
    /// Target file, relative to the repository root.
    #[arg(long)]
    pub file: String,
    /// Target function name.
    #[arg(long)]
    pub function: String,
    /// Defaults to `<file>:<function>`.
    #[arg(long)]
    pub sample_id: Option<String>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Pair dataset (JSON array).
    #[arg(long)]
    pub dataset: PathBuf,
    /// Score an existing predictions file instead of running the pipeline.
    #[arg(long)]
    pub predictions: Option<PathBuf>,
    /// Usage ledger priced alongside --predictions.
    #[arg(long)]
    pub ledger: Option<PathBuf>,
    /// Run once per k in an inclusive range, e.g. 1..5.
    #[arg(long, value_parser = parse_k_range)]
    pub sweep_k: Option<RangeInclusive<usize>>,
    #[command(flatten)]
    pub common: CommonArgs,
}

#[derive(Debug, Subcommand)]
pub enum CpgCommand {
    /// Parse a C source file and print its interchange document.
    Parse {
        source: PathBuf,
        /// File path recorded in the graph; defaults to the given path.
        #[arg(long)]
        file_path: Option<String>,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Validate an interchange document and summarize it.
    Import { document: PathBuf },
    /// Re-export an interchange document or a C source file canonically.
    Export {
        input: PathBuf,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
}

pub fn parse_k_range(s: &str) -> Result<RangeInclusive<usize>, String> {
    let (a, b) = s
        .split_once("..")
        .ok_or_else(|| format!("expected A..B, got `{s}`"))?;
    let b = b.strip_prefix('=').unwrap_or(b);
    let a: usize = a.trim().parse().map_err(|e| format!("bad start `{a}`: {e}"))?;
    let b: usize = b.trim().parse().map_err(|e| format!("bad end `{b}`: {e}"))?;
    if a < 1 || a > b {
        return Err(format!("range {a}..{b} must satisfy 1 <= A <= B"));
    }
    Ok(a..=b)
}

fn other(e: impl std::fmt::Display) -> PipelineError {
    PipelineError::new(PipelineStage::Other, e.to_string())
}

fn write_file(path: &Path, text: &str) -> Result<(), PipelineError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(other)?;
    }
    std::fs::write(path, text).map_err(|e| other(format!("{}: {e}", path.display())))
}

/// Backend plus an optional recorder to flush once the command finishes.
struct Session {
    backend: Arc<dyn ChatBackend>,
    recorder: Option<(Arc<RecordingBackend<HttpBackend>>, PathBuf)>,
}

impl Session {
    fn open(config: &PipelineConfig) -> Result<Self, PipelineError> {
        match (config.backend, &config.cassette) {
            (BackendKind::Live, Some(path)) => {
                let http = HttpConfig::from_env()
                    .map_err(|e| PipelineError::new(PipelineStage::Config, e.to_string()))?;
                let rec = Arc::new(RecordingBackend::new(HttpBackend::new(http)));
                Ok(Session {
                    backend: rec.clone(),
                    recorder: Some((rec, path.clone())),
                })
            }
            _ => Ok(Session {
                backend: config.backend()?,
                recorder: None,
            }),
        }
    }

    fn finish(self) -> Result<(), PipelineError> {
        if let Some((rec, path)) = self.recorder {
            rec.cassette().save(&path).map_err(other)?;
            eprintln!("recorded cassette {}", path.display());
        }
        Ok(())
    }
}

fn cmd_run(args: &RunArgs) -> Result<(), PipelineError> {
    let config = args.common.config()?;
    let session = Session::open(&config)?;
    let client = config.client(session.backend.clone());
    let input = SampleInput {
        sample_id: args
            .sample_id
            .clone()
            .unwrap_or_else(|| format!("{}:{}", args.file, args.function)),
        repo_root: args.repo.clone(),
        file: args.file.clone(),
        function: args.function.clone(),
    };
    let result = run_sample(&input, &config, &client);
    session.finish()?;
    let run = result?;
    let dir = write_run_dir(&args.common.out_dir, &run)?;
    println!("verdict: {:?}", run.verdict.verdict);
    for c in &run.verdict.per_clue {
        println!(
            "  line {}: verifier {} ({:.2}), audit {:?} -> {}",
            c.clue.line,
            c.verifier.verdict,
            c.verifier.confidence,
            c.audit.audit_verdict,
            c.audit.final_verdict
        );
    }
    for c in &run.verdict.inconclusive {
        println!("  line {}: inconclusive at {}", c.clue.line, c.stage);
    }
    println!("artifacts: {}", dir.display());
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> Result<(), PipelineError> {
    let eval_err = |e: crate::eval::EvalError| PipelineError::new(PipelineStage::Eval, e.to_string());
    let pairs = load_pair_dataset(&args.dataset).map_err(eval_err)?;
    let out = &args.common.out_dir;

    if let Some(pred_path) = &args.predictions {
        let config = args.common.config()?;
        let preds = load_predictions(pred_path).map_err(eval_err)?;
        let ledger = match &args.ledger {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| eval_err(crate::eval::EvalError::Io {
                    path: p.display().to_string(),
                    source: e,
                }))?;
                let entries: Vec<UsageEntry> = serde_json::from_str(&text)
                    .map_err(|e| eval_err(crate::eval::EvalError::SchemaViolation(e.to_string())))?;
                UsageLedger::from_entries(entries)
            }
            None => UsageLedger::new(),
        };
        let report = MetricsReport::build(config.mode, None, &pairs, &preds, &ledger, &config.pricing)
            .map_err(eval_err)?;
        print!("{}", report.to_table());
        write_file(&out.join("report.json"), &report.to_json())?;
        return Ok(());
    }

    let base = args.common.config()?;
    let ks: Vec<usize> = match &args.sweep_k {
        Some(r) => r.clone().collect(),
        None => vec![base.k],
    };
    let session = Session::open(&base)?;
    let client = base.client(session.backend.clone());
    let mut outcome = Ok(());
    for k in ks {
        let config = PipelineConfig { k, ..base.clone() };
        let (report, runs) = match evaluate(&pairs, &config, &client) {
            Ok(r) => r,
            Err(e) => {
                outcome = Err(e);
                break;
            }
        };
        let dir = out.join(format!("k{k}"));
        for r in &runs {
            write_run_dir(&dir.join("runs"), &r.run)?;
        }
        let preds: Vec<_> = runs.iter().map(|r| r.prediction()).collect();
        write_file(&dir.join("predictions.json"), &predictions_to_json(&preds))?;
        write_file(&dir.join("report.json"), &report.to_json())?;
        print!("{}", report.to_table());
        println!();
    }
    session.finish()?;
    outcome
}

fn load_graph(path: &Path, file_path: Option<&str>) -> Result<Cpg, PipelineError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| PipelineError::new(PipelineStage::Parse, format!("{}: {e}", path.display())))?;
    let is_doc = path.extension().is_some_and(|e| e == "json");
    let cpg = if is_doc {
        import_cpg(&text)?
    } else {
        let name = file_path
            .map(str::to_string)
            .unwrap_or_else(|| path.to_string_lossy().replace('\\', "/"));
        parse_translation_unit(&text, &name)?
    };
    for d in cpg.diagnostics() {
        tracing::warn!(line = d.line, "{}", d.message);
    }
    Ok(cpg)
}

fn emit(text: &str, out: Option<&Path>) -> Result<(), PipelineError> {
    match out {
        Some(p) => write_file(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_cpg(command: &CpgCommand) -> Result<(), PipelineError> {
    match command {
        CpgCommand::Parse {
            source,
            file_path,
            out,
        } => {
            let cpg = load_graph(source, file_path.as_deref())?;
            emit(&export_cpg(&cpg), out.as_deref())
        }
        CpgCommand::Import { document } => {
            let text = std::fs::read_to_string(document)
                .map_err(|e| PipelineError::new(PipelineStage::Parse, format!("{}: {e}", document.display())))?;
            let cpg = import_cpg(&text)?;
            println!(
                "{}: {} nodes, {} edges, {} functions",
                cpg.file(),
                cpg.nodes().len(),
                cpg.edges().len(),
                cpg.functions().len()
            );
            for (name, id) in cpg.functions() {
                let line = cpg.node(*id).map_or(0, |n| n.line);
                println!("  {name} @ line {line}");
            }
            Ok(())
        }
        CpgCommand::Export { input, out } => {
            let cpg = load_graph(input, None)?;
            emit(&export_cpg(&cpg), out.as_deref())
        }
    }
}

/// Executes a parsed command line and returns the process exit code.
pub fn execute(cli: &Cli) -> i32 {
    let result = match &cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Cpg { command } => cmd_cpg(command),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn init_tracing() {
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn"));
    let _ = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .try_init();
}
