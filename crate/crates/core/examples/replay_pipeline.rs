//! Runs the whole pipeline on a recorded scenario from its cassette and
//! writes the run directory.
//!
//! cargo run --example replay_pipeline -- [gre_err|fpga_cq|pcl_delegate] [out_dir]

use std::path::Path;

use aegis::pipeline::{run_sample, write_run_dir, PipelineConfig, SampleInput};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let name = args.next().unwrap_or_else(|| "gre_err".into());
    let out = args.next().unwrap_or_else(|| std::env::temp_dir().join("aegis-runs").display().to_string());
    let (file, function) = match name.as_str() {
        "gre_err" => ("ipv6/ip6_gre.c", "ip6gre_err"),
        "fpga_cq" => ("fpga/conn.c", "mlx5_fpga_conn_create_cq"),
        "pcl_delegate" => ("coders/pcl.c", "InvokePCLDelegate"),
        other => return Err(format!("unknown scenario `{other}`").into()),
    };
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(&name);

    let config = PipelineConfig {
        cassette: Some(dir.join("cassette.json")),
        ..PipelineConfig::default()
    };
    let client = config.client(config.backend()?);
    let input = SampleInput {
        sample_id: name.clone(),
        repo_root: dir.join("repo"),
        file: file.into(),
        function: function.into(),
    };
    let run = run_sample(&input, &config, &client)?;

    println!("{} clues, {} verified", run.clues.len(), run.verdict.per_clue.len());
    for c in &run.verdict.per_clue {
        println!(
            "line {:>4}: {} ({:.2}) -> audit {:?} -> {}",
            c.clue.line, c.verifier.verdict, c.verifier.confidence, c.audit.audit_verdict, c.audit.final_verdict
        );
    }
    println!("verdict: {:?}", run.verdict.verdict);
    println!("artifacts: {}", write_run_dir(Path::new(&out), &run)?.display());
    Ok(())
}
