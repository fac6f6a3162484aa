//! Prices the usage recorded in the replay cassettes, or a ledger file
//! written by `aegis run`.
//!
//! cargo run --example cost_report -- [ledger.json]

use std::path::Path;
use std::sync::Arc;

use aegis::eval::{cost_report, PricingConfig};
use aegis::llm::{UsageEntry, UsageLedger};
use aegis::pipeline::{run_sample, PipelineConfig, SampleInput};

fn replayed_ledger() -> Result<UsageLedger, Box<dyn std::error::Error>> {
    let ledger = Arc::new(UsageLedger::new());
    let fixtures = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    for (name, file, function) in [
        ("gre_err", "ipv6/ip6_gre.c", "ip6gre_err"),
        ("fpga_cq", "fpga/conn.c", "mlx5_fpga_conn_create_cq"),
        ("pcl_delegate", "coders/pcl.c", "InvokePCLDelegate"),
    ] {
        let config = PipelineConfig {
            cassette: Some(fixtures.join(name).join("cassette.json")),
            ..PipelineConfig::default()
        };
        let client = config.client(config.backend()?).with_ledger(ledger.clone());
        let input = SampleInput {
            sample_id: name.into(),
            repo_root: fixtures.join(name).join("repo"),
            file: file.into(),
            function: function.into(),
        };
        run_sample(&input, &config, &client)?;
    }
    Ok(UsageLedger::from_entries(ledger.entries()))
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ledger = match std::env::args().nth(1) {
        Some(path) => {
            let entries: Vec<UsageEntry> = serde_json::from_str(&std::fs::read_to_string(path)?)?;
            UsageLedger::from_entries(entries)
        }
        None => replayed_ledger()?,
    };
    let pricing = PricingConfig::default();
    let report = cost_report(&ledger, &pricing);
    println!(
        "pricing: ${}/M input, ${}/M output",
        pricing.input_price_per_million, pricing.output_price_per_million
    );
    for (stage, cost) in &report.per_stage {
        println!("{:<13} ${cost:.6}", stage.to_string());
    }
    println!("{:<13} ${:.6}", "total", report.total);
    println!(
        "{} samples, ${:.6} each, {} input / {} output tokens{}",
        report.samples,
        report.avg_per_sample,
        report.input_tokens,
        report.output_tokens,
        if report.estimated { " (estimated)" } else { "" }
    );
    Ok(())
}
