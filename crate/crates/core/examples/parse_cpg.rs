//! Parses a C file into a code property graph and prints a summary, or the
//! full interchange document with `--json`.
//!
//! cargo run --example parse_cpg -- tests/fixtures/fpga_cq/repo/core/cq.c

use std::collections::BTreeMap;

use aegis::cpg::{export_cpg, parse_translation_unit};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let path = args
        .next()
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/fpga_cq/repo/core/cq.c").into());
    let json = args.any(|a| a == "--json");

    let text = std::fs::read_to_string(&path)?;
    let cpg = parse_translation_unit(&text, &path)?;
    if json {
        print!("{}", export_cpg(&cpg));
        return Ok(());
    }

    let mut kinds = BTreeMap::new();
    for e in cpg.edges() {
        *kinds.entry(format!("{:?}", e.kind)).or_insert(0) += 1;
    }
    println!("{}: {} nodes, {} edges", cpg.file(), cpg.nodes().len(), cpg.edges().len());
    for (kind, n) in kinds {
        println!("  {kind:<12} {n}");
    }
    for (name, id) in cpg.functions() {
        let f = cpg.node(*id).unwrap();
        let params: Vec<_> = cpg
            .parameters(*id)
            .into_iter()
            .filter_map(|p| cpg.node(p).and_then(|n| n.name.clone()))
            .collect();
        println!("{name}({}) lines {}-{}", params.join(", "), f.line, f.end_line());
    }
    for d in cpg.diagnostics() {
        println!("skipped line {}: {}", d.line, d.message);
    }
    Ok(())
}
