//! Expands a clue across files with an oracle that approves every external
//! callee, then prints the expansion log, the evidence trace and the context
//! handed to the verifier.
//!
//! cargo run --example expand_and_trace

use std::path::Path;

use aegis::cpg::{build_function_index, parse_translation_unit};
use aegis::expander::{expand_iteratively, Budgets, FixedOracle};
use aegis::slicer::Clue;
use aegis::trace::{build_evidence_trace, render_context, render_trace};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/fpga_cq/repo");
    let index = build_function_index(&root)?;
    let file = "fpga/conn.c";
    let cpg = parse_translation_unit(&std::fs::read_to_string(root.join(file))?, file)?;
    let clue = Clue::new(460, "in = kvzalloc(inlen, GFP_KERNEL);", "allocation size", 0.7);

    let result = expand_iteratively(
        &cpg,
        "mlx5_fpga_conn_create_cq",
        &clue,
        &index,
        &Budgets::default(),
        &FixedOracle(true),
    )?;
    println!("== expansion log ({} used)", result.stitched.expansions_used);
    print!("{}", result.log_text());

    let trace = build_evidence_trace(&result, &clue);
    println!("\n== evidence trace (files: {})", trace.files_crossed.join(", "));
    print!("{}", render_trace(&trace));
    println!("\n== context");
    print!("{}", render_context(&result));
    Ok(())
}
