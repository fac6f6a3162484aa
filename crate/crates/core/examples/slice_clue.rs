//! Anchors a clue line inside a function and prints its bidirectional slice,
//! the boundary variables and the call sites the slice touches.
//!
//! cargo run --example slice_clue -- <file.c> <function> <line> [depth]

use aegis::cpg::parse_translation_unit;
use aegis::slicer::{anchor_clue, call_sites, find_boundary_variables, slice_bidirectional, Clue};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let (path, function, line, depth) = match args.as_slice() {
        [p, f, l, rest @ ..] => (
            p.clone(),
            f.clone(),
            l.parse::<u32>()?,
            rest.first().map_or(Ok(10), |d| d.parse())?,
        ),
        _ => (
            concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/fpga_cq/repo/fpga/conn.c").to_string(),
            "mlx5_fpga_conn_create_cq".to_string(),
            460,
            10,
        ),
    };

    let text = std::fs::read_to_string(&path)?;
    let cpg = parse_translation_unit(&text, &path)?;
    let func = cpg.function(&function).ok_or(format!("no function `{function}`"))?;
    let clue = Clue::new(line, cpg.line_text(line).unwrap_or_default().trim(), "example", 1.0);
    let (anchor, vars) = anchor_clue(&cpg, func, &clue)?;
    println!("anchor line {line}, variables {vars:?}");

    let slice = slice_bidirectional(&cpg, anchor, &vars, depth);
    for step in &slice.steps {
        let n = cpg.node(step.node).unwrap();
        println!(
            "{:>5} {:<9} {:<10} hop {:>2}  {}",
            n.line,
            format!("{:?}", step.direction),
            step.variable,
            step.hop,
            n.code.lines().next().unwrap_or_default()
        );
    }
    for b in find_boundary_variables(&cpg, &slice) {
        println!("boundary: {b:?}");
    }
    for c in call_sites(&cpg, &slice) {
        println!("call: {c:?}");
    }
    Ok(())
}
