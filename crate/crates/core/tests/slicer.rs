mod common;

use std::collections::BTreeSet;

use aegis::cpg::{parse_translation_unit, Cpg, NodeId, NodeKind};
use aegis::slicer::{
    anchor_clue, expand_to_statement_boundary, find_boundary_variables, slice_bidirectional,
    slice_forward, BoundaryReason, Clue, Direction, SliceError,
};
use common::{brute_force_slice, fixture, random_pdg, rng};
use proptest::prelude::*;

fn read(path: &str) -> String {
    std::fs::read_to_string(fixture(path)).unwrap()
}

fn conn() -> Cpg {
    parse_translation_unit(&read("fpga_cq/repo/fpga/conn.c"), "fpga/conn.c").unwrap()
}

fn lines(cpg: &Cpg, nodes: impl IntoIterator<Item = NodeId>) -> BTreeSet<u32> {
    nodes.into_iter().map(|n| cpg.node(n).unwrap().line).collect()
}

fn vars(v: &[&str]) -> BTreeSet<String> {
    v.iter().map(|s| s.to_string()).collect()
}

#[test]
fn fpga_cq_clue_anchors_with_its_variables() {
    let cpg = conn();
    let f = cpg.function("mlx5_fpga_conn_create_cq").unwrap();
    let clue = Clue::new(460, "in = kvzalloc(inlen, GFP_KERNEL);", "unchecked size", 0.7);
    let (anchor, v) = anchor_clue(&cpg, f, &clue).unwrap();
    assert_eq!(cpg.node(anchor).unwrap().line, 460);
    for name in ["in", "inlen", "GFP_KERNEL"] {
        assert!(v.contains(name), "{name} missing from {v:?}");
    }
}

#[test]
fn blank_line_has_no_statement() {
    let cpg = conn();
    let f = cpg.function("mlx5_fpga_conn_create_cq").unwrap();
    let clue = Clue::new(465, "x", "r", 0.5);
    assert!(cpg.line_text(465).unwrap().trim().is_empty());
    assert_eq!(
        anchor_clue(&cpg, f, &clue),
        Err(SliceError::NoStatementAtLine { line: 465 })
    );
}

#[test]
fn clue_outside_function_is_rejected() {
    let cpg = conn();
    let f = cpg.function("mlx5_fpga_conn_create_cq").unwrap();
    let clue = Clue::new(1, "x", "r", 0.5);
    assert!(matches!(
        anchor_clue(&cpg, f, &clue),
        Err(SliceError::LineOutsideFunction { .. })
    ));
}

#[test]
fn multi_line_call_anchors_to_the_enclosing_statement() {
    let src = "int g(int a, int b, int c);\nint f(int a)\n{\n\tint r = g(a,\n\t\ta + 1,\n\t\ta + 2);\n\treturn r;\n}\n";
    let cpg = parse_translation_unit(src, "m.c").unwrap();
    let f = cpg.function("f").unwrap();
    let (anchor, _) = anchor_clue(&cpg, f, &Clue::new(4, "int r = g(a,", "r", 0.5)).unwrap();
    let inner = cpg
        .nodes()
        .iter()
        .find(|n| n.line == 5 && n.kind == NodeKind::Identifier)
        .unwrap();
    assert_eq!(expand_to_statement_boundary(&cpg, inner.id), anchor);
    assert_eq!(cpg.node(anchor).unwrap().line, 4);
}

#[test]
fn statement_boundary_is_idempotent() {
    let cpg = conn();
    for n in cpg.nodes() {
        let once = expand_to_statement_boundary(&cpg, n.id);
        assert_eq!(expand_to_statement_boundary(&cpg, once), once);
    }
}

#[test]
fn fpga_cq_inlen_chain_spans_computation_and_call() {
    let cpg = conn();
    let f = cpg.function("mlx5_fpga_conn_create_cq").unwrap();
    let clue = Clue::new(460, "in = kvzalloc(inlen, GFP_KERNEL);", "r", 0.7);
    let (anchor, _) = anchor_clue(&cpg, f, &clue).unwrap();
    let slice = slice_bidirectional(&cpg, anchor, &vars(&["inlen"]), 10);
    let back = lines(
        &cpg,
        slice.steps.iter().filter(|s| s.direction == Direction::Backward).map(|s| s.node),
    );
    let fwd = lines(
        &cpg,
        slice.steps.iter().filter(|s| s.direction == Direction::Forward).map(|s| s.node),
    );
    assert!(back.contains(&458), "{back:?}");
    assert!(fwd.contains(&481), "{fwd:?}");
}

#[test]
fn isolated_anchor_slices_to_itself() {
    let src = "int f(void)\n{\n\treturn 0;\n}\n";
    let cpg = parse_translation_unit(src, "z.c").unwrap();
    let f = cpg.function("f").unwrap();
    let (anchor, v) = anchor_clue(&cpg, f, &Clue::new(3, "return 0;", "r", 0.5)).unwrap();
    let slice = slice_bidirectional(&cpg, anchor, &v, 10);
    assert_eq!(slice.node_set(), BTreeSet::from([anchor]));
    assert!(slice.boundary.is_empty());
}

#[test]
fn forward_slice_reaches_the_return() {
    let src = "int f(int a, int b)\n{\n\tint t = a * 2;\n\treturn t;\n}\n";
    let cpg = parse_translation_unit(src, "r.c").unwrap();
    let f = cpg.function("f").unwrap();
    let slice = slice_forward(&cpg, f, &vars(&["a"]), 10);
    assert!(lines(&cpg, slice.nodes()).contains(&4));
}

#[test]
fn forward_slice_with_unknown_entry_vars_is_the_entry() {
    let src = "int f(int a)\n{\n\treturn a;\n}\n";
    let cpg = parse_translation_unit(src, "r.c").unwrap();
    let f = cpg.function("f").unwrap();
    let slice = slice_forward(&cpg, f, &vars(&["zz"]), 10);
    assert_eq!(slice.node_set(), BTreeSet::from([f]));
}

#[test]
fn callee_forward_slice_reaches_the_command() {
    let cpg = parse_translation_unit(&read("fpga_cq/repo/core/cq.c"), "core/cq.c").unwrap();
    let f = cpg.function("mlx5_core_create_cq").unwrap();
    let slice = slice_forward(&cpg, f, &vars(&["in", "inlen"]), 10);
    assert!(lines(&cpg, slice.nodes()).contains(&105));
}

#[test]
fn external_call_return_is_a_boundary() {
    let cpg = parse_translation_unit(&read("pcl_delegate/repo/coders/pcl.c"), "coders/pcl.c").unwrap();
    let f = cpg.function("InvokePCLDelegate").unwrap();
    let line = cpg
        .nodes()
        .iter()
        .find(|n| n.kind == NodeKind::Call && n.name.as_deref() == Some("GetDelegateCommands"))
        .unwrap()
        .line;
    let (anchor, v) = anchor_clue(&cpg, f, &Clue::new(line, "x", "r", 0.5)).unwrap();
    let slice = slice_bidirectional(&cpg, anchor, &v, 10);
    assert!(find_boundary_variables(&cpg, &slice)
        .iter()
        .any(|b| b.reason == BoundaryReason::ExternalCallReturn));
}

#[test]
fn used_parameter_is_a_boundary() {
    let src = "int f(int offset)\n{\n\tint t = offset + 4;\n\treturn t;\n}\n";
    let cpg = parse_translation_unit(src, "p.c").unwrap();
    let f = cpg.function("f").unwrap();
    let (anchor, v) = anchor_clue(&cpg, f, &Clue::new(3, "int t = offset + 4;", "r", 0.5)).unwrap();
    let slice = slice_bidirectional(&cpg, anchor, &v, 10);
    assert!(slice
        .boundary
        .iter()
        .any(|b| b.variable == "offset" && b.reason == BoundaryReason::Parameter));
}

#[test]
fn literal_only_computation_has_no_boundary() {
    let src = "int f(void)\n{\n\tint t = 3;\n\tint u = t + 4;\n\treturn u;\n}\n";
    let cpg = parse_translation_unit(src, "l.c").unwrap();
    let f = cpg.function("f").unwrap();
    let (anchor, v) = anchor_clue(&cpg, f, &Clue::new(4, "int u = t + 4;", "r", 0.5)).unwrap();
    assert!(slice_bidirectional(&cpg, anchor, &v, 10).boundary.is_empty());
}

#[test]
fn random_pdgs_match_the_brute_force_closure() {
    for seed in 0..100 {
        let g = random_pdg(&mut rng(seed));
        let got = slice_bidirectional(&g.cpg, g.anchor, &g.vars, g.depth).node_set();
        let want = brute_force_slice(&g.cpg, g.anchor, &g.vars, g.depth);
        assert_eq!(got, want, "seed {seed}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn hops_respect_the_depth_limit(seed in any::<u64>()) {
        let g = random_pdg(&mut rng(seed));
        let slice = slice_bidirectional(&g.cpg, g.anchor, &g.vars, g.depth);
        prop_assert!(slice.contains(g.anchor));
        for s in &slice.steps {
            prop_assert!(s.hop <= g.depth);
        }
    }

    #[test]
    fn every_data_step_has_a_closer_neighbour(seed in any::<u64>()) {
        let g = random_pdg(&mut rng(seed));
        let slice = slice_bidirectional(&g.cpg, g.anchor, &g.vars, g.depth);
        for s in slice.steps.iter().filter(|s| s.direction != Direction::Control && s.hop > 0) {
            let prev = g
                .cpg
                .in_edges(s.node)
                .map(|e| e.src)
                .chain(g.cpg.out_edges(s.node).map(|e| e.dst))
                .any(|n| slice.steps.iter().any(|t| t.node == n && t.hop < s.hop));
            prop_assert!(prev, "step {:?} has no predecessor", s);
        }
    }

    #[test]
    fn slicing_is_deterministic(seed in any::<u64>()) {
        let g = random_pdg(&mut rng(seed));
        let a = slice_bidirectional(&g.cpg, g.anchor, &g.vars, g.depth);
        let b = slice_bidirectional(&g.cpg, g.anchor, &g.vars, g.depth);
        prop_assert_eq!(a, b);
    }
}
