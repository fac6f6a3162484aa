pub mod agents;
pub mod cli;
pub mod cpg;
pub mod expander;
pub mod eval;
pub mod llm;
pub mod pipeline;
pub mod slicer;
pub mod trace;
