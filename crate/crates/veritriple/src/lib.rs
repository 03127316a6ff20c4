//! Functional validation pipeline for Verilog training corpora.
//!
//! Takes JSONL corpora of (natural-language spec, RTL design) pairs and
//! produces (spec, design, unit test) triples in which the design provably
//! passes the test under simulation. A teacher model generates the test
//! (and may revise the design); failing runs are refined iteratively with
//! the simulator's error output until they pass or the attempt budget runs
//! out. On top of that sit a pass@k benchmark evaluation harness, an audit
//! that measures how often original corpus designs pass freshly generated
//! tests, a corpus statistics reporter, and a replay verifier.
//!
//! Simulation shells out to an external Verilog toolchain (Icarus Verilog
//! by default) and is the only part that touches the machine; everything
//! else is deterministic given a scripted teacher.

pub mod audit;
pub mod config;
pub mod dataset;
pub mod eval;
pub mod exec;
pub mod manifest;
pub mod prompts;
pub mod refine;
pub mod sim;
pub mod teacher;

pub use dataset::{
    compute_stats, load_pairs, load_triples, write_triples, AttemptOutcome, AttemptRecord,
    DatasetStats, RejectRecord, SpecDesignPair, ValidatedTriple,
};
pub use eval::{evaluate_benchmark, evaluate_problem, pass_at_k, EvalMode, EvalReport};
pub use prompts::{parse_teacher_response, render_gen_test, render_refine, TeacherResponse};
pub use refine::{augment_corpus, augment_example, replay_triples, ExampleResult, LoopConfig};
pub use sim::{classify_outcome, run_verilog_test, SimOutcome, SimStatus, ToolchainConfig};
pub use teacher::{Teacher, TeacherCall, TeacherConfig, TeacherError};
