//! Benchmark evaluation against the stub toolchain: functional vs syntax
//! counting, aggregate curves, and input validation.

mod common;

use std::time::Duration;

use common::*;
use veritriple::eval::{
    evaluate_benchmark, evaluate_problem, load_benchmark, BenchmarkProblem, CompletionSet,
    EvalError, EvalMode,
};
use veritriple::sim::SimStatus;

fn and3_problem() -> BenchmarkProblem {
    BenchmarkProblem {
        problem_id: "and3".into(),
        spec_text: AND3_SPEC.into(),
        golden_test_src: AND3_TEST.into(),
        interface_stub: None,
    }
}

fn completions(problem_id: &str, samples: Vec<String>) -> CompletionSet {
    CompletionSet {
        problem_id: problem_id.into(),
        completions: samples,
    }
}

#[test]
fn functional_counts_only_passing_designs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = stub_toolchain(dir.path(), Duration::from_secs(1));
    let set = completions("and3", vec![AND3_FIXED.into(), AND3_BUGGY.into()]);
    let result = evaluate_problem(&and3_problem(), &set, &cfg, EvalMode::Functional, 1).unwrap();
    assert_eq!(result.n, 2);
    assert_eq!(result.c_functional, Some(1));
    assert_eq!(
        result.c_syntax, 2,
        "the buggy design is syntactically valid"
    );
    assert_eq!(result.outcomes[0].status, SimStatus::Pass);
    assert_eq!(result.outcomes[1].status, SimStatus::Timeout);
}

#[test]
fn syntax_mode_skips_simulation() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = stub_toolchain(dir.path(), Duration::from_secs(1));
    let set = completions("and3", vec![AND3_FIXED.into(), AND3_BUGGY.into()]);
    let result = evaluate_problem(&and3_problem(), &set, &cfg, EvalMode::Syntax, 1).unwrap();
    // both compile; the combinational-loop hang never runs in syntax mode
    assert_eq!(result.c_syntax, 2);
    assert_eq!(result.c_functional, None);
}

#[test]
fn compile_errors_count_as_failures_in_both_modes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = stub_toolchain(dir.path(), Duration::from_secs(1));
    let set = completions("and3", vec!["module ( // SYNTAX_BOMB".into()]);
    let result = evaluate_problem(&and3_problem(), &set, &cfg, EvalMode::Functional, 1).unwrap();
    assert_eq!(result.c_functional, Some(0));
    assert_eq!(result.c_syntax, 0);
    assert_eq!(result.outcomes[0].status, SimStatus::CompileError);
}

#[test]
fn aggregate_is_the_mean_of_per_problem_values() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = stub_toolchain(dir.path(), Duration::from_secs(1));
    let problems = vec![
        BenchmarkProblem {
            problem_id: "all-pass".into(),
            spec_text: "s".into(),
            golden_test_src: clean_test("g1"),
            interface_stub: None,
        },
        BenchmarkProblem {
            problem_id: "none-pass".into(),
            spec_text: "s".into(),
            golden_test_src: clean_test("g2"),
            interface_stub: None,
        },
    ];
    let sets = vec![
        completions("all-pass", vec![clean_design("a"), clean_design("b")]),
        completions("none-pass", vec![bomb_design("c"), bomb_design("d")]),
    ];
    let report =
        evaluate_benchmark(&problems, &sets, &cfg, &[1, 2], EvalMode::Functional, 2).unwrap();
    assert_eq!(report.n, 2);
    // mean of pass@1 = (1.0 + 0.0) / 2
    assert_eq!(report.pass_at_k["functional"][&1], 0.5);
    // monotone in k on any fixture
    assert!(report.pass_at_k["functional"][&1] <= report.pass_at_k["functional"][&2]);
    assert_eq!(report.problems.len(), 2);
}

#[test]
fn mismatched_and_missing_ids_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = stub_toolchain(dir.path(), Duration::from_secs(1));
    let problems = vec![and3_problem()];

    let unknown = vec![completions("not-a-problem", vec!["x".into()])];
    assert!(matches!(
        evaluate_benchmark(&problems, &unknown, &cfg, &[1], EvalMode::Syntax, 1).unwrap_err(),
        EvalError::UnknownProblem(_)
    ));

    let none: Vec<CompletionSet> = Vec::new();
    assert!(matches!(
        evaluate_benchmark(&problems, &none, &cfg, &[1], EvalMode::Syntax, 1).unwrap_err(),
        EvalError::MissingCompletions(_)
    ));

    let mismatch = completions("other", vec!["x".into()]);
    assert!(matches!(
        evaluate_problem(&and3_problem(), &mismatch, &cfg, EvalMode::Syntax, 1).unwrap_err(),
        EvalError::UnknownProblem(_)
    ));
}

#[test]
fn non_uniform_sample_counts_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = stub_toolchain(dir.path(), Duration::from_secs(1));
    let problems = vec![
        BenchmarkProblem {
            problem_id: "p1".into(),
            spec_text: "s".into(),
            golden_test_src: clean_test("g1"),
            interface_stub: None,
        },
        BenchmarkProblem {
            problem_id: "p2".into(),
            spec_text: "s".into(),
            golden_test_src: clean_test("g2"),
            interface_stub: None,
        },
    ];
    let sets = vec![
        completions("p1", vec![clean_design("a")]),
        completions("p2", vec![clean_design("b"), clean_design("c")]),
    ];
    assert!(matches!(
        evaluate_benchmark(&problems, &sets, &cfg, &[1], EvalMode::Syntax, 1).unwrap_err(),
        EvalError::NonUniformN { .. }
    ));
}

#[test]
fn ks_beyond_n_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = stub_toolchain(dir.path(), Duration::from_secs(1));
    let problems = vec![and3_problem()];
    let sets = vec![completions("and3", vec![AND3_FIXED.into()])];
    assert!(matches!(
        evaluate_benchmark(&problems, &sets, &cfg, &[2], EvalMode::Syntax, 1).unwrap_err(),
        EvalError::InvalidPassAtK { .. }
    ));
}

#[test]
fn benchmark_directory_layout_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let bench = dir.path().join("bench");
    for (id, stub) in [("alpha", false), ("beta", true)] {
        let pdir = bench.join(id);
        std::fs::create_dir_all(&pdir).unwrap();
        std::fs::write(pdir.join("spec.txt"), format!("spec for {id}")).unwrap();
        std::fs::write(pdir.join("test.v"), clean_test(id)).unwrap();
        if stub {
            std::fs::write(pdir.join("stub.v"), "module beta(); endmodule").unwrap();
        }
    }
    let problems = load_benchmark(&bench).unwrap();
    assert_eq!(problems.len(), 2);
    assert_eq!(problems[0].problem_id, "alpha"); // sorted by name
    assert!(problems[0].interface_stub.is_none());
    assert!(problems[1].interface_stub.is_some());
}
