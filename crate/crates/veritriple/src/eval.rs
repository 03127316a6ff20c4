//! pass@k estimation and benchmark evaluation.
//!
//! A benchmark is a directory with one subdirectory per problem holding
//! `spec.txt`, a golden `test.v`, and an optional `stub.v`. Candidate
//! completions come from a JSONL file of `{"problem_id", "samples": [...]}`.
//! Syntax mode compiles each completion together with the golden testbench
//! (so interface mismatches surface as failures); functional mode runs the
//! full simulation.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::exec;
use crate::sim::{self, SimError, SimOutcome, SimStatus, ToolchainConfig};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("pass@k arguments out of range: n={n}, c={c}, k={k} (need c <= n and 1 <= k <= n)")]
    InvalidPassAtK { n: u32, c: u32, k: u32 },
    #[error("problem \"{0}\" has no completion set")]
    MissingCompletions(String),
    #[error("completion set \"{0}\" does not match any benchmark problem")]
    UnknownProblem(String),
    #[error("duplicate completion set for problem \"{0}\"")]
    DuplicateCompletions(String),
    #[error("non-uniform sample counts: problem \"{problem}\" has {n}, expected {expected}")]
    NonUniformN {
        problem: String,
        n: usize,
        expected: usize,
    },
    #[error("benchmark problem \"{problem}\": {message}")]
    BadProblem { problem: String, message: String },
    #[error("{path}: {message}")]
    BadFile { path: PathBuf, message: String },
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// One benchmark problem with its expert-written testbench.
#[derive(Debug, Clone)]
pub struct BenchmarkProblem {
    pub problem_id: String,
    pub spec_text: String,
    pub golden_test_src: String,
    /// Module header handed to generators; not used during evaluation.
    pub interface_stub: Option<String>,
}

/// The n candidate completions for one problem, in rank order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompletionSet {
    pub problem_id: String,
    #[serde(rename = "samples")]
    pub completions: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    Syntax,
    Functional,
}

impl std::fmt::Display for EvalMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EvalMode::Syntax => f.write_str("syntax"),
            EvalMode::Functional => f.write_str("functional"),
        }
    }
}

/// Per-problem counts plus the raw per-sample outcomes.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProblemEval {
    pub problem_id: String,
    pub n: u32,
    /// Completions that compiled together with the golden testbench.
    pub c_syntax: u32,
    /// Completions that passed simulation; absent in syntax-only runs.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub c_functional: Option<u32>,
    pub outcomes: Vec<SimOutcome>,
}

/// Whole-benchmark report: per-problem detail plus aggregate pass@k curves.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: EvalMode,
    pub n: u32,
    pub ks: Vec<u32>,
    pub problems: Vec<ProblemEval>,
    /// `pass_at_k["syntax"][k]` and, in functional mode,
    /// `pass_at_k["functional"][k]`; aggregates are plain means over
    /// problems.
    pub pass_at_k: BTreeMap<String, BTreeMap<u32, f64>>,
}

/// Unbiased estimator of the probability that at least one of k samples out
/// of n, of which c are correct, is correct: `1 - C(n-c, k) / C(n, k)`.
/// Evaluated in product form so large n stays stable and overflow-free.
pub fn pass_at_k(n: u32, c: u32, k: u32) -> Result<f64, EvalError> {
    if c > n || k == 0 || k > n {
        return Err(EvalError::InvalidPassAtK { n, c, k });
    }
    if c == 0 {
        return Ok(0.0);
    }
    if n - c < k {
        return Ok(1.0);
    }
    // product over i of (n-c-i)/(n-i) for i in 0..k
    let mut miss_all = 1.0f64;
    for i in 0..k {
        miss_all *= f64::from(n - c - i) / f64::from(n - i);
    }
    Ok(1.0 - miss_all)
}

/// Mean of per-problem pass@k over `(n, c)` counts; exactly the arithmetic
/// mean, no reweighting.
pub fn aggregate_pass_at_k(counts: &[(u32, u32)], k: u32) -> Result<f64, EvalError> {
    if counts.is_empty() {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for &(n, c) in counts {
        sum += pass_at_k(n, c, k)?;
    }
    Ok(sum / counts.len() as f64)
}

/// Load a benchmark directory: one subdirectory per problem, sorted by name.
pub fn load_benchmark(dir: &Path) -> Result<Vec<BenchmarkProblem>, EvalError> {
    let bad = |message: String| EvalError::BadFile {
        path: dir.to_path_buf(),
        message,
    };
    let mut entries: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| bad(e.to_string()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    entries.sort();
    if entries.is_empty() {
        return Err(bad(
            "benchmark directory has no problem subdirectories".into()
        ));
    }
    let mut problems = Vec::with_capacity(entries.len());
    for entry in entries {
        let problem_id = entry
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        let read = |name: &str| -> Result<String, EvalError> {
            fs::read_to_string(entry.join(name)).map_err(|e| EvalError::BadProblem {
                problem: problem_id.clone(),
                message: format!("{name}: {e}"),
            })
        };
        let spec_text = read("spec.txt")?;
        let golden_test_src = read("test.v")?;
        if golden_test_src.trim().is_empty() {
            return Err(EvalError::BadProblem {
                problem: problem_id,
                message: "test.v is empty".into(),
            });
        }
        let interface_stub = fs::read_to_string(entry.join("stub.v")).ok();
        problems.push(BenchmarkProblem {
            problem_id,
            spec_text,
            golden_test_src,
            interface_stub,
        });
    }
    Ok(problems)
}

/// Load completion sets from JSONL; every problem id must be unique and
/// carry at least one sample.
pub fn load_completion_sets(path: &Path) -> Result<Vec<CompletionSet>, EvalError> {
    let bad = |message: String| EvalError::BadFile {
        path: path.to_path_buf(),
        message,
    };
    let file = fs::File::open(path).map_err(|e| bad(e.to_string()))?;
    let mut sets: Vec<CompletionSet> = Vec::new();
    let mut seen: HashMap<String, ()> = HashMap::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| bad(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let set: CompletionSet =
            serde_json::from_str(&line).map_err(|e| bad(format!("line {}: {e}", idx + 1)))?;
        if set.completions.is_empty() {
            return Err(bad(format!(
                "line {}: problem \"{}\" has no samples",
                idx + 1,
                set.problem_id
            )));
        }
        if seen.insert(set.problem_id.clone(), ()).is_some() {
            return Err(EvalError::DuplicateCompletions(set.problem_id));
        }
        sets.push(set);
    }
    Ok(sets)
}

fn run_one_sample(
    completion: &str,
    golden_test: &str,
    cfg: &ToolchainConfig,
    mode: EvalMode,
    label: &str,
) -> Result<SimOutcome, SimError> {
    match mode {
        EvalMode::Syntax => sim::compile_only(completion, golden_test, cfg, label),
        EvalMode::Functional => sim::run_verilog_test(completion, golden_test, cfg, label),
    }
}

fn tally(problem_id: &str, mode: EvalMode, outcomes: Vec<SimOutcome>) -> ProblemEval {
    let compiled = outcomes
        .iter()
        .filter(|o| o.status != SimStatus::CompileError)
        .count() as u32;
    let passed = outcomes.iter().filter(|o| o.is_pass()).count() as u32;
    match mode {
        EvalMode::Syntax => ProblemEval {
            problem_id: problem_id.to_string(),
            n: outcomes.len() as u32,
            // in syntax mode pass means "compiled", so passed == compiled
            c_syntax: passed,
            c_functional: None,
            outcomes,
        },
        EvalMode::Functional => ProblemEval {
            problem_id: problem_id.to_string(),
            n: outcomes.len() as u32,
            c_syntax: compiled,
            c_functional: Some(passed),
            outcomes,
        },
    }
}

/// Evaluate the completions of a single problem, samples in parallel up to
/// `workers`.
pub fn evaluate_problem(
    problem: &BenchmarkProblem,
    completions: &CompletionSet,
    cfg: &ToolchainConfig,
    mode: EvalMode,
    workers: usize,
) -> Result<ProblemEval, EvalError> {
    if problem.problem_id != completions.problem_id {
        return Err(EvalError::UnknownProblem(completions.problem_id.clone()));
    }
    cfg.validate()?;
    let indexed: Vec<(usize, &String)> = completions.completions.iter().enumerate().collect();
    let results = exec::map(&indexed, workers, |(idx, completion)| {
        let label = format!("{}-s{}", problem.problem_id, idx);
        run_one_sample(completion, &problem.golden_test_src, cfg, mode, &label)
    });
    let outcomes = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(tally(&problem.problem_id, mode, outcomes))
}

/// Evaluate a whole benchmark and aggregate pass@k for the requested ks.
///
/// All (problem, sample) jobs are flattened into one parallel batch;
/// aggregation afterwards is a sequential fold so the mean is exactly the
/// mean of per-problem values.
pub fn evaluate_benchmark(
    problems: &[BenchmarkProblem],
    completion_sets: &[CompletionSet],
    cfg: &ToolchainConfig,
    ks: &[u32],
    mode: EvalMode,
    workers: usize,
) -> Result<EvalReport, EvalError> {
    cfg.validate()?;
    let by_id: HashMap<&str, &CompletionSet> = {
        let mut map = HashMap::new();
        for set in completion_sets {
            if map.insert(set.problem_id.as_str(), set).is_some() {
                return Err(EvalError::DuplicateCompletions(set.problem_id.clone()));
            }
        }
        map
    };
    for set in completion_sets {
        if !problems.iter().any(|p| p.problem_id == set.problem_id) {
            return Err(EvalError::UnknownProblem(set.problem_id.clone()));
        }
    }
    let mut expected_n = None;
    let mut paired: Vec<(&BenchmarkProblem, &CompletionSet)> = Vec::with_capacity(problems.len());
    for problem in problems {
        let set = by_id
            .get(problem.problem_id.as_str())
            .ok_or_else(|| EvalError::MissingCompletions(problem.problem_id.clone()))?;
        let n = set.completions.len();
        match expected_n {
            None => expected_n = Some(n),
            Some(expected) if expected != n => {
                return Err(EvalError::NonUniformN {
                    problem: problem.problem_id.clone(),
                    n,
                    expected,
                });
            }
            Some(_) => {}
        }
        paired.push((problem, set));
    }
    let n = expected_n.unwrap_or(0) as u32;
    for &k in ks {
        if k == 0 || k > n {
            return Err(EvalError::InvalidPassAtK { n, c: 0, k });
        }
    }

    // flatten to (problem index, sample index) jobs and run one batch
    let jobs: Vec<(usize, usize)> = paired
        .iter()
        .enumerate()
        .flat_map(|(p, (_, set))| (0..set.completions.len()).map(move |s| (p, s)))
        .collect();
    let results = exec::map(&jobs, workers, |&(p, s)| {
        let (problem, set) = paired[p];
        let label = format!("{}-s{}", problem.problem_id, s);
        run_one_sample(
            &set.completions[s],
            &problem.golden_test_src,
            cfg,
            mode,
            &label,
        )
    });

    let mut per_problem: Vec<Vec<SimOutcome>> = vec![Vec::new(); paired.len()];
    for (&(p, _), result) in jobs.iter().zip(results) {
        per_problem[p].push(result?);
    }
    let problems_eval: Vec<ProblemEval> = paired
        .iter()
        .zip(per_problem)
        .map(|((problem, _), outcomes)| tally(&problem.problem_id, mode, outcomes))
        .collect();

    let mut pass_curves = BTreeMap::new();
    let syntax_counts: Vec<(u32, u32)> = problems_eval.iter().map(|p| (p.n, p.c_syntax)).collect();
    pass_curves.insert("syntax".to_string(), curve(&syntax_counts, ks)?);
    if mode == EvalMode::Functional {
        let functional_counts: Vec<(u32, u32)> = problems_eval
            .iter()
            .map(|p| (p.n, p.c_functional.unwrap_or(0)))
            .collect();
        pass_curves.insert("functional".to_string(), curve(&functional_counts, ks)?);
    }

    Ok(EvalReport {
        mode,
        n,
        ks: ks.to_vec(),
        problems: problems_eval,
        pass_at_k: pass_curves,
    })
}

fn curve(counts: &[(u32, u32)], ks: &[u32]) -> Result<BTreeMap<u32, f64>, EvalError> {
    ks.iter()
        .map(|&k| aggregate_pass_at_k(counts, k).map(|v| (k, v)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pass_at_k_no_correct_samples() {
        for k in 1..=10 {
            assert_eq!(pass_at_k(10, 0, k).unwrap(), 0.0);
        }
    }

    #[test]
    fn pass_at_k_all_correct() {
        for k in 1..=10 {
            assert_eq!(pass_at_k(10, 10, k).unwrap(), 1.0);
        }
    }

    #[test]
    fn pass_at_k_exact_fraction() {
        // 1 - C(7,5)/C(10,5) = 1 - 21/252 = 11/12
        let got = pass_at_k(10, 3, 5).unwrap();
        assert!((got - 11.0 / 12.0).abs() < 1e-12, "got {got}");
    }

    #[test]
    fn pass_at_k_k_equals_n() {
        for n in 1..=10 {
            for c in 0..=n {
                let expected = if c > 0 { 1.0 } else { 0.0 };
                assert_eq!(pass_at_k(n, c, n).unwrap(), expected, "n={n} c={c}");
            }
        }
    }

    #[test]
    fn pass_at_k_rejects_bad_arguments() {
        assert!(pass_at_k(10, 11, 1).is_err());
        assert!(pass_at_k(10, 5, 0).is_err());
        assert!(pass_at_k(10, 5, 11).is_err());
    }

    #[test]
    fn pass_at_k_large_n_is_finite() {
        let v = pass_at_k(10_000, 17, 100).unwrap();
        assert!(v.is_finite() && (0.0..=1.0).contains(&v));
    }

    #[test]
    fn pass_at_k_monotone_in_k_and_c() {
        for n in 1..=10u32 {
            for c in 0..=n {
                let mut prev = 0.0;
                for k in 1..=n {
                    let v = pass_at_k(n, c, k).unwrap();
                    assert!(v + 1e-15 >= prev, "n={n} c={c} k={k}");
                    prev = v;
                }
            }
            for k in 1..=n {
                let mut prev = 0.0;
                for c in 0..=n {
                    let v = pass_at_k(n, c, k).unwrap();
                    assert!(v + 1e-15 >= prev, "n={n} c={c} k={k}");
                    prev = v;
                }
            }
        }
    }

    #[test]
    fn aggregate_is_plain_mean() {
        let counts = [(10, 10), (10, 0)];
        assert_eq!(aggregate_pass_at_k(&counts, 1).unwrap(), 0.5);
        let single = [(10, 3)];
        assert!((aggregate_pass_at_k(&single, 5).unwrap() - 11.0 / 12.0).abs() < 1e-12);
    }

    #[test]
    fn completion_sets_reject_duplicates() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("completions.jsonl");
        std::fs::write(
            &path,
            concat!(
                "{\"problem_id\":\"p\",\"samples\":[\"a\"]}\n",
                "{\"problem_id\":\"p\",\"samples\":[\"b\"]}\n"
            ),
        )
        .unwrap();
        assert!(matches!(
            load_completion_sets(&path).unwrap_err(),
            EvalError::DuplicateCompletions(_)
        ));
    }

    #[test]
    fn benchmark_loader_requires_test_file() {
        let dir = tempfile::tempdir().unwrap();
        let problem = dir.path().join("p1");
        std::fs::create_dir(&problem).unwrap();
        std::fs::write(problem.join("spec.txt"), "spec").unwrap();
        assert!(matches!(
            load_benchmark(dir.path()).unwrap_err(),
            EvalError::BadProblem { .. }
        ));
        std::fs::write(problem.join("test.v"), "module tb; endmodule").unwrap();
        let problems = load_benchmark(dir.path()).unwrap();
        assert_eq!(problems.len(), 1);
        assert_eq!(problems[0].problem_id, "p1");
    }
}
