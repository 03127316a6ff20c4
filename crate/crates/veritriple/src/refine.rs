//! Per-example generate/simulate/refine loop and corpus-level orchestration.
//!
//! Attempt 1 asks the teacher for a unit test (and possibly a revised
//! design); each later attempt feeds the previous design, test and error
//! back through the refinement prompt. An example finishes as a validated
//! triple on the first pass, as a reject after `max_attempts` failures, or
//! as an abort when the teacher endpoint stays unavailable. Unparseable
//! teacher replies consume an attempt; the parse diagnostic becomes the
//! error fed forward.

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};

use crate::dataset::{
    existing_ids, AttemptOutcome, AttemptRecord, DatasetError, JsonlAppender, RejectRecord,
    SpecDesignPair, ValidatedTriple,
};
use crate::exec;
use crate::prompts::{self, truncate_error};
use crate::sim::{self, SimError, SimStatus, ToolchainConfig};
use crate::teacher::{Teacher, TeacherCall, TeacherError};

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Teacher(#[from] TeacherError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("prompt rendering failed for example \"{id}\": {source}")]
    Prompt {
        id: String,
        #[source]
        source: prompts::PromptError,
    },
}

/// Loop bounds and orchestration knobs.
#[derive(Debug, Clone)]
pub struct LoopConfig {
    /// Maximum teacher attempts per example (the loop bound T).
    pub max_attempts: u32,
    pub workers: usize,
    /// Skip ids already present in either output file.
    pub resume: bool,
    /// Require teacher replies to be a bare JSON object (mock-driven tests);
    /// the default tolerates fences and surrounding prose.
    pub strict_parse: bool,
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig {
            max_attempts: 5,
            workers: 1,
            resume: false,
            strict_parse: false,
        }
    }
}

/// Terminal state of one example.
#[derive(Debug, Clone)]
pub enum ExampleResult {
    Validated(ValidatedTriple),
    Rejected(RejectRecord),
    /// Teacher outage mid-example; neither output file records it, so a
    /// resumed run picks it up again.
    Aborted {
        id: String,
        reason: String,
    },
}

/// Run the bounded generate/simulate/refine loop for one example.
pub fn augment_example(
    pair: &SpecDesignPair,
    teacher: &dyn Teacher,
    sim_cfg: &ToolchainConfig,
    loop_cfg: &LoopConfig,
) -> Result<ExampleResult, PipelineError> {
    debug_assert!(loop_cfg.max_attempts >= 1);
    let mut history: Vec<AttemptRecord> = Vec::new();
    // Last successfully parsed (design, test); present from the first
    // parseable reply onwards.
    let mut current: Option<(String, String)> = None;
    let mut last_error = String::new();

    for attempt in 1..=loop_cfg.max_attempts {
        // Until a reply has parsed there is no (design, test) to refine, so
        // such attempts fall back to the generation prompt.
        let (system, user) = match &current {
            None => prompts::render_gen_test(&pair.spec_text, &pair.design_src),
            Some((design, test)) => {
                prompts::render_refine(&pair.spec_text, design, test, &last_error)
            }
        }
        .map_err(|source| PipelineError::Prompt {
            id: pair.id.clone(),
            source,
        })?;
        let expect_explanation = current.is_some();

        let raw = match teacher.invoke(&TeacherCall {
            system: &system,
            user: &user,
            example_id: &pair.id,
            attempt,
        }) {
            Ok(raw) => raw,
            Err(err) if err.aborts_example_only() => {
                return Ok(ExampleResult::Aborted {
                    id: pair.id.clone(),
                    reason: err.to_string(),
                });
            }
            Err(err) => return Err(err.into()),
        };

        let parsed = if loop_cfg.strict_parse {
            prompts::parse_teacher_response_strict(&raw, expect_explanation)
        } else {
            prompts::parse_teacher_response(&raw, expect_explanation)
        };
        match parsed {
            Err(parse_err) => {
                let diagnostic = parse_err.to_string();
                let (design, test) = current.clone().unwrap_or_default();
                history.push(AttemptRecord {
                    attempt_index: attempt,
                    outcome: AttemptOutcome::ParseFailure,
                    error_excerpt: truncate_error(&diagnostic).into_owned(),
                    design_src: design,
                    test_src: test,
                    teacher_raw: raw,
                });
                last_error = diagnostic;
            }
            Ok(response) => {
                let label = format!("{}-a{}", pair.id, attempt);
                let outcome = sim::run_verilog_test(
                    &response.design_src,
                    &response.test_src,
                    sim_cfg,
                    &label,
                )?;
                let excerpt = truncate_error(&outcome.error_text()).into_owned();
                let passed = outcome.is_pass();
                history.push(AttemptRecord {
                    attempt_index: attempt,
                    outcome: outcome.status.into(),
                    error_excerpt: if passed {
                        String::new()
                    } else {
                        excerpt.clone()
                    },
                    design_src: response.design_src.clone(),
                    test_src: response.test_src.clone(),
                    teacher_raw: raw,
                });
                if passed {
                    return Ok(ExampleResult::Validated(ValidatedTriple {
                        id: pair.id.clone(),
                        spec_text: pair.spec_text.clone(),
                        design_src: response.design_src,
                        test_src: response.test_src,
                        attempts: attempt,
                        history,
                    }));
                }
                last_error = excerpt;
                current = Some((response.design_src, response.test_src));
            }
        }
    }

    let (last_design_src, last_test_src) = current.unwrap_or_default();
    Ok(ExampleResult::Rejected(RejectRecord {
        id: pair.id.clone(),
        spec_text: pair.spec_text.clone(),
        last_design_src,
        last_test_src,
        attempts: loop_cfg.max_attempts,
        history,
    }))
}

/// Output files of a corpus run.
#[derive(Debug, Clone)]
pub struct OutputPaths {
    pub triples: PathBuf,
    pub rejects: PathBuf,
}

/// Exact counts for the processed (non-skipped) examples.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize)]
pub struct CorpusSummary {
    pub validated: usize,
    pub rejected: usize,
    pub aborted: usize,
    /// Ids skipped because resume found them in an output file.
    pub skipped: usize,
}

/// Run the loop over a corpus with up to `workers` examples in flight,
/// appending triples and rejects as examples complete.
///
/// With `workers == 1` examples run in input order, making output files
/// byte-deterministic for a fixed script; with more workers append order
/// follows completion order, which is fine because each line is atomic.
pub fn augment_corpus(
    pairs: &[SpecDesignPair],
    teacher: &dyn Teacher,
    sim_cfg: &ToolchainConfig,
    loop_cfg: &LoopConfig,
    out: &OutputPaths,
) -> Result<CorpusSummary, PipelineError> {
    sim_cfg.validate()?;
    let (todo, skipped) = if loop_cfg.resume {
        let mut done = existing_ids(&out.triples)?;
        done.extend(existing_ids(&out.rejects)?);
        let todo: Vec<&SpecDesignPair> = pairs.iter().filter(|p| !done.contains(&p.id)).collect();
        let skipped = pairs.len() - todo.len();
        (todo, skipped)
    } else {
        (pairs.iter().collect(), 0)
    };

    let triples_out = if loop_cfg.resume {
        JsonlAppender::append_to(&out.triples)?
    } else {
        JsonlAppender::create(&out.triples)?
    };
    let rejects_out = if loop_cfg.resume {
        JsonlAppender::append_to(&out.rejects)?
    } else {
        JsonlAppender::create(&out.rejects)?
    };

    let validated = AtomicUsize::new(0);
    let rejected = AtomicUsize::new(0);
    let aborted = AtomicUsize::new(0);

    exec::try_for_each(&todo, loop_cfg.workers, |pair| {
        match augment_example(pair, teacher, sim_cfg, loop_cfg)? {
            ExampleResult::Validated(triple) => {
                triples_out.append(&triple)?;
                validated.fetch_add(1, Ordering::Relaxed);
            }
            ExampleResult::Rejected(reject) => {
                rejects_out.append(&reject)?;
                rejected.fetch_add(1, Ordering::Relaxed);
            }
            ExampleResult::Aborted { id, reason } => {
                eprintln!("example {id} aborted: {reason}");
                aborted.fetch_add(1, Ordering::Relaxed);
            }
        }
        Ok::<(), PipelineError>(())
    })?;

    Ok(CorpusSummary {
        validated: validated.into_inner(),
        rejected: rejected.into_inner(),
        aborted: aborted.into_inner(),
        skipped,
    })
}

/// Result of re-simulating a triples file.
#[derive(Debug, Clone, Default, serde::Serialize)]
pub struct ReplayReport {
    pub total: usize,
    pub passed: usize,
    pub failures: Vec<ReplayFailure>,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct ReplayFailure {
    pub id: String,
    pub status: SimStatus,
}

impl ReplayReport {
    pub fn all_passed(&self) -> bool {
        self.passed == self.total
    }
}

/// Re-run every triple's (design, test) through the simulator and report
/// the re-pass rate. Every triple a healthy pipeline wrote re-passes.
pub fn replay_triples(
    triples: &[ValidatedTriple],
    sim_cfg: &ToolchainConfig,
    workers: usize,
) -> Result<ReplayReport, PipelineError> {
    sim_cfg.validate()?;
    let outcomes = exec::map(triples, workers, |triple| {
        let label = format!("{}-replay", triple.id);
        sim::run_verilog_test(&triple.design_src, &triple.test_src, sim_cfg, &label)
    });
    let mut report = ReplayReport {
        total: triples.len(),
        ..ReplayReport::default()
    };
    for (triple, outcome) in triples.iter().zip(outcomes) {
        let outcome = outcome?;
        if outcome.is_pass() {
            report.passed += 1;
        } else {
            report.failures.push(ReplayFailure {
                id: triple.id.clone(),
                status: outcome.status,
            });
        }
    }
    Ok(report)
}
