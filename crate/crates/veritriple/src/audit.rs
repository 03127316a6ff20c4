//! Corpus audit: how many ORIGINAL designs pass a pipeline-generated test?
//!
//! Samples examples uniformly without replacement, runs the full
//! generate/refine loop to obtain a final unit test for each, then simulates
//! the untouched corpus design against that test. Any design revisions the
//! loop made along the way are deliberately discarded; the measurement is
//! about the corpus as released.
//!
//! Sampling is replayable across implementations: indices come from a
//! partial Fisher-Yates shuffle driven by ChaCha20 keyed with the
//! little-endian 64-bit seed (zero-padded to 32 bytes), using rejection
//! sampling for unbiased bounded draws.

use std::path::Path;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use crate::dataset::{JsonlAppender, SpecDesignPair};
use crate::exec;
use crate::refine::{augment_example, ExampleResult, LoopConfig, PipelineError};
use crate::sim::{self, SimStatus, ToolchainConfig};
use crate::teacher::Teacher;

/// Name of the sampling algorithm recorded in reports.
pub const SAMPLER_NAME: &str = "fisher-yates/chacha20";

/// How one sampled example fared.
#[derive(Debug, Clone, Serialize)]
pub struct AuditRecord {
    pub id: String,
    /// Loop outcome for the sampled pair: validated, rejected or aborted.
    pub pipeline: &'static str,
    pub attempts: u32,
    /// Simulation status of the ORIGINAL design against the final test;
    /// absent when the pipeline aborted before producing any test.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub original_design_status: Option<SimStatus>,
    pub passed: bool,
}

/// Aggregate audit result. `rate` counts pipeline rejects in the
/// denominator (their last test still ran); `rate_validated_only` restricts
/// the denominator to examples whose loop found a passing (design, test).
/// Aborted examples are excluded from both and reported separately.
#[derive(Debug, Clone, Serialize)]
pub struct AuditReport {
    pub seed: u64,
    pub sampler: &'static str,
    pub sampled: usize,
    pub aborted: usize,
    pub evaluated: usize,
    pub passed: usize,
    pub rate: f64,
    pub validated: usize,
    pub passed_validated: usize,
    pub rate_validated_only: f64,
    pub sample_ids: Vec<String>,
}

/// Unbiased draw from `0..bound` by rejection sampling on `next_u64`.
fn uniform_below(rng: &mut ChaCha20Rng, bound: u64) -> u64 {
    debug_assert!(bound > 0);
    let zone = u64::MAX - (u64::MAX % bound);
    loop {
        let v = rng.next_u64();
        if v < zone {
            return v % bound;
        }
    }
}

/// First `sample_size` indices of a seeded partial Fisher-Yates shuffle of
/// `0..corpus_len`.
pub fn sample_indices(corpus_len: usize, sample_size: usize, seed: u64) -> Vec<usize> {
    assert!(sample_size <= corpus_len, "sample larger than corpus");
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    let mut rng = ChaCha20Rng::from_seed(key);
    let mut indices: Vec<usize> = (0..corpus_len).collect();
    for i in 0..sample_size {
        let j = i + uniform_below(&mut rng, (corpus_len - i) as u64) as usize;
        indices.swap(i, j);
    }
    indices.truncate(sample_size);
    indices
}

/// Run the audit over a seeded sample of `pairs`, writing one record per
/// sampled example to `records_path` in sample order.
pub fn audit_corpus(
    pairs: &[SpecDesignPair],
    sample_size: usize,
    seed: u64,
    teacher: &dyn Teacher,
    sim_cfg: &ToolchainConfig,
    loop_cfg: &LoopConfig,
    records_path: Option<&Path>,
) -> Result<AuditReport, PipelineError> {
    sim_cfg.validate()?;
    let sample: Vec<&SpecDesignPair> = sample_indices(pairs.len(), sample_size, seed)
        .into_iter()
        .map(|i| &pairs[i])
        .collect();

    let records: Vec<Result<AuditRecord, PipelineError>> =
        exec::map(&sample, loop_cfg.workers, |pair| {
            let (pipeline, attempts, final_test) =
                match augment_example(pair, teacher, sim_cfg, loop_cfg)? {
                    ExampleResult::Validated(triple) => {
                        ("validated", triple.attempts, Some(triple.test_src))
                    }
                    ExampleResult::Rejected(reject) => {
                        let test = if reject.last_test_src.trim().is_empty() {
                            None // every reply failed to parse; nothing to run
                        } else {
                            Some(reject.last_test_src)
                        };
                        ("rejected", reject.attempts, test)
                    }
                    ExampleResult::Aborted { .. } => ("aborted", 0, None),
                };
            let original_design_status = match final_test {
                None => None,
                Some(test) => {
                    let label = format!("{}-audit", pair.id);
                    Some(sim::run_verilog_test(&pair.design_src, &test, sim_cfg, &label)?.status)
                }
            };
            Ok(AuditRecord {
                id: pair.id.clone(),
                pipeline,
                attempts,
                original_design_status,
                passed: original_design_status == Some(SimStatus::Pass),
            })
        });
    let records = records.into_iter().collect::<Result<Vec<_>, _>>()?;

    if let Some(path) = records_path {
        let out = JsonlAppender::create(path)?;
        for record in &records {
            out.append(record)?;
        }
    }

    let aborted = records.iter().filter(|r| r.pipeline == "aborted").count();
    let evaluated = records.len() - aborted;
    let passed = records.iter().filter(|r| r.passed).count();
    let validated = records.iter().filter(|r| r.pipeline == "validated").count();
    let passed_validated = records
        .iter()
        .filter(|r| r.pipeline == "validated" && r.passed)
        .count();
    let rate = |num: usize, den: usize| {
        if den == 0 {
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    Ok(AuditReport {
        seed,
        sampler: SAMPLER_NAME,
        sampled: records.len(),
        aborted,
        evaluated,
        passed,
        rate: rate(passed, evaluated),
        validated,
        passed_validated,
        rate_validated_only: rate(passed_validated, validated),
        sample_ids: records.iter().map(|r| r.id.clone()).collect(),
    })
}
