//! Data model and JSONL persistence for input pairs, output triples,
//! rejects, and corpus statistics.
//!
//! Corpus files are JSON Lines: one record per line, UTF-8, stable field
//! order. Input pairs use `{"id", "spec", "design"}`; validated triples and
//! rejects use `{"id", "spec", "design", "test", "attempts", "history"}`
//! where each history entry is `{"attempt", "outcome", "error"}`.

use std::collections::HashSet;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::sim::SimStatus;

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: malformed JSON record: {message}")]
    MalformedLine {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}:{line}: duplicate id \"{id}\"")]
    DuplicateId {
        path: PathBuf,
        line: usize,
        id: String,
    },
    #[error("{path}:{line}: field \"{field}\" must be non-empty")]
    EmptyField {
        path: PathBuf,
        line: usize,
        field: &'static str,
    },
    #[error("{path}:{line}: invalid triple: {message}")]
    InvalidTriple {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

impl DatasetError {
    fn io(path: &Path, source: io::Error) -> Self {
        DatasetError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// One unvalidated input example: a natural-language spec plus the RTL
/// design that is supposed to implement it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecDesignPair {
    pub id: String,
    #[serde(rename = "spec")]
    pub spec_text: String,
    #[serde(rename = "design")]
    pub design_src: String,
}

/// Outcome of one attempt in the refinement loop.
///
/// The four simulation statuses mirror [`SimStatus`]; `ParseFailure` marks an
/// attempt whose teacher reply could not be parsed into a (design, test)
/// pair. Parse failures consume an attempt like any other failure.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttemptOutcome {
    #[default]
    Pass,
    CompileError,
    RuntimeFail,
    Timeout,
    ParseFailure,
}

impl AttemptOutcome {
    pub fn is_pass(self) -> bool {
        matches!(self, AttemptOutcome::Pass)
    }
}

impl From<SimStatus> for AttemptOutcome {
    fn from(status: SimStatus) -> Self {
        match status {
            SimStatus::Pass => AttemptOutcome::Pass,
            SimStatus::CompileError => AttemptOutcome::CompileError,
            SimStatus::RuntimeFail => AttemptOutcome::RuntimeFail,
            SimStatus::Timeout => AttemptOutcome::Timeout,
        }
    }
}

impl std::fmt::Display for AttemptOutcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            AttemptOutcome::Pass => "pass",
            AttemptOutcome::CompileError => "compile_error",
            AttemptOutcome::RuntimeFail => "runtime_fail",
            AttemptOutcome::Timeout => "timeout",
            AttemptOutcome::ParseFailure => "parse_failure",
        };
        f.write_str(s)
    }
}

/// One attempt of the refinement loop.
///
/// Only `attempt`, `outcome` and `error` are persisted; the per-attempt
/// sources and the verbatim teacher reply stay in memory for debugging and
/// for the audit flow, which needs the last attempted test of a reject.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttemptRecord {
    #[serde(rename = "attempt")]
    pub attempt_index: u32,
    pub outcome: AttemptOutcome,
    #[serde(rename = "error")]
    pub error_excerpt: String,
    #[serde(skip)]
    pub design_src: String,
    #[serde(skip)]
    pub test_src: String,
    #[serde(skip)]
    pub teacher_raw: String,
}

/// A functionally validated output record: the (possibly teacher-revised)
/// design passes the stored unit test under simulation.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidatedTriple {
    pub id: String,
    #[serde(rename = "spec")]
    pub spec_text: String,
    #[serde(rename = "design")]
    pub design_src: String,
    #[serde(rename = "test")]
    pub test_src: String,
    #[serde(default = "one")]
    pub attempts: u32,
    #[serde(default)]
    pub history: Vec<AttemptRecord>,
}

fn one() -> u32 {
    1
}

/// An example the loop gave up on: `attempts == T` and no attempt passed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectRecord {
    pub id: String,
    #[serde(rename = "spec")]
    pub spec_text: String,
    #[serde(rename = "design")]
    pub last_design_src: String,
    #[serde(rename = "test")]
    pub last_test_src: String,
    pub attempts: u32,
    #[serde(default)]
    pub history: Vec<AttemptRecord>,
}

/// Load input pairs from a JSONL file.
///
/// Blank lines are skipped. Every record needs a non-empty (after trimming)
/// `id`, `spec` and `design`, and ids must be unique within the file.
/// Errors carry the 1-based line number.
pub fn load_pairs(path: &Path) -> Result<Vec<SpecDesignPair>, DatasetError> {
    let mut pairs = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    for_each_line(path, |line_no, line| {
        let pair: SpecDesignPair =
            serde_json::from_str(line).map_err(|e| DatasetError::MalformedLine {
                path: path.to_path_buf(),
                line: line_no,
                message: e.to_string(),
            })?;
        for (field, value) in [
            ("id", &pair.id),
            ("spec", &pair.spec_text),
            ("design", &pair.design_src),
        ] {
            if value.trim().is_empty() {
                return Err(DatasetError::EmptyField {
                    path: path.to_path_buf(),
                    line: line_no,
                    field,
                });
            }
        }
        if !seen.insert(pair.id.clone()) {
            return Err(DatasetError::DuplicateId {
                path: path.to_path_buf(),
                line: line_no,
                id: pair.id,
            });
        }
        pairs.push(pair);
        Ok(())
    })?;
    Ok(pairs)
}

/// Load validated triples from a JSONL file.
///
/// Pipeline-produced files always carry `attempts` and a full `history`, and
/// those are validated: `attempts == history.len()`, attempt indices strictly
/// increasing, the last entry `pass` and every earlier entry non-pass.
/// Foreign corpora that ship only `{"id","spec","design","test"}` are
/// accepted as-is (`attempts` defaults to 1, `history` to empty); `replay` is
/// the authoritative check for those.
pub fn load_triples(path: &Path) -> Result<Vec<ValidatedTriple>, DatasetError> {
    let mut triples = Vec::new();
    let mut seen: HashSet<String> = HashSet::new();
    for_each_line(path, |line_no, line| {
        let triple: ValidatedTriple =
            serde_json::from_str(line).map_err(|e| DatasetError::MalformedLine {
                path: path.to_path_buf(),
                line: line_no,
                message: e.to_string(),
            })?;
        if !seen.insert(triple.id.clone()) {
            return Err(DatasetError::DuplicateId {
                path: path.to_path_buf(),
                line: line_no,
                id: triple.id.clone(),
            });
        }
        if let Err(message) = validate_triple(&triple) {
            return Err(DatasetError::InvalidTriple {
                path: path.to_path_buf(),
                line: line_no,
                message,
            });
        }
        triples.push(triple);
        Ok(())
    })?;
    Ok(triples)
}

/// Structural invariants of a triple with a recorded history.
pub fn validate_triple(triple: &ValidatedTriple) -> Result<(), String> {
    if triple.history.is_empty() {
        return Ok(()); // foreign corpus without provenance
    }
    if triple.attempts as usize != triple.history.len() {
        return Err(format!(
            "attempts is {} but history has {} entries",
            triple.attempts,
            triple.history.len()
        ));
    }
    let mut prev = 0u32;
    for rec in &triple.history {
        if rec.attempt_index <= prev {
            return Err("attempt indices must be strictly increasing".into());
        }
        prev = rec.attempt_index;
    }
    let (last, earlier) = triple.history.split_last().expect("non-empty history");
    if !last.outcome.is_pass() {
        return Err(format!("last history entry is {}, not pass", last.outcome));
    }
    if let Some(rec) = earlier.iter().find(|r| r.outcome.is_pass()) {
        return Err(format!(
            "non-final history entry {} has outcome pass",
            rec.attempt_index
        ));
    }
    Ok(())
}

/// Write records as JSONL, one per line; an empty list yields an empty file.
pub fn write_jsonl<T: Serialize>(records: &[T], path: &Path) -> Result<(), DatasetError> {
    let file = File::create(path).map_err(|e| DatasetError::io(path, e))?;
    let mut out = BufWriter::new(file);
    for record in records {
        let line = serde_json::to_string(record).expect("serializing record");
        writeln!(out, "{line}").map_err(|e| DatasetError::io(path, e))?;
    }
    out.flush().map_err(|e| DatasetError::io(path, e))
}

/// Write validated triples to `path`, one JSON object per line.
pub fn write_triples(triples: &[ValidatedTriple], path: &Path) -> Result<(), DatasetError> {
    write_jsonl(triples, path)
}

/// Collect the set of ids already present in a triples or rejects file.
/// A missing file is an empty set, so resume works on the first run too.
pub fn existing_ids(path: &Path) -> Result<HashSet<String>, DatasetError> {
    #[derive(Deserialize)]
    struct IdOnly {
        id: String,
    }
    if !path.exists() {
        return Ok(HashSet::new());
    }
    let mut ids = HashSet::new();
    for_each_line(path, |line_no, line| {
        let rec: IdOnly = serde_json::from_str(line).map_err(|e| DatasetError::MalformedLine {
            path: path.to_path_buf(),
            line: line_no,
            message: e.to_string(),
        })?;
        ids.insert(rec.id);
        Ok(())
    })?;
    Ok(ids)
}

fn for_each_line(
    path: &Path,
    mut f: impl FnMut(usize, &str) -> Result<(), DatasetError>,
) -> Result<(), DatasetError> {
    let file = File::open(path).map_err(|e| DatasetError::io(path, e))?;
    let reader = BufReader::new(file);
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| DatasetError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        f(idx + 1, &line)?;
    }
    Ok(())
}

/// Serializing line appender shared by parallel workers.
///
/// Each `append` serializes the record, takes the lock, and writes the full
/// line plus newline in one buffered write before flushing, so concurrent
/// appends never interleave within a line. Append order across workers is
/// whatever completion order happens to be.
pub struct JsonlAppender {
    path: PathBuf,
    writer: Mutex<BufWriter<File>>,
}

impl JsonlAppender {
    /// Truncate-create the file (fresh run).
    pub fn create(path: &Path) -> Result<Self, DatasetError> {
        let file = File::create(path).map_err(|e| DatasetError::io(path, e))?;
        Ok(Self::from_file(path, file))
    }

    /// Open for appending, creating if absent (resumed run).
    pub fn append_to(path: &Path) -> Result<Self, DatasetError> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| DatasetError::io(path, e))?;
        Ok(Self::from_file(path, file))
    }

    fn from_file(path: &Path, file: File) -> Self {
        JsonlAppender {
            path: path.to_path_buf(),
            writer: Mutex::new(BufWriter::new(file)),
        }
    }

    pub fn append<T: Serialize>(&self, record: &T) -> Result<(), DatasetError> {
        let mut line = serde_json::to_string(record).expect("serializing record");
        line.push('\n');
        let mut writer = self.writer.lock().expect("appender lock");
        writer
            .write_all(line.as_bytes())
            .and_then(|()| writer.flush())
            .map_err(|e| DatasetError::io(&self.path, e))
    }
}

/// Per-category length summary. `avg` is the exact rational mean rounded
/// half-up to one decimal place, so rendering with `{:.1}` loses nothing.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LengthStats {
    pub min: u64,
    pub max: u64,
    pub avg: f64,
}

impl LengthStats {
    fn from_counts(counts: impl Iterator<Item = u64>) -> LengthStats {
        let (mut n, mut sum, mut min, mut max) = (0u64, 0u64, u64::MAX, 0u64);
        for c in counts {
            n += 1;
            sum += c;
            min = min.min(c);
            max = max.max(c);
        }
        if n == 0 {
            return LengthStats::default();
        }
        // round(10 * sum / n), half away from zero, in exact integer math
        let tenths = (20 * sum + n) / (2 * n);
        LengthStats {
            min,
            max,
            avg: tenths as f64 / 10.0,
        }
    }
}

/// Corpus size and length distributions, in the shape the stats subcommand
/// prints: spec length in words, design and test length in non-blank lines.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub count: u64,
    pub spec_words: LengthStats,
    pub design_lines: LengthStats,
    pub test_lines: LengthStats,
}

impl DatasetStats {
    /// Fixed-width table, one row per category.
    pub fn render(&self) -> String {
        let row = |name: &str, s: &LengthStats| {
            format!("{name:<16} {:>8} {:>8} {:>9.1}\n", s.min, s.max, s.avg)
        };
        let mut out = format!("count: {}\n", self.count);
        out.push_str(&format!(
            "{:<16} {:>8} {:>8} {:>9}\n",
            "category", "min", "max", "avg"
        ));
        out.push_str(&row("spec (words)", &self.spec_words));
        out.push_str(&row("design (lines)", &self.design_lines));
        out.push_str(&row("test (lines)", &self.test_lines));
        out
    }
}

/// Whitespace-delimited token count (Unicode whitespace).
pub fn word_count(text: &str) -> u64 {
    text.split_whitespace().count() as u64
}

/// Number of lines that are non-blank after trimming trailing whitespace.
pub fn line_count(src: &str) -> u64 {
    src.lines().filter(|l| !l.trim_end().is_empty()).count() as u64
}

fn measure(t: &ValidatedTriple) -> (u64, u64, u64) {
    (
        word_count(&t.spec_text),
        line_count(&t.design_src),
        line_count(&t.test_src),
    )
}

fn stats_from_measures(count: u64, measures: &[(u64, u64, u64)]) -> DatasetStats {
    DatasetStats {
        count,
        spec_words: LengthStats::from_counts(measures.iter().map(|m| m.0)),
        design_lines: LengthStats::from_counts(measures.iter().map(|m| m.1)),
        test_lines: LengthStats::from_counts(measures.iter().map(|m| m.2)),
    }
}

/// Compute corpus statistics. Empty input yields all-zero stats.
pub fn compute_stats(triples: &[ValidatedTriple]) -> DatasetStats {
    let measures: Vec<_> = triples.iter().map(measure).collect();
    stats_from_measures(triples.len() as u64, &measures)
}

/// Parallel variant of [`compute_stats`]; same result, measured in parallel.
#[cfg(feature = "parallel")]
pub fn par_compute_stats(triples: &[ValidatedTriple]) -> DatasetStats {
    use rayon::prelude::*;
    let measures: Vec<_> = triples.par_iter().map(measure).collect();
    stats_from_measures(triples.len() as u64, &measures)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair_line(id: &str) -> String {
        format!(r#"{{"id":"{id}","spec":"adder","design":"module m; endmodule"}}"#)
    }

    fn write_file(lines: &[String]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        f
    }

    #[test]
    fn load_pairs_single_record() {
        let f = write_file(&[pair_line("a")]);
        let pairs = load_pairs(f.path()).unwrap();
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].id, "a");
        assert_eq!(pairs[0].spec_text, "adder");
    }

    #[test]
    fn load_pairs_empty_file() {
        let f = write_file(&[]);
        assert!(load_pairs(f.path()).unwrap().is_empty());
    }

    #[test]
    fn load_pairs_skips_blank_lines() {
        let f = write_file(&[pair_line("a"), String::new(), "   ".into(), pair_line("b")]);
        assert_eq!(load_pairs(f.path()).unwrap().len(), 2);
    }

    #[test]
    fn load_pairs_duplicate_id() {
        let f = write_file(&[pair_line("a"), pair_line("a")]);
        let err = load_pairs(f.path()).unwrap_err();
        match err {
            DatasetError::DuplicateId { ref id, line, .. } => {
                assert_eq!(id, "a");
                assert_eq!(line, 2);
            }
            other => panic!("expected DuplicateId, got {other}"),
        }
    }

    #[test]
    fn load_pairs_reports_line_numbers() {
        let f = write_file(&[pair_line("a"), "{not json".into()]);
        let err = load_pairs(f.path()).unwrap_err();
        assert!(
            matches!(err, DatasetError::MalformedLine { line: 2, .. }),
            "{err}"
        );
    }

    #[test]
    fn load_pairs_missing_field() {
        let f = write_file(&[r#"{"id":"a","spec":"adder"}"#.into()]);
        let err = load_pairs(f.path()).unwrap_err();
        assert!(err.to_string().contains("design"), "{err}");
    }

    #[test]
    fn load_pairs_rejects_whitespace_only_fields() {
        let f = write_file(&[r#"{"id":"a","spec":"  ","design":"module m; endmodule"}"#.into()]);
        let err = load_pairs(f.path()).unwrap_err();
        assert!(
            matches!(err, DatasetError::EmptyField { field: "spec", .. }),
            "{err}"
        );
    }

    fn fixture_triple(id: &str, attempts: u32) -> ValidatedTriple {
        let mut history: Vec<AttemptRecord> = (1..attempts)
            .map(|i| AttemptRecord {
                attempt_index: i,
                outcome: AttemptOutcome::RuntimeFail,
                error_excerpt: format!("fail {i}"),
                ..AttemptRecord::default()
            })
            .collect();
        history.push(AttemptRecord {
            attempt_index: attempts,
            outcome: AttemptOutcome::Pass,
            ..AttemptRecord::default()
        });
        ValidatedTriple {
            id: id.into(),
            spec_text: "three-input and gate".into(),
            design_src: "module m;\nendmodule\n".into(),
            test_src: "module tb;\nendmodule\n".into(),
            attempts,
            history,
        }
    }

    #[test]
    fn triples_round_trip() {
        let triples = vec![
            fixture_triple("a", 1),
            fixture_triple("b", 3),
            fixture_triple("c", 2),
        ];
        let f = tempfile::NamedTempFile::new().unwrap();
        write_triples(&triples, f.path()).unwrap();
        let loaded = load_triples(f.path()).unwrap();
        assert_eq!(loaded, triples);
    }

    #[test]
    fn write_triples_empty_list_is_empty_file() {
        let f = tempfile::NamedTempFile::new().unwrap();
        write_triples(&[], f.path()).unwrap();
        assert_eq!(std::fs::metadata(f.path()).unwrap().len(), 0);
    }

    #[test]
    fn write_triples_single_line_trailing_newline() {
        let f = tempfile::NamedTempFile::new().unwrap();
        write_triples(&[fixture_triple("a", 1)], f.path()).unwrap();
        let content = std::fs::read_to_string(f.path()).unwrap();
        assert!(content.ends_with('\n'));
        assert_eq!(content.matches('\n').count(), 1);
    }

    #[test]
    fn wire_schema_field_names() {
        let line = serde_json::to_value(fixture_triple("a", 2)).unwrap();
        let obj = line.as_object().unwrap();
        for key in ["id", "spec", "design", "test", "attempts", "history"] {
            assert!(obj.contains_key(key), "missing {key}");
        }
        let entry = obj["history"][0].as_object().unwrap();
        for key in ["attempt", "outcome", "error"] {
            assert!(entry.contains_key(key), "missing history key {key}");
        }
        // bulky fields stay out of the wire format
        assert!(entry.get("design_src").is_none());
        assert_eq!(obj["history"][1]["outcome"], "pass");
    }

    #[test]
    fn load_triples_rejects_pass_before_last() {
        let mut t = fixture_triple("a", 2);
        t.history[0].outcome = AttemptOutcome::Pass;
        let f = tempfile::NamedTempFile::new().unwrap();
        write_triples(&[t], f.path()).unwrap();
        let err = load_triples(f.path()).unwrap_err();
        assert!(err.to_string().contains("pass"), "{err}");
    }

    #[test]
    fn load_triples_accepts_bare_foreign_records() {
        let f = write_file(&[
            r#"{"id":"x","spec":"s","design":"module m; endmodule","test":"module tb; endmodule"}"#
                .into(),
        ]);
        let triples = load_triples(f.path()).unwrap();
        assert_eq!(triples[0].attempts, 1);
        assert!(triples[0].history.is_empty());
    }

    #[test]
    fn appender_serializes_lines() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("out.jsonl");
        let appender = JsonlAppender::create(&path).unwrap();
        appender.append(&fixture_triple("a", 1)).unwrap();
        appender.append(&fixture_triple("b", 1)).unwrap();
        assert_eq!(load_triples(&path).unwrap().len(), 2);
    }

    #[test]
    fn stats_simple_mean() {
        let mut triples = Vec::new();
        for (id, words) in [("a", 5), ("b", 7), ("c", 9)] {
            let mut t = fixture_triple(id, 1);
            t.spec_text = vec!["w"; words].join(" ");
            triples.push(t);
        }
        let stats = compute_stats(&triples);
        assert_eq!(stats.count, 3);
        assert_eq!(stats.spec_words.min, 5);
        assert_eq!(stats.spec_words.max, 9);
        assert_eq!(stats.spec_words.avg, 7.0);
    }

    #[test]
    fn stats_blank_lines_excluded() {
        let mut t = fixture_triple("a", 1);
        t.design_src = "module m;\n\nendmodule\n".into();
        let stats = compute_stats(&[t]);
        assert_eq!(stats.design_lines.min, 2);
        assert_eq!(stats.design_lines.max, 2);
        assert_eq!(stats.design_lines.avg, 2.0);
    }

    #[test]
    fn stats_empty_input_zeroed() {
        assert_eq!(compute_stats(&[]), DatasetStats::default());
    }

    #[test]
    fn stats_counts_trailing_whitespace_lines_as_blank() {
        assert_eq!(line_count("a\n   \t\nb\n"), 2);
        // U+00A0 is Unicode whitespace, so "two\u{a0}x" is two tokens
        assert_eq!(word_count("  one\ttwo\u{a0}x three  "), 4);
    }

    #[cfg(feature = "parallel")]
    #[test]
    fn par_stats_matches_sequential() {
        let triples: Vec<_> = (0..200)
            .map(|i| {
                let mut t = fixture_triple(&format!("t{i}"), 1);
                t.spec_text = vec!["word"; (i % 17) + 1].join(" ");
                t
            })
            .collect();
        assert_eq!(compute_stats(&triples), par_compute_stats(&triples));
    }
}
