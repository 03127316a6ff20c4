//! Teacher prompt rendering and reply parsing.
//!
//! The two prompt templates (test generation, refinement) live as plain text
//! files under `templates/` and are embedded at compile time. Substitution is
//! single-pass: a template is split into literal and slot segments once, so
//! placeholder-looking text inside a substituted value is never re-expanded.

use std::borrow::Cow;
use std::sync::OnceLock;

use serde_json::Value;

/// Head of an oversized simulator log kept verbatim (characters).
pub const ERROR_EXCERPT_HEAD: usize = 4_000;
/// Tail of an oversized simulator log kept verbatim (characters).
pub const ERROR_EXCERPT_TAIL: usize = 1_000;

const GEN_TEST_SYSTEM: &str = include_str!("../templates/gen_test.system.txt");
const GEN_TEST_USER: &str = include_str!("../templates/gen_test.user.txt");
const REFINE_SYSTEM: &str = include_str!("../templates/refine.system.txt");
const REFINE_USER: &str = include_str!("../templates/refine.user.txt");

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("template is missing placeholder {{{0}}}")]
    MissingSlot(String),
    #[error("template contains placeholder {{{0}}} more than once")]
    DuplicateSlot(String),
    #[error("no content supplied for placeholder {{{0}}}")]
    EmptyValue(String),
}

/// Parse failures for teacher replies, distinguishable so the caller can
/// decide whether to charge an attempt and re-ask.
#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum ReplyParseError {
    #[error("no JSON object found in teacher reply")]
    NoJsonFound,
    #[error("teacher reply JSON is missing field \"{0}\"")]
    MissingField(&'static str),
    #[error("teacher reply field \"{0}\" is empty")]
    EmptyField(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Literal(String),
    Slot(String),
}

/// A system prompt plus a user-prompt template with named `{slot}`s.
#[derive(Debug, Clone)]
pub struct PromptTemplate {
    system_text: String,
    segments: Vec<Segment>,
    required: Vec<String>,
}

impl PromptTemplate {
    /// Split `user_text` on the given placeholder names. Each required
    /// placeholder must occur exactly once; any other braces are literals.
    pub fn parse(
        system_text: &str,
        user_text: &str,
        required: &[&str],
    ) -> Result<PromptTemplate, PromptError> {
        let tokens: Vec<(String, &str)> = required
            .iter()
            .map(|name| (format!("{{{name}}}"), *name))
            .collect();
        let mut segments = Vec::new();
        let mut literal = String::new();
        let mut rest = user_text;
        'scan: while let Some(brace) = rest.find('{') {
            let (before, at_brace) = rest.split_at(brace);
            literal.push_str(before);
            for (token, name) in &tokens {
                if at_brace.as_bytes().starts_with(token.as_bytes()) {
                    if !literal.is_empty() {
                        segments.push(Segment::Literal(std::mem::take(&mut literal)));
                    }
                    segments.push(Segment::Slot(name.to_string()));
                    rest = &at_brace[token.len()..];
                    continue 'scan;
                }
            }
            literal.push('{');
            rest = &at_brace[1..];
        }
        literal.push_str(rest);
        if !literal.is_empty() {
            segments.push(Segment::Literal(literal));
        }
        for name in required {
            let count = segments
                .iter()
                .filter(|s| matches!(s, Segment::Slot(n) if n == name))
                .count();
            match count {
                0 => return Err(PromptError::MissingSlot(name.to_string())),
                1 => {}
                _ => return Err(PromptError::DuplicateSlot(name.to_string())),
            }
        }
        Ok(PromptTemplate {
            system_text: system_text.to_string(),
            segments,
            required: required.iter().map(|s| s.to_string()).collect(),
        })
    }

    pub fn system_text(&self) -> &str {
        &self.system_text
    }

    /// Fill every slot from `values` (name, content) pairs. Every required
    /// slot needs a non-empty value.
    pub fn render(&self, values: &[(&str, &str)]) -> Result<(String, String), PromptError> {
        let lookup = |name: &str| values.iter().find(|(n, _)| *n == name).map(|(_, v)| *v);
        for name in &self.required {
            match lookup(name) {
                None => return Err(PromptError::EmptyValue(name.clone())),
                Some(v) if v.trim().is_empty() => {
                    return Err(PromptError::EmptyValue(name.clone()))
                }
                Some(_) => {}
            }
        }
        let mut user = String::new();
        for segment in &self.segments {
            match segment {
                Segment::Literal(text) => user.push_str(text),
                Segment::Slot(name) => user.push_str(lookup(name).expect("checked above")),
            }
        }
        Ok((self.system_text.clone(), user))
    }
}

fn gen_test_template() -> &'static PromptTemplate {
    static TPL: OnceLock<PromptTemplate> = OnceLock::new();
    TPL.get_or_init(|| {
        PromptTemplate::parse(GEN_TEST_SYSTEM, GEN_TEST_USER, &["NL Spec", "design"])
            .expect("embedded gen_test template is well-formed")
    })
}

fn refine_template() -> &'static PromptTemplate {
    static TPL: OnceLock<PromptTemplate> = OnceLock::new();
    TPL.get_or_init(|| {
        PromptTemplate::parse(
            REFINE_SYSTEM,
            REFINE_USER,
            &["NL Spec", "design", "test", "error message"],
        )
        .expect("embedded refine template is well-formed")
    })
}

/// Render the test-generation prompt for an input pair.
/// Returns `(system, user)` message texts.
pub fn render_gen_test(spec: &str, design: &str) -> Result<(String, String), PromptError> {
    gen_test_template().render(&[("NL Spec", spec), ("design", design)])
}

/// Render the refinement prompt for a failing (design, test) pair.
/// `error_message` is capped to head+tail before substitution.
pub fn render_refine(
    spec: &str,
    design: &str,
    test: &str,
    error_message: &str,
) -> Result<(String, String), PromptError> {
    let err = truncate_error(error_message);
    refine_template().render(&[
        ("NL Spec", spec),
        ("design", design),
        ("test", test),
        ("error message", err.as_ref()),
    ])
}

/// Cap an error log at [`ERROR_EXCERPT_HEAD`] leading plus
/// [`ERROR_EXCERPT_TAIL`] trailing characters with a marker in between.
/// Simulator logs are unbounded under runaway loops; head+tail keeps both
/// the compile banner and the final fatal line.
pub fn truncate_error(message: &str) -> Cow<'_, str> {
    let total = message.chars().count();
    if total <= ERROR_EXCERPT_HEAD + ERROR_EXCERPT_TAIL {
        return Cow::Borrowed(message);
    }
    let head_end = message
        .char_indices()
        .nth(ERROR_EXCERPT_HEAD)
        .map(|(i, _)| i)
        .unwrap_or(message.len());
    let tail_start = message
        .char_indices()
        .nth(total - ERROR_EXCERPT_TAIL)
        .map(|(i, _)| i)
        .unwrap_or(message.len());
    let dropped = total - ERROR_EXCERPT_HEAD - ERROR_EXCERPT_TAIL;
    Cow::Owned(format!(
        "{}\n... [{} characters truncated] ...\n{}",
        &message[..head_end],
        dropped,
        &message[tail_start..]
    ))
}

/// A parsed structured teacher reply.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TeacherResponse {
    pub design_src: String,
    pub test_src: String,
    pub explanation: Option<String>,
    /// Verbatim model reply the fields were extracted from.
    pub raw: String,
}

/// Parse a teacher reply, accepting a bare JSON object, an object inside a
/// fenced code block, or the first balanced object embedded in prose that
/// carries a `"design"` key. Markdown fences wrapping the design/test string
/// values are stripped. `expect_explanation` captures the optional
/// `"explanation"` field; it is never required.
pub fn parse_teacher_response(
    raw: &str,
    expect_explanation: bool,
) -> Result<TeacherResponse, ReplyParseError> {
    let object = extract_object(raw, false)?;
    response_from_object(object, raw, expect_explanation)
}

/// Strict variant for mock-driven tests: the whole reply (trimmed) must be
/// one JSON object.
pub fn parse_teacher_response_strict(
    raw: &str,
    expect_explanation: bool,
) -> Result<TeacherResponse, ReplyParseError> {
    let object = extract_object(raw, true)?;
    response_from_object(object, raw, expect_explanation)
}

fn response_from_object(
    object: serde_json::Map<String, Value>,
    raw: &str,
    expect_explanation: bool,
) -> Result<TeacherResponse, ReplyParseError> {
    let field = |name: &'static str| -> Result<String, ReplyParseError> {
        let value = object
            .get(name)
            .and_then(Value::as_str)
            .ok_or(ReplyParseError::MissingField(name))?;
        let stripped = strip_code_fences(value);
        if stripped.trim().is_empty() {
            return Err(ReplyParseError::EmptyField(name));
        }
        Ok(stripped.to_string())
    };
    let design_src = field("design")?;
    let test_src = field("test")?;
    let explanation = if expect_explanation {
        object
            .get("explanation")
            .and_then(Value::as_str)
            .map(str::to_string)
    } else {
        None
    };
    Ok(TeacherResponse {
        design_src,
        test_src,
        explanation,
        raw: raw.to_string(),
    })
}

fn extract_object(
    raw: &str,
    strict: bool,
) -> Result<serde_json::Map<String, Value>, ReplyParseError> {
    if let Ok(Value::Object(map)) = serde_json::from_str::<Value>(raw.trim()) {
        return Ok(map);
    }
    if strict {
        return Err(ReplyParseError::NoJsonFound);
    }
    // Scan for balanced top-level objects anywhere in the reply (this covers
    // fenced code blocks and prose-wrapped JSON alike). The first one that
    // parses and carries a "design" key wins.
    let mut saw_object = false;
    let mut search_from = 0;
    while let Some(offset) = raw[search_from..].find('{') {
        let start = search_from + offset;
        match balanced_object_end(&raw[start..]) {
            Some(len) => {
                let candidate = &raw[start..start + len];
                if let Ok(Value::Object(map)) = serde_json::from_str::<Value>(candidate) {
                    saw_object = true;
                    if map.contains_key("design") {
                        return Ok(map);
                    }
                }
                search_from = start + 1;
            }
            None => search_from = start + 1,
        }
    }
    if saw_object {
        Err(ReplyParseError::MissingField("design"))
    } else {
        Err(ReplyParseError::NoJsonFound)
    }
}

/// Byte length of the balanced `{...}` starting at the first byte of `s`,
/// honoring JSON string and escape rules. `None` if it never closes.
fn balanced_object_end(s: &str) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, b) in s.bytes().enumerate() {
        if in_string {
            match (escaped, b) {
                (true, _) => escaped = false,
                (false, b'\\') => escaped = true,
                (false, b'"') => in_string = false,
                _ => {}
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'{' => depth += 1,
            b'}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(i + 1);
                }
            }
            _ => {}
        }
    }
    None
}

/// Drop a wrapping Markdown code fence (```, optionally with a language tag)
/// from a string value, leaving the payload untouched otherwise.
fn strip_code_fences(value: &str) -> &str {
    let trimmed = value.trim();
    let Some(rest) = trimmed.strip_prefix("```") else {
        return value;
    };
    // skip the fence line ("```" or "```verilog")
    let body = match rest.find('\n') {
        Some(nl) => &rest[nl + 1..],
        None => return value, // single-line fence, treat as literal
    };
    let body = body.trim_end();
    body.strip_suffix("```").map(str::trim_end).unwrap_or(body)
}
