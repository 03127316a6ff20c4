//! Shared fixtures for the integration suites.
//!
//! `stub_toolchain` builds a two-script shell toolchain that honors the
//! harness's exit-code convention without needing a Verilog simulator:
//! the "compiler" rejects sources containing `SYNTAX_BOMB` and otherwise
//! concatenates design and test into the out file; the "simulator" hangs on
//! `HANG_MARKER` or on the buggy and3's `y <= a;` line (reproducing the
//! combinational-loop hang a real simulator exhibits), fails with a FAIL
//! line on `RUNTIME_BOMB`, and prints PASS otherwise.

#![allow(dead_code)]

use std::path::Path;
use std::time::Duration;

use veritriple::dataset::SpecDesignPair;
use veritriple::sim::{default_failure_patterns, ToolchainConfig};

pub const AND3_BUGGY: &str = include_str!("../fixtures/and3_buggy.v");
pub const AND3_FIXED: &str = include_str!("../fixtures/and3_fixed.v");
pub const AND3_TEST: &str = include_str!("../fixtures/tb_and3.v");
pub const AND3_SPEC: &str = "Create a Verilog module and3 with three one-bit inputs a, b, c, \
and a one-bit output y. The output should perform a bitwise AND across all three inputs using \
a procedural block.";

const COMPILE_SH: &str = r#"#!/bin/sh
# $1 design  $2 test  $3 out
if grep -q SYNTAX_BOMB "$1" "$2"; then
  echo "syntax error: unexpected SYNTAX_BOMB" >&2
  exit 1
fi
cat "$1" "$2" > "$3"
exit 0
"#;

const RUN_SH: &str = r#"#!/bin/sh
# $1 compiled out file
if grep -q HANG_MARKER "$1"; then sleep 600; fi
if grep -qF 'y <= a;' "$1"; then sleep 600; fi
if grep -q REAP_PROBE "$1"; then
  dir=$(dirname "$1")
  sleep 600 &
  echo $! > "$dir/grandchild_pid"
  echo $$ > "$dir/child_pid"
  sleep 600
fi
if grep -q RUNTIME_BOMB "$1"; then
  echo "FAIL: RUNTIME_BOMB tripped"
  exit 1
fi
echo PASS
exit 0
"#;

/// Write the stub scripts under `dir` and return a config using them, with
/// per-run workspaces under `dir/work`.
pub fn stub_toolchain(dir: &Path, timeout: Duration) -> ToolchainConfig {
    let compile = dir.join("stub_compile.sh");
    let run = dir.join("stub_run.sh");
    std::fs::write(&compile, COMPILE_SH).unwrap();
    std::fs::write(&run, RUN_SH).unwrap();
    ToolchainConfig {
        compile_cmd: format!(
            "sh {} {{design_file}} {{test_file}} {{out_file}}",
            compile.display()
        ),
        run_cmd: format!("sh {} {{out_file}}", run.display()),
        sim_timeout: timeout,
        workspace_root: dir.join("work"),
        keep_workspaces: false,
        failure_patterns: default_failure_patterns(),
    }
}

/// A teacher reply in the expected output format.
pub fn teacher_reply(design: &str, test: &str) -> String {
    serde_json::json!({ "design": design, "test": test }).to_string()
}

pub fn teacher_reply_with_explanation(explanation: &str, design: &str, test: &str) -> String {
    serde_json::json!({ "explanation": explanation, "design": design, "test": test }).to_string()
}

pub fn pair(id: &str, spec: &str, design: &str) -> SpecDesignPair {
    SpecDesignPair {
        id: id.into(),
        spec_text: spec.into(),
        design_src: design.into(),
    }
}

/// A design/test pair the stub toolchain passes.
pub fn clean_design(tag: &str) -> String {
    format!("module d_{tag}(input x, output y);\n  assign y = x;\nendmodule\n")
}

pub fn clean_test(tag: &str) -> String {
    format!("module tb_{tag};\n  initial $display(\"ok\");\nendmodule\n")
}

/// A design the stub simulator fails with a FAIL line.
pub fn bomb_design(tag: &str) -> String {
    format!("module d_{tag}; // RUNTIME_BOMB\nendmodule\n")
}

/// One JSONL line of the input-pairs schema.
pub fn pair_json(id: &str, spec: &str, design: &str) -> String {
    serde_json::json!({ "id": id, "spec": spec, "design": design }).to_string()
}

/// One JSONL line of the mock-script schema.
pub fn script_json(id: &str, attempt: serde_json::Value, reply: &str) -> String {
    serde_json::json!({ "id": id, "attempt": attempt, "reply": reply }).to_string()
}

pub fn write_lines(path: &Path, lines: &[String]) {
    let mut body = lines.join("\n");
    if !body.is_empty() {
        body.push('\n');
    }
    std::fs::write(path, body).unwrap();
}
