//! Compile-and-simulate harness for (design, test) pairs.
//!
//! Each run gets a fresh workspace directory, two phases (compile, then
//! simulate under a wall-clock timeout), and a classified outcome. The
//! toolchain is external and configurable; the defaults target Icarus
//! Verilog (`iverilog -g2012` to compile, `vvp` to run). Any drop-in pair of
//! commands honoring the exit-code convention works.
//!
//! Command templates are whitespace-tokenized before placeholder
//! substitution, so substituted paths are always single argv entries.

use std::fs;
use std::io::Read;
use std::path::PathBuf;
use std::process::{Child, Command, Stdio};
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

/// Cap on captured bytes per stream; a runaway simulation can print without
/// bound, so the rest is drained and dropped.
const MAX_CAPTURED_BYTES: usize = 1 << 20;

/// Message fed to refinement when a run is killed at the time limit. Kept
/// free of measured times so scripted runs stay byte-deterministic.
pub const TIMEOUT_MESSAGE: &str =
    "Simulation timed out: the run exceeded the time limit and was killed.";

static WORKSPACE_SEQ: AtomicU64 = AtomicU64::new(0);

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error(
        "toolchain binary \"{binary}\" not found; install it or override the command templates"
    )]
    ToolchainMissing { binary: String },
    #[error("workspace I/O error at {path}: {source}")]
    WorkspaceIo {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("command template {which} is missing its {placeholder} placeholder")]
    BadTemplate {
        which: &'static str,
        placeholder: &'static str,
    },
    #[error("sim_timeout must be positive")]
    ZeroTimeout,
}

/// External toolchain commands and run limits.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToolchainConfig {
    /// Compile command with `{design_file}`, `{test_file}`, `{out_file}`.
    pub compile_cmd: String,
    /// Simulation command with `{out_file}`.
    pub run_cmd: String,
    /// Wall-clock bound on the simulation phase.
    pub sim_timeout: Duration,
    /// Per-run workspace directories are created under this root.
    pub workspace_root: PathBuf,
    /// Keep workspaces for postmortem inspection instead of deleting them.
    pub keep_workspaces: bool,
    /// Substrings of stdout/stderr that mark a failed run even on exit 0.
    pub failure_patterns: Vec<String>,
}

impl Default for ToolchainConfig {
    fn default() -> Self {
        ToolchainConfig {
            compile_cmd: "iverilog -g2012 -o {out_file} {design_file} {test_file}".into(),
            run_cmd: "vvp {out_file}".into(),
            sim_timeout: Duration::from_secs(10),
            workspace_root: std::env::temp_dir().join("veritriple-work"),
            keep_workspaces: false,
            failure_patterns: default_failure_patterns(),
        }
    }
}

pub fn default_failure_patterns() -> Vec<String> {
    vec!["$fatal".into(), "FAIL".into(), "Error:".into()]
}

impl ToolchainConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.sim_timeout.is_zero() {
            return Err(SimError::ZeroTimeout);
        }
        for placeholder in ["{design_file}", "{test_file}", "{out_file}"] {
            if !self.compile_cmd.contains(placeholder) {
                return Err(SimError::BadTemplate {
                    which: "compile_cmd",
                    placeholder,
                });
            }
        }
        if !self.run_cmd.contains("{out_file}") {
            return Err(SimError::BadTemplate {
                which: "run_cmd",
                placeholder: "{out_file}",
            });
        }
        Ok(())
    }
}

/// Final status of one compile+simulate run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimStatus {
    Pass,
    CompileError,
    RuntimeFail,
    Timeout,
}

/// Classified result of one compile+simulate run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOutcome {
    pub status: SimStatus,
    pub stdout: String,
    pub stderr: String,
    pub exit_code: Option<i32>,
    /// Wall-clock seconds for the phase that decided the status.
    pub wall_time: f64,
}

impl SimOutcome {
    pub fn is_pass(&self) -> bool {
        self.status == SimStatus::Pass
    }

    /// The error text fed back to refinement: stderr then stdout, with a
    /// fixed banner for timeouts (a hung simulation often prints nothing).
    /// Truncation to the excerpt cap happens in the prompts module.
    pub fn error_text(&self) -> String {
        let mut text = String::new();
        if self.status == SimStatus::Timeout {
            text.push_str(TIMEOUT_MESSAGE);
            text.push('\n');
        }
        text.push_str(&self.stderr);
        text.push_str(&self.stdout);
        text
    }
}

/// Classify a completed (non-timeout) simulation: failure on nonzero exit or
/// on any failure pattern in either stream, otherwise pass. A `None` exit
/// code means the process died on a signal, which is also a failure.
pub fn classify_outcome(
    exit_code: Option<i32>,
    stdout: &str,
    stderr: &str,
    failure_patterns: &[String],
) -> SimStatus {
    if exit_code != Some(0) {
        return SimStatus::RuntimeFail;
    }
    let tainted = failure_patterns
        .iter()
        .any(|p| stdout.contains(p.as_str()) || stderr.contains(p.as_str()));
    if tainted {
        SimStatus::RuntimeFail
    } else {
        SimStatus::Pass
    }
}

struct Workspace {
    dir: PathBuf,
    keep: bool,
}

impl Workspace {
    fn create(cfg: &ToolchainConfig, label: &str) -> Result<Workspace, SimError> {
        let seq = WORKSPACE_SEQ.fetch_add(1, Ordering::Relaxed);
        let name = format!("{}-p{}-{}", sanitize_label(label), std::process::id(), seq);
        let dir = cfg.workspace_root.join(name);
        fs::create_dir_all(&dir).map_err(|e| SimError::WorkspaceIo {
            path: dir.clone(),
            source: e,
        })?;
        Ok(Workspace {
            dir,
            keep: cfg.keep_workspaces,
        })
    }

    fn write(&self, name: &str, contents: &str) -> Result<PathBuf, SimError> {
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|e| SimError::WorkspaceIo {
            path: path.clone(),
            source: e,
        })?;
        Ok(path)
    }
}

impl Drop for Workspace {
    fn drop(&mut self) {
        if !self.keep {
            let _ = fs::remove_dir_all(&self.dir);
        }
    }
}

/// Keep workspace names path-safe; ids can contain anything.
fn sanitize_label(label: &str) -> String {
    let mut out: String = label
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '.' || c == '_' || c == '-' {
                c
            } else {
                '_'
            }
        })
        .take(64)
        .collect();
    if out.is_empty() {
        out.push('x');
    }
    out
}

fn build_argv(template: &str, substitutions: &[(&str, &str)]) -> Vec<String> {
    template
        .split_whitespace()
        .map(|token| {
            let mut token = token.to_string();
            for (placeholder, value) in substitutions {
                if token.contains(placeholder) {
                    token = token.replace(placeholder, value);
                }
            }
            token
        })
        .collect()
}

struct RawRun {
    stdout: String,
    stderr: String,
    exit_code: Option<i32>,
    wall_time: f64,
    timed_out: bool,
}

/// Run one phase. The child gets its own process group so a timeout kill
/// reaps the whole tree, grandchildren included.
fn run_command(argv: &[String], timeout: Option<Duration>) -> Result<RawRun, SimError> {
    use std::os::unix::process::CommandExt;

    let (program, args) = argv.split_first().expect("non-empty argv");
    let mut command = Command::new(program);
    command
        .args(args)
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .process_group(0);
    let start = Instant::now();
    let mut child = command.spawn().map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            SimError::ToolchainMissing {
                binary: program.clone(),
            }
        } else {
            SimError::WorkspaceIo {
                path: PathBuf::from(program),
                source: e,
            }
        }
    })?;

    let stdout_reader = capture_stream(child.stdout.take());
    let stderr_reader = capture_stream(child.stderr.take());

    let (exit_code, timed_out) = match timeout {
        None => {
            let status = child.wait().map_err(|e| SimError::WorkspaceIo {
                path: PathBuf::from(program),
                source: e,
            })?;
            (status.code(), false)
        }
        Some(limit) => wait_with_timeout(&mut child, start, limit)?,
    };

    let wall_time = start.elapsed().as_secs_f64();
    let stdout = stdout_reader.join().unwrap_or_default();
    let stderr = stderr_reader.join().unwrap_or_default();
    Ok(RawRun {
        stdout,
        stderr,
        exit_code,
        wall_time,
        timed_out,
    })
}

fn wait_with_timeout(
    child: &mut Child,
    start: Instant,
    limit: Duration,
) -> Result<(Option<i32>, bool), SimError> {
    loop {
        if let Some(status) = child.try_wait().map_err(|e| SimError::WorkspaceIo {
            path: PathBuf::from("<child>"),
            source: e,
        })? {
            return Ok((status.code(), false));
        }
        if start.elapsed() >= limit {
            kill_process_group(child);
            let _ = child.wait();
            return Ok((None, true));
        }
        std::thread::sleep(Duration::from_millis(5));
    }
}

fn kill_process_group(child: &Child) {
    // The child was spawned with process_group(0), so its pid is the pgid.
    let pgid = child.id() as libc::pid_t;
    unsafe {
        libc::kill(-pgid, libc::SIGKILL);
    }
}

/// Drain a pipe on its own thread (avoids deadlock when the child fills the
/// pipe), keeping at most `MAX_CAPTURED_BYTES`.
fn capture_stream<R: Read + Send + 'static>(stream: Option<R>) -> std::thread::JoinHandle<String> {
    std::thread::spawn(move || {
        let mut captured = Vec::new();
        if let Some(mut stream) = stream {
            let mut buf = [0u8; 8192];
            loop {
                match stream.read(&mut buf) {
                    Ok(0) | Err(_) => break,
                    Ok(n) => {
                        let room = MAX_CAPTURED_BYTES.saturating_sub(captured.len());
                        captured.extend_from_slice(&buf[..n.min(room)]);
                    }
                }
            }
        }
        String::from_utf8_lossy(&captured).into_owned()
    })
}

fn compile_phase(
    workspace: &Workspace,
    design_src: &str,
    test_src: &str,
    cfg: &ToolchainConfig,
) -> Result<(PathBuf, Option<SimOutcome>), SimError> {
    let design_file = workspace.write("design.v", design_src)?;
    let test_file = workspace.write("test.v", test_src)?;
    let out_file = workspace.dir.join("sim.out");
    let argv = build_argv(
        &cfg.compile_cmd,
        &[
            ("{design_file}", design_file.to_str().unwrap_or_default()),
            ("{test_file}", test_file.to_str().unwrap_or_default()),
            ("{out_file}", out_file.to_str().unwrap_or_default()),
        ],
    );
    let run = run_command(&argv, None)?;
    if run.exit_code != Some(0) {
        let outcome = SimOutcome {
            status: SimStatus::CompileError,
            stdout: run.stdout,
            stderr: run.stderr,
            exit_code: run.exit_code,
            wall_time: run.wall_time,
        };
        return Ok((out_file, Some(outcome)));
    }
    Ok((out_file, None))
}

/// Compile and simulate a (design, test) pair in a fresh workspace.
///
/// `label` goes into the workspace directory name (example id plus attempt
/// index by convention) so kept workspaces are easy to find.
pub fn run_verilog_test(
    design_src: &str,
    test_src: &str,
    cfg: &ToolchainConfig,
    label: &str,
) -> Result<SimOutcome, SimError> {
    cfg.validate()?;
    let workspace = Workspace::create(cfg, label)?;
    let (out_file, compile_failure) = compile_phase(&workspace, design_src, test_src, cfg)?;
    if let Some(outcome) = compile_failure {
        return Ok(outcome);
    }
    let argv = build_argv(
        &cfg.run_cmd,
        &[("{out_file}", out_file.to_str().unwrap_or_default())],
    );
    let run = run_command(&argv, Some(cfg.sim_timeout))?;
    if run.timed_out {
        return Ok(SimOutcome {
            status: SimStatus::Timeout,
            stdout: run.stdout,
            stderr: run.stderr,
            exit_code: None,
            wall_time: run.wall_time,
        });
    }
    let status = classify_outcome(
        run.exit_code,
        &run.stdout,
        &run.stderr,
        &cfg.failure_patterns,
    );
    Ok(SimOutcome {
        status,
        stdout: run.stdout,
        stderr: run.stderr,
        exit_code: run.exit_code,
        wall_time: run.wall_time,
    })
}

/// Compile only (syntax checking). Pass means the pair compiled cleanly;
/// warnings on exit 0 still count as pass.
pub fn compile_only(
    design_src: &str,
    test_src: &str,
    cfg: &ToolchainConfig,
    label: &str,
) -> Result<SimOutcome, SimError> {
    cfg.validate()?;
    let workspace = Workspace::create(cfg, label)?;
    let (_, compile_failure) = compile_phase(&workspace, design_src, test_src, cfg)?;
    Ok(compile_failure.unwrap_or(SimOutcome {
        status: SimStatus::Pass,
        stdout: String::new(),
        stderr: String::new(),
        exit_code: Some(0),
        wall_time: 0.0,
    }))
}
