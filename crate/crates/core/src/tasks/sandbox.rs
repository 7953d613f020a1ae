//! Runs a candidate program through the external runner in a child process.
//!
//! The runner is invoked as `<runner...> <task_id> <workspace>` and must print
//! exactly one JSON document on stdout. The child gets its own process group so
//! a timeout kills everything it spawned.

use std::io::Read;
use std::os::unix::process::CommandExt;
use std::path::Path;
use std::process::{Child, Command, Stdio};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use serde_json::Value;
use thiserror::Error;
use wait_timeout::ChildExt;

pub const CANDIDATE_FILE: &str = "candidate.py";
const EXCERPT_CHARS: usize = 2000;

#[derive(Debug, Clone)]
pub struct RunnerOutput {
    pub document: Value,
    pub stderr: String,
    pub wall_s: f64,
}

#[derive(Debug, Clone, Error)]
pub enum ExecError {
    #[error("cannot launch runner: {0}")]
    Launch(String),
    #[error("candidate timed out after {timeout_s} s")]
    Timeout { timeout_s: f64, stderr: String },
    #[error("candidate exited with status {exit_code:?}: {stderr}")]
    Candidate { exit_code: Option<i32>, stdout: String, stderr: String },
    #[error("candidate stdout is not a single JSON document ({message})")]
    Malformed { message: String, stdout: String, stderr: String },
}

impl ExecError {
    pub fn stderr(&self) -> &str {
        match self {
            ExecError::Launch(_) => "",
            ExecError::Timeout { stderr, .. }
            | ExecError::Candidate { stderr, .. }
            | ExecError::Malformed { stderr, .. } => stderr,
        }
    }
}

/// Keeps the last `EXCERPT_CHARS` characters.
pub fn excerpt(text: &str) -> String {
    let count = text.chars().count();
    if count <= EXCERPT_CHARS {
        text.to_string()
    } else {
        text.chars().skip(count - EXCERPT_CHARS).collect()
    }
}

fn drain<R: Read + Send + 'static>(reader: Option<R>) -> JoinHandle<String> {
    std::thread::spawn(move || {
        let mut buf = Vec::new();
        if let Some(mut r) = reader {
            let _ = r.read_to_end(&mut buf);
        }
        String::from_utf8_lossy(&buf).into_owned()
    })
}

fn kill_group(child: &mut Child) {
    // SAFETY: kill(2) on our own child's process group; no memory is touched.
    unsafe {
        libc::kill(-(child.id() as libc::pid_t), libc::SIGKILL);
    }
    let _ = child.kill();
    let _ = child.wait();
}

/// Writes `program` (and any task files) into a fresh workspace and runs the
/// runner on it with a wall-clock limit.
pub fn execute_candidate(
    program: &str,
    task_id: &str,
    files: &[(String, String)],
    runner: &[String],
    timeout: Duration,
) -> Result<RunnerOutput, ExecError> {
    let (program_name, runner_args) =
        runner.split_first().ok_or_else(|| ExecError::Launch("empty runner command".into()))?;
    let workspace = tempfile::tempdir().map_err(|e| ExecError::Launch(e.to_string()))?;
    write_workspace(workspace.path(), program, files).map_err(|e| ExecError::Launch(e.to_string()))?;

    let started = Instant::now();
    let mut child = Command::new(program_name)
        .args(runner_args)
        .arg(task_id)
        .arg(workspace.path())
        .current_dir(workspace.path())
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .process_group(0)
        .spawn()
        .map_err(|e| ExecError::Launch(format!("{program_name}: {e}")))?;
    let stdout = drain(child.stdout.take());
    let stderr = drain(child.stderr.take());

    let status = match child.wait_timeout(timeout) {
        Ok(Some(status)) => status,
        Ok(None) => {
            kill_group(&mut child);
            let stderr = stderr.join().unwrap_or_default();
            return Err(ExecError::Timeout { timeout_s: timeout.as_secs_f64(), stderr: excerpt(&stderr) });
        }
        Err(e) => {
            kill_group(&mut child);
            return Err(ExecError::Launch(e.to_string()));
        }
    };
    let wall_s = started.elapsed().as_secs_f64();
    // stragglers left in the group would otherwise hold the pipes open
    // SAFETY: as in kill_group.
    unsafe {
        libc::kill(-(child.id() as libc::pid_t), libc::SIGKILL);
    }
    let stdout = stdout.join().unwrap_or_default();
    let stderr = excerpt(&stderr.join().unwrap_or_default());

    if !status.success() {
        return Err(ExecError::Candidate { exit_code: status.code(), stdout: excerpt(&stdout), stderr });
    }
    match serde_json::from_str::<Value>(stdout.trim()) {
        Ok(document) => Ok(RunnerOutput { document, stderr, wall_s }),
        Err(e) => Err(ExecError::Malformed { message: e.to_string(), stdout: excerpt(&stdout), stderr }),
    }
}

fn write_workspace(dir: &Path, program: &str, files: &[(String, String)]) -> std::io::Result<()> {
    std::fs::write(dir.join(CANDIDATE_FILE), program)?;
    for (name, content) in files {
        std::fs::write(dir.join(name), content)?;
    }
    Ok(())
}
