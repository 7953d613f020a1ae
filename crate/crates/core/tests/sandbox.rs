//! Candidate execution through a runner, using `sh` scripts in place of the
//! Python shim. The runner below executes `candidate.py` as a shell script with
//! the task id and workspace as its arguments.

use std::time::{Duration, Instant};

use serde_json::json;
use stratevo_core::tasks::{
    execute_candidate, EvaluatorConfig, ExecError, Failure, Task, TaskConfig, CANDIDATE_FILE,
};

fn runner() -> Vec<String> {
    ["sh", "-c", "exec sh \"$2/candidate.py\" \"$1\" \"$2\"", "runner"].iter().map(|s| s.to_string()).collect()
}

fn exec(program: &str, timeout_s: f64) -> Result<stratevo_core::tasks::RunnerOutput, ExecError> {
    execute_candidate(program, "circle_packing_square", &[], &runner(), Duration::from_secs_f64(timeout_s))
}

const FOUR_CIRCLES: &str =
    r#"echo '{"placement": {"circles": [[0.25,0.25,0.25],[0.25,0.75,0.25],[0.75,0.25,0.25],[0.75,0.75,0.25]]}}'"#;

#[test]
fn four_circle_fixture_round_trips_to_fitness_one() {
    let task = Task::new(TaskConfig::CirclePackingSquare { n: 4 }).unwrap();
    let evaluator = EvaluatorConfig::Subprocess { runner: runner(), timeout_s: 10.0 }.build();
    let result = evaluator.evaluate(FOUR_CIRCLES, &task);
    assert_eq!(result.fitness, Some(1.0), "{result:?}");
    assert!(result.failure.is_none());
    assert!(result.wall_s > 0.0);
}

#[test]
fn runner_receives_task_id_and_workspace() {
    let program = format!(
        "test -f \"$2/{CANDIDATE_FILE}\" || exit 3\nprintf '{{\"task\": \"%s\"}}' \"$1\""
    );
    let out = exec(&program, 10.0).unwrap();
    assert_eq!(out.document, json!({"task": "circle_packing_square"}));
}

#[test]
fn instance_task_workspace_carries_prefixes() {
    let task = Task::new(TaskConfig::IntegerSequences { instances: 3, seed: 1 }).unwrap();
    let program = "cat \"$2/instances.json\" | sed 's/^/{\"echo\": /; s/$/}/'";
    let out = execute_candidate(program, task.id(), &task.workspace_files(), &runner(), Duration::from_secs(10)).unwrap();
    let prefixes: Vec<Vec<i64>> = task.instances().iter().map(|i| i.prefix.clone()).collect();
    assert_eq!(out.document["echo"], json!(prefixes));
}

#[test]
fn candidate_prints_on_stderr_are_kept_out_of_the_document() {
    let out = exec("echo chatter >&2\necho '{\"answers\": [1]}'", 10.0).unwrap();
    assert_eq!(out.document, json!({"answers": [1]}));
    assert!(out.stderr.contains("chatter"));
}

#[test]
fn exception_exit_maps_to_candidate_error() {
    let err = exec("echo 'Traceback: boom' >&2\nexit 1", 10.0).unwrap_err();
    match err {
        ExecError::Candidate { exit_code, stdout, stderr } => {
            assert_eq!(exit_code, Some(1));
            assert!(stdout.is_empty());
            assert!(stderr.contains("Traceback"));
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn protocol_violation_exit_two_keeps_error_document() {
    let err = exec("echo '{\"error\": \"missing entry function construct_packing\"}'\nexit 2", 10.0).unwrap_err();
    match err {
        ExecError::Candidate { exit_code: Some(2), stdout, .. } => assert!(stdout.contains("construct_packing")),
        other => panic!("unexpected {other:?}"),
    }
    let task = Task::new(TaskConfig::CirclePackingSquare { n: 4 }).unwrap();
    let evaluator = EvaluatorConfig::Subprocess { runner: runner(), timeout_s: 10.0 }.build();
    let result = evaluator.evaluate("exit 2", &task);
    assert!(matches!(result.failure, Some(Failure::Crash { exit_code: Some(2), .. })));
    assert_eq!(result.fitness, None);
}

#[test]
fn garbage_before_the_document_is_malformed() {
    let err = exec("echo loading...\necho '{\"answers\": []}'", 10.0).unwrap_err();
    assert!(matches!(err, ExecError::Malformed { .. }), "{err:?}");
}

#[test]
fn two_documents_are_malformed() {
    let err = exec("echo '{}'\necho '{}'", 10.0).unwrap_err();
    assert!(matches!(err, ExecError::Malformed { .. }), "{err:?}");
}

#[test]
fn empty_stdout_is_malformed() {
    let err = exec("true", 10.0).unwrap_err();
    assert!(matches!(err, ExecError::Malformed { .. }), "{err:?}");
}

#[test]
fn looping_candidate_is_killed_at_timeout() {
    let started = Instant::now();
    let err = exec("while :; do :; done", 2.0).unwrap_err();
    let elapsed = started.elapsed().as_secs_f64();
    assert!(matches!(err, ExecError::Timeout { .. }), "{err:?}");
    assert!(elapsed < 2.5, "took {elapsed}s");
}

#[test]
fn background_children_do_not_outlive_the_timeout() {
    let started = Instant::now();
    let err = exec("sleep 30 &\nsleep 30", 1.0).unwrap_err();
    assert!(matches!(err, ExecError::Timeout { .. }));
    assert!(started.elapsed().as_secs_f64() < 1.5);
}

#[test]
fn background_children_after_success_do_not_block() {
    let started = Instant::now();
    let out = exec("sleep 30 &\necho '{\"ok\": true}'", 10.0).unwrap();
    assert_eq!(out.document, json!({"ok": true}));
    assert!(started.elapsed().as_secs_f64() < 5.0);
}

#[test]
fn missing_runner_is_a_launch_failure() {
    let runner = vec!["/nonexistent/stratevo-runner".to_string()];
    let err = execute_candidate("", "circle_packing_square", &[], &runner, Duration::from_secs(1)).unwrap_err();
    assert!(matches!(err, ExecError::Launch(_)));
    let task = Task::new(TaskConfig::CirclePackingSquare { n: 4 }).unwrap();
    let evaluator = EvaluatorConfig::Subprocess { runner, timeout_s: 1.0 }.build();
    assert!(matches!(evaluator.evaluate("", &task).failure, Some(Failure::Launch { .. })));
}

#[test]
fn timeout_maps_to_failure() {
    let task = Task::new(TaskConfig::CirclePackingSquare { n: 4 }).unwrap();
    let evaluator = EvaluatorConfig::Subprocess { runner: runner(), timeout_s: 0.5 }.build();
    let result = evaluator.evaluate("sleep 5", &task);
    assert_eq!(result.failure, Some(Failure::Timeout { timeout_s: 0.5 }));
}
