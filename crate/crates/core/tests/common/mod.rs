//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use std::path::Path;

use rand::Rng;
use sha2::{Digest, Sha256};
use stratevo_core::engine::{RUN_LOGS, SUMMARY};
use stratevo_core::prompt::fence;
use stratevo_core::providers::{PromptKind, Scenario};
use stratevo_core::{ArchiveEntry, BehaviorVector, EntryCost, ProducedBy};

pub fn unit(v: Vec<f64>) -> Vec<f64> {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / norm).collect()
}

pub fn random_unit(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        if v.iter().map(|x| x * x).sum::<f64>() > 1e-6 {
            return unit(v);
        }
    }
}

pub fn entry(id: u64, fitness: f64, behavior: Option<Vec<bool>>, embedding: Vec<f64>) -> ArchiveEntry {
    ArchiveEntry {
        id,
        parent_id: None,
        generation: id,
        produced_by: if id == 0 { ProducedBy::Seed } else { ProducedBy::StrategyPipeline },
        fitness,
        strategy_description: format!("strategy {id}"),
        behavior_vector: behavior.map(BehaviorVector),
        cost: EntryCost::default(),
        program_source: format!("program {id}"),
        strategy_embedding: embedding,
    }
}

pub fn sa_reply(diagnosis: &str, strategy: &str, program: &str) -> String {
    format!("{}\n{}\n{}", fence("DIAGNOSIS", diagnosis), fence("STRATEGY", strategy), fence("PROGRAM", program))
}

pub fn base_reply(program: &str) -> String {
    fence("PROGRAM", program)
}

pub fn describe_reply(text: &str) -> String {
    fence("DESCRIPTION", text)
}

pub fn sln_reply(tag: &str) -> String {
    [
        fence("EFFECTIVE", &format!("effective {tag}")),
        fence("SATURATED", &format!("saturated {tag}")),
        fence("UNEXPLORED", &format!("unexplored {tag}")),
        fence("GUIDANCE", &format!("guidance {tag}")),
    ]
    .join("\n")
}

/// Answers document for the instance task with the first `correct` answers right.
pub fn answers_program(answers: &[i64], correct: usize) -> String {
    let given: Vec<i64> =
        answers.iter().enumerate().map(|(k, a)| if k < correct { *a } else { a.wrapping_add(1) }).collect();
    serde_json::json!({ "answers": given }).to_string()
}

pub fn write_scenario(path: &Path, scenario: &Scenario) {
    std::fs::write(path, serde_json::to_string_pretty(scenario).unwrap()).unwrap();
}

/// A scenario with `per_kind` replies of every kind, varied by a seeded rng.
pub fn varied_scenario(answers: &[i64], per_kind: usize, seed: u64) -> Scenario {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut s = Scenario::default();
    for k in 0..per_kind {
        let correct = rng.random_range(0..=answers.len());
        s.push(
            PromptKind::Articulate,
            sa_reply(
                &format!("diagnosis {k}"),
                &format!("strategy family {} variant {k}", k % 4),
                &answers_program(answers, correct),
            ),
        );
        let correct = rng.random_range(0..=answers.len());
        // every fifth base reply is not a JSON document, so evaluation fails
        let program = if k % 5 == 4 { "not json".to_string() } else { answers_program(answers, correct) };
        s.push(PromptKind::Base, base_reply(&program));
        s.push(PromptKind::Describe, describe_reply(&format!("described approach {} number {k}", k % 3)));
        s.push(PromptKind::Navigate, sln_reply(&k.to_string()));
    }
    s
}

/// Hash over the run logs and summary, in a fixed order.
pub fn logs_digest(dir: &Path) -> String {
    let mut hasher = Sha256::new();
    for name in RUN_LOGS.iter().chain(std::iter::once(&SUMMARY)) {
        hasher.update(name.as_bytes());
        hasher.update(std::fs::read(dir.join(name)).unwrap_or_default());
    }
    hex::encode(hasher.finalize())
}
