//! Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

mod common;

use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use stratevo_core::engine::{
    self, epsilon_route, read_jsonl, read_trajectory, GuidanceRecord, Route, RunOptions, TranscriptRecord,
    GUIDANCE_LOG, RUN_LOGS, TRAJECTORY, TRANSCRIPT,
};
use stratevo_core::providers::{Price, PriceTable, PromptKind, Purpose, Scenario};
use stratevo_core::strategy_space::{
    archive_embeddings, behavioral_score, cluster, select_inspirations, ClusterState, SelectionMode,
};
use stratevo_core::tasks::{
    verify_minmax, verify_rect_packing, verify_square_packing, Circle, Task, TaskConfig, TOLERANCE,
};
use stratevo_core::{Archive, ArchiveEntry, BehaviorVector, RunConfig};

#[allow(clippy::explicit_write)] // the gate output must go through an explicit stderr handle
fn verdict(criterion: &str, ok: bool, detail: &str) {
    let status = if ok { "PASS" } else { "FAIL" };
    writeln!(std::io::stderr(), "[{status}] {criterion}: {detail}").unwrap();
    assert!(ok, "{criterion}: {detail}");
}

// ---------------------------------------------------------------- hamming

fn hamming_oracle(a: &[bool], b: &[bool]) -> f64 {
    let mut differing = 0u32;
    for k in 0..a.len() {
        if a[k] != b[k] {
            differing += 1;
        }
    }
    differing as f64 / a.len() as f64
}

#[test]
fn criterion_01_hamming_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let pairs: Vec<(Vec<bool>, Vec<bool>)> = (0..10_000)
        .map(|_| {
            let len = rng.random_range(1..=64);
            let a = (0..len).map(|_| rng.random_bool(0.5)).collect();
            let b = (0..len).map(|_| rng.random_bool(0.5)).collect();
            (a, b)
        })
        .collect();
    let started = Instant::now();
    let mut mismatches = 0;
    for (a, b) in &pairs {
        let got = behavioral_score(&BehaviorVector(a.clone()), &BehaviorVector(b.clone())).unwrap();
        if got != hamming_oracle(a, b) {
            mismatches += 1;
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    verdict(
        "hamming oracle",
        mismatches == 0 && elapsed < 1.0,
        &format!("10000 pairs, {mismatches} mismatches, {elapsed:.3}s"),
    );
}

// ---------------------------------------------------------------- selection

fn oracle_score(candidate: &ArchiveEntry, reference: &ArchiveEntry) -> f64 {
    match (&candidate.behavior_vector, &reference.behavior_vector) {
        (Some(a), Some(b)) => hamming_oracle(a.bits(), b.bits()),
        _ => candidate.fitness,
    }
}

/// Exhaustive argmax: collect the maximum, then the smallest id attaining it.
fn oracle_argmax(pool: &[&ArchiveEntry], reference: &ArchiveEntry) -> Option<u64> {
    let top = pool.iter().map(|e| oracle_score(e, reference)).fold(f64::NEG_INFINITY, f64::max);
    pool.iter().filter(|e| oracle_score(e, reference) == top).map(|e| e.id).min()
}

fn oracle_best(archive: &Archive) -> u64 {
    let top = archive.entries().iter().map(|e| e.fitness).fold(f64::NEG_INFINITY, f64::max);
    archive.entries().iter().filter(|e| e.fitness == top).map(|e| e.id).min().unwrap()
}

/// Slots are filled in order; an empty slot takes the best-scoring unchosen entry.
fn oracle_finish(archive: &Archive, parent: u64, reference: &ArchiveEntry, slots: &[Option<u64>]) -> Vec<u64> {
    let mut chosen: BTreeSet<u64> = slots.iter().flatten().copied().collect();
    chosen.insert(parent);
    let mut picks = Vec::new();
    for slot in slots {
        let id = match slot {
            Some(id) => Some(*id),
            None => {
                let pool: Vec<&ArchiveEntry> =
                    archive.entries().iter().filter(|e| !chosen.contains(&e.id)).collect();
                oracle_argmax(&pool, reference)
            }
        };
        if let Some(id) = id {
            chosen.insert(id);
            picks.push(id);
        }
    }
    picks
}

fn oracle_clustered(archive: &Archive, parent_id: u64, state: &ClusterState, rng: &mut ChaCha8Rng) -> Vec<u64> {
    let parent = archive.get(parent_id).unwrap();
    let members = |c: usize| -> Vec<&ArchiveEntry> {
        archive.entries().iter().filter(|e| state.assignments.get(&e.id) == Some(&c)).collect()
    };
    let home = state.assignments[&parent_id];
    let siblings: Vec<&ArchiveEntry> = members(home).into_iter().filter(|e| e.id != parent_id).collect();
    let intra = oracle_argmax(&siblings, parent);
    let mut others = Vec::new();
    for c in 0..state.effective_c {
        if c != home && !members(c).is_empty() {
            others.push(c);
        }
    }
    let cross = if others.is_empty() {
        None
    } else {
        let drawn = others[rng.random_range(0..others.len())];
        oracle_argmax(&members(drawn), parent)
    };
    oracle_finish(archive, parent_id, parent, &[intra, cross])
}

fn oracle_warmup(archive: &Archive, parent_id: u64) -> Vec<u64> {
    let best_id = oracle_best(archive);
    let best = archive.get(best_id).unwrap();
    let pool: Vec<&ArchiveEntry> =
        archive.entries().iter().filter(|e| e.id != best_id && e.id != parent_id).collect();
    let diverse = oracle_argmax(&pool, best);
    let best_slot = (best_id != parent_id).then_some(best_id);
    oracle_finish(archive, parent_id, best, &[best_slot, diverse])
}

/// Random archive with coarse fitness values and short behavior vectors so
/// that ties are common.
fn random_archive(rng: &mut ChaCha8Rng, size: usize, instance: bool) -> Archive {
    let behavior_len = rng.random_range(1..=6);
    let mut archive = Archive::new(100).unwrap();
    for id in 0..size as u64 {
        let behavior = instance.then(|| (0..behavior_len).map(|_| rng.random_bool(0.5)).collect::<Vec<_>>());
        let fitness = match &behavior {
            Some(b) => b.iter().filter(|x| **x).count() as f64 / behavior_len as f64,
            None => rng.random_range(0..6) as f64 * 0.5,
        };
        archive.insert(entry(id, fitness, behavior, random_unit(rng, 4))).unwrap();
    }
    archive
}

#[test]
fn criterion_02_selection_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let started = Instant::now();
    let mut mismatches = Vec::new();
    let mut clustered = 0;
    for case in 0..500 {
        let instance = case % 2 == 1;
        let size = rng.random_range(1..=30);
        let archive = random_archive(&mut rng, size, instance);
        let parent = rng.random_range(0..size as u64);
        let c = rng.random_range(1..=6);
        let state = cluster(&archive_embeddings(&archive), c, rng.random()).unwrap();
        let draw_seed: u64 = rng.random();

        let mut engine_rng = ChaCha8Rng::seed_from_u64(draw_seed);
        let mut oracle_rng = ChaCha8Rng::seed_from_u64(draw_seed);
        let got = select_inspirations(&archive, parent, 20, 10, Some(&state), &mut engine_rng).unwrap();
        let want = oracle_clustered(&archive, parent, &state, &mut oracle_rng);
        let got_ids: Vec<u64> = got.picks.iter().map(|p| p.entry.id).collect();
        clustered += 1;
        if got.mode != SelectionMode::Clustered
            || got_ids != want
            || engine_rng.random::<u64>() != oracle_rng.random::<u64>()
        {
            mismatches.push(format!("case {case} clustered: got {got_ids:?}, want {want:?}"));
        }

        let warm = select_inspirations(&archive, parent, 3, 10, Some(&state), &mut engine_rng).unwrap();
        let warm_ids: Vec<u64> = warm.picks.iter().map(|p| p.entry.id).collect();
        let want = oracle_warmup(&archive, parent);
        if warm.mode != SelectionMode::Warmup || warm_ids != want {
            mismatches.push(format!("case {case} warm-up: got {warm_ids:?}, want {want:?}"));
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    verdict(
        "selection oracle",
        mismatches.is_empty() && elapsed < 5.0,
        &format!("500 archives ({clustered} clustered + warm-up), {} mismatches {:?}, {elapsed:.3}s", mismatches.len(), mismatches.first()),
    );
}

// ---------------------------------------------------------------- warm-up

#[test]
fn criterion_03_warmup_fixtures() {
    let mut failures = Vec::new();

    // fitnesses {1, 4, 9, 2, 7}, parent is the entry with fitness 2
    let mut archive = Archive::new(100).unwrap();
    for (id, f) in [1.0, 4.0, 9.0, 2.0, 7.0].into_iter().enumerate() {
        archive.insert(entry(id as u64, f, None, unit(vec![1.0, id as f64]))).unwrap();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let set = select_inspirations(&archive, 3, 3, 10, None, &mut rng).unwrap();
    let fits: Vec<f64> = set.picks.iter().map(|p| p.entry.fitness).collect();
    if fits != [9.0, 7.0] || set.parent.fitness != 2.0 {
        failures.push(format!("scalar fixture picked {fits:?}"));
    }

    // seed only: nothing to pick
    let mut single = Archive::new(100).unwrap();
    single.insert(entry(0, 1.0, None, vec![1.0, 0.0])).unwrap();
    let set = select_inspirations(&single, 0, 0, 10, None, &mut rng).unwrap();
    if !set.picks.is_empty() {
        failures.push("seed-only archive returned picks".into());
    }

    // instance fixture: the diverse pick is the entry farthest in Hamming
    // distance from the best, not the fittest
    let bits = |s: &str| Some(s.chars().map(|c| c == '1').collect::<Vec<_>>());
    let mut inst = Archive::new(100).unwrap();
    inst.insert(entry(0, 0.25, bits("1000"), vec![1.0, 0.0])).unwrap();
    inst.insert(entry(1, 0.75, bits("1110"), vec![0.0, 1.0])).unwrap();
    inst.insert(entry(2, 0.5, bits("1100"), vec![1.0, 0.0])).unwrap();
    inst.insert(entry(3, 0.25, bits("0001"), vec![0.0, 1.0])).unwrap();
    let set = select_inspirations(&inst, 2, 5, 10, None, &mut rng).unwrap();
    let ids: Vec<u64> = set.picks.iter().map(|p| p.entry.id).collect();
    if ids != [1, 3] {
        failures.push(format!("instance fixture picked {ids:?}, want [1, 3]"));
    }

    // randomized fixtures: {parent, best, argmax score(.; best)}
    let mut gen = ChaCha8Rng::seed_from_u64(3);
    let mut checked = 0;
    for case in 0..300 {
        let size = gen.random_range(3..=20);
        let archive = random_archive(&mut gen, size, case % 2 == 0);
        let best = oracle_best(&archive);
        let parent = gen.random_range(0..size as u64);
        if parent == best {
            continue;
        }
        let best_entry = archive.get(best).unwrap();
        let pool: Vec<&ArchiveEntry> =
            archive.entries().iter().filter(|e| e.id != best && e.id != parent).collect();
        let diverse = oracle_argmax(&pool, best_entry).unwrap();
        let t = gen.random_range(0..10);
        let set = select_inspirations(&archive, parent, t, 10, None, &mut rng).unwrap();
        let got: Vec<u64> = set.ids();
        checked += 1;
        if got != [parent, best, diverse] {
            failures.push(format!("case {case}: got {got:?}, want {:?}", [parent, best, diverse]));
        }
    }
    verdict(
        "warm-up fixtures",
        failures.is_empty(),
        &format!("3 fixed + {checked} randomized fixtures, failures {failures:?}"),
    );
}

// ---------------------------------------------------------------- schedule

#[test]
fn criterion_04_refresh_schedule() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("run");
    let mut config = RunConfig::for_task(TaskConfig::CirclePackingSquare { n: 26 });
    config.generations = 100;
    config.sln_interval = 10;
    let result = engine::run(&config, &dir, RunOptions::default()).unwrap();

    let guidance: Vec<GuidanceRecord> = read_jsonl(&dir.join(GUIDANCE_LOG)).unwrap();
    let refreshed: Vec<u64> = guidance.iter().map(|g| g.guidance.refreshed_at).collect();
    let transcript: Vec<TranscriptRecord> = read_jsonl(&dir.join(TRANSCRIPT)).unwrap();
    let navigate_calls = transcript.iter().filter(|r| r.call.purpose == Purpose::Navigate).count();

    let mut problems = Vec::new();
    let mut strategy_gens = 0;
    for row in &result.trajectory {
        if row.route != Route::Strategy {
            continue;
        }
        strategy_gens += 1;
        let t = row.generation;
        let expected = (t >= 10).then_some(10 * (t / 10));
        if row.guidance_gen != expected {
            problems.push(format!("generation {t} used {:?}", row.guidance_gen));
        }
        let prompt = transcript
            .iter()
            .find(|r| r.generation == t && r.call.purpose == Purpose::Articulate)
            .and_then(|r| r.call.prompt.clone())
            .unwrap_or_default();
        let header = expected.map(|g| format!("(generation {g})"));
        let shows = header.as_ref().is_some_and(|h| prompt.contains(h.as_str()));
        if expected.is_some() != shows {
            problems.push(format!("generation {t} prompt guidance header mismatch"));
        }
    }
    let ok = result.totals.sln_refreshes == 10
        && refreshed == (1..=10).map(|k| k * 10).collect::<Vec<u64>>()
        && navigate_calls == 10
        && strategy_gens > 0
        && problems.is_empty();
    verdict(
        "refresh schedule",
        ok,
        &format!(
            "T=100 delta=10: {} refreshes at {refreshed:?}, {navigate_calls} navigate calls, {strategy_gens} strategy generations checked, problems {problems:?}",
            result.totals.sln_refreshes
        ),
    );
}

// ---------------------------------------------------------------- epsilon

#[test]
fn criterion_05_epsilon_statistics() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let base = (0..10_000).filter(|_| epsilon_route(&mut rng, 0.2) == Route::Base).count();
    let fraction = base as f64 / 10_000.0;
    verdict(
        "epsilon statistics",
        (0.18..=0.22).contains(&fraction),
        &format!("epsilon=0.2, base fraction {fraction:.4} over 10000 draws"),
    );
}

// ---------------------------------------------------------------- verifiers

fn oracle_circles_ok(circles: &[Circle], w: f64, h: f64) -> bool {
    for c in circles {
        if c.r.is_nan() || c.r <= 0.0 {
            return false;
        }
        let room = c.x.min(c.y).min(w - c.x).min(h - c.y);
        if c.r > room + TOLERANCE {
            return false;
        }
    }
    for i in 0..circles.len() {
        for j in 0..circles.len() {
            if i != j {
                let (a, b) = (circles[i], circles[j]);
                let d = ((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt();
                if d < a.r + b.r - TOLERANCE {
                    return false;
                }
            }
        }
    }
    true
}

/// Mostly jittered grids, so that accepted and rejected placements both occur.
fn random_circles(rng: &mut ChaCha8Rng, n: usize, w: f64, h: f64) -> Vec<Circle> {
    let side = (1..).find(|s| s * s >= n).unwrap();
    let cell = (w / side as f64).min(h / side as f64);
    let jitter = [0.0, 1e-10, 1e-3, 0.05][rng.random_range(0..4)];
    (0..n)
        .map(|k| {
            let (i, j) = ((k % side) as f64, (k / side) as f64);
            let r = cell / 2.0 * rng.random_range(0.9..1.02);
            let x = (i + 0.5) * cell + rng.random_range(-jitter..=jitter);
            let y = (j + 0.5) * cell + rng.random_range(-jitter..=jitter);
            Circle::new(x, y, r)
        })
        .collect()
}

#[test]
fn criterion_06_verifier_fixtures() {
    let mut problems = Vec::new();
    let grid: Vec<Circle> =
        [(0.25, 0.25), (0.25, 0.75), (0.75, 0.25), (0.75, 0.75)].iter().map(|&(x, y)| Circle::new(x, y, 0.25)).collect();
    if verify_square_packing(&grid, 4, TOLERANCE) != Ok(1.0) {
        problems.push("4-circle grid".to_string());
    }
    if verify_square_packing(&[Circle::new(0.5, 0.5, 0.5)], 1, TOLERANCE) != Ok(0.5) {
        problems.push("inscribed circle".into());
    }
    let pair = [Circle::new(0.3, 0.3, 0.3), Circle::new(0.7, 0.6, 0.3)];
    if verify_square_packing(&pair, 2, TOLERANCE).is_ok() {
        problems.push("overlap pair accepted".into());
    }
    let corners = [(0.0, 0.0), (1.0, 0.0), (0.0, 1.0), (1.0, 1.0)];
    let ratio = verify_minmax(&corners, 4, true, TOLERANCE).unwrap();
    if (ratio - 1.0 / 2f64.sqrt()).abs() > 1e-12 {
        problems.push(format!("corner ratio {ratio}"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut accepted, mut rejected) = ([0; 3], [0; 3]);
    for _ in 0..1000 {
        let n = rng.random_range(1..=26);
        let circles = random_circles(&mut rng, n, 1.0, 1.0);
        let got = verify_square_packing(&circles, n, TOLERANCE);
        let want = oracle_circles_ok(&circles, 1.0, 1.0);
        if got.is_ok() != want {
            problems.push(format!("square disagreement on {circles:?}"));
        }
        if let Ok(f) = got {
            if f != circles.iter().map(|c| c.r).sum::<f64>() {
                problems.push("square fitness".into());
            }
        }
        if want { accepted[0] += 1 } else { rejected[0] += 1 }
    }
    for _ in 0..1000 {
        let n = rng.random_range(1..=21);
        let w = rng.random_range(0.2..1.8);
        let circles = random_circles(&mut rng, n, w, 2.0 - w);
        let want = oracle_circles_ok(&circles, w, 2.0 - w);
        if verify_rect_packing(&circles, w, n, TOLERANCE).is_ok() != want {
            problems.push(format!("rect disagreement at w={w}"));
        }
        if want { accepted[1] += 1 } else { rejected[1] += 1 }
    }
    for _ in 0..1000 {
        let n = rng.random_range(2..=16);
        let spread = rng.random_range(0.95..1.02);
        let points: Vec<(f64, f64)> =
            (0..n).map(|_| (rng.random_range(0.0..spread), rng.random_range(0.0..spread))).collect();
        let inside = points
            .iter()
            .all(|&(x, y)| x >= -TOLERANCE && y >= -TOLERANCE && x <= 1.0 + TOLERANCE && y <= 1.0 + TOLERANCE);
        let got = verify_minmax(&points, n, true, TOLERANCE);
        if got.is_ok() != inside {
            problems.push("minmax containment disagreement".into());
        }
        if let Ok(f) = got {
            let mut ds = Vec::new();
            for i in 0..n {
                for j in i + 1..n {
                    ds.push(((points[i].0 - points[j].0).powi(2) + (points[i].1 - points[j].1).powi(2)).sqrt());
                }
            }
            let want = ds.iter().cloned().fold(f64::INFINITY, f64::min) / ds.iter().cloned().fold(0.0, f64::max);
            if (f - want).abs() > 1e-12 {
                problems.push(format!("minmax ratio {f} vs {want}"));
            }
        }
        if inside { accepted[2] += 1 } else { rejected[2] += 1 }
    }
    let mixed = accepted.iter().zip(&rejected).all(|(a, r)| *a > 0 && *r > 0);
    verdict(
        "verifier fixtures",
        problems.is_empty() && mixed,
        &format!(
            "fixtures + 3x1000 random placements (accepted {accepted:?}, rejected {rejected:?}), problems {:?}",
            problems.iter().take(3).collect::<Vec<_>>()
        ),
    );
}

// ---------------------------------------------------------------- reproducibility

fn instance_answers(instances: usize, seed: u64) -> Vec<i64> {
    Task::new(TaskConfig::IntegerSequences { instances, seed }).unwrap().instances().iter().map(|i| i.answer).collect()
}

fn priced() -> PriceTable {
    let mut prices = PriceTable::default();
    prices.0.insert("mock-chat".into(), Price { input_per_mtok: 3.0, output_per_mtok: 15.0 });
    prices.0.insert("mock-embed".into(), Price { input_per_mtok: 0.02, output_per_mtok: 0.0 });
    prices
}

fn scripted_config(root: &Path, generations: u64, scenario: &Scenario) -> RunConfig {
    let path = root.join("scenario.json");
    write_scenario(&path, scenario);
    let task = TaskConfig::IntegerSequences { instances: 32, seed: 0 };
    let answers = instance_answers(32, 0);
    let mut config = RunConfig::for_task(task);
    config.generations = generations;
    config.warmup = 5;
    config.clusters = 3;
    config.seed = 42;
    config.providers.chat = stratevo_core::providers::ChatConfig::Mock { scenario: Some(path) };
    config.providers.prices = priced();
    config.seed_program = Some(answers_program(&answers, 4));
    config
}

#[test]
fn criterion_07_reproducibility() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = varied_scenario(&instance_answers(32, 0), 80, 7);
    let config = scripted_config(tmp.path(), 50, &scenario);

    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    engine::run(&config, &a, RunOptions::default()).unwrap();
    engine::run(&config, &b, RunOptions::default()).unwrap();
    let identical = RUN_LOGS.iter().all(|name| std::fs::read(a.join(name)).unwrap() == std::fs::read(b.join(name)).unwrap());

    // interrupted at 25, with a torn line as left by a crash mid-append
    let partial = engine::run(&config, &c, RunOptions { stop_after: Some(25) }).unwrap();
    let mut f = std::fs::OpenOptions::new().append(true).open(c.join(TRANSCRIPT)).unwrap();
    f.write_all(b"{\"generation\":26,\"purpose\":\"artic").unwrap();
    drop(f);
    let resumed = engine::resume(&c, Some(&config), None, RunOptions::default()).unwrap();
    let resumed_complete = matches!(resumed, engine::ResumeOutcome::Ran(ref r) if r.completed);

    let (ha, hb, hc) = (logs_digest(&a), logs_digest(&b), logs_digest(&c));
    verdict(
        "reproducibility",
        identical && ha == hb && partial.generations_completed == 25 && resumed_complete && hc == ha,
        &format!("T=50 runs identical={identical}; uninterrupted {}; resumed-from-25 {}", &ha[..16], &hc[..16]),
    );
}

// ---------------------------------------------------------------- cost

#[test]
fn criterion_08_cost_accounting() {
    let tmp = tempfile::tempdir().unwrap();
    let scenario = varied_scenario(&instance_answers(32, 0), 60, 8);
    let config = scripted_config(tmp.path(), 40, &scenario);
    let dir = tmp.path().join("run");
    engine::run(&config, &dir, RunOptions::default()).unwrap();

    let prices = priced();
    let transcript: Vec<TranscriptRecord> = read_jsonl(&dir.join(TRANSCRIPT)).unwrap();
    let trajectory = read_trajectory(&dir.join(TRAJECTORY)).unwrap();
    let mut problems = Vec::new();
    for r in &transcript {
        let p = prices.0[&r.call.model];
        let want = (r.call.prompt_tokens as f64 * p.input_per_mtok + r.call.completion_tokens as f64 * p.output_per_mtok) / 1e6;
        if r.call.cost_usd != want {
            problems.push(format!("record cost {} vs {want}", r.call.cost_usd));
        }
    }
    for row in &trajectory {
        let mut sum = 0.0;
        for r in transcript.iter().filter(|r| r.generation <= row.generation) {
            sum += r.call.cost_usd;
        }
        if row.cumulative_cost_usd != sum {
            problems.push(format!("generation {}: {} vs ledger {sum}", row.generation, row.cumulative_cost_usd));
        }
    }
    let last = trajectory.last().map_or(0.0, |r| r.cumulative_cost_usd);
    verdict(
        "cost accounting",
        problems.is_empty() && trajectory.len() == 40 && last > 0.0,
        &format!("{} generations, {} transcript records, final cost {last}, problems {problems:?}", trajectory.len(), transcript.len()),
    );
}

// ---------------------------------------------------------------- discovery

#[test]
fn criterion_09_mock_discovery() {
    let tmp = tempfile::tempdir().unwrap();
    let answers = instance_answers(32, 0);
    // correct answers in the candidate produced at each generation
    let correct_at = |t: u64| match t {
        5..=11 => 16,
        12..=29 => 24,
        30 => 32,
        _ => 0,
    };
    let mut scenario = Scenario::default();
    scenario.push(PromptKind::Describe, describe_reply("answers nothing correctly"));
    for t in 1..=30u64 {
        // alternate with weaker candidates so improvements only come from the script
        let correct = if t % 3 == 0 && ![5, 12, 30].contains(&t) { correct_at(t) / 2 } else { correct_at(t) };
        scenario.push(
            PromptKind::Articulate,
            sa_reply("weak on some families", &format!("rule set covering {correct} cases"), &answers_program(&answers, correct)),
        );
    }
    for k in 0..3 {
        scenario.push(PromptKind::Navigate, sln_reply(&k.to_string()));
    }
    let mut config = scripted_config(tmp.path(), 30, &scenario);
    config.epsilon = 0.0;
    config.seed_program = Some(answers_program(&answers, 0));

    let started = Instant::now();
    let result = engine::run(&config, &tmp.path().join("run"), RunOptions::default()).unwrap();
    let elapsed = started.elapsed().as_secs_f64();

    let series: Vec<f64> = result.trajectory.iter().map(|r| r.best_so_far).collect();
    let monotone = series.windows(2).all(|w| w[1] >= w[0]);
    let improved_at: Vec<u64> = std::iter::once(0.0)
        .chain(series.iter().copied())
        .collect::<Vec<_>>()
        .windows(2)
        .zip(1u64..)
        .filter(|(w, _)| w[1] > w[0])
        .map(|(_, t)| t)
        .collect();
    let reached = series.get(29) == Some(&1.0);
    verdict(
        "mock discovery",
        monotone && reached && improved_at == [5, 12, 30] && elapsed < 10.0,
        &format!("best-so-far improved at {improved_at:?}, final {:?}, monotone={monotone}, {elapsed:.2}s", series.last()),
    );
}

// ---------------------------------------------------------------- clustering

#[test]
fn criterion_10_kmeans_blobs() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let noise = Normal::new(0.0, 0.01).unwrap();
    let mut problems = Vec::new();
    for trial in 0..50u64 {
        let dim = rng.random_range(2..=16);
        let mut embeddings = Vec::new();
        for id in 0..10u64 {
            let sign = if id < 5 { 1.0 } else { -1.0 };
            let v: Vec<f64> =
                (0..dim).map(|k| if k == 0 { sign } else { 0.0 } + noise.sample(&mut rng)).collect();
            embeddings.push((id, unit(v)));
        }
        let seed = rng.random();
        let first = cluster(&embeddings, 2, seed).unwrap();
        let again = cluster(&embeddings, 2, seed).unwrap();
        let a = first.assignments[&0];
        let planted = (0..10u64).all(|id| (first.assignments[&id] == a) == (id < 5));
        // every point sits at its nearest centroid
        let nearest = embeddings.iter().all(|(id, v)| {
            let d = |c: &Vec<f64>| v.iter().zip(c).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
            let own = d(&first.centroids[first.assignments[id]]);
            first.centroids.iter().all(|c| own <= d(c))
        });
        if !planted || !nearest || first != again {
            problems.push(format!("trial {trial}: planted={planted} nearest={nearest} repeat={}", first == again));
        }
    }
    verdict(
        "k-means blobs",
        problems.is_empty(),
        &format!("50 seeded two-blob trials (sigma 0.01), problems {problems:?}"),
    );
}
