//! The generation loop, its persistence and resumption.
//!
//! All randomness flows from one ChaCha8 stream seeded by `RunConfig::seed`.
//! Per generation the draws happen in a fixed order: the route coin, then
//! parent selection, then (strategy route only) the k-means seed when
//! clustering is active and the cross-cluster draw.

mod config;
mod ops;
mod report;
mod rundir;

use std::fs::File;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use config::{ConfigErrors, FieldError, RunConfig};
pub use ops::{
    base_mutate, base_select, build_base_prompt, epsilon_route, extract_program, tournament, Route,
    BASE_TEMPLATE, ELITIST_PROBABILITY, TOURNAMENT_SIZE,
};
pub use report::{export_embeddings, report, Report};
pub use rundir::{
    complete_lines, read_jsonl, read_trajectory, Checkpoint, EvaluationRecord, GuidanceRecord, Header,
    RunDir, Summary, Totals, TrajectoryRow, TranscriptRecord, ARCHIVE_LOG, CHECKPOINT, EVALUATIONS,
    GUIDANCE_LOG, HEADER, LOCK, RUN_LOGS, SUMMARY, TRAJECTORY, TRANSCRIPT,
};

use crate::archive::{Archive, ArchiveEntry, ArchiveError, EntryCost, ProducedBy};
use crate::articulation::{build_sa_prompt, describe_program, parse_sa_response, SYSTEM_PROMPT};
use crate::navigation::{build_sln_prompt, parse_guidance, should_refresh, LandscapeGuidance};
use crate::providers::{ChatRequest, ProviderError, Providers, Purpose, UsageRecord};
use crate::strategy_space::{
    archive_embeddings, cluster, clustering_active, select_inspirations, ClusterError, SelectError,
};
use crate::tasks::{Evaluator, Failure, Task, TaskError};
use rundir::{jsonl, trajectory_header, trajectory_line, FORMAT_VERSION};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid config:\n{0}")]
    Config(#[from] ConfigErrors),
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Archive(#[from] ArchiveError),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error(transparent)]
    Select(#[from] SelectError),
    #[error("seed program failed evaluation: {0}")]
    SeedFailed(Failure),
    #[error("provider failure at generation {generation}; the run is resumable: {source}")]
    Provider { generation: u64, source: ProviderError },
    #[error("run directory {} already exists; use resume", .0.display())]
    RunDirExists(PathBuf),
    #[error("{} is not a run directory (no header.json)", .0.display())]
    NotARun(PathBuf),
    #[error("run directory {} is locked by another process", .0.display())]
    Locked(PathBuf),
    #[error("config hash {found} does not match the run's {expected}")]
    ConfigMismatch { expected: String, found: String },
    #[error("{} line {line}: {message}", file.display())]
    CorruptLog { file: PathBuf, line: usize, message: String },
}

/// Test hooks.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Stop after persisting this generation, as if the process were killed.
    pub stop_after: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub best: ArchiveEntry,
    pub trajectory: Vec<TrajectoryRow>,
    pub totals: Totals,
    pub generations_completed: u64,
    pub completed: bool,
    pub wall_s: f64,
}

#[derive(Debug, Clone)]
pub enum ResumeOutcome {
    AlreadyComplete(Summary),
    Ran(RunResult),
}

struct State {
    archive: Archive,
    rng: ChaCha8Rng,
    guidance: Option<LandscapeGuidance>,
    next_id: u64,
    cumulative_cost: f64,
    best_so_far: f64,
    totals: Totals,
    generation: u64,
    trajectory: Vec<TrajectoryRow>,
}

/// Records of one generation, written together before the checkpoint.
#[derive(Default)]
struct Pending {
    archive: String,
    trajectory: String,
    guidance: String,
    transcript: String,
    evaluations: String,
}

struct Candidate {
    program: String,
    strategy: String,
    produced_by: ProducedBy,
    route: Route,
}

pub struct Engine {
    config: RunConfig,
    task: Task,
    providers: Providers,
    evaluator: Box<dyn Evaluator>,
    dir: RunDir,
    _lock: File,
    state: State,
}

fn empty_archive(config: &RunConfig, task: &Task, providers: &Providers) -> Result<Archive, RunError> {
    let mut archive = Archive::new(config.capacity)?.with_embedding_dim(providers.embedder.dimension());
    if let Some(len) = task.behavior_len() {
        archive = archive.with_behavior_len(len);
    }
    Ok(archive)
}

/// Starts a fresh run in `run_dir` with providers built from the config.
pub fn run(config: &RunConfig, run_dir: &Path, options: RunOptions) -> Result<RunResult, RunError> {
    let providers = Providers::from_config(&config.providers)
        .map_err(|source| RunError::Provider { generation: 0, source })?;
    Engine::create(config, run_dir, providers)?.run(options)
}

/// Continues an interrupted run. With `expected`, refuses a run whose config
/// hash differs.
pub fn resume(
    run_dir: &Path,
    expected: Option<&RunConfig>,
    providers: Option<Providers>,
    options: RunOptions,
) -> Result<ResumeOutcome, RunError> {
    match Engine::open(run_dir, expected, providers)? {
        Opened::Complete(summary) => Ok(ResumeOutcome::AlreadyComplete(summary)),
        Opened::Engine(engine) => engine.run(options).map(ResumeOutcome::Ran),
    }
}

pub enum Opened {
    Complete(Summary),
    Engine(Box<Engine>),
}

impl Engine {
    /// Creates the run directory and writes its header. Refuses a directory
    /// that already has content.
    pub fn create(config: &RunConfig, run_dir: &Path, providers: Providers) -> Result<Self, RunError> {
        config.validate()?;
        let task = Task::new(config.task.clone())?;
        if run_dir.exists()
            && std::fs::read_dir(run_dir)
                .map_err(|source| RunError::Io { path: run_dir.into(), source })?
                .next()
                .is_some()
        {
            return Err(RunError::RunDirExists(run_dir.into()));
        }
        std::fs::create_dir_all(run_dir).map_err(|source| RunError::Io { path: run_dir.into(), source })?;
        let dir = RunDir::new(run_dir);
        let lock = dir.lock()?;
        let mut config = config.clone();
        config.output_dir = run_dir.to_path_buf();
        let header = Header {
            format_version: FORMAT_VERSION,
            config_hash: config.hash(),
            seed: config.seed,
            config: config.clone(),
        };
        dir.write_atomic(HEADER, &serde_json::to_string_pretty(&header).expect("header serializes"))?;
        let state = State {
            archive: empty_archive(&config, &task, &providers)?,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            guidance: None,
            next_id: 0,
            cumulative_cost: 0.0,
            best_so_far: f64::NEG_INFINITY,
            totals: Totals::default(),
            generation: 0,
            trajectory: Vec::new(),
        };
        let evaluator = config.evaluator.build();
        Ok(Self { config, task, providers, evaluator, dir, _lock: lock, state })
    }

    /// Reopens a run for resumption, restoring archive, RNG position,
    /// guidance and counters from the last checkpoint.
    pub fn open(
        run_dir: &Path,
        expected: Option<&RunConfig>,
        providers: Option<Providers>,
    ) -> Result<Opened, RunError> {
        let dir = RunDir::new(run_dir);
        let header = dir.read_header()?;
        if let Some(expected) = expected {
            let found = expected.hash();
            if found != header.config_hash {
                return Err(RunError::ConfigMismatch { expected: header.config_hash, found });
            }
        }
        let lock = dir.lock()?;
        let config = header.config;
        let task = Task::new(config.task.clone())?;
        let providers = match providers {
            Some(p) => p,
            None => Providers::from_config(&config.providers)
                .map_err(|source| RunError::Provider { generation: 0, source })?,
        };
        let checkpoint = dir.read_checkpoint()?;
        if checkpoint.as_ref().is_some_and(|cp| cp.completed) {
            let summary: Summary = rundir::read_json(&dir.path(SUMMARY))?;
            return Ok(Opened::Complete(summary));
        }

        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut archive = empty_archive(&config, &task, &providers)?;
        let state = match checkpoint {
            None => {
                // the seed generation never finished; start over
                for name in RUN_LOGS {
                    let path = dir.path(name);
                    if path.exists() {
                        std::fs::remove_file(&path).map_err(|source| RunError::Io { path, source })?;
                    }
                }
                State {
                    archive,
                    rng,
                    guidance: None,
                    next_id: 0,
                    cumulative_cost: 0.0,
                    best_so_far: f64::NEG_INFINITY,
                    totals: Totals::default(),
                    generation: 0,
                    trajectory: Vec::new(),
                }
            }
            Some(cp) => {
                dir.truncate_logs(cp.generation)?;
                for entry in read_jsonl::<ArchiveEntry>(&dir.path(ARCHIVE_LOG))? {
                    archive.insert(entry)?;
                }
                let word_pos: u128 = cp.rng_word_pos.parse().map_err(|_| RunError::CorruptLog {
                    file: dir.path(CHECKPOINT),
                    line: 1,
                    message: format!("bad rng_word_pos {:?}", cp.rng_word_pos),
                })?;
                rng.set_word_pos(word_pos);
                let transcript: Vec<TranscriptRecord> = read_jsonl(&dir.path(TRANSCRIPT))?;
                let answered: Vec<&str> = transcript
                    .iter()
                    .filter(|r| r.call.ok && r.call.purpose != Purpose::Embed)
                    .filter_map(|r| r.call.prompt.as_deref())
                    .collect();
                providers.chat.replay(&answered);
                State {
                    archive,
                    rng,
                    guidance: cp.guidance,
                    next_id: cp.next_id,
                    cumulative_cost: cp.cumulative_cost_usd,
                    best_so_far: cp.best_so_far,
                    totals: cp.totals,
                    generation: cp.generation,
                    trajectory: read_trajectory(&dir.path(TRAJECTORY))?,
                }
            }
        };
        let evaluator = config.evaluator.build();
        Ok(Opened::Engine(Box::new(Self { config, task, providers, evaluator, dir, _lock: lock, state })))
    }

    pub fn run_dir(&self) -> &Path {
        self.dir.root()
    }

    /// Runs the remaining generations. Consumes the engine: after a provider
    /// failure only [`resume`] may continue.
    pub fn run(mut self, options: RunOptions) -> Result<RunResult, RunError> {
        let started = Instant::now();
        if self.dir.read_checkpoint()?.is_none() {
            self.seed_generation()?;
        }
        let mut completed_now = self.state.generation;
        while self.state.generation < self.config.generations {
            if options.stop_after.is_some_and(|g| completed_now >= g) {
                break;
            }
            let t = self.state.generation + 1;
            self.generation(t)?;
            completed_now = t;
        }
        let completed = self.state.generation >= self.config.generations;
        if completed {
            self.finish()?;
        }
        let best = self.state.archive.best()?.clone();
        Ok(RunResult {
            best,
            trajectory: self.state.trajectory.clone(),
            totals: self.state.totals.clone(),
            generations_completed: self.state.generation,
            completed,
            wall_s: started.elapsed().as_secs_f64(),
        })
    }

    fn chat_params(&self) -> (f64, u32) {
        (self.config.providers.chat.temperature(), self.config.providers.chat.max_tokens())
    }

    fn provider_error(&self, generation: u64) -> impl Fn(ProviderError) -> RunError + '_ {
        move |source| {
            self.providers.ledger.drain();
            RunError::Provider { generation, source }
        }
    }

    fn seed_generation(&mut self) -> Result<(), RunError> {
        let program =
            self.config.seed_program.clone().unwrap_or_else(|| self.config.evaluator.default_seed(&self.task));
        let (temperature, max_tokens) = self.chat_params();
        let brief = self.task.brief();
        let (description, _) = describe_program(&program, &brief, &*self.providers.chat, temperature, max_tokens)
            .map_err(self.provider_error(0))?;
        let result = self.evaluator.evaluate(&program, &self.task);
        let Some(fitness) = result.fitness else {
            self.providers.ledger.drain();
            return Err(RunError::SeedFailed(result.failure.expect("failure without fitness")));
        };
        let embedding = self.providers.embedder.embed(&description).map_err(self.provider_error(0))?;
        let mut pending = Pending::default();
        let (cost, records) = self.take_usage();
        let entry = ArchiveEntry {
            id: self.state.next_id,
            parent_id: None,
            generation: 0,
            produced_by: ProducedBy::Seed,
            fitness,
            strategy_description: description,
            behavior_vector: result.behavior_vector.clone(),
            cost,
            program_source: program,
            strategy_embedding: embedding.vector,
        };
        self.state.archive.insert(entry.clone())?;
        self.state.next_id += 1;
        self.state.best_so_far = fitness;
        pending.archive.push_str(&jsonl(&entry));
        pending.evaluations.push_str(&jsonl(&EvaluationRecord {
            generation: 0,
            candidate_id: Some(entry.id),
            result,
        }));
        self.account(0, records, &mut pending);
        pending.trajectory = trajectory_header();
        self.commit(0, pending)
    }

    /// Drains the ledger, returning the cost attributable to a candidate
    /// (everything except landscape refreshes) and the raw records.
    fn take_usage(&self) -> (EntryCost, Vec<UsageRecord>) {
        let records = self.providers.ledger.drain();
        let mut cost = EntryCost::default();
        for r in records.iter().filter(|r| r.purpose != Purpose::Navigate) {
            cost.usd += r.cost_usd;
            if r.purpose == Purpose::Embed {
                cost.embedding_tokens += r.prompt_tokens;
            } else {
                cost.prompt_tokens += r.prompt_tokens;
                cost.completion_tokens += r.completion_tokens;
            }
        }
        (cost, records)
    }

    /// Adds usage records to the transcript and running totals, in call order.
    fn account(&mut self, generation: u64, records: Vec<UsageRecord>, pending: &mut Pending) {
        for call in records {
            self.state.cumulative_cost += call.cost_usd;
            let totals = &mut self.state.totals;
            totals.total_cost_usd += call.cost_usd;
            match (call.purpose, call.ok) {
                (Purpose::Embed, _) => totals.embedding_calls += 1,
                (_, true) => totals.chat_calls += 1,
                (_, false) => totals.failed_chat_calls += 1,
            }
            pending.transcript.push_str(&jsonl(&TranscriptRecord { generation, call }));
        }
    }

    fn commit(&mut self, generation: u64, pending: Pending) -> Result<(), RunError> {
        self.dir.append(ARCHIVE_LOG, &pending.archive)?;
        self.dir.append(TRAJECTORY, &pending.trajectory)?;
        self.dir.append(GUIDANCE_LOG, &pending.guidance)?;
        self.dir.append(TRANSCRIPT, &pending.transcript)?;
        self.dir.append(EVALUATIONS, &pending.evaluations)?;
        self.state.generation = generation;
        let checkpoint = Checkpoint {
            generation,
            rng_word_pos: self.state.rng.get_word_pos().to_string(),
            next_id: self.state.next_id,
            cumulative_cost_usd: self.state.cumulative_cost,
            best_so_far: self.state.best_so_far,
            guidance: self.state.guidance.clone(),
            totals: self.state.totals.clone(),
            completed: false,
        };
        self.write_checkpoint(&checkpoint)
    }

    fn write_checkpoint(&self, checkpoint: &Checkpoint) -> Result<(), RunError> {
        self.dir.write_atomic(CHECKPOINT, &serde_json::to_string_pretty(checkpoint).expect("checkpoint serializes"))
    }

    /// One landscape refresh: a parse failure is retried once, then the
    /// previous guidance stays in force.
    fn refresh_guidance(&mut self, t: u64, pending: &mut Pending) -> Result<(), RunError> {
        let (temperature, max_tokens) = self.chat_params();
        let request = ChatRequest {
            system: SYSTEM_PROMPT.trim().to_string(),
            user: build_sln_prompt(&self.state.archive, &self.task.brief(), self.config.sln_prompt_budget),
            temperature,
            max_tokens,
            purpose: Purpose::Navigate,
        };
        for _ in 0..2 {
            let exchange = self.providers.chat.chat(&request).map_err(self.provider_error(t))?;
            match parse_guidance(&exchange.response.text, t) {
                Ok(guidance) => {
                    pending.guidance.push_str(&jsonl(&GuidanceRecord { generation: t, guidance: guidance.clone() }));
                    self.state.guidance = Some(guidance);
                    self.state.totals.sln_refreshes += 1;
                    return Ok(());
                }
                Err(_) => self.state.totals.sln_parse_failures += 1,
            }
        }
        Ok(())
    }

    fn generation(&mut self, t: u64) -> Result<(), RunError> {
        let mut pending = Pending::default();
        if should_refresh(t, self.config.sln_interval) {
            self.refresh_guidance(t, &mut pending)?;
        }
        let route = epsilon_route(&mut self.state.rng, self.config.epsilon);
        let parent = base_select(&self.state.archive, &mut self.state.rng).clone();
        let mut guidance_gen = None;

        let candidate = match route {
            Route::Strategy => {
                let (candidate, used) = self.articulate(t, &parent)?;
                guidance_gen = used;
                match candidate {
                    Some(c) => Some(c),
                    None => {
                        self.state.totals.sa_fallbacks += 1;
                        self.base_candidate(t, &parent)?
                    }
                }
            }
            _ => self.base_candidate(t, &parent)?,
        };

        let mut fitness = None;
        let mut final_route = Route::Skipped;
        let mut records = Vec::new();
        if let Some(c) = candidate {
            let result = self.evaluator.evaluate(&c.program, &self.task);
            let mut candidate_id = None;
            if let Some(f) = result.fitness {
                let embedding = self.providers.embedder.embed(&c.strategy).map_err(self.provider_error(t))?;
                let (cost, usage) = self.take_usage();
                records = usage;
                let entry = ArchiveEntry {
                    id: self.state.next_id,
                    parent_id: Some(parent.id),
                    generation: t,
                    produced_by: c.produced_by,
                    fitness: f,
                    strategy_description: c.strategy,
                    behavior_vector: result.behavior_vector.clone(),
                    cost,
                    program_source: c.program,
                    strategy_embedding: embedding.vector,
                };
                self.state.archive.insert(entry.clone())?;
                self.state.next_id += 1;
                pending.archive.push_str(&jsonl(&entry));
                candidate_id = Some(entry.id);
                fitness = Some(f);
                final_route = c.route;
                self.state.best_so_far = self.state.best_so_far.max(f);
            }
            pending.evaluations.push_str(&jsonl(&EvaluationRecord { generation: t, candidate_id, result }));
        }
        records.extend(self.providers.ledger.drain());
        self.account(t, records, &mut pending);

        match final_route {
            Route::Base => self.state.totals.base_generations += 1,
            Route::Strategy => self.state.totals.strategy_generations += 1,
            Route::Skipped => self.state.totals.skipped_generations += 1,
        }
        let row = TrajectoryRow {
            generation: t,
            fitness,
            best_so_far: self.state.best_so_far,
            cumulative_cost_usd: self.state.cumulative_cost,
            route: final_route,
            guidance_gen,
        };
        pending.trajectory = trajectory_line(&row);
        self.state.trajectory.push(row);
        self.commit(t, pending)
    }

    /// Strategy route: retrieval, then articulation with a bounded number of
    /// parse attempts. Returns the guidance generation used in the prompt.
    fn articulate(&mut self, t: u64, parent: &ArchiveEntry) -> Result<(Option<Candidate>, Option<u64>), RunError> {
        let cfg = &self.config;
        let clusters = if clustering_active(t, cfg.warmup, self.state.archive.len(), cfg.clusters) {
            let seed: u64 = self.state.rng.random();
            Some(cluster(&archive_embeddings(&self.state.archive), cfg.clusters, seed)?)
        } else {
            None
        };
        let inspirations =
            select_inspirations(&self.state.archive, parent.id, t, cfg.warmup, clusters.as_ref(), &mut self.state.rng)?;
        let guidance = self.state.guidance.as_ref();
        let used = guidance.map(|g| g.refreshed_at);
        let (temperature, max_tokens) = self.chat_params();
        let request = ChatRequest {
            system: SYSTEM_PROMPT.trim().to_string(),
            user: build_sa_prompt(parent, &inspirations, guidance, &self.task.brief()),
            temperature,
            max_tokens,
            purpose: Purpose::Articulate,
        };
        for _ in 0..self.config.sa_parse_attempts {
            let exchange = self.providers.chat.chat(&request).map_err(self.provider_error(t))?;
            match parse_sa_response(&exchange.response.text) {
                Ok(r) => {
                    return Ok((
                        Some(Candidate {
                            program: r.program,
                            strategy: r.strategy,
                            produced_by: ProducedBy::StrategyPipeline,
                            route: Route::Strategy,
                        }),
                        used,
                    ))
                }
                Err(_) => self.state.totals.sa_parse_failures += 1,
            }
        }
        Ok((None, used))
    }

    /// Base route: plain mutation, then a describe call for the new program.
    fn base_candidate(&mut self, t: u64, parent: &ArchiveEntry) -> Result<Option<Candidate>, RunError> {
        let (temperature, max_tokens) = self.chat_params();
        let brief = self.task.brief();
        let (program, _) = base_mutate(
            parent,
            &brief,
            &*self.providers.chat,
            temperature,
            max_tokens,
            self.config.sa_parse_attempts,
        )
        .map_err(self.provider_error(t))?;
        let Some(program) = program else { return Ok(None) };
        let (strategy, _) = describe_program(&program, &brief, &*self.providers.chat, temperature, max_tokens)
            .map_err(self.provider_error(t))?;
        Ok(Some(Candidate { program, strategy, produced_by: ProducedBy::BaseFallback, route: Route::Base }))
    }

    fn finish(&mut self) -> Result<(), RunError> {
        let best = self.state.archive.best()?;
        let summary = Summary {
            task: self.task.id().to_string(),
            completed: true,
            generations_completed: self.state.generation,
            generations: self.config.generations,
            best_id: best.id,
            best_fitness: best.fitness,
            best_generation: best.generation,
            reference: self.task.reference(),
            total_cost_usd: self.state.totals.total_cost_usd,
            totals: self.state.totals.clone(),
        };
        self.dir.write_atomic(SUMMARY, &serde_json::to_string_pretty(&summary).expect("summary serializes"))?;
        let mut checkpoint: Checkpoint = rundir::read_json(&self.dir.path(CHECKPOINT))?;
        checkpoint.completed = true;
        self.write_checkpoint(&checkpoint)
    }
}
