use std::fmt;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::rundir::{read_jsonl, read_trajectory, RunDir, ARCHIVE_LOG, TRAJECTORY};
use super::RunError;
use crate::archive::{Archive, ArchiveEntry};
use crate::strategy_space::{archive_embeddings, cluster};
use crate::tasks::Task;

/// Read-only view of a run directory.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub run_dir: PathBuf,
    pub task: String,
    pub partial: bool,
    pub generations_completed: u64,
    pub generations: u64,
    pub best_id: u64,
    pub best_fitness: f64,
    pub best_generation: u64,
    pub reference: Option<f64>,
    /// First generation whose best-so-far equals the final best (0 = seed).
    pub generations_to_best: u64,
    pub total_cost_usd: f64,
    pub trajectory_path: PathBuf,
}

/// Replays the persisted archive up to the last checkpoint.
fn load_archive(dir: &RunDir) -> Result<(Archive, u64, bool, u64), RunError> {
    let header = dir.read_header()?;
    let checkpoint = dir.read_checkpoint()?;
    let done = checkpoint.as_ref().map_or(0, |c| c.generation);
    let completed = checkpoint.as_ref().is_some_and(|c| c.completed);
    let mut archive = Archive::new(header.config.capacity)?;
    if checkpoint.is_some() {
        let entries: Vec<ArchiveEntry> = read_jsonl(&dir.path(ARCHIVE_LOG))?;
        for e in entries.into_iter().filter(|e| e.generation <= done) {
            archive.insert(e)?;
        }
    }
    Ok((archive, done, completed, header.config.generations))
}

pub fn report(run_dir: &Path) -> Result<Report, RunError> {
    let dir = RunDir::new(run_dir);
    let header = dir.read_header()?;
    let (archive, done, completed, generations) = load_archive(&dir)?;
    let task = Task::new(header.config.task.clone())?;
    let trajectory_path = dir.path(TRAJECTORY);
    let trajectory: Vec<_> =
        read_trajectory(&trajectory_path)?.into_iter().filter(|r| r.generation <= done).collect();
    let best = archive.best().map_err(|_| RunError::CorruptLog {
        file: dir.path(ARCHIVE_LOG),
        line: 0,
        message: "no archived entries (the seed generation did not finish)".into(),
    })?;
    let generations_to_best = trajectory
        .iter()
        .find(|r| r.best_so_far >= best.fitness)
        .map_or(0, |r| if best.generation == 0 { 0 } else { r.generation });
    Ok(Report {
        run_dir: run_dir.to_path_buf(),
        task: task.id().to_string(),
        partial: !completed,
        generations_completed: done,
        generations,
        best_id: best.id,
        best_fitness: best.fitness,
        best_generation: best.generation,
        reference: task.reference(),
        generations_to_best,
        total_cost_usd: trajectory.last().map_or(0.0, |r| r.cumulative_cost_usd),
        trajectory_path,
    })
}

impl Report {
    /// `key,value` rows.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["key", "value"])?;
        let rows: Vec<(&str, String)> = vec![
            ("task", self.task.clone()),
            ("partial", self.partial.to_string()),
            ("generations_completed", self.generations_completed.to_string()),
            ("generations", self.generations.to_string()),
            ("best_id", self.best_id.to_string()),
            ("best_fitness", self.best_fitness.to_string()),
            ("best_generation", self.best_generation.to_string()),
            ("reference", self.reference.map(|r| r.to_string()).unwrap_or_default()),
            ("generations_to_best", self.generations_to_best.to_string()),
            ("total_cost_usd", self.total_cost_usd.to_string()),
            ("trajectory", self.trajectory_path.display().to_string()),
        ];
        for (k, v) in rows {
            w.write_record([k, v.as_str()])?;
        }
        w.flush()?;
        Ok(())
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "run: {}", self.run_dir.display())?;
        writeln!(f, "task: {}", self.task)?;
        if self.partial {
            writeln!(f, "status: PARTIAL ({} of {} generations)", self.generations_completed, self.generations)?;
        } else {
            writeln!(f, "status: complete ({} generations)", self.generations)?;
        }
        writeln!(
            f,
            "best fitness: {} (entry {}, generation {})",
            self.best_fitness, self.best_id, self.best_generation
        )?;
        match self.reference {
            Some(r) => writeln!(f, "reference: {r} (best / reference = {:.4})", self.best_fitness / r)?,
            None => writeln!(f, "reference: none for this problem size")?,
        }
        writeln!(f, "generations to best: {}", self.generations_to_best)?;
        writeln!(f, "total cost (USD): {}", self.total_cost_usd)?;
        write!(f, "trajectory: {}", self.trajectory_path.display())
    }
}

/// Clusters the persisted archive with the run's `C` and seed and writes the
/// embedding CSV.
pub fn export_embeddings<W: Write>(run_dir: &Path, out: W) -> Result<usize, RunError> {
    let dir = RunDir::new(run_dir);
    let header = dir.read_header()?;
    let (archive, ..) = load_archive(&dir)?;
    if archive.is_empty() {
        return Ok(0);
    }
    let state = cluster(&archive_embeddings(&archive), header.config.clusters, header.config.seed)?;
    crate::strategy_space::export_embeddings(&archive, &state, out).map_err(|e| RunError::Io {
        path: run_dir.to_path_buf(),
        source: std::io::Error::other(e),
    })?;
    Ok(archive.len())
}
