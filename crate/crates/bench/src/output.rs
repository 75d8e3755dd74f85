use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{BenchError, Result};
use crate::experiment::Experiment;
use crate::metrics::{EpisodeRecord, TimingRecord};
use crate::timing::timing_report;

pub const SUMMARY: &str = "summary.csv";
pub const EPISODES: &str = "episodes.jsonl";
pub const TIMINGS: &str = "timing.jsonl";
pub const TIMING_REPORT: &str = "timing.csv";
pub const RESOLVED_CONFIG: &str = "config.resolved.json";

/// Writes `text` next to `path` and renames it into place.
pub fn write_atomic(path: &Path, text: &str) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| BenchError::io(dir, e))?;
    tmp.write_all(text.as_bytes()).map_err(|e| BenchError::io(path, e))?;
    tmp.persist(path).map_err(|e| BenchError::io(path, e.error))?;
    Ok(())
}

pub fn to_jsonl<T: Serialize>(items: &[T]) -> String {
    let mut out = String::new();
    for item in items {
        out += &serde_json::to_string(item).expect("records serialize");
        out.push('\n');
    }
    out
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = std::fs::read_to_string(path).map_err(|e| BenchError::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| BenchError::parse(path, format!("line {}: {e}", i + 1))))
        .collect()
}

/// Writes summary.csv, episodes.jsonl, timing.jsonl, timing.csv and
/// config.resolved.json. Everything is rendered before the first file is
/// touched, and each file is replaced atomically.
pub fn emit_outputs(experiment: &Experiment, config: &ExperimentConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    let files = [
        (SUMMARY, experiment.summary.to_csv()),
        (EPISODES, to_jsonl(&experiment.records)),
        (TIMINGS, to_jsonl(&experiment.timings)),
        (TIMING_REPORT, timing_report(&experiment.timings).to_csv()),
        (RESOLVED_CONFIG, config.to_json() + "\n"),
    ];
    std::fs::create_dir_all(dir).map_err(|e| BenchError::io(dir, e))?;
    let mut written = Vec::new();
    for (name, text) in files {
        let path = dir.join(name);
        write_atomic(&path, &text)?;
        written.push(path);
    }
    Ok(written)
}

pub fn read_episodes(dir: &Path) -> Result<Vec<EpisodeRecord>> {
    read_jsonl(&dir.join(EPISODES))
}

pub fn read_timings(dir: &Path) -> Result<Vec<TimingRecord>> {
    read_jsonl(&dir.join(TIMINGS))
}
