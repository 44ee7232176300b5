use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::simenv::StepLog;

use super::episode::Trajectory;

/// Writes one JSON line per round: item ids, category ids, clicks, reward.
pub fn case_study_export(trajectory: &Trajectory, path: &Path) -> Result<()> {
    if !trajectory.terminated {
        return Err(Error::State("cannot export an unfinished trajectory".into()));
    }
    write_step_logs(trajectory.logs.iter(), path)
}

pub fn write_step_logs<'a>(logs: impl IntoIterator<Item = &'a StepLog>, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for log in logs {
        let line = serde_json::to_string(log).map_err(|e| Error::format(e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_step_logs(path: &Path) -> Result<Vec<StepLog>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    BufReader::new(file)
        .lines()
        .enumerate()
        .filter(|(_, l)| !matches!(l, Ok(s) if s.trim().is_empty()))
        .map(|(n, line)| {
            let line = line.map_err(|e| Error::io(path, e))?;
            serde_json::from_str(&line).map_err(|e| Error::format(format!("line {}: {e}", n + 1)))
        })
        .collect()
}
