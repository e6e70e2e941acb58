//! Durable per-episode trajectory logs.
//!
//! Step records are buffered and appended to `trajectory.jsonl` every
//! `every` steps with an fsync, so a crash loses at most `every` steps.
//! `finish` flushes whatever is left.

use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use pmbench_core::agent_api::StepRecord;
use pmbench_core::simulator::StepObserver;

pub const TRAJECTORY_FILE: &str = "trajectory.jsonl";

pub struct TrajectoryWriter {
    path: PathBuf,
    file: File,
    every: u64,
    pending: Vec<u8>,
    last_step: u64,
    checkpoints: Vec<u64>,
}

impl TrajectoryWriter {
    /// Starts a fresh log at `path`, truncating any previous one.
    pub fn create(path: &Path, every: u64) -> io::Result<Self> {
        assert!(every > 0, "checkpoint interval must be positive");
        let file = OpenOptions::new().create(true).write(true).truncate(true).open(path)?;
        Ok(Self { path: path.to_path_buf(), file, every, pending: Vec::new(), last_step: 0, checkpoints: Vec::new() })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Steps at which records were made durable.
    pub fn checkpoints(&self) -> &[u64] {
        &self.checkpoints
    }

    fn checkpoint(&mut self) -> io::Result<()> {
        if self.pending.is_empty() {
            return Ok(());
        }
        self.file.write_all(&self.pending)?;
        self.file.sync_data()?;
        self.pending.clear();
        self.checkpoints.push(self.last_step);
        Ok(())
    }

    /// Final flush. Returns the checkpoint steps.
    pub fn finish(mut self) -> io::Result<Vec<u64>> {
        self.checkpoint()?;
        Ok(self.checkpoints)
    }
}

impl StepObserver for TrajectoryWriter {
    fn on_step(&mut self, record: &StepRecord) -> io::Result<()> {
        serde_json::to_writer(&mut self.pending, record)?;
        self.pending.push(b'\n');
        self.last_step = record.step;
        if record.step.is_multiple_of(self.every) {
            self.checkpoint()?;
        }
        Ok(())
    }
}

/// Reads back the durable prefix of a trajectory, stopping at the first
/// incomplete or unreadable line.
pub fn read_trajectory(path: &Path) -> io::Result<Vec<StepRecord>> {
    let mut out = Vec::new();
    for line in BufReader::new(File::open(path)?).lines() {
        match serde_json::from_str::<StepRecord>(&line?) {
            Ok(r) => out.push(r),
            Err(_) => break,
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use pmbench_core::agent_api::StepSummary;

    fn record(step: u64) -> StepRecord {
        StepRecord {
            step,
            ts: step as i64 * 1000,
            summary: StepSummary {
                step_index: step - 1,
                now_ts: step as i64 * 1000,
                cash: 1,
                equity: 1,
                markets: vec![],
                positions: vec![],
                open_orders: vec![],
            },
            calls: vec![],
        }
    }

    #[test]
    fn checkpoints_every_fifty_and_at_end() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(TRAJECTORY_FILE);
        let mut w = TrajectoryWriter::create(&path, 50).unwrap();
        for s in 1..=120 {
            w.on_step(&record(s)).unwrap();
        }
        assert_eq!(w.finish().unwrap(), vec![50, 100, 120]);
        assert_eq!(read_trajectory(&path).unwrap().len(), 120);
    }

    #[test]
    fn crash_loses_at_most_one_interval() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(TRAJECTORY_FILE);
        let mut w = TrajectoryWriter::create(&path, 50).unwrap();
        for s in 1..=60 {
            w.on_step(&record(s)).unwrap();
        }
        drop(w);
        let got = read_trajectory(&path).unwrap();
        assert_eq!(got, (1..=50).map(record).collect::<Vec<_>>());
    }

    #[test]
    fn torn_tail_is_ignored() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(TRAJECTORY_FILE);
        let mut w = TrajectoryWriter::create(&path, 1).unwrap();
        for s in 1..=3 {
            w.on_step(&record(s)).unwrap();
        }
        w.finish().unwrap();
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(b"{\"step\":4,\"ts\"").unwrap();
        assert_eq!(read_trajectory(&path).unwrap().len(), 3);
    }

    #[test]
    fn every_step_when_interval_is_one() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(TRAJECTORY_FILE);
        let mut w = TrajectoryWriter::create(&path, 1).unwrap();
        for s in 1..=5 {
            w.on_step(&record(s)).unwrap();
        }
        assert_eq!(w.checkpoints(), &[1, 2, 3, 4, 5]);
    }
}
