use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::controller::TriggerReason;
use crate::error::{Error, Result};

/// One line of `epochs.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRow {
    pub epoch: usize,
    pub episodes: usize,
    pub success_rate: f64,
    pub avg_reward: f64,
    pub avg_turns: f64,
    pub turns: u64,
    pub s2_turns: u64,
    pub s2_rate: f64,
    pub exploration_condition: u64,
    pub confidence_condition: u64,
    pub both: u64,
    pub none: u64,
    pub random: u64,
    pub forced_off: u64,
    pub buffer_len: usize,
    pub distilled: bool,
}

impl EpochRow {
    pub fn new(epoch: usize) -> Self {
        EpochRow {
            epoch,
            episodes: 0,
            success_rate: 0.0,
            avg_reward: 0.0,
            avg_turns: 0.0,
            turns: 0,
            s2_turns: 0,
            s2_rate: 0.0,
            exploration_condition: 0,
            confidence_condition: 0,
            both: 0,
            none: 0,
            random: 0,
            forced_off: 0,
            buffer_len: 0,
            distilled: false,
        }
    }

    pub fn count_reason(&mut self, reason: TriggerReason) {
        let slot = match reason {
            TriggerReason::ExplorationCondition => &mut self.exploration_condition,
            TriggerReason::ConfidenceCondition => &mut self.confidence_condition,
            TriggerReason::Both => &mut self.both,
            TriggerReason::None => &mut self.none,
            TriggerReason::Random => &mut self.random,
            TriggerReason::ForcedOff => &mut self.forced_off,
        };
        *slot += 1;
    }
}

/// One line of `eval.csv`; rates in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub epoch: usize,
    pub episodes: usize,
    pub inform: f64,
    pub success: f64,
    pub book: f64,
    pub avg_turns: f64,
    pub s2_rate: f64,
}

/// One controller decision, as written to `triggers.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TriggerRecord {
    pub epoch: usize,
    pub episode: usize,
    pub turn: usize,
    pub d: f64,
    pub u: f64,
    pub rho: f64,
    pub cell: [u32; 3],
    pub n: u64,
    pub threshold: f64,
    pub p_s1: f64,
    pub use_s2: bool,
    pub reason: TriggerReason,
}

pub(crate) fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    for r in rows {
        w.serialize(r).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::State(format!("{}: {other:?}", path.display())),
    }
}

pub(crate) fn write_jsonl<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in rows {
        let line = serde_json::to_string(&r).expect("record serializes");
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("value serializes");
    text.push('\n');
    write_text(path, &text)
}

pub(crate) fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_has_header_and_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.csv");
        let mut row = EpochRow::new(1);
        row.count_reason(TriggerReason::Both);
        write_csv(&path, &[row]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert!(lines.next().unwrap().starts_with("epoch,episodes,success_rate"));
        assert_eq!(lines.count(), 1);
    }
}
