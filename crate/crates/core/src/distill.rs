//! Buffer of confident deliberative decisions and the periodic pass that
//! pulls the fast policy toward them.

use std::collections::VecDeque;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dialog::{BeliefState, DialogAct};
use crate::error::{Error, Result};
use crate::policy::{FastPolicy, LearnOutcome};

/// Records are kept only when the deliberative policy's own success
/// estimate is strictly above this.
pub const STORE_GATE: f64 = 0.9;
pub const DEFAULT_CAPACITY: usize = 10_000;
pub const DEFAULT_PERIOD: usize = 10;
pub const DEFAULT_STEP: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistillRecord {
    pub state: BeliefState,
    pub action: Vec<DialogAct>,
    pub p_self: f64,
}

/// Adapter settings written to export headers for external trainers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdapterSettings {
    pub rank: u32,
    pub alpha: u32,
    pub dropout: f64,
}

impl Default for AdapterSettings {
    fn default() -> Self {
        AdapterSettings {
            rank: 16,
            alpha: 32,
            dropout: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExportHeader {
    pub kind: String,
    pub gate: f64,
    pub capacity: usize,
    pub period: usize,
    pub records: usize,
    pub lora: AdapterSettings,
}

/// FIFO store with a fixed capacity; the oldest record goes first.
#[derive(Debug, Clone, PartialEq)]
pub struct DistillBuffer {
    records: VecDeque<DistillRecord>,
    capacity: usize,
    period: usize,
    stored: u64,
    rejected: u64,
    evicted: u64,
}

impl Default for DistillBuffer {
    fn default() -> Self {
        Self::new(DEFAULT_CAPACITY)
    }
}

impl DistillBuffer {
    pub fn new(capacity: usize) -> Self {
        DistillBuffer {
            records: VecDeque::new(),
            capacity: capacity.max(1),
            period: DEFAULT_PERIOD,
            stored: 0,
            rejected: 0,
            evicted: 0,
        }
    }

    pub fn with_period(mut self, period: usize) -> Self {
        self.period = period.max(1);
        self
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn period(&self) -> usize {
        self.period
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> impl Iterator<Item = &DistillRecord> {
        self.records.iter()
    }

    pub fn stats(&self) -> BufferStats {
        BufferStats {
            len: self.records.len(),
            capacity: self.capacity,
            stored: self.stored,
            rejected: self.rejected,
            evicted: self.evicted,
        }
    }

    pub fn maybe_store(&mut self, record: DistillRecord) -> bool {
        if !(record.p_self > STORE_GATE) {
            self.rejected += 1;
            return false;
        }
        if self.records.len() == self.capacity {
            self.records.pop_front();
            self.evicted += 1;
        }
        self.records.push_back(record);
        self.stored += 1;
        true
    }

    /// Header line with the gate and schedule, then one record per line.
    pub fn export(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let header = ExportHeader {
            kind: "metadata".into(),
            gate: STORE_GATE,
            capacity: self.capacity,
            period: self.period,
            records: self.records.len(),
            lora: AdapterSettings::default(),
        };
        let mut write_line = |v: String| writeln!(w, "{v}").map_err(|e| Error::io(path, e));
        write_line(serde_json::to_string(&header).expect("header serializes"))?;
        for r in &self.records {
            write_line(serde_json::to_string(r).expect("record serializes"))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BufferStats {
    pub len: usize,
    pub capacity: usize,
    pub stored: u64,
    pub rejected: u64,
    pub evicted: u64,
}

/// Runs one pass when `epoch` is a positive multiple of the buffer's
/// period and the buffer holds something. Returns whether the policy's
/// parameters changed; exporting backends report `false`.
pub fn run_distillation(
    buffer: &DistillBuffer,
    backend: &mut dyn FastPolicy,
    epoch: usize,
    step: f64,
) -> Result<bool> {
    if epoch == 0 || !epoch.is_multiple_of(buffer.period) || buffer.is_empty() {
        return Ok(false);
    }
    let records: Vec<DistillRecord> = buffer.records.iter().cloned().collect();
    Ok(backend.learn(&records, step)? == LearnOutcome::Updated)
}
