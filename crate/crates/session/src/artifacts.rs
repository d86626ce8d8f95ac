//! Session artifacts: the JSONL round log, metrics CSV and snapshots.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use cape_core::acquisition::Policy;
use cape_core::metrics::MetricsRow;
use cape_core::{Label, Result};
use serde::{Deserialize, Serialize};
use serde_json::json;

/// One line of the round log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub pair: [usize; 2],
    pub label: Label,
    pub policy: Policy,
    pub eig: Option<f64>,
    /// Screening score of the asked pair.
    pub u: f64,
    /// Predictive for the asked pair before the answer.
    pub predictive: [f64; 3],
    /// ESS after reweighting, before any resampling.
    pub ess_before: f64,
    pub resampled: bool,
    pub rejuvenation_accept_rate: Option<f64>,
    pub metrics: MetricsRow,
}

pub const LOG_FILE: &str = "session.jsonl";
pub const METRICS_FILE: &str = "metrics.csv";
pub const FINAL_PARTICLES_FILE: &str = "particles_final.json";
pub const HISTORY_FILE: &str = "history.json";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
/// Present when a session aborted before writing all artifacts.
pub const INCOMPLETE_MARKER: &str = "INCOMPLETE";

/// Appends round records to `session.jsonl` under an artifact directory.
pub struct LogSink {
    dir: PathBuf,
    out: BufWriter<File>,
}

impl LogSink {
    /// Creates the directory and starts a fresh log with `header`.
    pub fn create(dir: &Path, header: &serde_json::Value) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let _ = fs::remove_file(dir.join(INCOMPLETE_MARKER));
        let mut out = BufWriter::new(File::create(dir.join(LOG_FILE))?);
        serde_json::to_writer(&mut out, header)?;
        out.write_all(b"\n")?;
        out.flush()?;
        Ok(Self { dir: dir.to_path_buf(), out })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn round(&mut self, rec: &RoundRecord) -> Result<()> {
        serde_json::to_writer(&mut self.out, rec)?;
        self.out.write_all(b"\n")?;
        self.out.flush()?;
        Ok(())
    }

    pub fn end(&mut self, status: &str, rounds: usize, reason: Option<&str>) -> Result<()> {
        let line = json!({ "event": "end", "status": status, "rounds_completed": rounds, "reason": reason });
        serde_json::to_writer(&mut self.out, &line)?;
        self.out.write_all(b"\n")?;
        self.out.flush()?;
        Ok(())
    }
}

/// Writes a file via a temporary sibling and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Leaves a marker naming the failure next to the partial artifacts.
pub fn mark_incomplete(dir: &Path, why: &str) {
    if let Err(e) = fs::create_dir_all(dir).and_then(|_| fs::write(dir.join(INCOMPLETE_MARKER), why)) {
        log::error!("could not mark {} incomplete: {e}", dir.display());
    }
}

/// Wide per-round metrics table.
pub fn write_metrics_csv(path: &Path, rows: &[RoundRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut head = vec!["round".to_string()];
    head.extend(MetricsRow::NAMES.iter().map(|s| s.to_string()));
    w.write_record(&head)?;
    for r in rows {
        let mut line = vec![r.round.to_string()];
        line.extend(r.metrics.values().iter().map(|v| v.to_string()));
        w.write_record(&line)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads the round records back from a session log, skipping other events.
pub fn read_round_log(path: &Path) -> Result<Vec<RoundRecord>> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let v: serde_json::Value = serde_json::from_str(line)?;
        if v.get("event").is_none() {
            out.push(serde_json::from_value(v)?);
        }
    }
    Ok(out)
}
