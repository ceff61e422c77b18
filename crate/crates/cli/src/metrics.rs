//! Run identifiers and the metrics.csv writer.
//!
//! A run id is the FNV-1a 64-bit hash (as 16 hex digits) of the resolved
//! config's JSON bytes, so identical configurations collide on purpose and
//! anything else cannot. metrics.csv rows are written with shortest
//! round-trip float formatting and `wall_ms = 0` unless timing was requested,
//! which keeps re-runs byte-identical.

use std::fs::File;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use crate::error::{CliError, Result};

pub const METRICS_HEADER: [&str; 5] = ["run_id", "step", "metric", "value", "wall_ms"];

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x100000001b3);
    }
    hash
}

/// 16 lowercase hex digits identifying a resolved configuration.
pub fn run_id(resolved_json: &str) -> String {
    format!("{:016x}", fnv1a64(resolved_json.as_bytes()))
}

/// Shortest decimal string that parses back to exactly `value`.
pub fn format_value(value: f64) -> String {
    ryu::Buffer::new().format(value).to_string()
}

pub struct MetricsWriter {
    writer: csv::Writer<File>,
    run_id: String,
    /// Present only when timing was requested; otherwise wall_ms stays 0.
    timer: Option<Instant>,
}

impl MetricsWriter {
    pub fn create(path: &Path, run_id: &str, timing: bool) -> Result<Self> {
        let file = File::create(path)
            .map_err(|e| CliError::io(&format!("cannot create {}", path.display()), e))?;
        let mut writer = csv::Writer::from_writer(file);
        writer
            .write_record(METRICS_HEADER)
            .map_err(|e| CliError::io("metrics header", e))?;
        Ok(MetricsWriter {
            writer,
            run_id: run_id.to_string(),
            timer: timing.then(Instant::now),
        })
    }

    pub fn record(&mut self, step: usize, metric: &str, value: f64) -> Result<()> {
        let wall_ms = self.timer.map_or(0, |t| t.elapsed().as_millis());
        self.writer
            .write_record([
                self.run_id.as_str(),
                &step.to_string(),
                metric,
                &format_value(value),
                &wall_ms.to_string(),
            ])
            .map_err(|e| CliError::io("metrics row", e))
    }

    pub fn finish(mut self) -> Result<()> {
        self.writer.flush().map_err(|e| CliError::io("metrics flush", e))?;
        self.writer
            .into_inner()
            .map_err(|e| CliError::io("metrics close", e))?
            .flush()
            .map_err(|e| CliError::io("metrics close", e))
    }
}
