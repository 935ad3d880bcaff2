//! Versioned metrics CSV files.
//!
//! ```text
//! #metrics-schema-version=1
//! train_episodes,eval_round,mean_eval_reward,std_eval_reward,wallclock_s,loss_policy,loss_value,entropy
//! 1000,1,-41.2,7.9,,0.001,18.2,1.31
//! ```

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use tracklet_core::marl::{MetricsRow, METRICS_COLUMNS};

pub const SCHEMA_VERSION: u32 = 1;
const SCHEMA_PREFIX: &str = "#metrics-schema-version=";

/// Streams rows to disk as training produces them.
pub struct MetricsWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl MetricsWriter<BufWriter<File>> {
    pub fn create(path: &Path) -> std::io::Result<Self> {
        Self::new(BufWriter::new(File::create(path)?))
    }
}

impl<W: Write> MetricsWriter<W> {
    pub fn new(mut w: W) -> std::io::Result<Self> {
        writeln!(w, "{SCHEMA_PREFIX}{SCHEMA_VERSION}")?;
        let mut inner = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        inner.write_record(METRICS_COLUMNS)?;
        Ok(MetricsWriter { inner })
    }

    pub fn push(&mut self, row: &MetricsRow) -> std::io::Result<()> {
        self.inner.serialize(row)?;
        self.inner.flush()
    }

    pub fn finish(mut self) -> std::io::Result<W> {
        self.inner.flush()?;
        self.inner.into_inner().map_err(|e| e.into_error())
    }
}

pub fn write_metrics(path: &Path, rows: &[MetricsRow]) -> std::io::Result<()> {
    let mut w = MetricsWriter::create(path)?;
    for r in rows {
        w.push(r)?;
    }
    w.finish()?.flush()
}

pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRow>, String> {
    let f = File::open(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
    parse_metrics(f).map_err(|e| format!("{}: {e}", path.display()))
}

/// Parse a metrics file, checking the version line and every header column.
pub fn parse_metrics(r: impl Read) -> Result<Vec<MetricsRow>, String> {
    let mut r = BufReader::new(r);
    let mut first = String::new();
    r.read_line(&mut first).map_err(|e| e.to_string())?;
    if first.is_empty() {
        return Err("no evaluation rounds (empty file)".into());
    }
    let version = first
        .trim_end()
        .strip_prefix(SCHEMA_PREFIX)
        .ok_or_else(|| "missing metrics schema version line".to_string())?;
    match version.parse::<u32>() {
        Ok(SCHEMA_VERSION) => {}
        _ => return Err(format!("unsupported metrics schema version {version:?}, expected {SCHEMA_VERSION}")),
    }
    let mut csv = csv::Reader::from_reader(r);
    let header = csv.headers().map_err(|e| e.to_string())?.clone();
    for (i, want) in METRICS_COLUMNS.iter().enumerate() {
        match header.get(i) {
            Some(got) if got == *want => {}
            Some(got) => return Err(format!("schema mismatch in column {}: found {got:?}, expected {want:?}", i + 1)),
            None => return Err(format!("schema mismatch: missing column {want:?}")),
        }
    }
    if header.len() > METRICS_COLUMNS.len() {
        return Err(format!("schema mismatch: unexpected column {:?}", &header[METRICS_COLUMNS.len()]));
    }
    let rows = csv
        .deserialize()
        .collect::<Result<Vec<MetricsRow>, _>>()
        .map_err(|e| e.to_string())?;
    if rows.is_empty() {
        return Err("no evaluation rounds".into());
    }
    Ok(rows)
}
