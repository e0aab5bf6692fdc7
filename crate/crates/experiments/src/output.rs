//! Where finished cells go: memory, or a CSV file with resume support.
//!
//! A cell's rows are written and flushed before its id is appended to the
//! `<out>.progress` sidecar. On resume, rows of cells missing from the
//! progress file are dropped and those cells recomputed, so an interrupted
//! run ends with the same bytes as an uninterrupted one. Wall times go to a
//! separate `<out>.timing.csv` because they differ between runs.

use std::collections::BTreeSet;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;

/// Receives the rows of each finished cell in cell order.
pub trait RecordSink<R> {
    /// Whether `cell` was already completed by an earlier run.
    fn is_done(&self, _cell: usize) -> bool {
        false
    }

    /// Rows with the wall time (seconds) of the replication that produced each.
    fn write_cell(&mut self, cell: usize, rows: Vec<(R, f64)>) -> Result<()>;
}

impl<R> RecordSink<R> for Vec<R> {
    fn write_cell(&mut self, _cell: usize, rows: Vec<(R, f64)>) -> Result<()> {
        self.extend(rows.into_iter().map(|(r, _)| r));
        Ok(())
    }
}

#[derive(Serialize)]
struct Timing {
    cell: usize,
    row: usize,
    wall_time: f64,
}

pub struct CsvSink {
    rows: csv::Writer<File>,
    timing: csv::Writer<File>,
    progress: File,
    done: BTreeSet<usize>,
}

pub fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Rewrites `path` keeping the header and rows whose `cell` column is in `keep`.
/// Returns whether a header was present.
fn filter_rows(path: &Path, keep: &BTreeSet<usize>) -> Result<bool> {
    if !path.exists() {
        return Ok(false);
    }
    let mut reader = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_path(path)?;
    let mut records = reader.records();
    let Some(header) = records.next().transpose()? else {
        return Ok(false);
    };
    let cell_col = header
        .iter()
        .position(|h| h == "cell")
        .with_context(|| format!("{} has no cell column", path.display()))?;
    let mut kept = Vec::new();
    for rec in records {
        let rec = rec?;
        if rec.len() != header.len() {
            // torn final row of an interrupted write
            continue;
        }
        let cell: usize = rec.get(cell_col).unwrap_or("").parse().context("bad cell id")?;
        if keep.contains(&cell) {
            kept.push(rec);
        }
    }
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(&header)?;
    for rec in kept {
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(true)
}

fn append_writer(path: &Path, has_header: bool) -> Result<csv::Writer<File>> {
    let file = OpenOptions::new().create(true).append(true).open(path)?;
    Ok(csv::WriterBuilder::new().has_headers(!has_header).from_writer(file))
}

impl CsvSink {
    /// `fingerprint` identifies the run's settings; resuming a run made with
    /// different settings is refused.
    pub fn create(path: &Path, resume: bool, fingerprint: &str) -> Result<Self> {
        let progress_path = sidecar(path, ".progress");
        let timing_path = sidecar(path, ".timing.csv");
        let mut done = BTreeSet::new();
        if resume && progress_path.exists() {
            let mut lines = BufReader::new(File::open(&progress_path)?).lines();
            let first = lines.next().transpose()?.unwrap_or_default();
            if first.strip_prefix("# ") != Some(fingerprint) {
                bail!(
                    "{} was written with different settings; rerun without --resume",
                    path.display()
                );
            }
            for line in lines {
                let line = line?;
                if !line.trim().is_empty() {
                    done.insert(line.trim().parse().context("corrupt progress file")?);
                }
            }
        }
        let (has_rows_header, has_timing_header) = if resume {
            (filter_rows(path, &done)?, filter_rows(&timing_path, &done)?)
        } else {
            for p in [path, &timing_path] {
                if p.exists() {
                    std::fs::remove_file(p).with_context(|| format!("cannot replace {}", p.display()))?;
                }
            }
            (false, false)
        };
        // rewritten so a truncated last line cannot survive
        let mut progress = File::create(&progress_path)?;
        writeln!(progress, "# {fingerprint}")?;
        for c in &done {
            writeln!(progress, "{c}")?;
        }
        Ok(CsvSink {
            rows: append_writer(path, has_rows_header)?,
            timing: append_writer(&timing_path, has_timing_header)?,
            progress,
            done,
        })
    }

    pub fn completed(&self) -> usize {
        self.done.len()
    }
}

impl<R: Serialize> RecordSink<R> for CsvSink {
    fn is_done(&self, cell: usize) -> bool {
        self.done.contains(&cell)
    }

    fn write_cell(&mut self, cell: usize, rows: Vec<(R, f64)>) -> Result<()> {
        for (i, (row, wall_time)) in rows.into_iter().enumerate() {
            self.rows.serialize(row)?;
            self.timing.serialize(Timing { cell, row: i, wall_time })?;
        }
        self.rows.flush()?;
        self.timing.flush()?;
        writeln!(self.progress, "{cell}")?;
        self.progress.flush()?;
        self.done.insert(cell);
        Ok(())
    }
}
