//! Per-cell summaries of a results file: mean, median and a 95% interval
//! for every metric column. Indicator columns get a Wilson interval,
//! numeric ones a normal interval around the mean.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use anyhow::{bail, Context, Result};
use serde::Serialize;

use crate::config::ExperimentKind;
use crate::records::{group_columns, ID_COLUMNS};

/// Columns holding sets or labels rather than measurements.
const TEXT_COLUMNS: &[&str] = &["variant", "density", "s_icp", "s_as", "ias", "icp"];

const Z95: f64 = 1.959_963_984_540_054;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SummaryRow {
    pub group: String,
    pub metric: String,
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

/// Guesses the experiment from the header of a results file.
pub fn detect_kind(header: &[String]) -> Option<ExperimentKind> {
    let has = |c: &str| header.iter().any(|h| h == c);
    if has("variant") {
        Some(ExperimentKind::FiniteSample)
    } else if has("mb_size") {
        Some(ExperimentKind::OracleHighdim)
    } else if has("running_max") {
        Some(ExperimentKind::MaxMi)
    } else if has("strict_superset") {
        Some(ExperimentKind::OracleLowdim)
    } else {
        None
    }
}

pub fn wilson(successes: usize, n: usize) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n = n as f64;
    let p = successes as f64 / n;
    let z2 = Z95 * Z95;
    let centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let half = Z95 * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / (1.0 + z2 / n);
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

fn parse_value(text: &str) -> Option<(f64, bool)> {
    match text {
        "true" => Some((1.0, true)),
        "false" => Some((0.0, true)),
        _ => text.parse().ok().map(|v| (v, false)),
    }
}

/// Summarizes `input` grouped by `by` (or the experiment's default grouping).
pub fn summarize<R: Read, W: Write>(input: R, output: W, by: Option<&[String]>) -> Result<usize> {
    let mut reader = csv::Reader::from_reader(input);
    let header: Vec<String> = reader.headers()?.iter().map(String::from).collect();
    let by: Vec<String> = match by {
        Some(cols) => cols.to_vec(),
        None => {
            let kind = detect_kind(&header).context("cannot tell which experiment produced this file; pass --by")?;
            group_columns(kind).iter().map(|s| s.to_string()).collect()
        }
    };
    let mut key_idx = Vec::new();
    for c in &by {
        match header.iter().position(|h| h == c) {
            Some(i) => key_idx.push(i),
            None => bail!("no column named {c}"),
        }
    }
    let metric_idx: Vec<usize> = (0..header.len())
        .filter(|i| !key_idx.contains(i))
        .filter(|&i| !ID_COLUMNS.contains(&header[i].as_str()) && !TEXT_COLUMNS.contains(&header[i].as_str()))
        .collect();

    // group -> metric -> (values, all indicator)
    let mut groups: BTreeMap<Vec<String>, Vec<(Vec<f64>, bool)>> = BTreeMap::new();
    for (line, rec) in reader.records().enumerate() {
        let rec = rec?;
        let key: Vec<String> = key_idx.iter().map(|&i| rec[i].to_string()).collect();
        let slots = groups.entry(key).or_insert_with(|| vec![(Vec::new(), true); metric_idx.len()]);
        for (slot, &i) in slots.iter_mut().zip(&metric_idx) {
            let (v, indicator) = parse_value(&rec[i])
                .with_context(|| format!("row {}: column {} is not numeric", line + 2, header[i]))?;
            slot.0.push(v);
            slot.1 &= indicator;
        }
    }

    let mut writer = csv::Writer::from_writer(output);
    let mut count = 0;
    for (key, slots) in groups {
        let group = by.iter().zip(&key).map(|(c, v)| format!("{c}={v}")).collect::<Vec<_>>().join(",");
        for ((mut values, indicator), &i) in slots.into_iter().zip(&metric_idx) {
            values.sort_by(f64::total_cmp);
            let n = values.len();
            let mean = values.iter().sum::<f64>() / n as f64;
            let (ci_low, ci_high) = if indicator {
                wilson(values.iter().filter(|&&v| v == 1.0).count(), n)
            } else if n > 1 {
                let sd = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
                let half = Z95 * sd / (n as f64).sqrt();
                (mean - half, mean + half)
            } else {
                (mean, mean)
            };
            writer.serialize(SummaryRow {
                group: group.clone(),
                metric: header[i].clone(),
                count: n,
                mean,
                median: median(&values),
                ci_low,
                ci_high,
            })?;
            count += 1;
        }
    }
    writer.flush()?;
    Ok(count)
}
