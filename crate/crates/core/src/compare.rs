//! Side-by-side tables of metric files.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::trainer::METRICS_HEADER;

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub step: usize,
    pub split: String,
    pub loss: f64,
    pub accuracy: f64,
    pub scale_min: usize,
    pub scale_max: usize,
    pub scale_mean: f64,
    pub seconds: f64,
}

/// Parses a metrics CSV; `name` only labels error messages.
pub fn parse_metrics(name: &str, text: &str) -> Result<Vec<MetricsRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim_end() == METRICS_HEADER => {}
        Some(h) => return Err(Error::Data(format!("{name}: unexpected header `{h}`"))),
        None => return Err(Error::Data(format!("{name}: empty file"))),
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let bad = || Error::Data(format!("{name}: malformed row {}", i + 2));
        let f: Vec<&str> = line.trim_end().split(',').collect();
        if f.len() != 8 {
            return Err(bad());
        }
        rows.push(MetricsRow {
            step: f[0].parse().map_err(|_| bad())?,
            split: f[1].to_string(),
            loss: f[2].parse().map_err(|_| bad())?,
            accuracy: f[3].parse().map_err(|_| bad())?,
            scale_min: f[4].parse().map_err(|_| bad())?,
            scale_max: f[5].parse().map_err(|_| bad())?,
            scale_mean: f[6].parse().map_err(|_| bad())?,
            seconds: f[7].parse().map_err(|_| bad())?,
        });
    }
    Ok(rows)
}

/// The row a run is judged by: its last test row, else its last row.
pub fn final_row(rows: &[MetricsRow]) -> Option<&MetricsRow> {
    rows.iter().rev().find(|r| r.split == "test").or(rows.last())
}

#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub labels: Vec<String>,
    /// `(step, split)` union across runs, each with one cell per run.
    pub rows: Vec<((usize, String), Vec<Option<(f64, f64)>>)>,
    pub finals: Vec<Option<MetricsRow>>,
}

fn split_rank(s: &str) -> u8 {
    match s {
        "train" => 0,
        "test" => 1,
        _ => 2,
    }
}

pub fn compare(runs: &[(String, Vec<MetricsRow>)]) -> Result<Comparison> {
    if runs.is_empty() {
        return Err(Error::Usage("compare needs at least one metrics file".into()));
    }
    let mut table: BTreeMap<(usize, u8, String), Vec<Option<(f64, f64)>>> = BTreeMap::new();
    for (i, (_, rows)) in runs.iter().enumerate() {
        for r in rows {
            let cells = table
                .entry((r.step, split_rank(&r.split), r.split.clone()))
                .or_insert_with(|| vec![None; runs.len()]);
            cells[i] = Some((r.loss, r.accuracy));
        }
    }
    Ok(Comparison {
        labels: runs.iter().map(|(l, _)| l.clone()).collect(),
        rows: table.into_iter().map(|((s, _, sp), c)| ((s, sp), c)).collect(),
        finals: runs.iter().map(|(_, r)| final_row(r).cloned()).collect(),
    })
}

pub fn compare_files(paths: &[impl AsRef<Path>]) -> Result<Comparison> {
    let runs = paths
        .iter()
        .map(|p| {
            let p = p.as_ref();
            let name = p.display().to_string();
            let rows = parse_metrics(&name, &std::fs::read_to_string(p)?)?;
            Ok((name, rows))
        })
        .collect::<Result<Vec<_>>>()?;
    compare(&runs)
}

impl Comparison {
    /// Aligned text: one loss/accuracy pair per run, `-` where a run has no
    /// row, then a summary of each run's final row.
    pub fn render(&self) -> String {
        let mut head = vec!["step".to_string(), "split".to_string()];
        for i in 0..self.labels.len() {
            head.push(format!("loss[{i}]"));
            head.push(format!("acc[{i}]"));
        }
        let mut grid = vec![head];
        for ((step, split), cells) in &self.rows {
            let mut line = vec![step.to_string(), split.clone()];
            for c in cells {
                match c {
                    Some((l, a)) => {
                        line.push(format!("{l:.6}"));
                        line.push(format!("{a:.4}"));
                    }
                    None => {
                        line.push("-".into());
                        line.push("-".into());
                    }
                }
            }
            grid.push(line);
        }
        let mut out = String::new();
        for (i, l) in self.labels.iter().enumerate() {
            let _ = writeln!(out, "[{i}] {l}");
        }
        out.push('\n');
        out.push_str(&align(&grid));
        out.push('\n');
        let mut summary = vec![["run", "step", "split", "loss", "accuracy", "scale_min", "scale_max", "scale_mean"]
            .map(String::from)
            .to_vec()];
        for (i, f) in self.finals.iter().enumerate() {
            summary.push(match f {
                Some(r) => vec![
                    format!("[{i}]"),
                    r.step.to_string(),
                    r.split.clone(),
                    format!("{:.6}", r.loss),
                    format!("{:.4}", r.accuracy),
                    r.scale_min.to_string(),
                    r.scale_max.to_string(),
                    format!("{:.4}", r.scale_mean),
                ],
                None => {
                    let mut v = vec![format!("[{i}]")];
                    v.extend(std::iter::repeat("-".to_string()).take(7));
                    v
                }
            });
        }
        out.push_str(&align(&summary));
        out
    }
}

fn align(grid: &[Vec<String>]) -> String {
    let cols = grid.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| grid.iter().filter_map(|r| r.get(c)).map(String::len).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in grid {
        let cells: Vec<String> = row.iter().zip(&widths).map(|(s, w)| format!("{s:>w$}")).collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
    }
    out
}
