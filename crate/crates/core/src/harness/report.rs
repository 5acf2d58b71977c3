//! Aggregated accuracy tables: CSV for machines, markdown for people.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::methods::MethodConfig;
use crate::selection::ScorerKind;

pub const AVG_COLUMN: &str = "Avg";

/// Population mean and standard deviation (divide by `n`).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Per-seed accuracies (in percent) of one table cell, in the table's seed
/// order; `None` marks a failed seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub accs: Vec<Option<f64>>,
}

impl Cell {
    pub fn failed(seeds: usize) -> Self {
        Self { accs: vec![None; seeds] }
    }

    pub fn n_ok(&self) -> usize {
        self.accs.iter().flatten().count()
    }

    pub fn is_complete(&self) -> bool {
        !self.accs.is_empty() && self.n_ok() == self.accs.len()
    }

    /// Mean and population std over the full seed list; `None` if any seed
    /// failed.
    pub fn stats(&self) -> Option<(f64, f64)> {
        if !self.is_complete() {
            return None;
        }
        let v: Vec<f64> = self.accs.iter().flatten().copied().collect();
        Some(mean_std(&v))
    }

    pub fn mean(&self) -> Option<f64> {
        self.stats().map(|(m, _)| m)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: String,
    pub scorer: ScorerKind,
    /// Keyed by task id.
    pub cells: BTreeMap<String, Cell>,
}

impl ReportRow {
    /// Per-seed average over the table's tasks.
    pub fn average(&self, tasks: &[String], seeds: usize) -> Cell {
        let accs = (0..seeds)
            .map(|s| {
                let vals: Option<Vec<f64>> = tasks
                    .iter()
                    .map(|t| self.cells.get(t).and_then(|c| c.accs.get(s).copied().flatten()))
                    .collect();
                vals.map(|v| v.iter().sum::<f64>() / v.len() as f64)
            })
            .collect();
        Cell { accs }
    }
}

/// Rows keyed by (method, scorer) with one column per task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportTable {
    pub seeds: Vec<u64>,
    pub tasks: Vec<String>,
    pub rows: Vec<ReportRow>,
}

/// Worst and best label-free selection next to the oracle for one method.
#[derive(Debug, Clone, PartialEq)]
pub struct GapSummary {
    pub method: String,
    pub oracle: Option<f64>,
    pub worst: Option<(ScorerKind, f64)>,
    pub best: Option<(ScorerKind, f64)>,
}

impl ReportTable {
    pub fn new(seeds: Vec<u64>, tasks: Vec<String>) -> Self {
        Self {
            seeds,
            tasks,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, method: &str, scorer: ScorerKind, task: &str, cell: Cell) -> Result<()> {
        if cell.accs.len() != self.seeds.len() {
            return Err(Error::Usage(format!(
                "cell has {} seeds, table has {}",
                cell.accs.len(),
                self.seeds.len()
            )));
        }
        if !self.tasks.iter().any(|t| t == task) {
            return Err(Error::Usage(format!("unknown task `{task}`")));
        }
        let pos = self.rows.iter().position(|r| r.method == method && r.scorer == scorer);
        let row = match pos {
            Some(i) => &mut self.rows[i],
            None => {
                self.rows.push(ReportRow {
                    method: method.to_string(),
                    scorer,
                    cells: BTreeMap::new(),
                });
                self.rows.last_mut().expect("just pushed")
            }
        };
        row.cells.insert(task.to_string(), cell);
        Ok(())
    }

    pub fn methods(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.method) {
                out.push(r.method.clone());
            }
        }
        out
    }

    /// Scorers that appear in at least one row, in canonical order.
    pub fn scorers(&self) -> Vec<ScorerKind> {
        ScorerKind::ALL
            .into_iter()
            .filter(|k| self.rows.iter().any(|r| r.scorer == *k))
            .collect()
    }

    pub fn row(&self, method: &str, scorer: ScorerKind) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.method == method && r.scorer == scorer)
    }

    pub fn average(&self, method: &str, scorer: ScorerKind) -> Option<Cell> {
        self.row(method, scorer).map(|r| r.average(&self.tasks, self.seeds.len()))
    }

    /// Per method: oracle average and the worst/best average among scorers
    /// that use no target labels.
    pub fn gap_summary(&self) -> Vec<GapSummary> {
        self.methods()
            .into_iter()
            .map(|m| {
                let oracle = self.average(&m, ScorerKind::Oracle).and_then(|c| c.mean());
                let free: Vec<(ScorerKind, f64)> = self
                    .scorers()
                    .into_iter()
                    .filter(|k| !k.uses_target_labels())
                    .filter_map(|k| self.average(&m, k).and_then(|c| c.mean()).map(|v| (k, v)))
                    .collect();
                let worst = free.iter().copied().reduce(|a, b| if b.1 < a.1 { b } else { a });
                let best = free.iter().copied().reduce(|a, b| if b.1 > a.1 { b } else { a });
                GapSummary {
                    method: m,
                    oracle,
                    worst,
                    best,
                }
            })
            .collect()
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["method", "scorer", "task", "n_seeds", "mean", "std", "seeds", "accuracies"])?;
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        let seeds = seeds.join(";");
        for r in &self.rows {
            for t in &self.tasks {
                let Some(c) = r.cells.get(t) else { continue };
                let (mean, std) = c
                    .stats()
                    .map_or((String::new(), String::new()), |(m, s)| (format!("{m:.4}"), format!("{s:.4}")));
                let accs: Vec<String> = c
                    .accs
                    .iter()
                    .map(|a| a.map_or_else(|| "failed".to_string(), |v| v.to_string()))
                    .collect();
                w.write_record([
                    r.method.as_str(),
                    r.scorer.name(),
                    t,
                    &c.n_ok().to_string(),
                    &mean,
                    &std,
                    &seeds,
                    &accs.join(";"),
                ])?;
            }
        }
        let bytes = w.into_inner().map_err(|e| Error::Usage(format!("csv buffer: {e}")))?;
        String::from_utf8(bytes).map_err(|e| Error::Usage(format!("csv is not utf-8: {e}")))
    }

    /// Parses [`ReportTable::to_csv`] output. Means and stds are recomputed
    /// from the per-seed accuracies.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(text.as_bytes());
        let mut table: Option<ReportTable> = None;
        for rec in rd.records() {
            let rec = rec?;
            let field = |i: usize| rec.get(i).ok_or_else(|| Error::Usage(format!("csv row missing column {i}")));
            let seeds = field(6)?
                .split(';')
                .map(|s| s.parse::<u64>().map_err(|e| Error::Usage(format!("bad seed `{s}`: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            let accs = field(7)?
                .split(';')
                .map(|s| match s {
                    "failed" => Ok(None),
                    v => v.parse::<f64>().map(Some).map_err(|e| Error::Usage(format!("bad accuracy `{v}`: {e}"))),
                })
                .collect::<Result<Vec<_>>>()?;
            let task = field(2)?.to_string();
            let t = table.get_or_insert_with(|| ReportTable::new(seeds.clone(), Vec::new()));
            if t.seeds != seeds {
                return Err(Error::Usage("rows disagree on the seed list".into()));
            }
            if !t.tasks.contains(&task) {
                t.tasks.push(task.clone());
            }
            let scorer = field(1)?.parse::<ScorerKind>()?;
            t.push(field(0)?, scorer, &task, Cell { accs })?;
        }
        table.ok_or_else(|| Error::Usage("report csv has no rows".into()))
    }

    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        let fmt = |c: &Cell| match c.stats() {
            Some((m, s)) => format!("{m:.2} ± {s:.2}"),
            None => format!("failed ({} of {} seeds)", c.accs.len() - c.n_ok(), c.accs.len()),
        };
        let scorers = self.scorers();
        let methods = self.methods();

        out.push_str("## Accuracy per task\n\n| Method | Selection |");
        for t in &self.tasks {
            let _ = write!(out, " {t} |");
        }
        let _ = writeln!(out, " {AVG_COLUMN} |");
        out.push_str("|---|---|");
        out.push_str(&"---:|".repeat(self.tasks.len() + 1));
        out.push('\n');
        for m in &methods {
            for &k in &scorers {
                let Some(r) = self.row(m, k) else { continue };
                let _ = write!(out, "| {} | {} |", MethodConfig::display_name(m), k.name());
                for t in &self.tasks {
                    let cell = r.cells.get(t).map_or_else(|| "n/a".to_string(), fmt);
                    let _ = write!(out, " {cell} |");
                }
                let _ = writeln!(out, " {} |", fmt(&r.average(&self.tasks, self.seeds.len())));
            }
        }

        out.push_str("\n## Average accuracy by selection strategy\n\n| Method |");
        for k in &scorers {
            let _ = write!(out, " {} |", k.name());
        }
        out.push_str("\n|---|");
        out.push_str(&"---:|".repeat(scorers.len()));
        out.push('\n');
        for m in &methods {
            let _ = write!(out, "| {} |", MethodConfig::display_name(m));
            for &k in &scorers {
                let cell = self.average(m, k).map_or_else(|| "n/a".to_string(), |c| fmt(&c));
                let _ = write!(out, " {cell} |");
            }
            out.push('\n');
        }

        let gaps = self.gap_summary();
        out.push_str("\n## Selection without target labels vs oracle\n\n|  |");
        for g in &gaps {
            let _ = write!(out, " {} |", MethodConfig::display_name(&g.method));
        }
        out.push_str("\n|---|");
        out.push_str(&"---:|".repeat(gaps.len()));
        out.push('\n');
        let pick = |v: Option<(ScorerKind, f64)>| v.map_or_else(|| "n/a".to_string(), |(k, a)| format!("{a:.2} ({})", k.name()));
        out.push_str("| Worst w/o target labels |");
        for g in &gaps {
            let _ = write!(out, " {} |", pick(g.worst));
        }
        out.push_str("\n| Best w/o target labels |");
        for g in &gaps {
            let _ = write!(out, " {} |", pick(g.best));
        }
        out.push_str("\n| ORACLE |");
        for g in &gaps {
            let _ = write!(out, " {} |", g.oracle.map_or_else(|| "n/a".to_string(), |v| format!("{v:.2}")));
        }
        out.push('\n');

        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        let _ = writeln!(
            out,
            "\nAccuracy in percent: mean ± population standard deviation (divide by n) over n = {} seeds ({}). \
             {AVG_COLUMN} is the per-seed mean over tasks. A cell with any failed seed reports no mean.",
            self.seeds.len(),
            seeds.join(", ")
        );
        out
    }
}

/// Writes `report.csv` and `report.md` into `dir` and returns their paths.
pub fn emit_report(table: &ReportTable, dir: &Path) -> Result<(PathBuf, PathBuf)> {
    if table.rows.is_empty() {
        return Err(Error::Usage("nothing to report".into()));
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let csv_path = dir.join("report.csv");
    let md_path = dir.join("report.md");
    fs::write(&csv_path, table.to_csv()?).map_err(|e| Error::io(&csv_path, e))?;
    fs::write(&md_path, table.to_markdown()).map_err(|e| Error::io(&md_path, e))?;
    Ok((csv_path, md_path))
}

pub fn load_report(path: &Path) -> Result<ReportTable> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ReportTable::from_csv(&text)
}
