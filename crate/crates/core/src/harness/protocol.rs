//! The full benchmark protocol: tune on one task with one seed, select
//! hyper-parameters per scorer, retrain the selections on every task and
//! seed, and tabulate.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::data::{DatasetSpec, TaskSource};
use super::grid::{published_grid, GridSpec};
use super::report::{emit_report, Cell, ReportTable};
use super::runner::{evaluate_selected, run_grid, selected_accuracies};
use super::store::RecordStore;
use crate::datagen::save_subsets;
use crate::error::{Error, Result};
use crate::methods::{MethodConfig, RunRecord, TaskData, TrainConfig, METHOD_TAGS};
use crate::selection::{floor_applies, select_hyperparams, source_acc_floor, ScorerKind};

pub const DEFAULT_SEEDS: [u64; 3] = [2020, 2021, 2022];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProtocolConfig {
    /// Synthetic dataset recipe, used when no embeddings are supplied.
    pub dataset: DatasetSpec,
    pub methods: Vec<String>,
    /// Per-method grid replacements; methods not listed use the published grid.
    pub grids: BTreeMap<String, BTreeMap<String, Vec<f64>>>,
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
    pub grid_seed: u64,
    pub scorers: Vec<ScorerKind>,
    /// Task used for tuning; the first task when absent.
    pub tuning_task: Option<String>,
    pub workers: usize,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetSpec::default(),
            methods: METHOD_TAGS.iter().map(|s| s.to_string()).collect(),
            grids: BTreeMap::new(),
            train: TrainConfig::default(),
            seeds: DEFAULT_SEEDS.to_vec(),
            grid_seed: DEFAULT_SEEDS[0],
            scorers: ScorerKind::ALL.to_vec(),
            tuning_task: None,
            workers: 1,
        }
    }
}

impl ProtocolConfig {
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.methods.is_empty() || self.seeds.is_empty() || self.scorers.is_empty() {
            return Err(Error::config("protocol needs at least one method, seed and scorer"));
        }
        if !self.scorers.contains(&ScorerKind::Oracle) {
            return Err(Error::config("the scorer list must include ORACLE"));
        }
        for m in self.methods.iter().chain(self.grids.keys()) {
            if !METHOD_TAGS.contains(&m.as_str()) {
                return Err(Error::config(format!("unknown method `{m}`")));
            }
        }
        Ok(())
    }

    pub fn grid(&self, method: &str, task: &str) -> Result<GridSpec> {
        let values = match self.grids.get(method) {
            Some(v) => v.clone(),
            None => published_grid(method)?,
        };
        Ok(GridSpec {
            method: method.to_string(),
            values,
            task: Some(task.to_string()),
            scorers: self.scorers.clone(),
        })
    }
}

/// Hyper-parameters chosen for one (method, scorer) pair, or why none were.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub method: String,
    pub scorer: ScorerKind,
    pub hp: Option<MethodConfig>,
    pub error: Option<String>,
}

#[derive(Debug, Clone)]
pub struct ProtocolOutcome {
    pub table: ReportTable,
    pub selections: Vec<Selection>,
    pub grid_runs: usize,
    pub eval_runs: usize,
    pub csv_path: PathBuf,
    pub markdown_path: PathBuf,
}

/// Selects hyper-parameters for every scorer from one method's grid records.
/// `source_only_acc` is the SourceOnly final source validation accuracy that
/// sets the floor for filtered methods.
pub fn select_for_scorers(
    method: &str,
    records: &[RunRecord],
    scorers: &[ScorerKind],
    source_only_acc: Option<f64>,
) -> Vec<Selection> {
    let floor = if floor_applies(method) {
        source_only_acc.map(source_acc_floor)
    } else {
        None
    };
    scorers
        .iter()
        .map(|&scorer| {
            let picked = select_hyperparams(records, scorer, floor).and_then(RunRecord::config);
            match picked {
                Ok(hp) => Selection {
                    method: method.to_string(),
                    scorer,
                    hp: Some(hp),
                    error: None,
                },
                Err(e) => Selection {
                    method: method.to_string(),
                    scorer,
                    hp: None,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect()
}

/// Builds the accuracy table from evaluation records. Each selection's row
/// uses the records of its chosen configuration, with checkpoints picked by
/// the same scorer. Missing runs count as failed seeds.
pub fn table_from_records(
    records: &[RunRecord],
    selections: &[Selection],
    tasks: &[String],
    seeds: &[u64],
) -> Result<ReportTable> {
    let mut table = ReportTable::new(seeds.to_vec(), tasks.to_vec());
    for sel in selections {
        for task in tasks {
            let cell = match &sel.hp {
                None => Cell::failed(seeds.len()),
                Some(hp) => {
                    let key = hp.hp_key();
                    let accs = seeds
                        .iter()
                        .map(|&seed| {
                            let r = records
                                .iter()
                                .find(|r| &r.task == task && r.seed == seed && r.hp_key() == key);
                            match r {
                                Some(r) => Ok(selected_accuracies(std::slice::from_ref(r), sel.scorer)?[0].map(|a| 100.0 * a)),
                                None => Ok(None),
                            }
                        })
                        .collect::<Result<Vec<_>>>()?;
                    Cell { accs }
                }
            };
            table.push(&sel.method, sel.scorer, task, cell)?;
        }
    }
    Ok(table)
}

/// One selection per (method, scorer) for records that hold a single
/// configuration per method, as produced by `train` runs outside a protocol.
pub fn selections_from_records(records: &[RunRecord], scorers: &[ScorerKind]) -> Result<Vec<Selection>> {
    let mut by_method: BTreeMap<&str, MethodConfig> = BTreeMap::new();
    let mut order: Vec<&str> = Vec::new();
    for r in records {
        let cfg = r.config()?;
        match by_method.get(r.method.as_str()) {
            Some(prev) if prev != &cfg => {
                return Err(Error::Usage(format!(
                    "records hold several configurations of `{}`; pass the selections file",
                    r.method
                )))
            }
            Some(_) => {}
            None => {
                order.push(&r.method);
                by_method.insert(&r.method, cfg);
            }
        }
    }
    Ok(order
        .into_iter()
        .flat_map(|m| {
            let hp = by_method[m].clone();
            scorers.iter().map(move |&scorer| Selection {
                method: m.to_string(),
                scorer,
                hp: Some(hp.clone()),
                error: None,
            })
        })
        .collect())
}

fn prepare_all(tasks: &[TaskSource], seeds: &[u64], out_dir: &Path) -> Result<Vec<Vec<TaskData>>> {
    let dir = out_dir.join("subsets");
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    tasks
        .iter()
        .map(|t| {
            seeds
                .iter()
                .map(|&seed| {
                    let d = TaskData::prepare(&t.id, &t.source, &t.target, seed)?;
                    save_subsets(&dir.join(format!("{}-{seed}.json", t.id)), &d.subsets)?;
                    Ok(d)
                })
                .collect()
        })
        .collect()
}

/// Runs the protocol over `tasks`, writing `grid.jsonl`, `eval.jsonl`,
/// `selections.json`, `report.csv` and `report.md` into `out_dir`. Existing
/// record files are resumed.
pub fn run_protocol(cfg: &ProtocolConfig, tasks: &[TaskSource], out_dir: &Path) -> Result<ProtocolOutcome> {
    cfg.validate()?;
    if tasks.is_empty() {
        return Err(Error::config("protocol needs at least one task"));
    }
    let tuning = match &cfg.tuning_task {
        Some(id) => tasks
            .iter()
            .find(|t| &t.id == id)
            .ok_or_else(|| Error::config(format!("tuning task `{id}` not in dataset")))?,
        None => &tasks[0],
    };
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let tune_data = TaskData::prepare(&tuning.id, &tuning.source, &tuning.target, cfg.grid_seed)?;
    let eval_data = prepare_all(tasks, &cfg.seeds, out_dir)?;

    let grid_store = RecordStore::open(&out_dir.join("grid.jsonl"))?;
    let eval_store = RecordStore::open(&out_dir.join("eval.jsonl"))?;

    let baseline = run_grid(
        &cfg.grid("source_only", &tuning.id)?,
        &cfg.train,
        &tune_data,
        cfg.grid_seed,
        Some(&grid_store),
        cfg.workers,
    )?;
    let source_only_acc = baseline
        .iter()
        .find(|r| r.is_ok())
        .and_then(RunRecord::final_checkpoint)
        .map(|c| c.src_val_acc);
    if source_only_acc.is_none() {
        log::warn!("SourceOnly tuning run failed; no source-accuracy floor will be applied");
    }

    let mut grid_runs = baseline.len();
    let mut selections = Vec::new();
    for method in &cfg.methods {
        let grid = cfg.grid(method, &tuning.id)?;
        log::info!("grid search for {method}: {} points", grid.len());
        let records = run_grid(&grid, &cfg.train, &tune_data, cfg.grid_seed, Some(&grid_store), cfg.workers)?;
        if method != "source_only" {
            grid_runs += records.len();
        }
        selections.extend(select_for_scorers(method, &records, &cfg.scorers, source_only_acc));
    }
    for s in selections.iter().filter(|s| s.error.is_some()) {
        log::warn!("{} / {}: {}", s.method, s.scorer, s.error.as_deref().unwrap_or_default());
    }

    let mut unique: Vec<&MethodConfig> = Vec::new();
    for hp in selections.iter().filter_map(|s| s.hp.as_ref()) {
        if !unique.contains(&hp) {
            unique.push(hp);
        }
    }
    let mut eval_records = Vec::new();
    for hp in unique {
        for data in &eval_data {
            log::info!("evaluating {hp} on {}", data[0].task_id);
            eval_records.extend(evaluate_selected(
                hp,
                &cfg.train,
                data,
                &cfg.seeds,
                &cfg.scorers,
                Some(&eval_store),
                cfg.workers,
            )?);
        }
    }

    let task_ids: Vec<String> = tasks.iter().map(|t| t.id.clone()).collect();
    let table = table_from_records(&eval_records, &selections, &task_ids, &cfg.seeds)?;
    let (csv_path, markdown_path) = emit_report(&table, out_dir)?;
    let sel_path = out_dir.join("selections.json");
    fs::write(&sel_path, serde_json::to_string_pretty(&selections)?).map_err(|e| Error::io(&sel_path, e))?;
    Ok(ProtocolOutcome {
        table,
        selections,
        grid_runs,
        eval_runs: eval_records.len(),
        csv_path,
        markdown_path,
    })
}
