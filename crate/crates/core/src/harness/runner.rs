use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;

use super::store::{record_key, run_key, RecordStore};
use super::GridSpec;
use crate::derive_seed;
use crate::error::{Error, Result};
use crate::methods::{train_run_with_stream, MethodConfig, RunRecord, RunStatus, TaskData, TrainConfig};
use crate::selection::{select_checkpoint, ScorerKind};

/// One pending training job.
struct Job<'a> {
    method: MethodConfig,
    data: &'a TaskData,
    seed: u64,
    stream: u64,
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::config(format!("cannot start worker pool: {e}")))
}

/// Runs the jobs not yet present in `store`, appending each record as it
/// completes, and returns all requested records in job order. A run that
/// errors is kept as a failed record so the batch continues.
fn run_jobs(
    jobs: Vec<Job<'_>>,
    cfg: &TrainConfig,
    scorers: &[ScorerKind],
    store: Option<&RecordStore>,
    workers: usize,
) -> Result<Vec<RunRecord>> {
    let mut done: BTreeMap<String, RunRecord> = BTreeMap::new();
    if let Some(s) = store {
        for r in s.load()? {
            done.insert(record_key(&r), r);
        }
    }
    let keys: Vec<String> = jobs
        .iter()
        .map(|j| run_key(&j.data.task_id, &j.method.hp_key(), j.seed))
        .collect();
    let mut seen = BTreeSet::new();
    let pending: Vec<(&Job<'_>, &String)> = jobs
        .iter()
        .zip(&keys)
        .filter(|(_, k)| !done.contains_key(*k) && seen.insert((*k).clone()))
        .collect();
    if !pending.is_empty() {
        log::info!("{} runs to train ({} already stored)", pending.len(), jobs.len() - pending.len());
    }
    let fresh: Vec<Result<RunRecord>> = pool(workers)?.install(|| {
        pending
            .par_iter()
            .map(|(job, _)| {
                let run_cfg = TrainConfig {
                    seed: job.seed,
                    ..cfg.clone()
                };
                let record = match train_run_with_stream(&job.method, &run_cfg, job.data, scorers, job.stream) {
                    Ok(r) => r,
                    Err(e @ (Error::Config(_) | Error::Io { .. })) => return Err(e),
                    Err(e) => {
                        log::warn!("{} seed {} errored: {e}", job.method.hp_key(), job.seed);
                        RunRecord {
                            method: job.method.tag().to_string(),
                            hp: job.method.hp_map(),
                            seed: job.seed,
                            task: job.data.task_id.clone(),
                            checkpoints: Vec::new(),
                            status: RunStatus::Failed { reason: e.to_string() },
                            ot_unconverged: 0,
                            wall_time_secs: 0.0,
                        }
                    }
                };
                if let Some(s) = store {
                    s.append(&record)?;
                }
                Ok(record)
            })
            .collect()
    });
    for (r, (_, k)) in fresh.into_iter().zip(&pending) {
        done.insert((*k).clone(), r?);
    }
    Ok(keys.iter().map(|k| done[k].clone()).collect())
}

/// Trains every grid point once on the tuning task. Each run draws its random
/// streams from `hash(seed, hp-key)`, so results do not depend on worker
/// count or completion order. With a store, points already recorded are not
/// retrained.
pub fn run_grid(
    grid: &GridSpec,
    cfg: &TrainConfig,
    data: &TaskData,
    seed: u64,
    store: Option<&RecordStore>,
    workers: usize,
) -> Result<Vec<RunRecord>> {
    if let Some(task) = &grid.task {
        if task != &data.task_id {
            return Err(Error::config(format!(
                "grid tunes on `{task}` but data is for `{}`",
                data.task_id
            )));
        }
    }
    let jobs = grid
        .points()?
        .into_iter()
        .map(|method| {
            let stream = derive_seed(seed, &method.hp_key());
            Job {
                method,
                data,
                seed,
                stream,
            }
        })
        .collect();
    run_jobs(jobs, cfg, &grid.scorers, store, workers)
}

/// Trains `method` once per seed; `data[i]` must be prepared with
/// `seeds[i]`. Records come back in seed order.
pub fn evaluate_selected(
    method: &MethodConfig,
    cfg: &TrainConfig,
    data: &[TaskData],
    seeds: &[u64],
    scorers: &[ScorerKind],
    store: Option<&RecordStore>,
    workers: usize,
) -> Result<Vec<RunRecord>> {
    if data.len() != seeds.len() {
        return Err(Error::config(format!("{} prepared datasets for {} seeds", data.len(), seeds.len())));
    }
    let jobs = data
        .iter()
        .zip(seeds)
        .map(|(d, &seed)| Job {
            method: method.clone(),
            data: d,
            seed,
            stream: seed,
        })
        .collect();
    run_jobs(jobs, cfg, scorers, store, workers)
}

/// Target accuracy of the checkpoint `kind` selects in each record; `None`
/// for failed runs.
pub fn selected_accuracies(records: &[RunRecord], kind: ScorerKind) -> Result<Vec<Option<f64>>> {
    records
        .iter()
        .map(|r| {
            if !r.is_ok() {
                return Ok(None);
            }
            let it = select_checkpoint(r, kind)?;
            Ok(r.checkpoints.iter().find(|c| c.iteration == it).map(|c| c.target_acc))
        })
        .collect()
}
