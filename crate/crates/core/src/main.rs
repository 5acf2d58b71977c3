use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;

use pdabench::harness::{
    emit_report, generate_dataset, load_dataset, run_grid, run_protocol, save_dataset, selections_from_records,
    table_from_records, DatasetSpec, GridSpec, ProtocolConfig, RecordStore, Selection, TaskSource,
};
use pdabench::methods::{train_run, MethodConfig, RunRecord, TaskData, TrainConfig};
use pdabench::selection::{floor_applies, select_checkpoint, select_hyperparams, source_acc_floor, ScorerKind};

#[derive(Parser)]
#[command(name = "pdabench", version, about = "Partial domain adaptation benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset directory from a dataset spec.
    GenData {
        /// Dataset spec JSON; the default single-task spec when omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Train one method with fixed hyper-parameters.
    Train {
        #[arg(long)]
        method: String,
        /// Hyper-parameters as `key=value` pairs separated by commas.
        #[arg(long, default_value = "")]
        hp: String,
        #[arg(long, default_value_t = 2020)]
        seed: u64,
        /// Task id; the first task when omitted.
        #[arg(long)]
        task: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// Train every point of a grid on the tuning task with one seed.
    GridSearch {
        #[arg(long)]
        grid: PathBuf,
        #[arg(long, default_value_t = 2020)]
        seed: u64,
        #[command(flatten)]
        common: Common,
    },
    /// Pick hyper-parameters and a checkpoint from grid records.
    Select {
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        scorer: ScorerKind,
        /// Final SourceOnly source accuracy (fraction) for the floor.
        #[arg(long)]
        source_acc: Option<f64>,
    },
    /// Tabulate evaluation records.
    Report {
        #[arg(long)]
        records: PathBuf,
        /// Selections file from `protocol`; otherwise one configuration per
        /// method is expected.
        #[arg(long)]
        selections: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', default_value = "2020,2021,2022")]
        seeds: Vec<u64>,
        #[arg(long, value_delimiter = ',')]
        scorers: Option<Vec<ScorerKind>>,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Run the whole protocol: tuning, selection, multi-seed evaluation, report.
    Protocol {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// Dataset directory of embedding files; synthetic data when omitted.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Training loop settings JSON.
    #[arg(long)]
    train_config: Option<PathBuf>,
    #[arg(long)]
    eval_interval: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    out_dir: PathBuf,
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn load_tasks(embeddings: Option<&Path>, synthetic: &DatasetSpec) -> Result<Vec<TaskSource>> {
    Ok(match embeddings {
        Some(dir) => load_dataset(dir)?,
        None => generate_dataset(synthetic)?,
    })
}

fn train_config(common: &Common, base: TrainConfig) -> Result<TrainConfig> {
    let mut cfg = match &common.train_config {
        Some(p) => read_json(p)?,
        None => base,
    };
    if let Some(n) = common.eval_interval {
        cfg.eval_interval = n;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn pick_task<'a>(tasks: &'a [TaskSource], id: Option<&str>) -> Result<&'a TaskSource> {
    match id {
        None => Ok(&tasks[0]),
        Some(id) => tasks
            .iter()
            .find(|t| t.id == id)
            .with_context(|| format!("task `{id}` not found")),
    }
}

fn parse_hp(text: &str) -> Result<BTreeMap<String, f64>> {
    text.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|pair| {
            let (k, v) = pair.split_once('=').with_context(|| format!("expected key=value, got `{pair}`"))?;
            let v: f64 = v.trim().parse().with_context(|| format!("bad value in `{pair}`"))?;
            Ok((k.trim().to_string(), v))
        })
        .collect()
}

fn workers(common: &Common) -> usize {
    common
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn print_record(r: &RunRecord) {
    match r.final_checkpoint() {
        Some(c) if r.is_ok() => println!(
            "{} seed {}: target acc {:.2}%, source val acc {:.2}% after {} iterations",
            r.hp_key(),
            r.seed,
            100.0 * c.target_acc,
            100.0 * c.src_val_acc,
            c.iteration
        ),
        _ => println!("{} seed {}: {:?}", r.hp_key(), r.seed, r.status),
    }
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::GenData { spec, out_dir } => {
            let spec: DatasetSpec = match spec {
                Some(p) => read_json(&p)?,
                None => DatasetSpec::default(),
            };
            let tasks = generate_dataset(&spec)?;
            save_dataset(&out_dir, &spec.name, &tasks, "synthetic")?;
            println!("wrote {} task(s) to {}", tasks.len(), out_dir.display());
        }
        Command::Train {
            method,
            hp,
            seed,
            task,
            common,
        } => {
            let method = MethodConfig::from_hp(&method, &parse_hp(&hp)?)?;
            let cfg = TrainConfig {
                seed,
                ..train_config(&common, TrainConfig::default())?
            };
            let tasks = load_tasks(common.embeddings.as_deref(), &DatasetSpec::default())?;
            let t = pick_task(&tasks, task.as_deref())?;
            let data = TaskData::prepare(&t.id, &t.source, &t.target, seed)?;
            let record = train_run(&method, &cfg, &data, &ScorerKind::ALL)?;
            RecordStore::open(&common.out_dir.join("runs.jsonl"))?.append(&record)?;
            print_record(&record);
        }
        Command::GridSearch { grid, seed, common } => {
            let grid: GridSpec = read_json(&grid)?;
            let cfg = train_config(&common, TrainConfig::default())?;
            let tasks = load_tasks(common.embeddings.as_deref(), &DatasetSpec::default())?;
            let t = pick_task(&tasks, grid.task.as_deref())?;
            let data = TaskData::prepare(&t.id, &t.source, &t.target, seed)?;
            let store = RecordStore::open(&common.out_dir.join("grid.jsonl"))?;
            let records = run_grid(&grid, &cfg, &data, seed, Some(&store), workers(&common))?;
            for r in &records {
                print_record(r);
            }
            println!("{} records in {}", records.len(), store.path().display());
        }
        Command::Select {
            records,
            scorer,
            source_acc,
        } => {
            let records = RecordStore::open(&records)?.load()?;
            let Some(first) = records.first() else {
                bail!("no records to select from");
            };
            if records.iter().any(|r| r.method != first.method || r.task != first.task) {
                bail!("records must come from a single method and task");
            }
            let floor = source_acc.filter(|_| floor_applies(&first.method)).map(source_acc_floor);
            let best = select_hyperparams(&records, scorer, floor)?;
            let it = select_checkpoint(best, scorer)?;
            println!("{}", serde_json::to_string_pretty(&best.config()?)?);
            println!("checkpoint iteration {it} (seed {})", best.seed);
        }
        Command::Report {
            records,
            selections,
            seeds,
            scorers,
            out_dir,
        } => {
            let records = RecordStore::open(&records)?.load()?;
            if records.is_empty() {
                bail!("no records to report");
            }
            let scorers = scorers.unwrap_or_else(|| ScorerKind::ALL.to_vec());
            let selections: Vec<Selection> = match selections {
                Some(p) => read_json(&p)?,
                None => selections_from_records(&records, &scorers)?,
            };
            let mut tasks: Vec<String> = Vec::new();
            for r in &records {
                if !tasks.contains(&r.task) {
                    tasks.push(r.task.clone());
                }
            }
            let table = table_from_records(&records, &selections, &tasks, &seeds)?;
            let (csv, md) = emit_report(&table, &out_dir)?;
            println!("wrote {} and {}", csv.display(), md.display());
        }
        Command::Protocol { config, seeds, common } => {
            let mut cfg: ProtocolConfig = match config {
                Some(p) => read_json(&p)?,
                None => ProtocolConfig::default(),
            };
            cfg.train = train_config(&common, cfg.train)?;
            if let Some(s) = seeds {
                cfg.seeds = s;
            }
            if let Some(w) = common.workers {
                cfg.workers = w;
            }
            let tasks = load_tasks(common.embeddings.as_deref(), &cfg.dataset)?;
            let out = run_protocol(&cfg, &tasks, &common.out_dir)?;
            println!(
                "{} tuning runs, {} evaluation runs; wrote {} and {}",
                out.grid_runs,
                out.eval_runs,
                out.csv_path.display(),
                out.markdown_path.display()
            );
        }
    }
    Ok(())
}
