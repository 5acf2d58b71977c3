//! Dataset directories: one sub-directory per task holding `source.pdae` and
//! `target.pdae` embedding files with their manifests.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::datagen::{gen_partial_blobs, load_embeddings, save_embeddings, Domain, LabeledSet, PartialShiftSpec};
use crate::diffcore::Tensor;
use crate::error::{Error, Result};

const INDEX_FILE: &str = "dataset.json";

/// One synthetic task: a shift recipe and its generator seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: String,
    #[serde(default)]
    pub spec: PartialShiftSpec,
    #[serde(default)]
    pub seed: u64,
}

/// Recipe for a synthetic dataset (the input of `gen-data`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub name: String,
    pub tasks: Vec<TaskSpec>,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self {
            name: "synthetic".into(),
            tasks: vec![TaskSpec {
                id: "S2T".into(),
                spec: PartialShiftSpec::default(),
                seed: 0,
            }],
        }
    }
}

/// A source/target pair ready for [`crate::methods::TaskData::prepare`].
#[derive(Debug, Clone)]
pub struct TaskSource {
    pub id: String,
    pub source: LabeledSet,
    pub target: LabeledSet,
}

#[derive(Debug, Serialize, Deserialize)]
struct DatasetIndex {
    name: String,
    tasks: Vec<String>,
}

pub fn generate_dataset(spec: &DatasetSpec) -> Result<Vec<TaskSource>> {
    if spec.tasks.is_empty() {
        return Err(Error::config("dataset spec lists no tasks"));
    }
    spec.tasks
        .iter()
        .map(|t| {
            let (source, target) = gen_partial_blobs(&t.spec, t.seed)?;
            Ok(TaskSource {
                id: t.id.clone(),
                source,
                target,
            })
        })
        .collect()
}

fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn class_names(k: usize) -> Vec<String> {
    (0..k).map(|c| format!("class_{c}")).collect()
}

pub fn save_dataset(dir: &Path, name: &str, tasks: &[TaskSource], provenance: &str) -> Result<()> {
    for t in tasks {
        let tdir = dir.join(&t.id);
        fs::create_dir_all(&tdir).map_err(|e| Error::io(&tdir, e))?;
        let names = class_names(t.source.k_universe);
        save_embeddings(&tdir.join("source.pdae"), &t.source, &names, provenance)?;
        save_embeddings(&tdir.join("target.pdae"), &t.target, &names, provenance)?;
    }
    let index = DatasetIndex {
        name: name.to_string(),
        tasks: tasks.iter().map(|t| t.id.clone()).collect(),
    };
    let path = dir.join(INDEX_FILE);
    fs::write(&path, serde_json::to_string_pretty(&index)?).map_err(|e| Error::io(&path, e))
}

/// Loads every task of a dataset directory, in index order (or sorted
/// sub-directory order when there is no index).
pub fn load_dataset(dir: &Path) -> Result<Vec<TaskSource>> {
    let index_path = dir.join(INDEX_FILE);
    let ids = if index_path.exists() {
        let text = fs::read_to_string(&index_path).map_err(|e| Error::io(&index_path, e))?;
        serde_json::from_str::<DatasetIndex>(&text)?.tasks
    } else {
        let mut ids = Vec::new();
        for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
            let entry = entry.map_err(|e| Error::io(dir, e))?;
            if entry.path().join("source.pdae").exists() {
                ids.push(entry.file_name().to_string_lossy().into_owned());
            }
        }
        ids.sort();
        ids
    };
    if ids.is_empty() {
        return Err(Error::config(format!("no tasks found in {}", dir.display())));
    }
    ids.into_iter()
        .map(|id| {
            let tdir = dir.join(&id);
            let source = load_embeddings(&tdir.join("source.pdae"))?;
            let mut target = load_embeddings(&tdir.join("target.pdae"))?;
            if source.domain != Domain::Source {
                return Err(Error::config(format!("{id}/source.pdae is not tagged as source")));
            }
            target.domain = Domain::Target;
            if target.k_universe != source.k_universe {
                return Err(Error::config(format!(
                    "{id}: source has {} classes but target declares {}",
                    source.k_universe, target.k_universe
                )));
            }
            Ok(TaskSource { id, source, target })
        })
        .collect()
}

/// Random stand-in for real extracted embeddings: class clusters in `dim`
/// dimensions with a random per-task offset on the target side. Used to smoke
/// test the ingestion path end to end.
pub fn pseudo_real_tasks(
    task_ids: &[&str],
    dim: usize,
    k_source: usize,
    k_target: usize,
    n_per_class: usize,
    seed: u64,
) -> Result<Vec<TaskSource>> {
    if k_target == 0 || k_target >= k_source || dim == 0 || n_per_class == 0 {
        return Err(Error::config("pseudo-real tasks need 0 < k_target < k_source, dim > 0, n > 0"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    task_ids
        .iter()
        .map(|&id| {
            let means: Vec<Vec<f64>> = (0..k_source).map(|_| (0..dim).map(|_| gauss(&mut rng)).collect()).collect();
            let offset: Vec<f64> = (0..dim).map(|_| 0.3 * gauss(&mut rng)).collect();
            let mut draw = |classes: usize, shift: bool, domain: Domain| -> Result<LabeledSet> {
                let mut x = Vec::with_capacity(classes * n_per_class * dim);
                let mut y = Vec::new();
                for (k, mu) in means.iter().enumerate().take(classes) {
                    for _ in 0..n_per_class {
                        // ReLU-like nonnegativity as in pooled CNN features.
                        x.extend((0..dim).map(|j| {
                            let v = mu[j] + 0.8 * gauss(&mut rng) + if shift { offset[j] } else { 0.0 };
                            v.max(0.0) + 0.01 * rng.random::<f64>()
                        }));
                        y.push(k);
                    }
                }
                LabeledSet::new(Tensor::matrix(y.len(), dim, x)?, y, domain, k_source)
            };
            let source = draw(k_source, false, Domain::Source)?;
            let target = draw(k_target, true, Domain::Target)?;
            Ok(TaskSource {
                id: id.to_string(),
                source,
                target,
            })
        })
        .collect()
}
