use std::collections::BTreeMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::losses::{
    ar_critic_loss, ar_main_loss, ba3us_aug_count, loss_ba3us, loss_jumbot, loss_mpot, loss_pada, loss_safn,
    loss_source_only, pada_class_weights, Batch,
};
use super::{ar_solve_weights, ClassWeights, MethodConfig, SamplerKind, TrainConfig};
use crate::datagen::{
    sample_stratified_batch, sample_uniform_batch, split_source, LabeledSet, LabeledSubsets,
};
use crate::derive_seed;
use crate::diffcore::{grl_coeff, lr_at, sgd_nesterov_step, Graph, OptimState, Param, Tensor};
use crate::error::{Error, Result};
use crate::nets::{init_bundle, Critic, Discriminator, ModelBundle, NetDims};
use crate::selection::{evaluate_checkpoint, ScorerKind};

const ADVERSARY_HIDDEN: usize = 64;
const GRADIENT_PENALTY: f64 = 10.0;

/// Everything one run needs: the source split, the unlabeled target set, and
/// the persisted labeled target subsets used by the label-based scorers.
#[derive(Debug, Clone)]
pub struct TaskData {
    pub task_id: String,
    pub source_train: LabeledSet,
    pub source_val: LabeledSet,
    pub target: LabeledSet,
    pub subsets: LabeledSubsets,
}

impl TaskData {
    /// 80/20 stratified source split and labeled target subsets, both fixed
    /// by `seed`.
    pub fn prepare(task_id: &str, source: &LabeledSet, target: &LabeledSet, seed: u64) -> Result<Self> {
        if source.dim() != target.dim() {
            return Err(Error::config(format!(
                "source dim {} differs from target dim {}",
                source.dim(),
                target.dim()
            )));
        }
        let split = split_source(source, 0.8, derive_seed(seed, "split"))?;
        let subsets = LabeledSubsets::draw(target, derive_seed(seed, "subsets"))?;
        Ok(Self {
            task_id: task_id.to_string(),
            source_train: source.subset(&split.train)?,
            source_val: source.subset(&split.val)?,
            target: target.clone(),
            subsets,
        })
    }

    pub fn k_source(&self) -> usize {
        self.source_train.k_universe
    }
}

/// Scores of one checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointScore {
    pub iteration: usize,
    pub scores: BTreeMap<ScorerKind, f64>,
    pub target_acc: f64,
    pub src_val_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum RunStatus {
    Ok,
    Failed { reason: String },
}

/// Outcome of one training run. Equality ignores wall time.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub method: String,
    pub hp: BTreeMap<String, f64>,
    pub seed: u64,
    pub task: String,
    pub checkpoints: Vec<CheckpointScore>,
    pub status: RunStatus,
    /// Transport solves that hit the iteration cap.
    #[serde(default)]
    pub ot_unconverged: usize,
    #[serde(default)]
    pub wall_time_secs: f64,
}

impl PartialEq for RunRecord {
    fn eq(&self, other: &Self) -> bool {
        self.method == other.method
            && self.hp == other.hp
            && self.seed == other.seed
            && self.task == other.task
            && self.checkpoints == other.checkpoints
            && self.status == other.status
            && self.ot_unconverged == other.ot_unconverged
    }
}

impl RunRecord {
    pub fn config(&self) -> Result<MethodConfig> {
        MethodConfig::from_hp(&self.method, &self.hp)
    }

    pub fn is_ok(&self) -> bool {
        self.status == RunStatus::Ok
    }

    pub fn final_checkpoint(&self) -> Option<&CheckpointScore> {
        self.checkpoints.last()
    }

    pub fn hp_key(&self) -> String {
        let body: Vec<String> = self.hp.iter().map(|(k, v)| format!("{k}={v}")).collect();
        format!("{}[{}]", self.method, body.join(","))
    }
}

fn apply_step(params: Vec<&mut Param>, lr: f64, state: &mut OptimState) -> Result<()> {
    let mut params = params;
    sgd_nesterov_step(&mut params, lr, state)
}

fn target_probs(bundle: &ModelBundle, target: &LabeledSet) -> Result<Tensor> {
    Ok(bundle.logits(&target.features)?.softmax_rows())
}

fn batch(set: &LabeledSet, ids: &[usize]) -> Batch {
    Batch {
        x: set.features.select_rows(ids),
        y: ids.iter().map(|&i| set.labels[i]).collect(),
    }
}

struct Run<'a> {
    method: &'a MethodConfig,
    cfg: &'a TrainConfig,
    data: &'a TaskData,
    bundle: ModelBundle,
    disc: Option<Discriminator>,
    critic: Option<Critic>,
    opt: OptimState,
    adv_opt: OptimState,
    gamma: ClassWeights,
    ar_w: Vec<f64>,
    rng: ChaCha8Rng,
    ot_unconverged: usize,
}

impl Run<'_> {
    fn step(&mut self, i: usize) -> Result<f64> {
        let (cfg, data) = (self.cfg, self.data);
        let total = cfg.total_iters;
        let lr = lr_at(i, &cfg.schedule);
        let grl = grl_coeff(i, total);
        let refresh_gamma = i > 0 && i.is_multiple_of(cfg.weight_update_interval);
        if refresh_gamma && matches!(self.method, MethodConfig::Pada { .. } | MethodConfig::Ba3us { .. }) {
            self.gamma = pada_class_weights(&target_probs(&self.bundle, &data.target)?)?;
        }
        if let (MethodConfig::Ar { rho0, .. }, true) = (self.method, i > 0 && i.is_multiple_of(cfg.ar_update_interval)) {
            let critic = self.critic.as_ref().expect("ar has a critic");
            let phi = critic.value(&self.bundle.features(&data.source_train.features)?)?;
            let neg: Vec<f64> = phi.data().iter().map(|v| -v).collect();
            self.ar_w = ar_solve_weights(&neg, *rho0)?.weights;
        }

        let sampler = cfg.sampler.unwrap_or_else(|| self.method.default_sampler());
        let src_ids = match sampler {
            SamplerKind::Uniform => sample_uniform_batch(data.source_train.len(), cfg.batch_size, &mut self.rng)?,
            SamplerKind::Stratified => {
                sample_stratified_batch(&data.source_train.labels, cfg.batch_size, &mut self.rng)?
            }
        };
        let tgt_ids = sample_uniform_batch(data.target.len(), cfg.batch_size, &mut self.rng)?;
        let src = batch(&data.source_train, &src_ids);
        let tgt = batch(&data.target, &tgt_ids);

        let mut g = Graph::new();
        let net = self.bundle.bind(&mut g)?;
        let value = match *self.method {
            MethodConfig::SourceOnly => {
                let loss = loss_source_only(&mut g, &net, &src)?;
                let grads = g.backward(loss)?;
                self.bundle.take_grads(&net, &grads);
                g.value(loss).item()
            }
            MethodConfig::Safn { lambda, delta_r } => {
                let loss = loss_safn(&mut g, &net, &src, &tgt, lambda, delta_r)?;
                let grads = g.backward(loss)?;
                self.bundle.take_grads(&net, &grads);
                g.value(loss).item()
            }
            MethodConfig::Pada { lambda } => {
                let disc = self.disc.as_mut().expect("pada has a discriminator");
                let db = disc.head.bind(&mut g)?;
                let loss = loss_pada(&mut g, &net, &db, &src, &tgt, &self.gamma, lambda, grl)?;
                let grads = g.backward(loss)?;
                self.bundle.take_grads(&net, &grads);
                disc.head.take_grads(&db, &grads);
                apply_step(disc.head.params_mut(), lr, &mut self.adv_opt)?;
                g.value(loss).item()
            }
            MethodConfig::Ba3us { lambda_wce, lambda_ent } => {
                let n_aug = ba3us_aug_count(cfg.batch_size, i, total);
                let aug_ids = sample_uniform_batch(data.source_train.len(), n_aug, &mut self.rng)?;
                let aug = batch(&data.source_train, &aug_ids);
                let disc = self.disc.as_mut().expect("ba3us has a discriminator");
                let db = disc.head.bind(&mut g)?;
                let loss = loss_ba3us(
                    &mut g, &net, &db, &src, &tgt, &aug, &self.gamma, lambda_wce, lambda_ent, i, total, 1.0, grl,
                )?;
                let grads = g.backward(loss)?;
                self.bundle.take_grads(&net, &grads);
                disc.head.take_grads(&db, &grads);
                apply_step(disc.head.params_mut(), lr, &mut self.adv_opt)?;
                g.value(loss).item()
            }
            MethodConfig::Ar { lambda_ent, .. } => {
                let w: Vec<f64> = src_ids.iter().map(|&k| self.ar_w[k]).collect();
                let critic = self.critic.as_mut().expect("ar has a critic");
                // Critic step on detached features.
                let zs = self.bundle.features(&src.x)?;
                let zt = self.bundle.features(&tgt.x)?;
                let pairs = zs.rows().min(zt.rows());
                let alpha: Vec<f64> = (0..pairs).map(|_| self.rng.random::<f64>()).collect();
                let mut gc = Graph::new();
                let cb = critic.head.bind(&mut gc)?;
                let closs = ar_critic_loss(&mut gc, critic, &cb, &zs, &zt, &w, &alpha, GRADIENT_PENALTY)?;
                let cgrads = gc.backward(closs)?;
                critic.head.take_grads(&cb, &cgrads);
                apply_step(critic.head.params_mut(), lr, &mut self.adv_opt)?;
                // Main step against the updated critic.
                let cb = critic.head.bind(&mut g)?;
                let loss = ar_main_loss(&mut g, &net, critic, &cb, &src, &tgt, &w, lambda_ent, grl)?;
                let grads = g.backward(loss)?;
                self.bundle.take_grads(&net, &grads);
                g.value(loss).item()
            }
            MethodConfig::Jumbot { tau, eta1, eta2, eta3 } => {
                let (loss, plan) = loss_jumbot(&mut g, &net, &src, &tgt, tau, eta1, eta2, eta3, &cfg.ot)?;
                self.ot_unconverged += usize::from(!plan.converged);
                let grads = g.backward(loss)?;
                self.bundle.take_grads(&net, &grads);
                g.value(loss).item()
            }
            MethodConfig::Mpot { eps, eta1, eta2, m } => {
                let (loss, plan) = loss_mpot(&mut g, &net, &src, &tgt, eps, eta1, eta2, m, &cfg.ot)?;
                self.ot_unconverged += usize::from(!plan.converged);
                let grads = g.backward(loss)?;
                self.bundle.take_grads(&net, &grads);
                g.value(loss).item()
            }
        };
        apply_step(self.bundle.params_mut(), lr, &mut self.opt)?;
        Ok(value)
    }
}

/// Trains `method` on the source training split (target used unlabeled) and
/// scores a checkpoint at iteration 0 and every `eval_interval` iterations.
/// A non-finite loss or parameter ends the run with a failed record.
pub fn train_run(
    method: &MethodConfig,
    cfg: &TrainConfig,
    data: &TaskData,
    scorers: &[ScorerKind],
) -> Result<RunRecord> {
    train_run_with_stream(method, cfg, data, scorers, cfg.seed)
}

/// [`train_run`] with every random stream (initialisation, batches, DEV
/// discriminators) derived from `stream` instead of `cfg.seed`. The record
/// still carries `cfg.seed`.
pub fn train_run_with_stream(
    method: &MethodConfig,
    cfg: &TrainConfig,
    data: &TaskData,
    scorers: &[ScorerKind],
    stream: u64,
) -> Result<RunRecord> {
    method.validate()?;
    cfg.validate()?;
    let start = Instant::now();
    let dims = NetDims {
        input: data.source_train.dim(),
        hidden: cfg.hidden.clone(),
        bottleneck: cfg.bottleneck,
        classes: data.k_source(),
    };
    let seed = cfg.seed;
    let bundle = init_bundle(&dims, derive_seed(stream, "bundle"))?;
    let disc = match method {
        MethodConfig::Pada { .. } | MethodConfig::Ba3us { .. } => Some(Discriminator::init(
            cfg.bottleneck,
            ADVERSARY_HIDDEN,
            derive_seed(stream, "discriminator"),
        )?),
        _ => None,
    };
    let critic = match *method {
        MethodConfig::Ar { a_up, a_low, .. } => Some(Critic::init(
            cfg.bottleneck,
            ADVERSARY_HIDDEN,
            a_low,
            a_up,
            derive_seed(stream, "critic"),
        )?),
        _ => None,
    };
    let mut run = Run {
        method,
        cfg,
        data,
        bundle,
        disc,
        critic,
        opt: OptimState::default(),
        adv_opt: OptimState::default(),
        gamma: ClassWeights::ones(data.k_source()),
        ar_w: vec![1.0; data.source_train.len()],
        rng: ChaCha8Rng::seed_from_u64(derive_seed(stream, "batches")),
        ot_unconverged: 0,
    };
    let mut record = RunRecord {
        method: method.tag().to_string(),
        hp: method.hp_map(),
        seed,
        task: data.task_id.clone(),
        checkpoints: Vec::new(),
        status: RunStatus::Ok,
        ot_unconverged: 0,
        wall_time_secs: 0.0,
    };
    let score = |bundle: &ModelBundle, it: usize| {
        evaluate_checkpoint(bundle, data, scorers, it, derive_seed(stream, &format!("dev-{it}")))
    };
    record.checkpoints.push(score(&run.bundle, 0)?);
    for i in 0..cfg.total_iters {
        let outcome = run.step(i).and_then(|loss| {
            if loss.is_finite() && run.bundle.params().iter().all(|p| p.value.is_finite()) {
                Ok(())
            } else {
                Err(Error::Numeric { op: "training step" })
            }
        });
        match outcome {
            Ok(()) => {}
            Err(e @ Error::Numeric { .. }) => {
                log::warn!("{} seed {seed} failed at iteration {i}: {e}", method.hp_key());
                record.status = RunStatus::Failed {
                    reason: format!("iteration {i}: {e}"),
                };
                break;
            }
            Err(e) => return Err(e),
        }
        if (i + 1) % cfg.eval_interval == 0 {
            record.checkpoints.push(score(&run.bundle, i + 1)?);
        }
    }
    record.ot_unconverged = run.ot_unconverged;
    record.wall_time_secs = start.elapsed().as_secs_f64();
    Ok(record)
}
