//! The seven training objectives and the shared training loop.

mod ar;
mod losses;
mod train;

pub use ar::{ar_solve_weights, project_feasible, ArWeightSolve};
pub use losses::{
    ar_critic_loss, ar_main_loss, ba3us_aug_count, jumbot_cost, loss_ba3us, loss_jumbot, loss_jumbot_with_plan,
    loss_mpot, loss_mpot_with_plan, loss_pada, loss_safn, loss_source_only, pada_class_weights, Batch, OtOptions,
};
pub use train::{train_run, train_run_with_stream, CheckpointScore, RunRecord, RunStatus, TaskData};

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::diffcore::ScheduleConfig;
use crate::error::{Error, Result};

/// One training method with its hyper-parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum MethodConfig {
    SourceOnly,
    Pada { lambda: f64 },
    Safn { lambda: f64, delta_r: f64 },
    Ba3us { lambda_wce: f64, lambda_ent: f64 },
    Ar { rho0: f64, a_up: f64, a_low: f64, lambda_ent: f64 },
    Jumbot { tau: f64, eta1: f64, eta2: f64, eta3: f64 },
    Mpot { eps: f64, eta1: f64, eta2: f64, m: f64 },
}

pub const METHOD_TAGS: [&str; 7] = ["source_only", "pada", "safn", "ba3us", "ar", "jumbot", "mpot"];

impl MethodConfig {
    pub fn tag(&self) -> &'static str {
        match self {
            MethodConfig::SourceOnly => "source_only",
            MethodConfig::Pada { .. } => "pada",
            MethodConfig::Safn { .. } => "safn",
            MethodConfig::Ba3us { .. } => "ba3us",
            MethodConfig::Ar { .. } => "ar",
            MethodConfig::Jumbot { .. } => "jumbot",
            MethodConfig::Mpot { .. } => "mpot",
        }
    }

    /// Row label used in reports.
    pub fn display_name(tag: &str) -> &'static str {
        match tag {
            "source_only" => "S. ONLY",
            "pada" => "PADA",
            "safn" => "SAFN",
            "ba3us" => "BA3US",
            "ar" => "AR",
            "jumbot" => "JUMBOT",
            "mpot" => "M-POT",
            _ => "?",
        }
    }

    pub fn hp_map(&self) -> BTreeMap<String, f64> {
        let pairs: Vec<(&str, f64)> = match *self {
            MethodConfig::SourceOnly => vec![],
            MethodConfig::Pada { lambda } => vec![("lambda", lambda)],
            MethodConfig::Safn { lambda, delta_r } => vec![("lambda", lambda), ("delta_r", delta_r)],
            MethodConfig::Ba3us { lambda_wce, lambda_ent } => {
                vec![("lambda_wce", lambda_wce), ("lambda_ent", lambda_ent)]
            }
            MethodConfig::Ar { rho0, a_up, a_low, lambda_ent } => {
                vec![("rho0", rho0), ("a_up", a_up), ("a_low", a_low), ("lambda_ent", lambda_ent)]
            }
            MethodConfig::Jumbot { tau, eta1, eta2, eta3 } => {
                vec![("tau", tau), ("eta1", eta1), ("eta2", eta2), ("eta3", eta3)]
            }
            MethodConfig::Mpot { eps, eta1, eta2, m } => vec![("eps", eps), ("eta1", eta1), ("eta2", eta2), ("m", m)],
        };
        pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }

    /// Builds a config from a method tag and a hyper-parameter map. `a_low`
    /// defaults to `−a_up` when absent.
    pub fn from_hp(tag: &str, hp: &BTreeMap<String, f64>) -> Result<Self> {
        let get = |k: &str| {
            hp.get(k)
                .copied()
                .ok_or_else(|| Error::config(format!("method `{tag}` needs hyper-parameter `{k}`")))
        };
        let cfg = match tag {
            "source_only" => MethodConfig::SourceOnly,
            "pada" => MethodConfig::Pada { lambda: get("lambda")? },
            "safn" => MethodConfig::Safn {
                lambda: get("lambda")?,
                delta_r: get("delta_r")?,
            },
            "ba3us" => MethodConfig::Ba3us {
                lambda_wce: get("lambda_wce")?,
                lambda_ent: get("lambda_ent")?,
            },
            "ar" => {
                let a_up = get("a_up")?;
                MethodConfig::Ar {
                    rho0: get("rho0")?,
                    a_up,
                    a_low: hp.get("a_low").copied().unwrap_or(-a_up),
                    lambda_ent: get("lambda_ent")?,
                }
            }
            "jumbot" => MethodConfig::Jumbot {
                tau: get("tau")?,
                eta1: get("eta1")?,
                eta2: get("eta2")?,
                eta3: get("eta3")?,
            },
            "mpot" => MethodConfig::Mpot {
                eps: get("eps")?,
                eta1: get("eta1")?,
                eta2: get("eta2")?,
                m: get("m")?,
            },
            other => return Err(Error::config(format!("unknown method `{other}`"))),
        };
        let known = cfg.hp_map();
        if let Some(extra) = hp.keys().find(|k| !known.contains_key(*k)) {
            return Err(Error::config(format!("method `{tag}` has no hyper-parameter `{extra}`")));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        for (k, v) in self.hp_map() {
            if k == "a_low" {
                continue;
            }
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("{}: `{k}` must be positive, got {v}", self.tag())));
            }
        }
        match *self {
            MethodConfig::Ar { a_up, a_low, .. } if a_low != -a_up => Err(Error::config(format!(
                "ar: a_low must equal -a_up, got {a_low} and {a_up}"
            ))),
            MethodConfig::Mpot { m, .. } if m > 1.0 => Err(Error::config(format!("mpot: m = {m} outside (0, 1]"))),
            _ => Ok(()),
        }
    }

    /// Stable textual key of the hyper-parameters, e.g. `pada[lambda=0.5]`.
    pub fn hp_key(&self) -> String {
        let body: Vec<String> = self.hp_map().iter().map(|(k, v)| format!("{k}={v}")).collect();
        format!("{}[{}]", self.tag(), body.join(","))
    }

    /// Methods designed around class-balanced source batches.
    pub fn default_sampler(&self) -> SamplerKind {
        match self {
            MethodConfig::Jumbot { .. } | MethodConfig::Mpot { .. } => SamplerKind::Stratified,
            _ => SamplerKind::Uniform,
        }
    }
}

impl fmt::Display for MethodConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.hp_key())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplerKind {
    Uniform,
    Stratified,
}

/// Loop settings shared by all methods.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub total_iters: usize,
    pub batch_size: usize,
    /// Source sampler; `None` uses the method's default.
    pub sampler: Option<SamplerKind>,
    pub eval_interval: usize,
    pub seed: u64,
    pub schedule: ScheduleConfig,
    /// Class-weight refresh cadence for PADA and BA3US.
    pub weight_update_interval: usize,
    /// Source-weight re-solve cadence for AR.
    pub ar_update_interval: usize,
    pub bottleneck: usize,
    pub hidden: Vec<usize>,
    pub ot: OtOptions,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            total_iters: 5000,
            batch_size: 36,
            sampler: None,
            eval_interval: 500,
            seed: 2020,
            schedule: ScheduleConfig::default(),
            weight_update_interval: 500,
            ar_update_interval: 100,
            bottleneck: 256,
            hidden: vec![128, 128],
            ot: OtOptions::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.schedule.validate()?;
        if self.eval_interval == 0 || !self.total_iters.is_multiple_of(self.eval_interval) {
            return Err(Error::config(format!(
                "eval_interval {} must be positive and divide total_iters {}",
                self.eval_interval, self.total_iters
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be positive"));
        }
        if self.weight_update_interval == 0 || self.ar_update_interval == 0 {
            return Err(Error::config("update intervals must be positive"));
        }
        Ok(())
    }
}

/// Per-class weights `γ`, normalised so the largest entry is 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub gamma: Vec<f64>,
}

impl ClassWeights {
    pub fn ones(k: usize) -> Self {
        Self { gamma: vec![1.0; k] }
    }

    /// Per-sample weights `γ_{y_i}`.
    pub fn for_labels(&self, labels: &[usize]) -> Vec<f64> {
        labels.iter().map(|&y| self.gamma[y]).collect()
    }
}

#[cfg(test)]
mod tests;
