//! Model-selection scorers and checkpoint / hyper-parameter selection.

mod dev;
mod scorers;

pub use dev::{dev_risk, score_dev, train_domain_discriminator, DomainDiscriminatorModel, DEV_DECAYS};
pub use scorers::{
    accuracy, score_ent, score_labeled_subset, score_s_acc, score_snd, snd_blocked, snd_dense, SND_TEMPERATURE,
};

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::methods::{CheckpointScore, RunRecord, TaskData};
use crate::nets::ModelBundle;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ScorerKind {
    #[serde(rename = "S-ACC")]
    SAcc,
    #[serde(rename = "ENT")]
    Ent,
    #[serde(rename = "DEV")]
    Dev,
    #[serde(rename = "SND")]
    Snd,
    #[serde(rename = "ORACLE")]
    Oracle,
    #[serde(rename = "1-SHOT")]
    OneShot,
    #[serde(rename = "50-RND")]
    Rnd50,
    #[serde(rename = "100-RND")]
    Rnd100,
}

impl ScorerKind {
    pub const ALL: [ScorerKind; 8] = [
        ScorerKind::SAcc,
        ScorerKind::Ent,
        ScorerKind::Dev,
        ScorerKind::Snd,
        ScorerKind::Oracle,
        ScorerKind::OneShot,
        ScorerKind::Rnd50,
        ScorerKind::Rnd100,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScorerKind::SAcc => "S-ACC",
            ScorerKind::Ent => "ENT",
            ScorerKind::Dev => "DEV",
            ScorerKind::Snd => "SND",
            ScorerKind::Oracle => "ORACLE",
            ScorerKind::OneShot => "1-SHOT",
            ScorerKind::Rnd50 => "50-RND",
            ScorerKind::Rnd100 => "100-RND",
        }
    }

    pub fn higher_is_better(self) -> bool {
        !matches!(self, ScorerKind::Ent | ScorerKind::Dev)
    }

    /// Whether the scorer reads any target label.
    pub fn uses_target_labels(self) -> bool {
        matches!(
            self,
            ScorerKind::Oracle | ScorerKind::OneShot | ScorerKind::Rnd50 | ScorerKind::Rnd100
        )
    }

    /// `true` when `a` is strictly better than `b` under this scorer.
    pub fn better(self, a: f64, b: f64) -> bool {
        if self.higher_is_better() {
            a > b
        } else {
            a < b
        }
    }
}

impl fmt::Display for ScorerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScorerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_uppercase().replace('_', "-");
        ScorerKind::ALL
            .into_iter()
            .find(|k| k.name() == norm)
            .ok_or_else(|| Error::Usage(format!("unknown scorer `{s}`")))
    }
}

/// Scores one model snapshot with every requested scorer. Target and source
/// validation accuracy are always recorded.
pub fn evaluate_checkpoint(
    bundle: &ModelBundle,
    data: &TaskData,
    scorers: &[ScorerKind],
    iteration: usize,
    seed: u64,
) -> Result<CheckpointScore> {
    let tgt_feats = bundle.features(&data.target.features)?;
    let tgt_logits = bundle.logits_from_features(&tgt_feats)?;
    let val_logits = bundle.logits(&data.source_val.features)?;
    let target_acc = accuracy(&tgt_logits, &data.target.labels, None)?;
    let src_val_acc = accuracy(&val_logits, &data.source_val.labels, None)?;
    let mut scores = BTreeMap::new();
    for &kind in scorers {
        let v = match kind {
            ScorerKind::SAcc => src_val_acc,
            ScorerKind::Oracle => target_acc,
            ScorerKind::Ent => score_ent(&tgt_logits),
            ScorerKind::Snd => score_snd(&tgt_feats, SND_TEMPERATURE)?,
            ScorerKind::OneShot => accuracy(&tgt_logits, &data.target.labels, Some(&data.subsets.one_shot))?,
            ScorerKind::Rnd50 => accuracy(&tgt_logits, &data.target.labels, Some(&data.subsets.rnd_50))?,
            ScorerKind::Rnd100 => accuracy(&tgt_logits, &data.target.labels, Some(&data.subsets.rnd_100))?,
            ScorerKind::Dev => {
                let src_feats = bundle.features(&data.source_train.features)?;
                let disc = train_domain_discriminator(&src_feats, &tgt_feats, seed)?;
                let val_feats = bundle.features(&data.source_val.features)?;
                score_dev(&val_feats, &val_logits, &data.source_val.labels, &disc)?
            }
        };
        if !v.is_finite() {
            return Err(Error::Numeric { op: kind.name() });
        }
        scores.insert(kind, v);
    }
    Ok(CheckpointScore {
        iteration,
        scores,
        target_acc,
        src_val_acc,
    })
}

/// Iteration of the best checkpoint under `kind`; ties go to the earliest.
pub fn select_checkpoint(record: &RunRecord, kind: ScorerKind) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for c in &record.checkpoints {
        let v = *c
            .scores
            .get(&kind)
            .ok_or_else(|| Error::Selection(format!("checkpoint {} has no {kind} score", c.iteration)))?;
        if best.is_none_or(|(_, b)| kind.better(v, b)) {
            best = Some((c.iteration, v));
        }
    }
    best.map(|(i, _)| i)
        .ok_or_else(|| Error::Selection(format!("{} has no checkpoints", record.hp_key())))
}

/// Accuracy floor for filtered methods: 90% of the SourceOnly source accuracy.
pub fn source_acc_floor(source_only_src_acc: f64) -> f64 {
    0.9 * source_only_src_acc
}

/// Methods whose grid runs are filtered by the source-accuracy floor.
pub fn floor_applies(method_tag: &str) -> bool {
    matches!(method_tag, "jumbot" | "mpot" | "ba3us")
}

/// Picks the grid run whose final checkpoint scores best under `kind`,
/// ignoring failed runs and, when `floor` is given, runs whose final source
/// validation accuracy is below it. Ties go to the earliest record.
pub fn select_hyperparams(records: &[RunRecord], kind: ScorerKind, floor: Option<f64>) -> Result<&RunRecord> {
    let mut best: Option<(&RunRecord, f64)> = None;
    let mut eligible = 0;
    for r in records.iter().filter(|r| r.is_ok()) {
        let Some(last) = r.final_checkpoint() else { continue };
        if floor.is_some_and(|f| last.src_val_acc < f) {
            continue;
        }
        eligible += 1;
        let v = *last
            .scores
            .get(&kind)
            .ok_or_else(|| Error::Selection(format!("{} has no final {kind} score", r.hp_key())))?;
        if best.is_none_or(|(_, b)| kind.better(v, b)) {
            best = Some((r, v));
        }
    }
    match best {
        Some((r, _)) => Ok(r),
        None => Err(Error::Selection(format!(
            "no eligible runs among {} ({} passed filtering); expand the grid or lower the floor",
            records.len(),
            eligible
        ))),
    }
}
