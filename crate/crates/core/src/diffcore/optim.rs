use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Learning-rate group of a trainable parameter.
///
/// Freshly initialised heads (bottleneck, classifier, adversaries) train ten
/// times faster than the backbone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LrGroup {
    Backbone,
    Head,
}

impl LrGroup {
    pub fn multiplier(self) -> f64 {
        match self {
            LrGroup::Backbone => 1.0,
            LrGroup::Head => 10.0,
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            LrGroup::Backbone => 0,
            LrGroup::Head => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(LrGroup::Backbone),
            1 => Some(LrGroup::Head),
            _ => None,
        }
    }
}

/// A trainable tensor with its gradient accumulator and lr group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    #[serde(skip)]
    pub grad: Option<Tensor>,
    pub group: LrGroup,
}

impl Param {
    pub fn new(name: impl Into<String>, value: Tensor, group: LrGroup) -> Self {
        Self {
            name: name.into(),
            value,
            grad: None,
            group,
        }
    }
}

/// SGD state: one velocity buffer per parameter.
#[derive(Debug, Clone)]
pub struct OptimState {
    pub momentum: f64,
    pub weight_decay: f64,
    pub nesterov: bool,
    velocity: Vec<Option<Vec<f64>>>,
}

impl Default for OptimState {
    fn default() -> Self {
        Self::new(0.9, 5e-4, true)
    }
}

impl OptimState {
    pub fn new(momentum: f64, weight_decay: f64, nesterov: bool) -> Self {
        Self {
            momentum,
            weight_decay,
            nesterov,
            velocity: Vec::new(),
        }
    }

    pub fn velocity(&self, i: usize) -> Option<&[f64]> {
        self.velocity.get(i).and_then(|v| v.as_deref())
    }
}

/// One SGD step with momentum, weight decay and optional Nesterov correction.
///
/// `v ← m·v + (g + wd·p)`, then `p ← p − lr·mult·(g + wd·p + m·v)` with
/// Nesterov, or `p ← p − lr·mult·v` without. Parameters whose `grad` is
/// `None` are left untouched.
pub fn sgd_nesterov_step(params: &mut [&mut Param], lr: f64, state: &mut OptimState) -> Result<()> {
    if lr < 0.0 || !lr.is_finite() {
        return Err(Error::config(format!("learning rate {lr} must be finite and >= 0")));
    }
    if state.velocity.is_empty() {
        state.velocity = vec![None; params.len()];
    } else if state.velocity.len() != params.len() {
        return Err(Error::shape(
            "sgd_nesterov_step",
            format!("{} velocity buffers for {} params", state.velocity.len(), params.len()),
        ));
    }
    let (m, wd) = (state.momentum, state.weight_decay);
    for (p, vslot) in params.iter_mut().zip(state.velocity.iter_mut()) {
        let Some(grad) = p.grad.as_ref() else { continue };
        if grad.shape() != p.value.shape() {
            return Err(Error::shape(
                "sgd_nesterov_step",
                format!("param `{}` {:?} vs grad {:?}", p.name, p.value.shape(), grad.shape()),
            ));
        }
        let step = lr * p.group.multiplier();
        let v = vslot.get_or_insert_with(|| vec![0.0; grad.len()]);
        if v.len() != grad.len() {
            return Err(Error::shape("sgd_nesterov_step", format!("velocity for `{}`", p.name)));
        }
        let g = grad.data().to_vec();
        for ((pv, gv), vv) in p.value.data_mut().iter_mut().zip(g).zip(v.iter_mut()) {
            let d = gv + wd * *pv;
            *vv = m * *vv + d;
            let upd = if state.nesterov { d + m * *vv } else { *vv };
            *pv -= step * upd;
        }
    }
    Ok(())
}
