//! Backbone, bottleneck, classifier and the two adversaries (domain
//! discriminator and critic).

mod checkpoint;

pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointMeta, CHECKPOINT_MAGIC};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::{stable_sigmoid, Gradients, Graph, LrGroup, Param, Tensor, Var};
use crate::error::{Error, Result};

/// Layer widths of a [`ModelBundle`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetDims {
    pub input: usize,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
    #[serde(default = "default_bottleneck")]
    pub bottleneck: usize,
    pub classes: usize,
}

fn default_hidden() -> Vec<usize> {
    vec![128, 128]
}

fn default_bottleneck() -> usize {
    256
}

impl NetDims {
    pub fn new(input: usize, classes: usize) -> Self {
        Self {
            input,
            hidden: default_hidden(),
            bottleneck: default_bottleneck(),
            classes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input == 0 || self.bottleneck == 0 || self.classes == 0 {
            return Err(Error::config(format!("all layer widths must be positive: {self:?}")));
        }
        if self.hidden.contains(&0) {
            return Err(Error::config(format!("zero-width hidden layer: {:?}", self.hidden)));
        }
        Ok(())
    }
}

/// Affine layer `x·W + b` with `W: in × out` and `b: 1 × out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub weight: Param,
    pub bias: Param,
}

impl Linear {
    /// Fan-in uniform init `U(−1/√in, 1/√in)` for weights and bias.
    pub fn init(name: &str, fan_in: usize, fan_out: usize, group: LrGroup, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let mut draw = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random_range(-bound..bound)).collect() };
        let w = Tensor::matrix(fan_in, fan_out, draw(fan_in * fan_out)).expect("sized");
        let b = Tensor::matrix(1, fan_out, draw(fan_out)).expect("sized");
        Self {
            weight: Param::new(format!("{name}.weight"), w, group),
            bias: Param::new(format!("{name}.bias"), b, group),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weight.value.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.weight.value.cols()
    }

    fn bind(&self, g: &mut Graph) -> Result<BoundLinear> {
        Ok(BoundLinear {
            weight: g.param(self.weight.value.clone())?,
            bias: g.param(self.bias.value.clone())?,
        })
    }

    fn apply(&self, x: &Tensor) -> Result<Tensor> {
        let mut out = x.matmul(&self.weight.value)?;
        let b = self.bias.value.data();
        let c = b.len();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            *v += b[i % c];
        }
        Ok(out)
    }

    fn params(&self) -> [&Param; 2] {
        [&self.weight, &self.bias]
    }

    fn params_mut(&mut self) -> [&mut Param; 2] {
        [&mut self.weight, &mut self.bias]
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BoundLinear {
    pub weight: Var,
    pub bias: Var,
}

impl BoundLinear {
    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let h = g.matmul(x, self.weight)?;
        g.add(h, self.bias)
    }
}

fn relu_in_place(t: &mut Tensor) {
    for v in t.data_mut() {
        *v = v.max(0.0);
    }
}

fn check_input(op: &'static str, x: &Tensor, d: usize) -> Result<()> {
    if x.shape().len() != 2 || x.cols() != d {
        return Err(Error::shape(op, format!("expected n × {d} input, got {:?}", x.shape())));
    }
    Ok(())
}

/// Feature extractor plus classification head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub dims: NetDims,
    pub backbone: Vec<Linear>,
    pub bottleneck: Linear,
    pub classifier: Linear,
}

/// Graph handles for one forward pass through a [`ModelBundle`]. Order
/// matches [`ModelBundle::params`].
#[derive(Debug, Clone)]
pub struct BoundBundle {
    pub backbone: Vec<BoundLinear>,
    pub bottleneck: BoundLinear,
    pub classifier: BoundLinear,
}

impl BoundBundle {
    pub fn vars(&self) -> Vec<Var> {
        let mut v = Vec::new();
        for l in self.backbone.iter().chain([&self.bottleneck, &self.classifier]) {
            v.push(l.weight);
            v.push(l.bias);
        }
        v
    }

    pub fn features(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let mut h = x;
        for l in &self.backbone {
            let a = l.forward(g, h)?;
            h = g.relu(a)?;
        }
        self.bottleneck.forward(g, h)
    }

    pub fn logits_from_features(&self, g: &mut Graph, z: Var) -> Result<Var> {
        self.classifier.forward(g, z)
    }
}

/// Builds a bundle with seeded weights. Backbone layers sit in the backbone lr
/// group, bottleneck and classifier in the ×10 head group.
pub fn init_bundle(dims: &NetDims, seed: u64) -> Result<ModelBundle> {
    dims.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut backbone = Vec::with_capacity(dims.hidden.len());
    let mut prev = dims.input;
    for (i, &h) in dims.hidden.iter().enumerate() {
        backbone.push(Linear::init(&format!("backbone.{i}"), prev, h, LrGroup::Backbone, &mut rng));
        prev = h;
    }
    let bottleneck = Linear::init("bottleneck", prev, dims.bottleneck, LrGroup::Head, &mut rng);
    let classifier = Linear::init("classifier", dims.bottleneck, dims.classes, LrGroup::Head, &mut rng);
    Ok(ModelBundle {
        dims: dims.clone(),
        backbone,
        bottleneck,
        classifier,
    })
}

impl ModelBundle {
    pub fn params(&self) -> Vec<&Param> {
        self.backbone
            .iter()
            .chain([&self.bottleneck, &self.classifier])
            .flat_map(Linear::params)
            .collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        self.backbone
            .iter_mut()
            .chain([&mut self.bottleneck, &mut self.classifier])
            .flat_map(Linear::params_mut)
            .collect()
    }

    /// Rebuilds a bundle from parameters in [`ModelBundle::params`] order.
    pub fn from_params(dims: &NetDims, params: Vec<Param>) -> Result<Self> {
        let mut fresh = init_bundle(dims, 0)?;
        let n = fresh.params().len();
        if params.len() != n {
            return Err(Error::config(format!("{} parameters for a bundle needing {n}", params.len())));
        }
        for (slot, p) in fresh.params_mut().into_iter().zip(params) {
            if slot.value.shape() != p.value.shape() || slot.name != p.name {
                return Err(Error::config(format!(
                    "parameter `{}` {:?} does not fit slot `{}` {:?}",
                    p.name,
                    p.value.shape(),
                    slot.name,
                    slot.value.shape()
                )));
            }
            *slot = p;
        }
        Ok(fresh)
    }

    pub fn bind(&self, g: &mut Graph) -> Result<BoundBundle> {
        Ok(BoundBundle {
            backbone: self.backbone.iter().map(|l| l.bind(g)).collect::<Result<_>>()?,
            bottleneck: self.bottleneck.bind(g)?,
            classifier: self.classifier.bind(g)?,
        })
    }

    /// Copies gradients for the bound vars into the parameters' `grad` slots.
    pub fn take_grads(&mut self, bound: &BoundBundle, grads: &Gradients) {
        for (p, v) in self.params_mut().into_iter().zip(bound.vars()) {
            p.grad = grads.get(v).cloned();
        }
    }

    /// Bottleneck features without recording a tape.
    pub fn features(&self, x: &Tensor) -> Result<Tensor> {
        check_input("features", x, self.dims.input)?;
        let mut h = x.clone();
        for l in &self.backbone {
            h = l.apply(&h)?;
            relu_in_place(&mut h);
        }
        self.bottleneck.apply(&h)
    }

    pub fn logits(&self, x: &Tensor) -> Result<Tensor> {
        self.classifier.apply(&self.features(x)?)
    }

    pub fn logits_from_features(&self, z: &Tensor) -> Result<Tensor> {
        self.classifier.apply(z)
    }
}

/// Records `z = bottleneck(relu-MLP(x))` on the tape.
pub fn forward_features(g: &mut Graph, bound: &BoundBundle, bundle: &ModelBundle, x: Var) -> Result<Var> {
    check_input("forward_features", g.value(x), bundle.dims.input)?;
    bound.features(g, x)
}

/// Records `classifier(forward_features(x))` on the tape.
pub fn forward_logits(g: &mut Graph, bound: &BoundBundle, bundle: &ModelBundle, x: Var) -> Result<Var> {
    let z = forward_features(g, bound, bundle, x)?;
    bound.logits_from_features(g, z)
}

/// One-hidden-layer relu MLP with a scalar output, shared by the domain
/// discriminator and the critic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarHead {
    pub hidden: Linear,
    pub out: Linear,
}

#[derive(Debug, Clone, Copy)]
pub struct BoundScalarHead {
    pub hidden: BoundLinear,
    pub out: BoundLinear,
}

impl BoundScalarHead {
    pub fn vars(&self) -> [Var; 4] {
        [self.hidden.weight, self.hidden.bias, self.out.weight, self.out.bias]
    }

    /// Raw `n × 1` output before any squashing or clamping.
    pub fn raw(&self, g: &mut Graph, z: Var) -> Result<Var> {
        let a = self.hidden.forward(g, z)?;
        let h = g.relu(a)?;
        self.out.forward(g, h)
    }
}

impl ScalarHead {
    fn init(name: &str, input: usize, hidden: usize, group: LrGroup, seed: u64) -> Result<Self> {
        if input == 0 || hidden == 0 {
            return Err(Error::config(format!("{name} widths must be positive")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok(Self {
            hidden: Linear::init(&format!("{name}.hidden"), input, hidden, group, &mut rng),
            out: Linear::init(&format!("{name}.out"), hidden, 1, group, &mut rng),
        })
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        let [a, b] = self.hidden.params_mut();
        let [c, d] = self.out.params_mut();
        vec![a, b, c, d]
    }

    pub fn bind(&self, g: &mut Graph) -> Result<BoundScalarHead> {
        Ok(BoundScalarHead {
            hidden: self.hidden.bind(g)?,
            out: self.out.bind(g)?,
        })
    }

    pub fn take_grads(&mut self, bound: &BoundScalarHead, grads: &Gradients) {
        for (p, v) in self.params_mut().into_iter().zip(bound.vars()) {
            p.grad = grads.get(v).cloned();
        }
    }

    pub fn raw(&self, z: &Tensor) -> Result<Tensor> {
        let mut h = self.hidden.apply(z)?;
        relu_in_place(&mut h);
        self.out.apply(&h)
    }
}

/// Domain discriminator; `σ(raw)` is read as P(domain = source).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Discriminator {
    pub head: ScalarHead,
}

impl Discriminator {
    pub fn init(input: usize, hidden: usize, seed: u64) -> Result<Self> {
        Ok(Self {
            head: ScalarHead::init("disc", input, hidden, LrGroup::Head, seed)?,
        })
    }

    pub fn prob(&self, z: &Tensor) -> Result<Tensor> {
        Ok(self.head.raw(z)?.map(stable_sigmoid))
    }
}

/// Critic whose output is clamped to `[low, up]`. Trained at the base
/// learning rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Critic {
    pub head: ScalarHead,
    pub low: f64,
    pub up: f64,
}

impl Critic {
    pub fn init(input: usize, hidden: usize, low: f64, up: f64, seed: u64) -> Result<Self> {
        if !(low < up) {
            return Err(Error::config(format!("critic bounds [{low}, {up}] are empty")));
        }
        Ok(Self {
            head: ScalarHead::init("critic", input, hidden, LrGroup::Backbone, seed)?,
            low,
            up,
        })
    }

    pub fn forward(&self, g: &mut Graph, bound: &BoundScalarHead, z: Var) -> Result<Var> {
        let r = bound.raw(g, z)?;
        g.clamp(r, self.low, self.up)
    }

    pub fn value(&self, z: &Tensor) -> Result<Tensor> {
        let (lo, hi) = (self.low, self.up);
        Ok(self.head.raw(z)?.map(|v| v.clamp(lo, hi)))
    }
}
