//! Fully connected networks with hand-written reverse mode.
//!
//! Hidden layers use ReLU and the output layer is linear. Parameters are
//! laid out layer by layer, weight (row-major, `fan_in x fan_out`) then bias;
//! gradient vectors follow the same order.

use ndarray::{s, Array1, Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Rng};

pub const HIDDEN_ACTIVATION: &str = "relu";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Architecture {
    /// Plain stack; `sizes[0]` is the input width, the last entry the output.
    Mlp { sizes: Vec<usize> },
    /// Input is `[belief | action]`; each part goes through its own ReLU
    /// layer, the two are concatenated and fed to `trunk` (hidden sizes then
    /// output size).
    TwoStream {
        belief_in: usize,
        action_in: usize,
        belief_hidden: usize,
        action_hidden: usize,
        trunk: Vec<usize>,
    },
}

impl Architecture {
    pub fn mlp(sizes: &[usize]) -> Self {
        Architecture::Mlp {
            sizes: sizes.to_vec(),
        }
    }

    pub fn input_len(&self) -> usize {
        match self {
            Architecture::Mlp { sizes } => sizes.first().copied().unwrap_or(0),
            Architecture::TwoStream {
                belief_in,
                action_in,
                ..
            } => belief_in + action_in,
        }
    }

    pub fn output_len(&self) -> usize {
        match self {
            Architecture::Mlp { sizes } => sizes.last().copied().unwrap_or(0),
            Architecture::TwoStream { trunk, .. } => trunk.last().copied().unwrap_or(0),
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = match self {
            Architecture::Mlp { sizes } => sizes.len() >= 2 && sizes.iter().all(|&n| n > 0),
            Architecture::TwoStream {
                belief_in,
                action_in,
                belief_hidden,
                action_hidden,
                trunk,
            } => {
                [*belief_in, *action_in, *belief_hidden, *action_hidden]
                    .iter()
                    .all(|&n| n > 0)
                    && !trunk.is_empty()
                    && trunk.iter().all(|&n| n > 0)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidSpec(format!("bad architecture {self:?}")))
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
struct Dense {
    weight: Array2<f64>,
    bias: Array1<f64>,
}

impl Dense {
    fn init(fan_in: usize, fan_out: usize, rng: &mut Rng) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let weight = Array2::from_shape_fn((fan_in, fan_out), |_| {
            rng::uniform_range(rng, -bound, bound)
        });
        let bias = Array1::from_shape_fn(fan_out, |_| rng::uniform_range(rng, -bound, bound));
        Dense { weight, bias }
    }

    fn num_params(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut y = x.dot(&self.weight);
        y += &self.bias;
        y
    }

    /// Writes this layer's gradients into `out` and returns `delta . W^T`
    /// when requested.
    fn backward(
        &self,
        x: &Array2<f64>,
        delta: &Array2<f64>,
        out: &mut [f64],
        want_input: bool,
    ) -> Option<Array2<f64>> {
        let gw = x.t().dot(delta);
        let gb = delta.sum_axis(Axis(0));
        let (w_out, b_out) = out.split_at_mut(self.weight.len());
        for (o, g) in w_out.iter_mut().zip(gw.iter()) {
            *o = *g;
        }
        for (o, g) in b_out.iter_mut().zip(gb.iter()) {
            *o = *g;
        }
        want_input.then(|| delta.dot(&self.weight.t()))
    }

    fn params(&self) -> [&[f64]; 2] {
        [
            self.weight.as_slice().expect("standard layout"),
            self.bias.as_slice().expect("standard layout"),
        ]
    }

    fn params_mut(&mut self) -> [&mut [f64]; 2] {
        [
            self.weight.as_slice_mut().expect("standard layout"),
            self.bias.as_slice_mut().expect("standard layout"),
        ]
    }
}

fn relu_in_place(x: &mut Array2<f64>) {
    x.mapv_inplace(|v| v.max(0.0));
}

fn relu_mask(delta: &mut Array2<f64>, activation: &Array2<f64>) {
    delta.zip_mut_with(activation, |d, &a| {
        if a <= 0.0 {
            *d = 0.0;
        }
    });
}

#[derive(Clone, Debug, PartialEq)]
struct Stack {
    layers: Vec<Dense>,
}

impl Stack {
    fn init(sizes: &[usize], rng: &mut Rng) -> Self {
        Stack {
            layers: sizes
                .windows(2)
                .map(|w| Dense::init(w[0], w[1], rng))
                .collect(),
        }
    }

    fn num_params(&self) -> usize {
        self.layers.iter().map(Dense::num_params).sum()
    }

    /// Returns the input followed by every layer's (activated) output.
    fn trace(&self, x: Array2<f64>) -> Vec<Array2<f64>> {
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x);
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut y = layer.forward(acts.last().expect("nonempty"));
            if i < last {
                relu_in_place(&mut y);
            }
            acts.push(y);
        }
        acts
    }

    fn predict(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut y = self.layers[0].forward(x);
        for layer in &self.layers[1..] {
            relu_in_place(&mut y);
            y = layer.forward(&y);
        }
        y
    }

    fn backward(
        &self,
        acts: &[Array2<f64>],
        upstream: Array2<f64>,
        out: &mut [f64],
        want_input: bool,
    ) -> Option<Array2<f64>> {
        let mut offsets = Vec::with_capacity(self.layers.len());
        let mut off = 0;
        for layer in &self.layers {
            offsets.push(off);
            off += layer.num_params();
        }
        let mut delta = upstream;
        for l in (0..self.layers.len()).rev() {
            let layer = &self.layers[l];
            let slot = &mut out[offsets[l]..offsets[l] + layer.num_params()];
            let need = l > 0 || want_input;
            {
                let mut dx = layer.backward(&acts[l], &delta, slot, need)?;
                if l > 0 {
                    relu_mask(&mut dx, &acts[l]);
                }
                delta = dx;
            }
        }
        Some(delta)
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Body {
    Mlp(Stack),
    TwoStream {
        split: usize,
        belief: Dense,
        action: Dense,
        trunk: Stack,
    },
}

#[derive(Clone, Debug)]
enum Trace {
    Mlp(Vec<Array2<f64>>),
    TwoStream {
        xb: Array2<f64>,
        xa: Array2<f64>,
        hb_width: usize,
        trunk: Vec<Array2<f64>>,
    },
}

#[derive(Clone, Debug)]
struct Cache {
    version: u64,
    trace: Trace,
}

/// A network plus the activations of its most recent cached forward pass.
#[derive(Clone, Debug)]
pub struct Network {
    arch: Architecture,
    body: Body,
    version: u64,
    cache: Option<Cache>,
}

impl PartialEq for Network {
    fn eq(&self, other: &Self) -> bool {
        self.arch == other.arch && self.body == other.body
    }
}

impl Network {
    pub fn new(arch: &Architecture, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = rng::seeded(seed);
        let body = match arch {
            Architecture::Mlp { sizes } => Body::Mlp(Stack::init(sizes, &mut rng)),
            Architecture::TwoStream {
                belief_in,
                action_in,
                belief_hidden,
                action_hidden,
                trunk,
            } => {
                let belief = Dense::init(*belief_in, *belief_hidden, &mut rng);
                let action = Dense::init(*action_in, *action_hidden, &mut rng);
                let mut sizes = vec![belief_hidden + action_hidden];
                sizes.extend_from_slice(trunk);
                Body::TwoStream {
                    split: *belief_in,
                    belief,
                    action,
                    trunk: Stack::init(&sizes, &mut rng),
                }
            }
        };
        Ok(Network {
            arch: arch.clone(),
            body,
            version: 0,
            cache: None,
        })
    }

    pub fn architecture(&self) -> &Architecture {
        &self.arch
    }

    pub fn input_len(&self) -> usize {
        self.arch.input_len()
    }

    pub fn output_len(&self) -> usize {
        self.arch.output_len()
    }

    pub fn num_params(&self) -> usize {
        match &self.body {
            Body::Mlp(stack) => stack.num_params(),
            Body::TwoStream {
                belief,
                action,
                trunk,
                ..
            } => belief.num_params() + action.num_params() + trunk.num_params(),
        }
    }

    /// Bumped on every parameter mutation.
    pub fn version(&self) -> u64 {
        self.version
    }

    fn check_input(&self, x: &Array2<f64>) -> Result<()> {
        if x.ncols() != self.input_len() || x.nrows() == 0 {
            return Err(Error::shape(
                format!("batch x {}", self.input_len()),
                format!("{} x {}", x.nrows(), x.ncols()),
            ));
        }
        Ok(())
    }

    /// Forward pass without touching the cache.
    pub fn predict(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_input(x)?;
        Ok(match &self.body {
            Body::Mlp(stack) => stack.predict(x),
            Body::TwoStream {
                split,
                belief,
                action,
                trunk,
            } => {
                let mut hb = belief.forward(&x.slice(s![.., ..*split]).to_owned());
                let mut ha = action.forward(&x.slice(s![.., *split..]).to_owned());
                relu_in_place(&mut hb);
                relu_in_place(&mut ha);
                let joined = ndarray::concatenate(Axis(1), &[hb.view(), ha.view()])
                    .expect("same batch");
                trunk.predict(&joined)
            }
        })
    }

    pub fn predict_one(&self, x: &[f64]) -> Result<Vec<f64>> {
        let batch = Array2::from_shape_vec((1, x.len()), x.to_vec())
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        Ok(self.predict(&batch)?.into_raw_vec_and_offset().0)
    }

    /// Forward pass that keeps the activations for `backward`.
    pub fn forward(&mut self, x: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_input(x)?;
        let (out, trace) = match &self.body {
            Body::Mlp(stack) => {
                let acts = stack.trace(x.clone());
                (acts.last().expect("nonempty").clone(), Trace::Mlp(acts))
            }
            Body::TwoStream {
                split,
                belief,
                action,
                trunk,
            } => {
                let xb = x.slice(s![.., ..*split]).to_owned();
                let xa = x.slice(s![.., *split..]).to_owned();
                let mut hb = belief.forward(&xb);
                let mut ha = action.forward(&xa);
                relu_in_place(&mut hb);
                relu_in_place(&mut ha);
                let joined = ndarray::concatenate(Axis(1), &[hb.view(), ha.view()])
                    .expect("same batch");
                let acts = trunk.trace(joined);
                (
                    acts.last().expect("nonempty").clone(),
                    Trace::TwoStream {
                        xb,
                        xa,
                        hb_width: hb.ncols(),
                        trunk: acts,
                    },
                )
            }
        };
        self.cache = Some(Cache {
            version: self.version,
            trace,
        });
        Ok(out)
    }

    /// Gradient of `sum(output * upstream)` with respect to every parameter,
    /// using the activations cached by the last `forward`.
    pub fn backward(&self, upstream: &Array2<f64>) -> Result<Vec<f64>> {
        let cache = self.cache.as_ref().ok_or(Error::StaleCache)?;
        if cache.version != self.version {
            return Err(Error::StaleCache);
        }
        let batch = match &cache.trace {
            Trace::Mlp(acts) => acts[0].nrows(),
            Trace::TwoStream { xb, .. } => xb.nrows(),
        };
        if upstream.dim() != (batch, self.output_len()) {
            return Err(Error::shape(
                format!("{} x {}", batch, self.output_len()),
                format!("{} x {}", upstream.nrows(), upstream.ncols()),
            ));
        }
        let mut grads = vec![0.0; self.num_params()];
        match (&self.body, &cache.trace) {
            (Body::Mlp(stack), Trace::Mlp(acts)) => {
                stack.backward(acts, upstream.clone(), &mut grads, false);
            }
            (
                Body::TwoStream {
                    belief,
                    action,
                    trunk,
                    ..
                },
                Trace::TwoStream {
                    xb,
                    xa,
                    hb_width,
                    trunk: acts,
                },
            ) => {
                let nb = belief.num_params();
                let na = action.num_params();
                let (g_belief, rest) = grads.split_at_mut(nb);
                let (g_action, g_trunk) = rest.split_at_mut(na);
                let mut d_joined = trunk
                    .backward(acts, upstream.clone(), g_trunk, true)
                    .expect("input gradient requested");
                relu_mask(&mut d_joined, &acts[0]);
                let db = d_joined.slice(s![.., ..*hb_width]).to_owned();
                let da = d_joined.slice(s![.., *hb_width..]).to_owned();
                belief.backward(xb, &db, g_belief, false);
                action.backward(xa, &da, g_action, false);
            }
            _ => unreachable!("trace matches body"),
        }
        Ok(grads)
    }

    pub fn params(&self) -> Vec<&[f64]> {
        match &self.body {
            Body::Mlp(stack) => stack.layers.iter().flat_map(Dense::params).collect(),
            Body::TwoStream {
                belief,
                action,
                trunk,
                ..
            } => belief
                .params()
                .into_iter()
                .chain(action.params())
                .chain(trunk.layers.iter().flat_map(Dense::params))
                .collect(),
        }
    }

    /// Mutable parameter views; invalidates the forward cache.
    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        self.version += 1;
        match &mut self.body {
            Body::Mlp(stack) => stack.layers.iter_mut().flat_map(Dense::params_mut).collect(),
            Body::TwoStream {
                belief,
                action,
                trunk,
                ..
            } => belief
                .params_mut()
                .into_iter()
                .chain(action.params_mut())
                .chain(trunk.layers.iter_mut().flat_map(Dense::params_mut))
                .collect(),
        }
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.params().concat()
    }

    pub fn set_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_params() {
            return Err(Error::shape(self.num_params().to_string(), flat.len().to_string()));
        }
        let mut off = 0;
        for p in self.params_mut() {
            p.copy_from_slice(&flat[off..off + p.len()]);
            off += p.len();
        }
        Ok(())
    }

    /// Bitwise copy of `source`'s parameters into `self`.
    pub fn sync_from(&mut self, source: &Network) -> Result<()> {
        if self.arch != source.arch {
            return Err(Error::shape(
                format!("{:?}", self.arch),
                format!("{:?}", source.arch),
            ));
        }
        self.body = source.body.clone();
        self.version += 1;
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.params().iter().all(|p| p.iter().all(|v| v.is_finite()))
    }
}

/// `sync_target(net, target)`: copies `net` into `target`.
pub fn sync_target(net: &Network, target: &mut Network) -> Result<()> {
    target.sync_from(net)
}
