use std::collections::HashMap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::belief::RewardMap;
use crate::deep::adam::{clip_gradients, Adam};
use crate::deep::net::Network;
use crate::deep::replay::ReplayBuffer;
use crate::deep::{
    belief_slice_len, encode_h_batch, encode_q_batch, BeliefHead, DeepConfig, DeepTransition,
    InputEncoding, TargetPlacement,
};
use crate::error::{Error, Result};
use crate::mdp::{ActionId, ActionSet, StateId};
use crate::rng::Rng;
use crate::tabular::argmax_lowest;

pub fn huber(d: f64, delta: f64) -> f64 {
    if d.abs() <= delta {
        0.5 * d * d
    } else {
        delta * (d.abs() - 0.5 * delta)
    }
}

pub fn huber_grad(d: f64, delta: f64) -> f64 {
    d.clamp(-delta, delta)
}

/// The per-step knobs shared by both losses.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DeepStepParams {
    pub gamma: f64,
    pub huber_delta: f64,
    pub grad_clip: f64,
    pub q_input: InputEncoding,
    pub placement: TargetPlacement,
    pub head: BeliefHead,
    pub num_states: usize,
    pub num_actions: usize,
}

impl DeepStepParams {
    pub fn from_config(cfg: &DeepConfig, num_states: usize, num_actions: usize) -> Self {
        DeepStepParams {
            gamma: cfg.gamma,
            huber_delta: cfg.huber_delta,
            grad_clip: cfg.grad_clip,
            q_input: cfg.q_input,
            placement: cfg.target_placement,
            head: cfg.h_head,
            num_states,
            num_actions,
        }
    }
}

fn q_inputs(p: &DeepStepParams, width: usize, batch: &[&DeepTransition], next: bool) -> Result<Array2<f64>> {
    let items: Vec<(StateId, Option<&[f64]>)> = batch
        .iter()
        .map(|t| {
            if next {
                (t.next_state, t.next_obs.as_deref())
            } else {
                (t.state, t.obs.as_deref())
            }
        })
        .collect();
    encode_q_batch(p.q_input, width, &items)
}

fn greedy(row: &[f64], legal: ActionSet) -> ActionId {
    argmax_lowest(row, legal).unwrap_or(0)
}

fn check_finite(values: &[f64], state: StateId, action: ActionId) -> Result<()> {
    match values.iter().find(|v| !v.is_finite()) {
        Some(&value) => Err(Error::NonFiniteTarget {
            state,
            action,
            value,
        }),
        None => Ok(()),
    }
}

/// One DQN optimizer step on a given batch. Returns the mean Huber loss
/// before the update.
pub fn dqn_step_on_batch(
    qnet: &mut Network,
    target: &Network,
    batch: &[&DeepTransition],
    opt: &mut Adam,
    p: &DeepStepParams,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::UnderfilledBuffer { size: 0, batch: 0 });
    }
    let n = batch.len() as f64;
    let width = qnet.input_len();
    let xs = q_inputs(p, width, batch, false)?;
    let xn = q_inputs(p, width, batch, true)?;
    let mut upstream = Array2::zeros((batch.len(), qnet.output_len()));
    let mut loss = 0.0;
    match p.placement {
        TargetPlacement::Standard => {
            let boot = target.predict(&xn)?;
            let pred = qnet.forward(&xs)?;
            for (i, t) in batch.iter().enumerate() {
                let y = if t.terminal {
                    t.reward
                } else {
                    let row = boot.row(i);
                    let row = row.as_slice().expect("standard layout");
                    t.reward + p.gamma * row[greedy(row, t.next_legal)]
                };
                check_finite(&[y], t.state, t.action)?;
                let d = pred[[i, t.action]] - y;
                loss += huber(d, p.huber_delta) / n;
                upstream[[i, t.action]] = huber_grad(d, p.huber_delta) / n;
            }
        }
        TargetPlacement::Literal => {
            let pred = target.predict(&xs)?;
            let boot = qnet.forward(&xn)?;
            for (i, t) in batch.iter().enumerate() {
                let (y, a_star) = if t.terminal {
                    (t.reward, None)
                } else {
                    let row = boot.row(i);
                    let row = row.as_slice().expect("standard layout");
                    let a = greedy(row, t.next_legal);
                    (t.reward + p.gamma * row[a], Some(a))
                };
                check_finite(&[y], t.state, t.action)?;
                let d = y - pred[[i, t.action]];
                loss += huber(d, p.huber_delta) / n;
                if let Some(a) = a_star {
                    upstream[[i, a]] = p.gamma * huber_grad(d, p.huber_delta) / n;
                }
            }
        }
    }
    let mut grads = qnet.backward(&upstream)?;
    clip_gradients(&mut grads, p.grad_clip);
    opt.step(qnet, &grads)?;
    Ok(loss)
}

/// Samples a batch and takes one DQN step.
#[allow(clippy::too_many_arguments)]
pub fn dqn_train_step(
    qnet: &mut Network,
    target: &Network,
    buffer: &ReplayBuffer<DeepTransition>,
    opt: &mut Adam,
    p: &DeepStepParams,
    batch_size: usize,
    rng: &mut Rng,
) -> Result<f64> {
    let batch = buffer.sample(batch_size, rng)?;
    dqn_step_on_batch(qnet, target, &batch, opt, p)
}

/// Greedy next actions under the live Q network.
fn next_greedy_actions(qnet: &Network, p: &DeepStepParams, batch: &[&DeepTransition]) -> Result<Vec<ActionId>> {
    let xn = q_inputs(p, qnet.input_len(), batch, true)?;
    let q = qnet.predict(&xn)?;
    Ok(batch
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let row = q.row(i);
            greedy(row.as_slice().expect("standard layout"), t.next_legal)
        })
        .collect())
}

fn head_offset(head: BeliefHead, slice_len: usize, action: ActionId) -> usize {
    match head {
        BeliefHead::Full => action * slice_len,
        BeliefHead::StateMarginal => 0,
    }
}

/// One belief-network step on a given batch. Returns the mean (over the
/// batch) summed squared error before the update.
pub fn dbn_step_on_batch(
    hnet: &mut Network,
    h_target: &Network,
    qnet: &Network,
    batch: &[&DeepTransition],
    opt: &mut Adam,
    p: &DeepStepParams,
) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::UnderfilledBuffer { size: 0, batch: 0 });
    }
    let (ns, na) = (p.num_states, p.num_actions);
    let len = belief_slice_len(p.head, ns, na);
    let n = batch.len() as f64;
    let a_star = next_greedy_actions(qnet, p, batch)?;

    let cur: Vec<(StateId, ActionId)> = batch.iter().map(|t| (t.state, t.action)).collect();
    let nxt: Vec<(StateId, ActionId)> = batch
        .iter()
        .zip(&a_star)
        .map(|(t, &a)| (t.next_state, a))
        .collect();
    let boot = h_target.predict(&encode_h_batch(p.head, ns, na, &nxt))?;
    let pred = hnet.forward(&encode_h_batch(p.head, ns, na, &cur))?;

    let mut upstream = Array2::zeros(pred.dim());
    let mut loss = 0.0;
    let mut target = vec![0.0; len];
    for (i, t) in batch.iter().enumerate() {
        target.fill(0.0);
        if !t.terminal {
            let off = head_offset(p.head, len, a_star[i]);
            for (j, v) in target.iter_mut().enumerate() {
                *v = p.gamma * boot[[i, off + j]];
            }
        }
        let indicator = match p.head {
            BeliefHead::Full => t.state * na + t.action,
            BeliefHead::StateMarginal => t.state,
        };
        target[indicator] += 1.0;
        check_finite(&target, t.state, t.action)?;
        let off = head_offset(p.head, len, t.action);
        for (j, &y) in target.iter().enumerate() {
            let d = pred[[i, off + j]] - y;
            loss += d * d / n;
            upstream[[i, off + j]] = 2.0 * d / n;
        }
    }
    let mut grads = hnet.backward(&upstream)?;
    clip_gradients(&mut grads, p.grad_clip);
    opt.step(hnet, &grads)?;
    Ok(loss)
}

/// Samples a batch and takes one belief-network step.
#[allow(clippy::too_many_arguments)]
pub fn dbn_train_step(
    hnet: &mut Network,
    h_target: &Network,
    qnet: &Network,
    buffer: &ReplayBuffer<DeepTransition>,
    opt: &mut Adam,
    p: &DeepStepParams,
    batch_size: usize,
    rng: &mut Rng,
) -> Result<f64> {
    let batch = buffer.sample(batch_size, rng)?;
    dbn_step_on_batch(hnet, h_target, qnet, &batch, opt, p)
}

/// Sample Pearson correlation; NaN when either side is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len().min(y.len());
    if n < 2 {
        return f64::NAN;
    }
    let mx = x[..n].iter().sum::<f64>() / n as f64;
    let my = y[..n].iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let (dx, dy) = (x[i] - mx, y[i] - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return f64::NAN;
    }
    sxy / (sxx * syy).sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeepRecoveryReport {
    /// Number of `(s, a)` pairs compared.
    pub pairs: usize,
    pub pearson: f64,
    pub max_abs_dev: f64,
    pub q_hat: Vec<f64>,
    pub q: Vec<f64>,
}

/// Collapses samples that share a state: the Q side is averaged over their
/// observations, in order of first appearance.
fn average_by_pair(
    samples: &[(StateId, Option<Vec<f64>>, ActionSet)],
    q_hat: Vec<f64>,
    q: Vec<f64>,
) -> (Vec<f64>, Vec<f64>) {
    let mut index: HashMap<(StateId, ActionId), usize> = HashMap::new();
    let (mut hat, mut sum, mut count) = (Vec::new(), Vec::new(), Vec::new());
    let pairs = samples.iter().flat_map(|(s, _, legal)| legal.iter().map(move |a| (*s, a)));
    for ((key, h), v) in pairs.zip(q_hat).zip(q) {
        let k = *index.entry(key).or_insert_with(|| {
            hat.push(h);
            sum.push(0.0);
            count.push(0.0);
            hat.len() - 1
        });
        sum[k] += v;
        count[k] += 1.0;
    }
    let mean = sum.iter().zip(&count).map(|(s, c)| s / c).collect();
    (hat, mean)
}

/// `Q_hat(s, a) = H(s, a) . R` against the Q network on every legal action
/// of every sampled state. For a state-marginal head the reward of `s'` is
/// `R(s', pi(s'))` with `pi` greedy under the Q network, which requires a
/// one-hot Q input. Repeated states are compared once, against the mean Q
/// over their samples.
pub fn recover_q_deep(
    hnet: &Network,
    qnet: &Network,
    p: &DeepStepParams,
    r: &RewardMap,
    samples: &[(StateId, Option<Vec<f64>>, ActionSet)],
) -> Result<DeepRecoveryReport> {
    let (ns, na) = (p.num_states, p.num_actions);
    if r.num_states() != ns || r.num_actions() != na {
        return Err(Error::shape(
            format!("{ns}x{na}"),
            format!("{}x{}", r.num_states(), r.num_actions()),
        ));
    }
    let len = belief_slice_len(p.head, ns, na);
    let weights: Vec<f64> = match p.head {
        BeliefHead::Full => r.values().to_vec(),
        BeliefHead::StateMarginal => {
            if p.q_input != InputEncoding::OneHotState {
                return Err(Error::InvalidArgument(
                    "state-marginal recovery needs a one-hot Q input".into(),
                ));
            }
            let all: Vec<(StateId, Option<&[f64]>)> = (0..ns).map(|s| (s, None)).collect();
            let q = qnet.predict(&encode_q_batch(p.q_input, qnet.input_len(), &all)?)?;
            (0..ns)
                .map(|s| {
                    let row = q.row(s);
                    r.get(s, greedy(row.as_slice().expect("standard layout"), ActionSet::all(na)))
                })
                .collect()
        }
    };

    let mut q_hat = Vec::new();
    let mut q_vals = Vec::new();
    for chunk in samples.chunks(256) {
        let items: Vec<(StateId, Option<&[f64]>)> =
            chunk.iter().map(|(s, o, _)| (*s, o.as_deref())).collect();
        let q = qnet.predict(&encode_q_batch(p.q_input, qnet.input_len(), &items)?)?;
        let pairs: Vec<(StateId, ActionId)> = chunk
            .iter()
            .flat_map(|(s, _, legal)| legal.iter().map(move |a| (*s, a)))
            .collect();
        let h = match p.head {
            BeliefHead::Full => {
                let states: Vec<(StateId, ActionId)> = chunk.iter().map(|(s, _, _)| (*s, 0)).collect();
                hnet.predict(&encode_h_batch(p.head, ns, na, &states))?
            }
            BeliefHead::StateMarginal => hnet.predict(&encode_h_batch(p.head, ns, na, &pairs))?,
        };
        let mut pair_row = 0;
        for (i, (_, _, legal)) in chunk.iter().enumerate() {
            for a in legal.iter() {
                let (row, off) = match p.head {
                    BeliefHead::Full => (i, a * len),
                    BeliefHead::StateMarginal => (pair_row, 0),
                };
                let dot: f64 = (0..len).map(|j| h[[row, off + j]] * weights[j]).sum();
                q_hat.push(dot);
                q_vals.push(q[[i, a]]);
                pair_row += 1;
            }
        }
    }
    let (q_hat, q_vals) = average_by_pair(samples, q_hat, q_vals);
    let max_abs_dev = q_hat
        .iter()
        .zip(&q_vals)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(DeepRecoveryReport {
        pairs: q_hat.len(),
        pearson: pearson(&q_hat, &q_vals),
        max_abs_dev,
        q_hat,
        q: q_vals,
    })
}
