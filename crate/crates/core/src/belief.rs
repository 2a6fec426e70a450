//! Belief maps: discounted expected state-action visitation tensors learned
//! in lockstep with a value table.
//!
//! `H[s, a, s', a']` is the discounted expected number of times the agent
//! executes `a'` in `s'` after starting with `a` in `s`. Every belief update
//! mirrors a value update with the reward replaced by the one-hot indicator
//! of the updated pair, so `vec(H(s, a)) . vec(R) = Q(s, a)` holds throughout
//! training whenever both start at zero.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{ActionId, Environment, StateId, Trajectory, Transition};
use crate::par::{self, Execution};
use crate::rng::{seeded, uniform_range};
use crate::tabular::{Algo, InitMode, QTable, UpdateEvent, Which};

/// Dense row-major `(s, a, s', a')` tensor of 64-bit floats.
#[derive(Clone, Debug, PartialEq)]
pub struct BeliefTensor {
    num_states: usize,
    num_actions: usize,
    gamma: f64,
    init_mode: InitMode,
    values: Vec<f64>,
}

impl BeliefTensor {
    pub fn zeros(num_states: usize, num_actions: usize, gamma: f64) -> Self {
        let n = num_states * num_actions;
        BeliefTensor {
            num_states,
            num_actions,
            gamma,
            init_mode: InitMode::Zero,
            values: vec![0.0; n * n],
        }
    }

    pub fn new(num_states: usize, num_actions: usize, gamma: f64, init: InitMode) -> Self {
        let mut h = BeliefTensor::zeros(num_states, num_actions, gamma);
        h.init_mode = init;
        if let InitMode::Random { seed, scale } = init {
            let mut rng = seeded(seed);
            for v in &mut h.values {
                *v = uniform_range(&mut rng, 0.0, scale);
            }
        }
        h
    }

    pub fn from_values(
        num_states: usize,
        num_actions: usize,
        gamma: f64,
        values: Vec<f64>,
    ) -> Result<Self> {
        let n = num_states * num_actions;
        if values.len() != n * n {
            return Err(Error::shape(
                format!("{num_states}x{num_actions}x{num_states}x{num_actions}"),
                format!("{} values", values.len()),
            ));
        }
        Ok(BeliefTensor {
            num_states,
            num_actions,
            gamma,
            init_mode: InitMode::Zero,
            values,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn init_mode(&self) -> InitMode {
        self.init_mode
    }

    pub fn dims(&self) -> [usize; 4] {
        [
            self.num_states,
            self.num_actions,
            self.num_states,
            self.num_actions,
        ]
    }

    /// Length of one `H(s, a)` slice.
    pub fn row_len(&self) -> usize {
        self.num_states * self.num_actions
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    #[inline]
    fn row_index(&self, state: StateId, action: ActionId) -> usize {
        state * self.num_actions + action
    }

    pub fn slice(&self, state: StateId, action: ActionId) -> &[f64] {
        let n = self.row_len();
        let r = self.row_index(state, action);
        &self.values[r * n..(r + 1) * n]
    }

    pub fn slice_mut(&mut self, state: StateId, action: ActionId) -> &mut [f64] {
        let n = self.row_len();
        let r = self.row_index(state, action);
        &mut self.values[r * n..(r + 1) * n]
    }

    pub fn get(&self, s: StateId, a: ActionId, s2: StateId, a2: ActionId) -> f64 {
        self.slice(s, a)[self.row_index(s2, a2)]
    }

    pub fn total_mass(&self, state: StateId, action: ActionId) -> f64 {
        self.slice(state, action).iter().sum()
    }

    /// Largest `sum_{s',a'} H[s, a, s', a']` over all pairs.
    pub fn max_total_mass(&self) -> f64 {
        self.values
            .chunks(self.row_len())
            .map(|row| row.iter().sum::<f64>())
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    fn check_pair(&self, state: StateId, action: ActionId) -> Result<()> {
        if state >= self.num_states || action >= self.num_actions {
            return Err(Error::shape(
                format!("pair within {}x{}", self.num_states, self.num_actions),
                format!("({state}, {action})"),
            ));
        }
        Ok(())
    }

    fn check_transition(&self, t: &Transition) -> Result<()> {
        self.check_pair(t.state, t.action)?;
        self.check_pair(t.next_state, 0)
    }
}

/// `H(s,a) += alpha * (1_{s,a} + gamma * boot - H(s,a))` where `boot` is the
/// `bootstrap_action` slice at `s'` of `source` (or of `target` itself), or
/// zero when there is no bootstrap.
fn apply_td(
    target: &mut BeliefTensor,
    source: Option<&BeliefTensor>,
    t: &Transition,
    bootstrap_action: Option<ActionId>,
    alpha: f64,
    gamma: f64,
) {
    let n = target.row_len();
    let row = target.row_index(t.state, t.action);
    let Some(b) = bootstrap_action.map(|m| target.row_index(t.next_state, m)) else {
        td_row(&mut target.values[row * n..(row + 1) * n], row, None, alpha, gamma);
        return;
    };
    match source {
        Some(src) => td_row(
            &mut target.values[row * n..(row + 1) * n],
            row,
            Some(&src.values[b * n..(b + 1) * n]),
            alpha,
            gamma,
        ),
        None if b == row => {
            let boot = target.values[b * n..(b + 1) * n].to_vec();
            td_row(&mut target.values[row * n..(row + 1) * n], row, Some(&boot), alpha, gamma);
        }
        None if b < row => {
            let (lo, hi) = target.values.split_at_mut(row * n);
            td_row(&mut hi[..n], row, Some(&lo[b * n..(b + 1) * n]), alpha, gamma);
        }
        None => {
            let (lo, hi) = target.values.split_at_mut(b * n);
            td_row(&mut lo[row * n..(row + 1) * n], row, Some(&hi[..n]), alpha, gamma);
        }
    }
}

/// One TD step on a slice; `indicator_at` is the slice position of the
/// updated pair.
#[inline]
fn td_row(slice: &mut [f64], indicator_at: usize, boot: Option<&[f64]>, alpha: f64, gamma: f64) {
    let old = slice[indicator_at];
    match boot {
        Some(boot) => {
            for (h, b) in slice.iter_mut().zip(boot) {
                *h += alpha * (gamma * b - *h);
            }
            slice[indicator_at] = old + alpha * (1.0 + gamma * boot[indicator_at] - old);
        }
        None => {
            for h in slice.iter_mut() {
                *h += alpha * (0.0 - *h);
            }
            slice[indicator_at] = old + alpha * (1.0 - old);
        }
    }
}

/// Belief counterpart of a Q-learning update, bootstrapping from the argmax
/// recorded in `ev`.
pub fn h_update_q(h: &mut BeliefTensor, ev: &UpdateEvent) -> Result<()> {
    if ev.algo != Algo::QLearning {
        return Err(Error::WrongEvent("h_update_q needs a Q-learning event"));
    }
    h.check_transition(&ev.transition)?;
    let m = if ev.transition.terminal {
        None
    } else {
        ev.greedy_next_action
    };
    apply_td(h, None, &ev.transition, m, ev.alpha, ev.gamma);
    Ok(())
}

/// Every-visit Monte Carlo belief update: each visited pair moves toward the
/// discounted sum of the indicators that follow it, in time order.
pub fn h_update_mc(h: &mut BeliefTensor, traj: &Trajectory, alpha: f64, gamma: f64) -> Result<()> {
    if traj.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    for t in &traj.transitions {
        h.check_transition(t)?;
    }
    let n = h.row_len();
    let mut target = vec![0.0; n];
    for (i, t) in traj.transitions.iter().enumerate() {
        let mut discount = 1.0;
        for later in &traj.transitions[i..] {
            target[h.row_index(later.state, later.action)] += discount;
            discount *= gamma;
        }
        let row = h.row_index(t.state, t.action);
        for (v, g) in h.values[row * n..(row + 1) * n].iter_mut().zip(&target) {
            *v += alpha * (g - *v);
        }
        for later in &traj.transitions[i..] {
            target[h.row_index(later.state, later.action)] = 0.0;
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct TwinBeliefTensors {
    pub h_a: BeliefTensor,
    pub h_b: BeliefTensor,
}

impl TwinBeliefTensors {
    pub fn new(h_a: BeliefTensor, h_b: BeliefTensor) -> Result<Self> {
        if h_a.dims() != h_b.dims() {
            return Err(Error::shape(
                format!("{:?}", h_a.dims()),
                format!("{:?}", h_b.dims()),
            ));
        }
        Ok(TwinBeliefTensors { h_a, h_b })
    }

    pub fn map(&self, which: Which) -> &BeliefTensor {
        match which {
            Which::A => &self.h_a,
            Which::B => &self.h_b,
        }
    }
}

/// Updates the belief map paired with the Q-table the event updated,
/// bootstrapping from the other map.
pub fn h_update_double(h: &mut TwinBeliefTensors, ev: &UpdateEvent) -> Result<()> {
    let Algo::DoubleQ { which } = ev.algo else {
        return Err(Error::WrongEvent("h_update_double needs a double-Q event"));
    };
    let (target, source) = match which {
        Which::A => (&mut h.h_a, &h.h_b),
        Which::B => (&mut h.h_b, &h.h_a),
    };
    target.check_transition(&ev.transition)?;
    let m = if ev.transition.terminal {
        None
    } else {
        ev.greedy_next_action
    };
    apply_td(target, Some(source), &ev.transition, m, ev.alpha, ev.gamma);
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RewardSource {
    EnvGroundTruth,
    EmpiricalProxy,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RewardMap {
    num_states: usize,
    num_actions: usize,
    values: Vec<f64>,
    observed: Vec<bool>,
    source: RewardSource,
}

impl RewardMap {
    /// The environment's declared `R(s, a)` for every pair.
    pub fn from_env<E: Environment + ?Sized>(env: &E) -> Self {
        let spec = env.spec();
        let mut values = Vec::with_capacity(spec.num_pairs());
        for s in 0..spec.num_states {
            for a in 0..spec.num_actions {
                values.push(env.reward(s, a));
            }
        }
        RewardMap {
            num_states: spec.num_states,
            num_actions: spec.num_actions,
            observed: vec![true; values.len()],
            values,
            source: RewardSource::EnvGroundTruth,
        }
    }

    pub fn empty_proxy(num_states: usize, num_actions: usize) -> Self {
        RewardMap {
            num_states,
            num_actions,
            values: vec![0.0; num_states * num_actions],
            observed: vec![false; num_states * num_actions],
            source: RewardSource::EmpiricalProxy,
        }
    }

    pub fn from_parts(
        num_states: usize,
        num_actions: usize,
        values: Vec<f64>,
        observed: Vec<bool>,
        source: RewardSource,
    ) -> Result<Self> {
        let n = num_states * num_actions;
        if values.len() != n || observed.len() != n {
            return Err(Error::shape(n, format!("{}/{}", values.len(), observed.len())));
        }
        Ok(RewardMap {
            num_states,
            num_actions,
            values,
            observed,
            source,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn source(&self) -> RewardSource {
        self.source
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn observed(&self) -> &[bool] {
        &self.observed
    }

    pub fn get(&self, state: StateId, action: ActionId) -> f64 {
        self.values[state * self.num_actions + action]
    }

    pub fn is_observed(&self, state: StateId, action: ActionId) -> bool {
        self.observed[state * self.num_actions + action]
    }

    pub fn unobserved_count(&self) -> usize {
        self.observed.iter().filter(|&&o| !o).count()
    }
}

/// Stores the first reward seen for `(s, a)` and rejects any later reward
/// that differs from it.
pub fn record_proxy_reward(r: &mut RewardMap, t: &Transition) -> Result<()> {
    if r.source != RewardSource::EmpiricalProxy {
        return Err(Error::InvalidArgument(
            "proxy rewards can only be recorded into an empirical map".into(),
        ));
    }
    if t.state >= r.num_states || t.action >= r.num_actions {
        return Err(Error::shape(
            format!("pair within {}x{}", r.num_states, r.num_actions),
            format!("({}, {})", t.state, t.action),
        ));
    }
    let i = t.state * r.num_actions + t.action;
    if r.observed[i] {
        if r.values[i] != t.reward {
            return Err(Error::RewardConflict {
                state: t.state,
                action: t.action,
                stored: r.values[i],
                observed: t.reward,
            });
        }
    } else {
        r.values[i] = t.reward;
        r.observed[i] = true;
    }
    Ok(())
}

fn check_reward_shape(h: &BeliefTensor, r: &RewardMap) -> Result<()> {
    if (h.num_states, h.num_actions) != (r.num_states, r.num_actions) {
        return Err(Error::shape(
            format!("reward map {}x{}", h.num_states, h.num_actions),
            format!("{}x{}", r.num_states, r.num_actions),
        ));
    }
    Ok(())
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `Q_hat(s, a) = vec(H(s, a)) . vec(R)`.
pub fn recover_q(h: &BeliefTensor, r: &RewardMap) -> Result<QTable> {
    recover_q_with(h, r, Execution::default())
}

pub fn recover_q_with(h: &BeliefTensor, r: &RewardMap, exec: Execution) -> Result<QTable> {
    check_reward_shape(h, r)?;
    let n = h.row_len();
    let values = par::map_range(n, exec, |row| {
        dot(&h.values[row * n..(row + 1) * n], &r.values)
    });
    QTable::from_values(h.num_states, h.num_actions, values)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyReport {
    pub max_abs_err: f64,
    /// Pair attaining `max_abs_err`.
    pub state: StateId,
    pub action: ActionId,
    /// Largest error over actions, per state.
    pub per_state_err: Vec<f64>,
}

impl ConsistencyReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_abs_err <= tolerance
    }
}

/// Measures how far `q` is from the values recovered through `h` and `r`.
pub fn verify_consistency(h: &BeliefTensor, q: &QTable, r: &RewardMap) -> Result<ConsistencyReport> {
    verify_consistency_with(h, q, r, Execution::default())
}

pub fn verify_consistency_with(
    h: &BeliefTensor,
    q: &QTable,
    r: &RewardMap,
    exec: Execution,
) -> Result<ConsistencyReport> {
    if q.shape() != (h.num_states, h.num_actions) {
        return Err(Error::shape(
            format!("q-table {}x{}", h.num_states, h.num_actions),
            format!("{:?}", q.shape()),
        ));
    }
    let q_hat = recover_q_with(h, r, exec)?;
    let mut report = ConsistencyReport {
        max_abs_err: 0.0,
        state: 0,
        action: 0,
        per_state_err: vec![0.0; h.num_states],
    };
    for s in 0..h.num_states {
        for a in 0..h.num_actions {
            let err = (q_hat.get(s, a) - q.get(s, a)).abs();
            let err = if err.is_nan() { f64::INFINITY } else { err };
            report.per_state_err[s] = report.per_state_err[s].max(err);
            if err > report.max_abs_err {
                report.max_abs_err = err;
                report.state = s;
                report.action = a;
            }
        }
    }
    Ok(report)
}

/// `v[s'] = sum_{a'} H[s, a, s', a']`.
pub fn marginal_state_visitation(h: &BeliefTensor, state: StateId, action: ActionId) -> Result<Vec<f64>> {
    h.check_pair(state, action)?;
    Ok(h.slice(state, action)
        .chunks(h.num_actions)
        .map(|c| c.iter().sum())
        .collect())
}

/// Evaluates a fixed policy on a deterministic model by repeated in-place
/// belief updates with unit step size.
///
/// `model[s * A + a]` is the transition taken from `(s, a)` (`None` for pairs
/// that are never acted on) and `policy[s]` the action followed in `s`.
/// Sweeps run until the largest entry change drops below `tolerance`;
/// returns the number of sweeps, or an error if `max_sweeps` is exhausted.
pub fn evaluate_policy_fixed_point(
    h: &mut BeliefTensor,
    model: &[Option<Transition>],
    policy: &[Option<ActionId>],
    gamma: f64,
    tolerance: f64,
    max_sweeps: usize,
) -> Result<usize> {
    if model.len() != h.row_len() || policy.len() != h.num_states {
        return Err(Error::shape(h.row_len(), model.len()));
    }
    let n = h.row_len();
    let mut before = vec![0.0; n];
    for sweep in 1..=max_sweeps {
        let mut change: f64 = 0.0;
        for t in model.iter().flatten() {
            let ev = UpdateEvent {
                algo: Algo::QLearning,
                transition: *t,
                greedy_next_action: policy[t.next_state],
                target: 0.0,
                alpha: 1.0,
                gamma,
                step_index: None,
            };
            before.copy_from_slice(h.slice(t.state, t.action));
            h_update_q(h, &ev)?;
            for (b, v) in before.iter().zip(h.slice(t.state, t.action)) {
                change = change.max((b - v).abs());
            }
        }
        if change < tolerance {
            return Ok(sweep);
        }
    }
    Err(Error::InvalidArgument(format!(
        "fixed point not reached within {max_sweeps} sweeps"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::Trajectory;
    use crate::tabular::{q_update, TwinQTables};
    use proptest::prelude::*;

    fn tr(s: StateId, a: ActionId, r: f64, n: StateId, terminal: bool) -> Transition {
        Transition {
            state: s,
            action: a,
            reward: r,
            next_state: n,
            terminal,
        }
    }

    fn q_event(t: Transition, m: Option<ActionId>, alpha: f64, gamma: f64) -> UpdateEvent {
        UpdateEvent {
            algo: Algo::QLearning,
            transition: t,
            greedy_next_action: m,
            target: 0.0,
            alpha,
            gamma,
            step_index: None,
        }
    }

    #[test]
    fn zero_alpha_leaves_h_unchanged() {
        let mut h = BeliefTensor::new(3, 2, 0.9, InitMode::Random { seed: 1, scale: 1.0 });
        let before = h.clone();
        h_update_q(&mut h, &q_event(tr(0, 1, 0.0, 2, false), Some(1), 0.0, 0.9)).unwrap();
        assert_eq!(h, before);
    }

    #[test]
    fn terminal_unit_step_gives_indicator() {
        let mut h = BeliefTensor::zeros(3, 2, 1.0);
        h_update_q(&mut h, &q_event(tr(1, 1, 0.0, 2, true), Some(0), 1.0, 1.0)).unwrap();
        let slice = h.slice(1, 1);
        for (k, &v) in slice.iter().enumerate() {
            assert_eq!(v, if k == 3 { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn self_loop_reads_pre_update_slice() {
        let mut h = BeliefTensor::zeros(2, 1, 0.5);
        h.slice_mut(0, 0)[1] = 1.0;
        h_update_q(&mut h, &q_event(tr(0, 0, 0.0, 0, false), Some(0), 1.0, 0.5)).unwrap();
        assert_eq!(h.slice(0, 0), &[1.0, 0.5]);
    }

    #[test]
    fn wrong_event_and_shape_errors() {
        let mut h = BeliefTensor::zeros(2, 2, 1.0);
        let mut ev = q_event(tr(0, 0, 0.0, 1, false), Some(0), 0.5, 1.0);
        ev.algo = Algo::MonteCarlo;
        assert!(matches!(h_update_q(&mut h, &ev), Err(Error::WrongEvent(_))));
        let ev = q_event(tr(5, 0, 0.0, 1, false), Some(0), 0.5, 1.0);
        assert!(matches!(h_update_q(&mut h, &ev), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn mc_chain_trajectory() {
        let mut h = BeliefTensor::zeros(4, 2, 1.0);
        let traj = Trajectory {
            transitions: vec![tr(0, 0, 0.0, 1, false), tr(1, 0, 2.0, 3, true)],
            ..Default::default()
        };
        h_update_mc(&mut h, &traj, 1.0, 1.0).unwrap();
        let s00 = h.slice(0, 0);
        assert_eq!(s00[0], 1.0);
        assert_eq!(s00[2], 1.0);
        assert_eq!(s00.iter().sum::<f64>(), 2.0);
        assert_eq!(h.slice(1, 0)[2], 1.0);
        assert!(h_update_mc(&mut h, &Trajectory::default(), 1.0, 1.0).is_err());
    }

    #[test]
    fn mc_gamma_zero_targets_indicator() {
        let mut h = BeliefTensor::zeros(4, 2, 0.0);
        let traj = Trajectory {
            transitions: vec![tr(0, 0, 0.0, 1, false), tr(1, 1, 2.0, 3, true)],
            ..Default::default()
        };
        h_update_mc(&mut h, &traj, 1.0, 0.0).unwrap();
        assert_eq!(h.slice(0, 0).iter().sum::<f64>(), 1.0);
        assert_eq!(h.slice(0, 0)[0], 1.0);
    }

    #[test]
    fn recover_and_verify_basics() {
        let mut h = BeliefTensor::zeros(2, 2, 1.0);
        let mut r = RewardMap::empty_proxy(2, 2);
        record_proxy_reward(&mut r, &tr(1, 0, 5.0, 0, false)).unwrap();
        assert_eq!(recover_q(&h, &r).unwrap().values(), &[0.0; 4]);
        h.slice_mut(1, 0)[2] = 1.0;
        assert_eq!(recover_q(&h, &r).unwrap().get(1, 0), 5.0);

        let zero = BeliefTensor::zeros(2, 2, 1.0);
        let rep = verify_consistency(&zero, &QTable::zeros(2, 2), &r).unwrap();
        assert_eq!(rep.max_abs_err, 0.0);
        let rep = verify_consistency(&h, &QTable::zeros(2, 2), &r).unwrap();
        assert_eq!((rep.max_abs_err, rep.state, rep.action), (5.0, 1, 0));
        assert_eq!(rep.per_state_err, vec![0.0, 5.0]);
    }

    #[test]
    fn proxy_reward_conflicts() {
        let mut r = RewardMap::empty_proxy(2, 2);
        record_proxy_reward(&mut r, &tr(0, 1, 1.0, 1, false)).unwrap();
        record_proxy_reward(&mut r, &tr(0, 1, 1.0, 1, false)).unwrap();
        assert_eq!(r.get(0, 1), 1.0);
        assert_eq!(r.unobserved_count(), 3);
        let err = record_proxy_reward(&mut r, &tr(0, 1, 2.0, 1, false)).unwrap_err();
        assert!(matches!(
            err,
            Error::RewardConflict {
                state: 0,
                action: 1,
                ..
            }
        ));
        let mut truth = RewardMap::from_env(&crate::envs::make_taxi());
        assert!(record_proxy_reward(&mut truth, &tr(0, 1, 1.0, 1, false)).is_err());
    }

    #[test]
    fn marginal_sums_actions() {
        let mut h = BeliefTensor::zeros(3, 2, 1.0);
        assert_eq!(marginal_state_visitation(&h, 0, 0).unwrap(), vec![0.0; 3]);
        h.slice_mut(0, 0)[0] = 1.0;
        h.slice_mut(0, 0)[4] = 0.5;
        h.slice_mut(0, 0)[5] = 0.25;
        assert_eq!(marginal_state_visitation(&h, 0, 0).unwrap(), vec![1.0, 0.0, 0.75]);
    }

    #[test]
    fn random_h_breaks_consistency() {
        let h = BeliefTensor::new(3, 2, 0.9, InitMode::Random { seed: 4, scale: 1.0 });
        let mut r = RewardMap::empty_proxy(3, 2);
        record_proxy_reward(&mut r, &tr(2, 1, 1.0, 0, true)).unwrap();
        let rep = verify_consistency(&h, &QTable::zeros(3, 2), &r).unwrap();
        assert!(rep.max_abs_err > 0.0);
    }

    #[test]
    fn double_collapses_to_single_on_equal_maps() {
        let base = BeliefTensor::new(3, 2, 0.9, InitMode::Random { seed: 2, scale: 0.5 });
        let t = tr(0, 1, 0.0, 2, false);
        let mut single = base.clone();
        h_update_q(&mut single, &q_event(t, Some(1), 0.3, 0.9)).unwrap();
        let mut twins = TwinBeliefTensors::new(base.clone(), base.clone()).unwrap();
        let ev = UpdateEvent {
            algo: Algo::DoubleQ { which: Which::B },
            ..q_event(t, Some(1), 0.3, 0.9)
        };
        h_update_double(&mut twins, &ev).unwrap();
        assert_eq!(twins.h_b, single);
        assert_eq!(twins.h_a, base);
    }

    #[test]
    fn executions_agree_on_recovery() {
        let h = BeliefTensor::new(20, 3, 0.9, InitMode::Random { seed: 9, scale: 1.0 });
        let mut r = RewardMap::empty_proxy(20, 3);
        for s in 0..20 {
            record_proxy_reward(&mut r, &tr(s, s % 3, s as f64 * 0.1, 0, false)).unwrap();
        }
        let a = recover_q_with(&h, &r, Execution::Sequential).unwrap();
        let b = recover_q_with(&h, &r, Execution::Parallel).unwrap();
        assert_eq!(a, b);
    }

    proptest! {
        #[test]
        fn recovery_is_linear_in_h(seed1 in 0u64..1000, seed2 in 0u64..1000, rs in proptest::collection::vec(-5.0f64..5.0, 6)) {
            let h1 = BeliefTensor::new(3, 2, 0.9, InitMode::Random { seed: seed1, scale: 2.0 });
            let h2 = BeliefTensor::new(3, 2, 0.9, InitMode::Random { seed: seed2, scale: 2.0 });
            let sum: Vec<f64> = h1.values().iter().zip(h2.values()).map(|(a, b)| a + b).collect();
            let h12 = BeliefTensor::from_values(3, 2, 0.9, sum).unwrap();
            let r = RewardMap::from_parts(3, 2, rs, vec![true; 6], RewardSource::EmpiricalProxy).unwrap();
            let q1 = recover_q(&h1, &r).unwrap();
            let q2 = recover_q(&h2, &r).unwrap();
            let q12 = recover_q(&h12, &r).unwrap();
            for i in 0..6 {
                prop_assert!((q12.values()[i] - q1.values()[i] - q2.values()[i]).abs() < 1e-12);
            }
        }

        /// Random event streams from zero initialisation stay consistent.
        #[test]
        fn lockstep_q_learning_stays_consistent(
            steps in proptest::collection::vec((0usize..4, 0usize..2, 0usize..4, proptest::bool::ANY), 1..200),
            alpha in 0.01f64..1.0,
            gamma in 0.0f64..1.0,
        ) {
            let rewards = [0.5, -1.0, 2.0, 0.0, 1.5, -0.25, 3.0, 1.0];
            let r = RewardMap::from_parts(4, 2, rewards.to_vec(), vec![true; 8], RewardSource::EnvGroundTruth).unwrap();
            let mut q = QTable::zeros(4, 2);
            let mut h = BeliefTensor::zeros(4, 2, gamma);
            for (s, a, n, terminal) in steps {
                let t = tr(s, a, rewards[s * 2 + a], n, terminal);
                let ev = q_update(&mut q, &t, alpha, gamma).unwrap();
                h_update_q(&mut h, &ev).unwrap();
            }
            let rep = verify_consistency(&h, &q, &r).unwrap();
            prop_assert!(rep.max_abs_err <= 1e-9, "err {}", rep.max_abs_err);
            prop_assert!(h.max_total_mass() <= 1.0 / (1.0 - gamma) + 1e-9);
        }

        #[test]
        fn lockstep_double_q_stays_consistent(
            steps in proptest::collection::vec((0usize..4, 0usize..2, 0usize..4, proptest::bool::ANY, proptest::bool::ANY), 1..200),
            alpha in 0.01f64..1.0,
            gamma in 0.0f64..1.0,
        ) {
            let rewards = [0.5, -1.0, 2.0, 0.0, 1.5, -0.25, 3.0, 1.0];
            let r = RewardMap::from_parts(4, 2, rewards.to_vec(), vec![true; 8], RewardSource::EnvGroundTruth).unwrap();
            let mut q = TwinQTables::new(QTable::zeros(4, 2), QTable::zeros(4, 2)).unwrap();
            let mut h = TwinBeliefTensors::new(BeliefTensor::zeros(4, 2, gamma), BeliefTensor::zeros(4, 2, gamma)).unwrap();
            for (s, a, n, terminal, pick_a) in steps {
                let t = tr(s, a, rewards[s * 2 + a], n, terminal);
                let which = if pick_a { Which::A } else { Which::B };
                let ev = crate::tabular::double_q_update_with(&mut q, &t, alpha, gamma, which).unwrap();
                h_update_double(&mut h, &ev).unwrap();
            }
            prop_assert!(verify_consistency(&h.h_a, &q.q_a, &r).unwrap().max_abs_err <= 1e-9);
            prop_assert!(verify_consistency(&h.h_b, &q.q_b, &r).unwrap().max_abs_err <= 1e-9);
        }
    }
}
