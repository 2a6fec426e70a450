//! Tabular value learners: Q-learning, every-visit Monte Carlo control and
//! double Q-learning.
//!
//! Each update returns an [`UpdateEvent`] carrying the argmax used for its
//! bootstrap target. The belief learners consume the same events so that the
//! value table and the belief tensor always bootstrap from the same successor.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{ActionId, ActionSet, Environment, StateId, Trajectory, Transition};
use crate::rng::{below, seeded, uniform, uniform_range, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitMode {
    Zero,
    /// Entries drawn uniformly from `[-scale, scale)`.
    Random { seed: u64, scale: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct QTable {
    num_states: usize,
    num_actions: usize,
    values: Vec<f64>,
    legal: Vec<ActionSet>,
    init_mode: InitMode,
}

impl QTable {
    pub fn zeros(num_states: usize, num_actions: usize) -> Self {
        QTable {
            num_states,
            num_actions,
            values: vec![0.0; num_states * num_actions],
            legal: vec![ActionSet::all(num_actions); num_states],
            init_mode: InitMode::Zero,
        }
    }

    /// A table shaped for `env` that knows each state's legal actions.
    /// Random initialisation only touches legal pairs.
    pub fn for_env<E: Environment + ?Sized>(env: &E, init: InitMode) -> Self {
        let spec = env.spec();
        let mut q = QTable::zeros(spec.num_states, spec.num_actions);
        q.legal = (0..spec.num_states).map(|s| env.legal_actions(s)).collect();
        q.init_mode = init;
        if let InitMode::Random { seed, scale } = init {
            let mut rng = seeded(seed);
            for s in 0..q.num_states {
                for a in q.legal[s].iter() {
                    q.values[s * q.num_actions + a] = uniform_range(&mut rng, -scale, scale);
                }
            }
        }
        q
    }

    pub fn from_values(num_states: usize, num_actions: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != num_states * num_actions {
            return Err(Error::shape(
                format!("{num_states}x{num_actions}"),
                format!("{} values", values.len()),
            ));
        }
        Ok(QTable {
            values,
            ..QTable::zeros(num_states, num_actions)
        })
    }

    pub fn with_legal(mut self, legal: Vec<ActionSet>) -> Result<Self> {
        if legal.len() != self.num_states {
            return Err(Error::shape(self.num_states, legal.len()));
        }
        self.legal = legal;
        Ok(self)
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.num_states, self.num_actions)
    }

    pub fn init_mode(&self) -> InitMode {
        self.init_mode
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn legal(&self, state: StateId) -> ActionSet {
        self.legal[state]
    }

    pub fn legal_sets(&self) -> &[ActionSet] {
        &self.legal
    }

    #[inline]
    pub fn get(&self, state: StateId, action: ActionId) -> f64 {
        self.values[state * self.num_actions + action]
    }

    #[inline]
    pub fn set(&mut self, state: StateId, action: ActionId, value: f64) {
        self.values[state * self.num_actions + action] = value;
    }

    pub fn row(&self, state: StateId) -> &[f64] {
        &self.values[state * self.num_actions..(state + 1) * self.num_actions]
    }

    /// Greedy action with ties broken by lowest index; `None` when the state
    /// has no legal actions.
    pub fn greedy_action(&self, state: StateId) -> Option<ActionId> {
        argmax_lowest(self.row(state), self.legal[state])
    }

    pub fn check_pair(&self, state: StateId, action: ActionId) -> Result<()> {
        if state >= self.num_states {
            return Err(Error::InvalidState {
                state,
                num_states: self.num_states,
            });
        }
        if action >= self.num_actions {
            return Err(Error::IllegalAction { state, action });
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

pub fn argmax_lowest(row: &[f64], legal: ActionSet) -> Option<ActionId> {
    let mut best: Option<(ActionId, f64)> = None;
    for a in legal.iter().filter(|&a| a < row.len()) {
        match best {
            Some((_, v)) if row[a] <= v => {}
            _ => best = Some((a, row[a])),
        }
    }
    best.map(|(a, _)| a)
}

/// With probability `epsilon` a uniformly random legal action, otherwise a
/// greedy action with ties broken uniformly at random.
pub fn epsilon_greedy_masked(
    q_row: &[f64],
    legal: ActionSet,
    epsilon: f64,
    rng: &mut Rng,
) -> ActionId {
    debug_assert!(!legal.is_empty());
    if uniform(rng) < epsilon {
        return legal.nth(below(rng, legal.len())).expect("non-empty");
    }
    let best = legal
        .iter()
        .map(|a| q_row[a])
        .fold(f64::NEG_INFINITY, f64::max);
    let mut ties = 0u64;
    for a in legal.iter() {
        if q_row[a] == best {
            ties |= 1 << a;
        }
    }
    let ties = ActionSet::from_bits(ties);
    match ties.len() {
        1 => ties.nth(0).unwrap(),
        n => ties.nth(below(rng, n)).unwrap(),
    }
}

pub fn epsilon_greedy(q_row: &[f64], epsilon: f64, rng: &mut Rng) -> ActionId {
    epsilon_greedy_masked(q_row, ActionSet::all(q_row.len()), epsilon, rng)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EpsilonKind {
    /// `max(end, start * decay_rate^episode)`.
    ExponentialDecay { start: f64, end: f64, decay_rate: f64 },
    /// Straight line from `start` to `end` over `over_episodes`, then flat.
    LinearDecay {
        start: f64,
        end: f64,
        over_episodes: usize,
    },
    Constant { value: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpsilonSchedule {
    pub kind: EpsilonKind,
    episode: usize,
    current: f64,
}

impl EpsilonSchedule {
    pub fn new(kind: EpsilonKind) -> Self {
        EpsilonSchedule {
            kind,
            episode: 0,
            current: Self::value_at(kind, 0),
        }
    }

    pub fn value_at(kind: EpsilonKind, episode: usize) -> f64 {
        let v = match kind {
            EpsilonKind::ExponentialDecay {
                start,
                end,
                decay_rate,
            } => (start * decay_rate.powi(episode.min(i32::MAX as usize) as i32)).max(end),
            EpsilonKind::LinearDecay {
                start,
                end,
                over_episodes,
            } => {
                if episode >= over_episodes {
                    end
                } else {
                    start + (end - start) * episode as f64 / over_episodes as f64
                }
            }
            EpsilonKind::Constant { value } => value,
        };
        v.clamp(0.0, 1.0)
    }

    pub fn current(&self) -> f64 {
        self.current
    }

    pub fn episode(&self) -> usize {
        self.episode
    }

    /// Moves to the next episode; the value never increases.
    pub fn advance(&mut self) {
        self.episode += 1;
        self.current = Self::value_at(self.kind, self.episode).min(self.current);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Which {
    A,
    B,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Algo {
    QLearning,
    MonteCarlo,
    DoubleQ { which: Which },
}

/// One value update, shared verbatim with the belief learner.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UpdateEvent {
    pub algo: Algo,
    pub transition: Transition,
    /// Argmax at `next_state` used by the bootstrap; `None` when the
    /// transition is terminal or the update does not bootstrap.
    pub greedy_next_action: Option<ActionId>,
    /// The sampled target the value moved toward.
    pub target: f64,
    pub alpha: f64,
    pub gamma: f64,
    /// Position in the trajectory for Monte Carlo events.
    pub step_index: Option<usize>,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("alpha {alpha} outside [0, 1]")))
    }
}

fn check_target(t: &Transition, target: f64) -> Result<()> {
    if target.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFiniteTarget {
            state: t.state,
            action: t.action,
            value: target,
        })
    }
}

#[inline]
fn blend(old: f64, target: f64, alpha: f64) -> f64 {
    old + alpha * (target - old)
}

/// `Q(s,a) += alpha * (r + gamma * Q(s', m) - Q(s,a))` with `m` the lowest
/// index argmax of the pre-update table at `s'`.
pub fn q_update(q: &mut QTable, t: &Transition, alpha: f64, gamma: f64) -> Result<UpdateEvent> {
    check_alpha(alpha)?;
    q.check_pair(t.state, t.action)?;
    q.check_pair(t.next_state, 0)?;
    let m = if t.terminal {
        None
    } else {
        q.greedy_action(t.next_state)
    };
    let bootstrap = m.map_or(0.0, |m| q.get(t.next_state, m));
    let target = t.reward + gamma * bootstrap;
    check_target(t, target)?;
    let old = q.get(t.state, t.action);
    q.set(t.state, t.action, blend(old, target, alpha));
    Ok(UpdateEvent {
        algo: Algo::QLearning,
        transition: *t,
        greedy_next_action: m,
        target,
        alpha,
        gamma,
        step_index: None,
    })
}

/// Discounted returns `G_t = sum_{t'>=t} gamma^(t'-t) r_t'` for every step.
pub fn discounted_returns(traj: &Trajectory, gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; traj.len()];
    let mut g = 0.0;
    for (i, t) in traj.transitions.iter().enumerate().rev() {
        g = t.reward + gamma * g;
        out[i] = g;
    }
    out
}

/// Every-visit Monte Carlo: moves each visited pair toward its return, in
/// time order.
pub fn mc_update(
    q: &mut QTable,
    traj: &Trajectory,
    alpha: f64,
    gamma: f64,
) -> Result<Vec<UpdateEvent>> {
    check_alpha(alpha)?;
    if traj.is_empty() {
        return Err(Error::EmptyTrajectory);
    }
    for t in &traj.transitions {
        q.check_pair(t.state, t.action)?;
    }
    let returns = discounted_returns(traj, gamma);
    let mut events = Vec::with_capacity(traj.len());
    for (i, (t, &g)) in traj.transitions.iter().zip(&returns).enumerate() {
        check_target(t, g)?;
        let old = q.get(t.state, t.action);
        q.set(t.state, t.action, blend(old, g, alpha));
        events.push(UpdateEvent {
            algo: Algo::MonteCarlo,
            transition: *t,
            greedy_next_action: None,
            target: g,
            alpha,
            gamma,
            step_index: Some(i),
        });
    }
    Ok(events)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TwinQTables {
    pub q_a: QTable,
    pub q_b: QTable,
}

impl TwinQTables {
    pub fn new(q_a: QTable, q_b: QTable) -> Result<Self> {
        if q_a.shape() != q_b.shape() {
            return Err(Error::shape(
                format!("{:?}", q_a.shape()),
                format!("{:?}", q_b.shape()),
            ));
        }
        Ok(TwinQTables { q_a, q_b })
    }

    pub fn table(&self, which: Which) -> &QTable {
        match which {
            Which::A => &self.q_a,
            Which::B => &self.q_b,
        }
    }

    /// `Q^A + Q^B` row used by the behaviour policy.
    pub fn behaviour_row(&self, state: StateId) -> Vec<f64> {
        self.q_a
            .row(state)
            .iter()
            .zip(self.q_b.row(state))
            .map(|(a, b)| a + b)
            .collect()
    }
}

/// Updates one of the two tables, chosen by a fair coin from `rng`.
pub fn double_q_update(
    tables: &mut TwinQTables,
    t: &Transition,
    alpha: f64,
    gamma: f64,
    rng: &mut Rng,
) -> Result<UpdateEvent> {
    let which = if uniform(rng) < 0.5 { Which::A } else { Which::B };
    double_q_update_with(tables, t, alpha, gamma, which)
}

/// Updates the table `which`: its own argmax at `s'` selects the action, the
/// other table evaluates it.
pub fn double_q_update_with(
    tables: &mut TwinQTables,
    t: &Transition,
    alpha: f64,
    gamma: f64,
    which: Which,
) -> Result<UpdateEvent> {
    check_alpha(alpha)?;
    let (selecting, evaluating) = match which {
        Which::A => (&mut tables.q_a, &tables.q_b),
        Which::B => (&mut tables.q_b, &tables.q_a),
    };
    selecting.check_pair(t.state, t.action)?;
    selecting.check_pair(t.next_state, 0)?;
    let m = if t.terminal {
        None
    } else {
        selecting.greedy_action(t.next_state)
    };
    let bootstrap = m.map_or(0.0, |m| evaluating.get(t.next_state, m));
    let target = t.reward + gamma * bootstrap;
    check_target(t, target)?;
    let old = selecting.get(t.state, t.action);
    selecting.set(t.state, t.action, blend(old, target, alpha));
    Ok(UpdateEvent {
        algo: Algo::DoubleQ { which },
        transition: *t,
        greedy_next_action: m,
        target,
        alpha,
        gamma,
        step_index: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tr(s: StateId, a: ActionId, r: f64, n: StateId, terminal: bool) -> Transition {
        Transition {
            state: s,
            action: a,
            reward: r,
            next_state: n,
            terminal,
        }
    }

    #[test]
    fn single_q_step_by_hand() {
        let mut q = QTable::zeros(3, 2);
        let ev = q_update(&mut q, &tr(0, 1, 1.0, 2, false), 0.5, 0.9).unwrap();
        assert_eq!(q.get(0, 1), 0.5);
        assert_eq!(ev.greedy_next_action, Some(0));
        assert_eq!(ev.target, 1.0);
    }

    #[test]
    fn zero_alpha_is_a_no_op() {
        let mut q = QTable::for_env(
            &crate::envs::make_taxi(),
            InitMode::Random { seed: 3, scale: 1.0 },
        );
        let before = q.clone();
        q_update(&mut q, &tr(0, 1, 1.0, 2, false), 0.0, 0.9).unwrap();
        assert_eq!(q, before);
        assert!(q_update(&mut q, &tr(0, 1, 1.0, 2, false), 1.5, 0.9).is_err());
    }

    #[test]
    fn terminal_drops_bootstrap() {
        let mut q = QTable::zeros(2, 2);
        q.set(1, 0, 100.0);
        let ev = q_update(&mut q, &tr(0, 0, 3.0, 1, true), 1.0, 1.0).unwrap();
        assert_eq!(q.get(0, 0), 3.0);
        assert_eq!(ev.greedy_next_action, None);
    }

    #[test]
    fn non_finite_target_is_an_error() {
        let mut q = QTable::zeros(2, 2);
        q.set(1, 0, f64::MAX);
        let err = q_update(&mut q, &tr(0, 0, f64::MAX, 1, false), 0.5, 1.0).unwrap_err();
        assert!(matches!(err, Error::NonFiniteTarget { .. }));
    }

    #[test]
    fn argmax_breaks_ties_low_and_respects_mask() {
        assert_eq!(argmax_lowest(&[1.0, 3.0, 3.0], ActionSet::all(3)), Some(1));
        assert_eq!(argmax_lowest(&[1.0, 3.0, 3.0], ActionSet::from_bits(0b101)), Some(2));
        assert_eq!(argmax_lowest(&[1.0, 3.0], ActionSet::from_bits(0)), None);
        assert_eq!(argmax_lowest(&[-5.0, -7.0], ActionSet::only(1)), Some(1));
    }

    #[test]
    fn mc_single_reward() {
        let mut q = QTable::zeros(2, 2);
        let traj = Trajectory {
            transitions: vec![tr(0, 1, 2.0, 1, true)],
            episode_return: 2.0,
            truncated: false,
        };
        mc_update(&mut q, &traj, 1.0, 0.9).unwrap();
        assert_eq!(q.get(0, 1), 2.0);
        assert!(matches!(
            mc_update(&mut q, &Trajectory::default(), 1.0, 1.0),
            Err(Error::EmptyTrajectory)
        ));
    }

    #[test]
    fn mc_chain_returns() {
        let mut q = QTable::zeros(4, 2);
        let traj = Trajectory {
            transitions: vec![tr(0, 0, 0.0, 1, false), tr(1, 0, 2.0, 3, true)],
            episode_return: 2.0,
            truncated: false,
        };
        let evs = mc_update(&mut q, &traj, 1.0, 1.0).unwrap();
        assert_eq!(q.get(0, 0), 2.0);
        assert_eq!(q.get(1, 0), 2.0);
        assert_eq!(evs.len(), 2);
        assert_eq!(evs[1].step_index, Some(1));
    }

    #[test]
    fn mc_gamma_zero_uses_immediate_reward() {
        let mut q = QTable::zeros(4, 2);
        let traj = Trajectory {
            transitions: vec![tr(0, 0, 0.5, 1, false), tr(1, 0, 2.0, 3, true)],
            ..Default::default()
        };
        mc_update(&mut q, &traj, 1.0, 0.0).unwrap();
        assert_eq!(q.get(0, 0), 0.5);
    }

    #[test]
    fn double_q_collapses_to_q_learning_on_equal_tables() {
        let mut base = QTable::zeros(3, 2);
        base.set(2, 0, 1.5);
        base.set(2, 1, -0.5);
        base.set(0, 1, 0.25);
        let t = tr(0, 1, 1.0, 2, false);
        let mut single = base.clone();
        q_update(&mut single, &t, 0.3, 0.9).unwrap();
        for which in [Which::A, Which::B] {
            let mut twins = TwinQTables::new(base.clone(), base.clone()).unwrap();
            let ev = double_q_update_with(&mut twins, &t, 0.3, 0.9, which).unwrap();
            assert_eq!(twins.table(which).get(0, 1), single.get(0, 1));
            assert_eq!(ev.algo, Algo::DoubleQ { which });
        }
    }

    #[test]
    fn double_q_zero_alpha() {
        let mut twins = TwinQTables::new(QTable::zeros(3, 2), QTable::zeros(3, 2)).unwrap();
        let mut rng = seeded(1);
        double_q_update(&mut twins, &tr(0, 0, 4.0, 1, false), 0.0, 1.0, &mut rng).unwrap();
        assert!(twins.q_a.values().iter().chain(twins.q_b.values()).all(|&v| v == 0.0));
    }

    #[test]
    fn epsilon_schedules() {
        let mut lin = EpsilonSchedule::new(EpsilonKind::LinearDecay {
            start: 1.0,
            end: 0.1,
            over_episodes: 500,
        });
        assert_eq!(lin.current(), 1.0);
        for _ in 0..250 {
            lin.advance();
        }
        assert!((lin.current() - 0.55).abs() < 1e-12);
        for _ in 0..1000 {
            lin.advance();
        }
        assert_eq!(lin.current(), 0.1);

        let mut exp = EpsilonSchedule::new(EpsilonKind::ExponentialDecay {
            start: 1.0,
            end: 0.05,
            decay_rate: 0.9999,
        });
        let mut prev = exp.current();
        for _ in 0..40_000 {
            exp.advance();
            assert!(exp.current() <= prev);
            prev = exp.current();
        }
        assert_eq!(exp.current(), 0.05);
    }
}
