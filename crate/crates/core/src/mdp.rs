//! MDP abstraction shared by every environment and learner.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{Rng, RunRngs};

pub type StateId = usize;
pub type ActionId = usize;

/// Largest action count representable by [`ActionSet`].
pub const MAX_ACTIONS: usize = 64;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub num_states: usize,
    pub num_actions: usize,
    pub env_name: String,
}

impl EnvSpec {
    pub fn new(num_states: usize, num_actions: usize, env_name: impl Into<String>) -> Result<Self> {
        if num_states < 2 {
            return Err(Error::InvalidSpec(format!("num_states = {num_states} < 2")));
        }
        if num_actions == 0 || num_actions > MAX_ACTIONS {
            return Err(Error::InvalidSpec(format!(
                "num_actions = {num_actions} outside [1, {MAX_ACTIONS}]"
            )));
        }
        Ok(EnvSpec {
            num_states,
            num_actions,
            env_name: env_name.into(),
        })
    }

    pub fn num_pairs(&self) -> usize {
        self.num_states * self.num_actions
    }

    pub fn check_state(&self, state: StateId) -> Result<()> {
        if state < self.num_states {
            Ok(())
        } else {
            Err(Error::InvalidState {
                state,
                num_states: self.num_states,
            })
        }
    }
}

/// Bit set of legal actions in a state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ActionSet(u64);

impl ActionSet {
    pub fn all(num_actions: usize) -> Self {
        debug_assert!(num_actions <= MAX_ACTIONS);
        if num_actions == MAX_ACTIONS {
            ActionSet(u64::MAX)
        } else {
            ActionSet((1u64 << num_actions) - 1)
        }
    }

    pub fn only(action: ActionId) -> Self {
        ActionSet(1u64 << action)
    }

    pub fn from_bits(bits: u64) -> Self {
        ActionSet(bits)
    }

    pub fn bits(self) -> u64 {
        self.0
    }

    pub fn contains(self, action: ActionId) -> bool {
        action < MAX_ACTIONS && self.0 & (1u64 << action) != 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    /// The `k`-th legal action in ascending order.
    pub fn nth(self, k: usize) -> Option<ActionId> {
        self.iter().nth(k)
    }

    pub fn iter(self) -> impl Iterator<Item = ActionId> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                None
            } else {
                let a = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(a)
            }
        })
    }
}

/// One experience record `(s, a, r, s')`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: StateId,
    pub action: ActionId,
    pub reward: f64,
    pub next_state: StateId,
    /// Episode ended at `next_state`; learners do not bootstrap through it.
    pub terminal: bool,
}

/// Result of one environment step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Step {
    pub transition: Transition,
    /// The step cap fired on this step. Never set together with `terminal`.
    pub truncated: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub transitions: Vec<Transition>,
    pub episode_return: f64,
    pub truncated: bool,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    /// Checks the chaining and terminal-placement invariants.
    pub fn validate(&self) -> Result<()> {
        for (i, pair) in self.transitions.windows(2).enumerate() {
            if pair[0].next_state != pair[1].state {
                return Err(Error::InvalidArgument(format!(
                    "transition {i} ends in {} but transition {} starts in {}",
                    pair[0].next_state,
                    i + 1,
                    pair[1].state
                )));
            }
            if pair[0].terminal {
                return Err(Error::InvalidArgument(format!(
                    "terminal transition at {i} is not the last"
                )));
            }
        }
        if self.truncated && self.transitions.last().is_some_and(|t| t.terminal) {
            return Err(Error::InvalidArgument(
                "trajectory is both terminal and truncated".into(),
            ));
        }
        Ok(())
    }

    pub fn undiscounted_return(&self) -> f64 {
        self.transitions.iter().map(|t| t.reward).sum()
    }
}

/// Rectangular layout used to render state-marginal heatmaps.
#[derive(Clone, Debug, PartialEq)]
pub struct GridLayout {
    pub rows: usize,
    pub cols: usize,
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    /// Grid cell for each state; `None` for states not drawn.
    pub cells: Vec<Option<(usize, usize)>>,
}

/// Dense state-id codec documentation, embedded in exported artifacts.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodecDoc {
    pub name: String,
    pub description: String,
}

pub trait Environment: Send {
    fn spec(&self) -> &EnvSpec;

    /// Starts an episode and returns its start state.
    fn reset(&mut self, rng: &mut Rng) -> StateId;

    /// Advances the episode. Stepping an absorbing state, or stepping after a
    /// terminal transition without a reset, is an error.
    fn step(&mut self, state: StateId, action: ActionId, rng: &mut Rng) -> Result<Step>;

    fn legal_actions(&self, state: StateId) -> ActionSet {
        let _ = state;
        ActionSet::all(self.spec().num_actions)
    }

    /// The deterministic reward `R(s, a)`; zero for illegal pairs.
    fn reward(&self, state: StateId, action: ActionId) -> f64;

    /// Absorbing bookkeeping states that are never acted in.
    fn is_absorbing(&self, state: StateId) -> bool {
        let _ = state;
        false
    }

    fn max_episode_steps(&self) -> Option<usize> {
        None
    }

    fn steps_taken(&self) -> usize;

    /// Continuous observation of the current state, when the environment
    /// has one richer than its discrete id.
    fn observation(&self) -> Option<Vec<f64>> {
        None
    }

    fn codec(&self) -> CodecDoc;

    fn describe_state(&self, state: StateId) -> String {
        format!("s{state}")
    }

    /// States whose visitation summarises an episode outcome.
    fn outcome_states(&self) -> Vec<StateId> {
        Vec::new()
    }

    fn grid_layout(&self) -> Option<GridLayout> {
        None
    }

    /// Playing states a reader cares about; everything else is bookkeeping.
    fn is_displayable(&self, state: StateId) -> bool {
        !self.is_absorbing(state)
    }
}

pub fn env_reset<E: Environment + ?Sized>(env: &mut E, rng: &mut Rng) -> StateId {
    env.reset(rng)
}

pub fn env_step<E: Environment + ?Sized>(
    env: &mut E,
    state: StateId,
    action: ActionId,
    rng: &mut Rng,
) -> Result<Step> {
    env.step(state, action, rng)
}

/// Runs `policy` from a fresh reset until termination or `max_steps`.
///
/// The environment consumes `rngs.env`; the policy receives `rngs.policy`.
pub fn rollout<E, P>(
    env: &mut E,
    mut policy: P,
    max_steps: usize,
    gamma: f64,
    rngs: &mut RunRngs,
) -> Result<Trajectory>
where
    E: Environment + ?Sized,
    P: FnMut(StateId, &mut Rng) -> ActionId,
{
    if max_steps == 0 {
        return Err(Error::InvalidArgument("max_steps must be at least 1".into()));
    }
    let mut state = env.reset(&mut rngs.env);
    let mut traj = Trajectory::default();
    let mut discount = 1.0;
    loop {
        let action = policy(state, &mut rngs.policy);
        let step = env.step(state, action, &mut rngs.env)?;
        let t = step.transition;
        traj.episode_return += discount * t.reward;
        discount *= gamma;
        traj.transitions.push(t);
        if t.terminal {
            break;
        }
        if step.truncated || traj.len() >= max_steps {
            traj.truncated = true;
            break;
        }
        state = t.next_state;
    }
    Ok(traj)
}
