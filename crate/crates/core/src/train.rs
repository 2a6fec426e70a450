//! Tabular training with lockstep belief updates.

use serde::{Deserialize, Serialize};

use crate::belief::{
    h_update_double, h_update_mc, h_update_q, record_proxy_reward, verify_consistency_with,
    BeliefTensor, RewardMap, TwinBeliefTensors,
};
use crate::config::{Algorithm, RunConfig};
use crate::error::{Error, Result};
use crate::mdp::{Environment, StateId, Trajectory};
use crate::par::{self, Execution};
use crate::rng::RunRngs;
use crate::tabular::{
    double_q_update, epsilon_greedy_masked, mc_update, q_update, EpsilonSchedule, InitMode,
    QTable, TwinQTables,
};

/// Value tables and their belief maps.
#[derive(Clone, Debug, PartialEq)]
pub enum TabularModel {
    Single { q: QTable, h: BeliefTensor },
    Twin { q: TwinQTables, h: TwinBeliefTensors },
}

impl TabularModel {
    fn new(env: &dyn Environment, config: &RunConfig) -> Self {
        let spec = env.spec();
        let (ns, na) = (spec.num_states, spec.num_actions);
        let second = |init: InitMode| match init {
            InitMode::Random { seed, scale } => InitMode::Random {
                seed: seed.wrapping_add(1),
                scale,
            },
            InitMode::Zero => InitMode::Zero,
        };
        match config.algorithm {
            Algorithm::DoubleQ => TabularModel::Twin {
                q: TwinQTables {
                    q_a: QTable::for_env(env, config.q_init),
                    q_b: QTable::for_env(env, second(config.q_init)),
                },
                h: TwinBeliefTensors {
                    h_a: BeliefTensor::new(ns, na, config.gamma, config.h_init),
                    h_b: BeliefTensor::new(ns, na, config.gamma, second(config.h_init)),
                },
            },
            _ => TabularModel::Single {
                q: QTable::for_env(env, config.q_init),
                h: BeliefTensor::new(ns, na, config.gamma, config.h_init),
            },
        }
    }

    /// Each `(name, Q, H)` pair that should satisfy consistency.
    pub fn pairs(&self) -> Vec<(&'static str, &QTable, &BeliefTensor)> {
        match self {
            TabularModel::Single { q, h } => vec![("q", q, h)],
            TabularModel::Twin { q, h } => vec![("a", &q.q_a, &h.h_a), ("b", &q.q_b, &h.h_b)],
        }
    }

    /// The table the agent acts greedily on: `Q` itself, or `Q_A + Q_B`.
    pub fn acting_table(&self) -> QTable {
        match self {
            TabularModel::Single { q, .. } => q.clone(),
            TabularModel::Twin { q, .. } => {
                let (ns, na) = q.q_a.shape();
                let values = (0..ns).flat_map(|s| q.behaviour_row(s)).collect();
                QTable::from_values(ns, na, values)
                    .and_then(|t| t.with_legal(q.q_a.legal_sets().to_vec()))
                    .expect("same shape as q_a")
            }
        }
    }

    fn behaviour_row(&self, state: StateId) -> std::borrow::Cow<'_, [f64]> {
        match self {
            TabularModel::Single { q, .. } => std::borrow::Cow::Borrowed(q.row(state)),
            TabularModel::Twin { q, .. } => std::borrow::Cow::Owned(q.behaviour_row(state)),
        }
    }
}

/// Consistency of one `(Q, H)` pair at a checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointEntry {
    pub table: String,
    pub max_abs_err: f64,
    pub state: StateId,
    pub action: usize,
    pub max_total_mass: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub episode: usize,
    pub entries: Vec<CheckpointEntry>,
}

impl Checkpoint {
    pub fn max_abs_err(&self) -> f64 {
        self.entries.iter().map(|e| e.max_abs_err).fold(0.0, f64::max)
    }

    pub fn max_total_mass(&self) -> f64 {
        self.entries.iter().map(|e| e.max_total_mass).fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TabularRun {
    pub model: TabularModel,
    /// The environment's own reward map.
    pub reward: RewardMap,
    /// Rewards as observed during training.
    pub proxy: RewardMap,
    pub episode_returns: Vec<f64>,
    pub episode_lengths: Vec<usize>,
    pub checkpoints: Vec<Checkpoint>,
}

pub fn checkpoint(
    model: &TabularModel,
    reward: &RewardMap,
    episode: usize,
    exec: Execution,
) -> Result<Checkpoint> {
    let entries = model
        .pairs()
        .into_iter()
        .map(|(name, q, h)| {
            let rep = verify_consistency_with(h, q, reward, exec)?;
            Ok(CheckpointEntry {
                table: name.to_string(),
                max_abs_err: rep.max_abs_err,
                state: rep.state,
                action: rep.action,
                max_total_mass: h.max_total_mass(),
            })
        })
        .collect::<Result<_>>()?;
    Ok(Checkpoint { episode, entries })
}

pub fn train_tabular(config: &RunConfig) -> Result<TabularRun> {
    train_tabular_with(config, Execution::default(), |_| {})
}

/// Runs the configured learner, updating the belief map(s) in lockstep
/// with every value update. Consistency against the environment's reward
/// map is measured every `checkpoint_every` episodes and after the last;
/// `on_checkpoint` sees each one as it is taken. `exec` only affects how
/// checkpoints are computed, never the trajectory.
pub fn train_tabular_with<F>(config: &RunConfig, exec: Execution, mut on_checkpoint: F) -> Result<TabularRun>
where
    F: FnMut(&Checkpoint),
{
    config.validate()?;
    if !config.algorithm.is_tabular() {
        return Err(Error::InvalidArgument(format!(
            "{} is not a tabular algorithm",
            config.algorithm.as_str()
        )));
    }
    let mut env = config.env.build()?;
    let spec = env.spec().clone();
    let mut model = TabularModel::new(env.as_ref(), config);
    let reward = RewardMap::from_env(env.as_ref());
    let mut proxy = RewardMap::empty_proxy(spec.num_states, spec.num_actions);
    let mut rngs = RunRngs::new(config.seed);
    let mut eps = EpsilonSchedule::new(config.epsilon);
    let (alpha, gamma) = (config.alpha, config.gamma);

    let mut run_returns = Vec::with_capacity(config.episodes);
    let mut run_lengths = Vec::with_capacity(config.episodes);
    let mut checkpoints = Vec::new();
    let mut traj = Trajectory::default();

    for episode in 1..=config.episodes {
        traj.transitions.clear();
        traj.truncated = false;
        let mut state = env.reset(&mut rngs.env);
        let mut ret = 0.0;
        let mut len = 0;
        loop {
            let legal = env.legal_actions(state);
            let action = {
                let row = model.behaviour_row(state);
                epsilon_greedy_masked(&row, legal, eps.current(), &mut rngs.policy)
            };
            let step = env.step(state, action, &mut rngs.env)?;
            let t = step.transition;
            record_proxy_reward(&mut proxy, &t)?;
            ret += t.reward;
            len += 1;
            match (&mut model, config.algorithm) {
                (TabularModel::Single { q, h }, Algorithm::Q) => {
                    let ev = q_update(q, &t, alpha, gamma)?;
                    h_update_q(h, &ev)?;
                }
                (TabularModel::Twin { q, h }, Algorithm::DoubleQ) => {
                    let ev = double_q_update(q, &t, alpha, gamma, &mut rngs.selector)?;
                    h_update_double(h, &ev)?;
                }
                _ => traj.transitions.push(t),
            }
            let truncated = step.truncated || len >= config.max_steps;
            if t.terminal || truncated {
                traj.truncated = truncated && !t.terminal;
                break;
            }
            state = t.next_state;
        }
        if config.algorithm == Algorithm::Mc {
            traj.episode_return = ret;
            if let TabularModel::Single { q, h } = &mut model {
                mc_update(q, &traj, alpha, gamma)?;
                h_update_mc(h, &traj, alpha, gamma)?;
            }
        }
        run_returns.push(ret);
        run_lengths.push(len);
        eps.advance();
        if episode % config.checkpoint_every == 0 || episode == config.episodes {
            let cp = checkpoint(&model, &reward, episode, exec)?;
            on_checkpoint(&cp);
            checkpoints.push(cp);
        }
    }

    Ok(TabularRun {
        model,
        reward,
        proxy,
        episode_returns: run_returns,
        episode_lengths: run_lengths,
        checkpoints,
    })
}

/// The same configuration under each seed, seeds spread over threads.
pub fn train_seeds(config: &RunConfig, seeds: &[u64], exec: Execution) -> Vec<Result<TabularRun>> {
    par::map_slice(seeds, exec, |&seed| {
        let mut c = config.clone();
        c.seed = seed;
        train_tabular_with(&c, Execution::Sequential, |_| {})
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::verify_consistency;
    use crate::config::Preset;

    #[test]
    fn every_learner_stays_consistent_on_chain() {
        for algo in [Algorithm::Q, Algorithm::Mc, Algorithm::DoubleQ] {
            let mut cfg = RunConfig::preset(Preset::Chain, algo, 5);
            cfg.episodes = 300;
            cfg.checkpoint_every = 50;
            let run = train_tabular(&cfg).unwrap();
            assert_eq!(run.checkpoints.len(), 6);
            for cp in &run.checkpoints {
                assert!(cp.max_abs_err() <= 1e-9, "{algo:?} {cp:?}");
            }
            for (_, q, h) in run.model.pairs() {
                assert!(verify_consistency(h, q, &run.proxy).unwrap().passes(1e-9));
            }
        }
    }

    #[test]
    fn runs_are_reproducible() {
        let mut cfg = RunConfig::preset(Preset::TaxiSupp, Algorithm::DoubleQ, 9);
        cfg.episodes = 20;
        let a = train_tabular(&cfg).unwrap();
        let b = train_tabular(&cfg).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sweep_matches_individual_runs() {
        let mut cfg = RunConfig::preset(Preset::Chain, Algorithm::Q, 0);
        cfg.episodes = 40;
        let runs = train_seeds(&cfg, &[1, 2], Execution::default());
        cfg.seed = 2;
        assert_eq!(runs[1].as_ref().unwrap(), &train_tabular(&cfg).unwrap());
    }

    #[test]
    fn deep_algorithms_rejected() {
        let cfg = RunConfig::preset(Preset::Chain, Algorithm::Dqn, 0);
        assert!(train_tabular(&cfg).is_err());
    }
}
