use std::collections::VecDeque;

use rand::RngCore;

use crate::belief::RewardMap;
use crate::config::{Algorithm, RunConfig};
use crate::deep::adam::Adam;
use crate::deep::net::Network;
use crate::deep::replay::ReplayBuffer;
use crate::deep::steps::{dbn_train_step, dqn_train_step, recover_q_deep, DeepRecoveryReport, DeepStepParams};
use crate::deep::{encode_q_batch, DeepConfig, DeepTransition, InputEncoding};
use crate::envs::EnvConfig;
use crate::error::{Error, Result};
use crate::mdp::StateId;
use crate::eval::{evaluate_policy, EvalReport};
use crate::par::Execution;
use crate::rng::RunRngs;
use crate::tabular::{argmax_lowest, epsilon_greedy_masked, EpsilonSchedule};

/// Outcome of a deep training run.
#[derive(Clone, Debug)]
pub struct DeepRun {
    pub qnet: Network,
    pub hnet: Option<Network>,
    pub episode_returns: Vec<f64>,
    pub episode_lengths: Vec<usize>,
    pub dqn_losses: Vec<f64>,
    pub dbn_losses: Vec<f64>,
    pub reward: RewardMap,
    /// Every state visited during training. Observation-based runs keep up
    /// to [`RECOVERY_OBS_PER_STATE`] of the latest observations per state, so
    /// a state can appear more than once.
    pub visited: Vec<(StateId, Option<Vec<f64>>)>,
}

pub const RECOVERY_OBS_PER_STATE: usize = 32;

fn q_row(qnet: &Network, enc: InputEncoding, state: StateId, obs: Option<&[f64]>) -> Result<Vec<f64>> {
    let x = encode_q_batch(enc, qnet.input_len(), &[(state, obs)])?;
    Ok(qnet.predict(&x)?.into_raw_vec_and_offset().0)
}

fn deep_config(config: &RunConfig) -> Result<&DeepConfig> {
    config
        .deep
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("run has no deep configuration".into()))
}

/// Trains a Q network (and, for `dbn`, a belief network alongside it).
/// Single-threaded; identical configs give identical runs.
pub fn train_deep(config: &RunConfig) -> Result<DeepRun> {
    config.validate()?;
    if config.algorithm.is_tabular() {
        return Err(Error::InvalidArgument(format!(
            "{} is a tabular algorithm",
            config.algorithm.as_str()
        )));
    }
    let cfg = deep_config(config)?;
    let mut env = config.env.build()?;
    let spec = env.spec().clone();
    let (ns, na) = (spec.num_states, spec.num_actions);
    let params = DeepStepParams::from_config(cfg, ns, na);
    let mut rngs = RunRngs::new(config.seed);

    let mut qnet = Network::new(&cfg.q_arch, rngs.init.next_u64())?;
    let mut q_target = qnet.clone();
    let mut q_opt = Adam::for_network(cfg.adam, &qnet);
    let mut belief = if config.algorithm == Algorithm::Dbn {
        let h = Network::new(&cfg.h_arch, rngs.init.next_u64())?;
        let opt = Adam::for_network(cfg.adam, &h);
        Some((h.clone(), h, opt))
    } else {
        None
    };

    let mut buffer = ReplayBuffer::new(cfg.replay_capacity)?;
    let mut eps = EpsilonSchedule::new(config.epsilon);
    let mut run = DeepRun {
        qnet: qnet.clone(),
        hnet: None,
        episode_returns: Vec::with_capacity(config.episodes),
        episode_lengths: Vec::with_capacity(config.episodes),
        dqn_losses: Vec::new(),
        dbn_losses: Vec::new(),
        reward: RewardMap::from_env(env.as_ref()),
        visited: Vec::new(),
    };
    let mut env_steps = 0usize;
    let mut seen: Vec<VecDeque<Option<Vec<f64>>>> = vec![VecDeque::new(); ns];

    for _ in 0..config.episodes {
        let mut state = env.reset(&mut rngs.env);
        let mut obs = env.observation();
        let mut ret = 0.0;
        let mut len = 0;
        while len < config.max_steps {
            let legal = env.legal_actions(state);
            let slot = &mut seen[state];
            if obs.is_some() || slot.is_empty() {
                if slot.len() == RECOVERY_OBS_PER_STATE {
                    slot.pop_front();
                }
                slot.push_back(obs.clone());
            }
            let row = q_row(&qnet, cfg.q_input, state, obs.as_deref())?;
            let action = epsilon_greedy_masked(&row, legal, eps.current(), &mut rngs.policy);
            let step = env.step(state, action, &mut rngs.env)?;
            let t = step.transition;
            let next_obs = env.observation();
            len += 1;
            env_steps += 1;
            ret += t.reward;
            let truncated = step.truncated || len == config.max_steps;
            buffer.push(DeepTransition {
                state,
                obs: obs.take(),
                action,
                reward: t.reward,
                next_state: t.next_state,
                next_obs: next_obs.clone(),
                next_legal: env.legal_actions(t.next_state),
                terminal: t.terminal || (truncated && cfg.truncation_is_terminal),
            });

            if buffer.len() >= cfg.batch_size {
                let loss = dqn_train_step(
                    &mut qnet,
                    &q_target,
                    &buffer,
                    &mut q_opt,
                    &params,
                    cfg.batch_size,
                    &mut rngs.selector,
                )?;
                run.dqn_losses.push(loss);
                let sync = run.dqn_losses.len().is_multiple_of(cfg.target_sync_every);
                if sync {
                    q_target.sync_from(&qnet)?;
                }
                if let Some((h, h_target, h_opt)) = belief.as_mut() {
                    if env_steps.is_multiple_of(cfg.dbn_train_every) {
                        let loss = dbn_train_step(
                            h,
                            h_target,
                            &qnet,
                            &buffer,
                            h_opt,
                            &params,
                            cfg.batch_size,
                            &mut rngs.selector,
                        )?;
                        run.dbn_losses.push(loss);
                    }
                    if sync {
                        h_target.sync_from(h)?;
                    }
                }
            }
            if t.terminal || truncated {
                break;
            }
            state = t.next_state;
            obs = next_obs;
        }
        run.episode_returns.push(ret);
        run.episode_lengths.push(len);
        eps.advance();
    }

    run.visited = seen
        .into_iter()
        .enumerate()
        .flat_map(|(s, obs)| obs.into_iter().map(move |o| (s, o)))
        .collect();
    run.qnet = qnet;
    run.hnet = belief.map(|(h, _, _)| h);
    Ok(run)
}

impl DeepRun {
    pub fn recovery(&self, config: &RunConfig) -> Result<Option<DeepRecoveryReport>> {
        let Some(h) = &self.hnet else {
            return Ok(None);
        };
        let cfg = deep_config(config)?;
        let env = config.env.build()?;
        let spec = env.spec();
        let params = DeepStepParams::from_config(cfg, spec.num_states, spec.num_actions);
        let samples: Vec<_> = self
            .visited
            .iter()
            .map(|(s, o)| (*s, o.clone(), env.legal_actions(*s)))
            .collect();
        recover_q_deep(h, &self.qnet, &params, &self.reward, &samples).map(Some)
    }
}

/// Greedy rollouts of `qnet`; see [`evaluate_policy`].
pub fn evaluate_greedy(
    env_config: &EnvConfig,
    qnet: &Network,
    encoding: InputEncoding,
    episodes: usize,
    max_steps: usize,
    seed: u64,
    exec: Execution,
) -> Result<EvalReport> {
    evaluate_policy(env_config, episodes, max_steps, seed, exec, |s, obs, legal| {
        let row = q_row(qnet, encoding, s, obs)?;
        argmax_lowest(&row, legal).ok_or(Error::TerminalStep { state: s })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Preset;

    #[test]
    fn chain_dqn_run_is_deterministic() {
        let mut cfg = RunConfig::preset(Preset::Chain, Algorithm::Dbn, 3);
        cfg.episodes = 60;
        let a = train_deep(&cfg).unwrap();
        let b = train_deep(&cfg).unwrap();
        assert_eq!(a.dqn_losses, b.dqn_losses);
        assert_eq!(a.dbn_losses, b.dbn_losses);
        assert_eq!(a.qnet.flat_params(), b.qnet.flat_params());
        assert!(!a.dbn_losses.is_empty());
        assert!(a.recovery(&cfg).unwrap().is_some());
        let rep = evaluate_greedy(&cfg.env, &a.qnet, InputEncoding::OneHotState, 4, 50, 1, Execution::Sequential)
            .unwrap();
        assert_eq!(rep.episodes, 4);
    }
}
