//! Greedy evaluation rollouts.

use serde::{Deserialize, Serialize};

use crate::envs::EnvConfig;
use crate::error::{Error, Result};
use crate::mdp::{ActionId, ActionSet, StateId};
use crate::par::{self, Execution};
use crate::rng;
use crate::tabular::{argmax_lowest, QTable};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub episodes: usize,
    pub mean_return: f64,
    pub mean_length: f64,
    pub lengths: Vec<usize>,
    pub returns: Vec<f64>,
}

/// Runs `episodes` rollouts of `policy`, which sees the state id, the
/// environment's observation (if any) and the legal actions. Episode `i`
/// draws from its own stream of `seed`, so the report is the same under
/// either execution mode.
pub fn evaluate_policy<P>(
    env_config: &EnvConfig,
    episodes: usize,
    max_steps: usize,
    seed: u64,
    exec: Execution,
    policy: P,
) -> Result<EvalReport>
where
    P: Fn(StateId, Option<&[f64]>, ActionSet) -> Result<ActionId> + Sync,
{
    let results = par::map_range(episodes, exec, |i| -> Result<(f64, usize)> {
        let mut env = env_config.build()?;
        let mut rng = rng::stream(seed, 16 + i as u32);
        let mut state = env.reset(&mut rng);
        let (mut ret, mut len) = (0.0, 0);
        while len < max_steps {
            let obs = env.observation();
            let action = policy(state, obs.as_deref(), env.legal_actions(state))?;
            let step = env.step(state, action, &mut rng)?;
            ret += step.transition.reward;
            len += 1;
            if step.transition.terminal || step.truncated {
                break;
            }
            state = step.transition.next_state;
        }
        Ok((ret, len))
    });
    let results: Vec<(f64, usize)> = results.into_iter().collect::<Result<_>>()?;
    let n = results.len().max(1) as f64;
    Ok(EvalReport {
        episodes: results.len(),
        mean_return: results.iter().map(|r| r.0).sum::<f64>() / n,
        mean_length: results.iter().map(|r| r.1 as f64).sum::<f64>() / n,
        lengths: results.iter().map(|r| r.1).collect(),
        returns: results.iter().map(|r| r.0).collect(),
    })
}

/// Greedy rollouts of a Q-table, ties to the lowest action.
pub fn evaluate_table(
    env_config: &EnvConfig,
    q: &QTable,
    episodes: usize,
    max_steps: usize,
    seed: u64,
    exec: Execution,
) -> Result<EvalReport> {
    evaluate_policy(env_config, episodes, max_steps, seed, exec, |s, _, legal| {
        argmax_lowest(q.row(s), legal).ok_or(Error::TerminalStep { state: s })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{ChainMdpConfig, EnvName};

    #[test]
    fn execution_modes_agree() {
        let env = EnvConfig::default_for(EnvName::Taxi);
        let q = QTable::zeros(500, 6);
        let a = evaluate_table(&env, &q, 8, 50, 3, Execution::Sequential).unwrap();
        let b = evaluate_table(&env, &q, 8, 50, 3, Execution::default()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.episodes, 8);
    }

    #[test]
    fn chain_greedy_return() {
        let env = EnvConfig::Chain(ChainMdpConfig::default());
        let q = QTable::zeros(4, 2);
        let rep = evaluate_table(&env, &q, 3, 10, 0, Execution::Sequential).unwrap();
        assert_eq!(rep.lengths, vec![2, 2, 2]);
        assert_eq!(rep.mean_return, 2.0);
    }
}
