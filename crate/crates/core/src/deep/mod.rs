//! Function-approximation variant: a Q network trained with the DQN loss and
//! a belief network trained alongside it with the squared belief loss.

mod adam;
mod agent;
mod gradcheck;
mod net;
mod replay;
mod steps;

pub use adam::{clip_gradients, Adam, AdamConfig};
pub use agent::{evaluate_greedy, train_deep, DeepRun, RECOVERY_OBS_PER_STATE};
pub use gradcheck::{gradient_check, GradCheckReport};
pub use net::{sync_target, Architecture, Network, HIDDEN_ACTIVATION};
pub use replay::ReplayBuffer;
pub use steps::{
    dbn_step_on_batch, dbn_train_step, dqn_step_on_batch, dqn_train_step, huber, huber_grad,
    pearson, recover_q_deep, DeepRecoveryReport, DeepStepParams,
};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::config::Preset;
use crate::mdp::{ActionId, ActionSet, StateId};

/// How the Q network sees a state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputEncoding {
    /// The environment's continuous observation vector.
    Observation,
    OneHotState,
}

/// Shape of the belief network's output.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BeliefHead {
    /// Input one-hot `s`; output indexed `(a, s', a')`.
    Full,
    /// Input `[one-hot s | one-hot a]`; output indexed by `s'` alone, the
    /// action-summed belief of `(s, a)`.
    StateMarginal,
}

/// Which network supplies the bootstrap in the DQN target.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetPlacement {
    /// `y = r + gamma max Q(s'; target)` regressed by `Q(s, a; online)`.
    Standard,
    /// `y = r + gamma max Q(s'; online)` against `Q(s, a; target)`, with the
    /// gradient flowing through the bootstrap.
    Literal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeepConfig {
    pub gamma: f64,
    pub adam: AdamConfig,
    pub batch_size: usize,
    pub replay_capacity: usize,
    /// Both target networks copy the online ones every this many Q
    /// optimizer steps.
    pub target_sync_every: usize,
    pub huber_delta: f64,
    pub grad_clip: f64,
    pub q_input: InputEncoding,
    pub q_arch: Architecture,
    pub h_head: BeliefHead,
    pub h_arch: Architecture,
    /// The belief network takes one optimizer step every this many
    /// environment steps.
    pub dbn_train_every: usize,
    pub target_placement: TargetPlacement,
    /// Treat step-cap truncation as episode end when bootstrapping.
    pub truncation_is_terminal: bool,
    pub eval_episodes: usize,
}

impl DeepConfig {
    fn base(q_input: InputEncoding, q_arch: Architecture, h_head: BeliefHead, h_arch: Architecture) -> Self {
        DeepConfig {
            gamma: 1.0,
            adam: AdamConfig::default(),
            batch_size: 16,
            replay_capacity: 10_000,
            target_sync_every: 100,
            huber_delta: 1.0,
            grad_clip: 1.0,
            q_input,
            q_arch,
            h_head,
            h_arch,
            dbn_train_every: 1,
            target_placement: TargetPlacement::Standard,
            truncation_is_terminal: true,
            eval_episodes: 100,
        }
    }

    /// Published architectures where they exist; small stand-ins for the
    /// chain and blackjack, which have none.
    pub fn preset(preset: Preset) -> Self {
        match preset {
            Preset::Cartpole => DeepConfig::base(
                InputEncoding::Observation,
                Architecture::mlp(&[4, 128, 512, 2]),
                BeliefHead::Full,
                Architecture::mlp(&[162, 512, 1024, 2048, 2 * 162 * 2]),
            ),
            Preset::TaxiSupp | Preset::TaxiMain => DeepConfig::base(
                InputEncoding::OneHotState,
                Architecture::mlp(&[500, 500, 2000, 6]),
                BeliefHead::StateMarginal,
                Architecture::TwoStream {
                    belief_in: 500,
                    action_in: 6,
                    belief_hidden: 1024,
                    action_hidden: 128,
                    trunk: vec![2048, 500],
                },
            ),
            Preset::Chain => DeepConfig::base(
                InputEncoding::OneHotState,
                Architecture::mlp(&[4, 32, 2]),
                BeliefHead::Full,
                Architecture::mlp(&[4, 64, 2 * 4 * 2]),
            ),
            Preset::Blackjack => DeepConfig::base(
                InputEncoding::OneHotState,
                Architecture::mlp(&[285, 128, 2]),
                BeliefHead::Full,
                Architecture::mlp(&[285, 256, 2 * 285 * 2]),
            ),
        }
    }

    /// The preset with a single-hidden-layer belief network, sized to train
    /// in minutes on one core, and a slower target sync for cartpole.
    pub fn desk(preset: Preset) -> Self {
        let mut cfg = DeepConfig::preset(preset);
        if preset == Preset::Cartpole {
            cfg.h_arch = Architecture::mlp(&[162, 256, 2 * 162 * 2]);
            cfg.dbn_train_every = 4;
            cfg.target_sync_every = 1000;
        }
        cfg
    }

    /// Every architecture this configuration instantiates.
    pub fn architectures(&self) -> [&Architecture; 2] {
        [&self.q_arch, &self.h_arch]
    }
}

/// One replay entry. Observations are kept when the environment has them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeepTransition {
    pub state: StateId,
    pub obs: Option<Vec<f64>>,
    pub action: ActionId,
    pub reward: f64,
    pub next_state: StateId,
    pub next_obs: Option<Vec<f64>>,
    pub next_legal: ActionSet,
    /// No bootstrap from `next_state`.
    pub terminal: bool,
}

fn write_one_hot(row: &mut [f64], index: usize) {
    row.fill(0.0);
    row[index] = 1.0;
}

/// Batch of Q-network inputs, one row per `(state, obs)` pair.
pub(crate) fn encode_q_batch(
    encoding: InputEncoding,
    width: usize,
    items: &[(StateId, Option<&[f64]>)],
) -> crate::Result<Array2<f64>> {
    let mut x = Array2::zeros((items.len(), width));
    for (mut row, &(state, obs)) in x.rows_mut().into_iter().zip(items) {
        let row = row.as_slice_mut().expect("standard layout");
        match encoding {
            InputEncoding::OneHotState => {
                if state >= width {
                    return Err(crate::Error::InvalidState {
                        state,
                        num_states: width,
                    });
                }
                write_one_hot(row, state);
            }
            InputEncoding::Observation => {
                let obs = obs.ok_or_else(|| {
                    crate::Error::InvalidArgument("observation encoding needs observations".into())
                })?;
                if obs.len() != width {
                    return Err(crate::Error::shape(width.to_string(), obs.len().to_string()));
                }
                row.copy_from_slice(obs);
            }
        }
    }
    Ok(x)
}

/// Batch of belief-network inputs for `(state, action)` pairs.
pub(crate) fn encode_h_batch(
    head: BeliefHead,
    num_states: usize,
    num_actions: usize,
    items: &[(StateId, ActionId)],
) -> Array2<f64> {
    let width = match head {
        BeliefHead::Full => num_states,
        BeliefHead::StateMarginal => num_states + num_actions,
    };
    let mut x = Array2::zeros((items.len(), width));
    for (mut row, &(s, a)) in x.rows_mut().into_iter().zip(items) {
        row[s] = 1.0;
        if head == BeliefHead::StateMarginal {
            row[num_states + a] = 1.0;
        }
    }
    x
}

/// Width of the `H(s, a)` slice the head produces.
pub fn belief_slice_len(head: BeliefHead, num_states: usize, num_actions: usize) -> usize {
    match head {
        BeliefHead::Full => num_states * num_actions,
        BeliefHead::StateMarginal => num_states,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_shapes_line_up() {
        for p in [Preset::Cartpole, Preset::TaxiSupp, Preset::Chain, Preset::Blackjack] {
            for cfg in [DeepConfig::preset(p), DeepConfig::desk(p)] {
                let spec = crate::envs::EnvConfig::default_for(p.env()).build().unwrap().spec().clone();
                let (s, a) = (spec.num_states, spec.num_actions);
                assert_eq!(cfg.q_arch.output_len(), a, "{p:?}");
                let expect_in = match cfg.h_head {
                    BeliefHead::Full => s,
                    BeliefHead::StateMarginal => s + a,
                };
                assert_eq!(cfg.h_arch.input_len(), expect_in, "{p:?}");
                let out = match cfg.h_head {
                    BeliefHead::Full => a * belief_slice_len(cfg.h_head, s, a),
                    BeliefHead::StateMarginal => s,
                };
                assert_eq!(cfg.h_arch.output_len(), out, "{p:?}");
            }
        }
    }

    #[test]
    fn encodings() {
        let x = encode_q_batch(InputEncoding::OneHotState, 3, &[(2, None), (0, None)]).unwrap();
        assert_eq!(x.row(0).to_vec(), vec![0.0, 0.0, 1.0]);
        assert!(encode_q_batch(InputEncoding::Observation, 2, &[(0, None)]).is_err());
        let h = encode_h_batch(BeliefHead::StateMarginal, 3, 2, &[(1, 1)]);
        assert_eq!(h.row(0).to_vec(), vec![0.0, 1.0, 0.0, 0.0, 1.0]);
    }
}
