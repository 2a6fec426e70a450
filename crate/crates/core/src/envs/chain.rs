//! Deterministic chain MDP used to exhibit value ambiguity.
//!
//! Codec (default `depth = 2`): `0 = s0`, `1 = s1` (reached by `a0` from
//! `s0`), `2 = s2` (reached by `a1`), `3 = end` (shared absorbing terminal).
//!
//! Deeper instances come in two shapes. The ladder keeps two nodes per layer:
//! layer `k >= 1` holds `2k - 1` (upper, entered by `a0`) and `2k` (lower,
//! entered by `a1`). The extended variant is a complete binary tree in heap
//! order: node `i` moves to `2i + 1` under `a0` and `2i + 2` under `a1`.
//! Either way the final decision layer pays `2` for `a0` on even positions and
//! `a1` on odd positions and `1` otherwise; every other reward is `0`. The
//! absorbing terminal takes the last id.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{ActionId, CodecDoc, EnvSpec, Environment, GridLayout, StateId, Step, Transition};
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainMdpConfig {
    pub depth: usize,
    pub extended: bool,
}

impl Default for ChainMdpConfig {
    fn default() -> Self {
        ChainMdpConfig {
            depth: 2,
            extended: false,
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Edge {
    next: StateId,
    reward: f64,
    terminal: bool,
}

#[derive(Clone, Debug)]
pub struct ChainMdp {
    spec: EnvSpec,
    config: ChainMdpConfig,
    edges: Vec<[Edge; 2]>,
    /// (layer, position within layer) for each non-terminal state.
    placement: Vec<(usize, usize)>,
    terminal: StateId,
    steps: usize,
    done: bool,
}

pub fn make_chain(config: ChainMdpConfig) -> Result<ChainMdp> {
    if config.depth < 2 {
        return Err(Error::InvalidArgument(format!(
            "chain depth {} < 2",
            config.depth
        )));
    }
    let depth = config.depth;
    if config.extended && depth > 20 {
        return Err(Error::InvalidArgument("extended chain depth > 20".into()));
    }
    let mut placement = vec![(0usize, 0usize)];
    if config.extended {
        for layer in 1..depth {
            for pos in 0..(1usize << layer) {
                placement.push((layer, pos));
            }
        }
    } else {
        for layer in 1..depth {
            placement.push((layer, 0));
            placement.push((layer, 1));
        }
    }
    let terminal = placement.len();
    let leaf_reward = |pos: usize, action: ActionId| -> f64 {
        if pos.is_multiple_of(2) == (action == 0) {
            2.0
        } else {
            1.0
        }
    };
    let child = |state: StateId, layer: usize, action: ActionId| -> StateId {
        if config.extended {
            2 * state + 1 + action
        } else {
            2 * (layer + 1) - 1 + action
        }
    };
    let edges = placement
        .iter()
        .enumerate()
        .map(|(state, &(layer, pos))| {
            std::array::from_fn(|action| {
                if layer + 1 == depth {
                    Edge {
                        next: terminal,
                        reward: leaf_reward(pos, action),
                        terminal: true,
                    }
                } else {
                    Edge {
                        next: child(state, layer, action),
                        reward: 0.0,
                        terminal: false,
                    }
                }
            })
        })
        .collect();
    let spec = EnvSpec::new(terminal + 1, 2, "chain")?;
    Ok(ChainMdp {
        spec,
        config,
        edges,
        placement,
        terminal,
        steps: 0,
        done: false,
    })
}

impl ChainMdp {
    pub fn config(&self) -> ChainMdpConfig {
        self.config
    }

    pub fn terminal_state(&self) -> StateId {
        self.terminal
    }

    /// Deterministic successor and reward, without touching episode state.
    pub fn peek(&self, state: StateId, action: ActionId) -> Option<(StateId, f64, bool)> {
        self.edges
            .get(state)
            .and_then(|e| e.get(action))
            .map(|e| (e.next, e.reward, e.terminal))
    }

    /// States in decision layer `layer`.
    pub fn layer_states(&self, layer: usize) -> Vec<StateId> {
        self.placement
            .iter()
            .enumerate()
            .filter(|(_, &(l, _))| l == layer)
            .map(|(s, _)| s)
            .collect()
    }
}

impl Environment for ChainMdp {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, _rng: &mut Rng) -> StateId {
        self.steps = 0;
        self.done = false;
        0
    }

    fn step(&mut self, state: StateId, action: ActionId, _rng: &mut Rng) -> Result<Step> {
        self.spec.check_state(state)?;
        if state == self.terminal || self.done {
            return Err(Error::TerminalStep { state });
        }
        let edge = self.edges[state]
            .get(action)
            .ok_or(Error::IllegalAction { state, action })?;
        self.steps += 1;
        self.done = edge.terminal;
        Ok(Step {
            transition: Transition {
                state,
                action,
                reward: edge.reward,
                next_state: edge.next,
                terminal: edge.terminal,
            },
            truncated: false,
        })
    }

    fn reward(&self, state: StateId, action: ActionId) -> f64 {
        self.peek(state, action).map_or(0.0, |(_, r, _)| r)
    }

    fn is_absorbing(&self, state: StateId) -> bool {
        state == self.terminal
    }

    fn steps_taken(&self) -> usize {
        self.steps
    }

    fn codec(&self) -> CodecDoc {
        let shape = if self.config.extended {
            "binary tree in heap order: node i -> 2i+1 (a0), 2i+2 (a1)"
        } else {
            "ladder: layer k>=1 holds 2k-1 (upper, via a0) and 2k (lower, via a1)"
        };
        CodecDoc {
            name: format!(
                "chain-v1(depth={},extended={})",
                self.config.depth, self.config.extended
            ),
            description: format!(
                "state 0 = s0 (start); {shape}; final layer pays 2 for a0 at even positions and a1 at odd positions, 1 otherwise; state {} = absorbing end",
                self.terminal
            ),
        }
    }

    fn describe_state(&self, state: StateId) -> String {
        if state == self.terminal {
            "end".into()
        } else {
            format!("s{state}")
        }
    }

    fn grid_layout(&self) -> Option<GridLayout> {
        let rows = self.placement.iter().map(|&(_, p)| p + 1).max().unwrap_or(1);
        let cols = self.config.depth;
        let mut cells: Vec<Option<(usize, usize)>> =
            self.placement.iter().map(|&(l, p)| Some((p, l))).collect();
        cells.push(None);
        Some(GridLayout {
            rows,
            cols,
            row_labels: (0..rows).map(|r| format!("pos {r}")).collect(),
            col_labels: (0..cols).map(|c| format!("layer {c}")).collect(),
            cells,
        })
    }
}
