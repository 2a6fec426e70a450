//! The four environments and a name-based registry.

pub mod blackjack;
pub mod cartpole;
pub mod chain;
pub mod taxi;

use serde::{Deserialize, Serialize};

pub use blackjack::{make_blackjack, Blackjack, BlackjackState, Outcome};
pub use cartpole::{make_cartpole, Cartpole, CartpoleQuantizer, PhysicalState};
pub use chain::{make_chain, ChainMdp, ChainMdpConfig};
pub use taxi::{make_taxi, PassengerLoc, Taxi, TaxiState};

use crate::error::Result;
use crate::mdp::Environment;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum EnvName {
    Chain,
    Blackjack,
    Cartpole,
    Taxi,
}

impl EnvName {
    pub fn as_str(self) -> &'static str {
        match self {
            EnvName::Chain => "chain",
            EnvName::Blackjack => "blackjack",
            EnvName::Cartpole => "cartpole",
            EnvName::Taxi => "taxi",
        }
    }
}

impl std::fmt::Display for EnvName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Environment construction parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "lowercase")]
pub enum EnvConfig {
    Chain(ChainMdpConfig),
    Blackjack,
    Cartpole(CartpoleQuantizer),
    Taxi,
}

impl EnvConfig {
    pub fn default_for(name: EnvName) -> Self {
        match name {
            EnvName::Chain => EnvConfig::Chain(ChainMdpConfig::default()),
            EnvName::Blackjack => EnvConfig::Blackjack,
            EnvName::Cartpole => EnvConfig::Cartpole(CartpoleQuantizer::default()),
            EnvName::Taxi => EnvConfig::Taxi,
        }
    }

    pub fn name(&self) -> EnvName {
        match self {
            EnvConfig::Chain(_) => EnvName::Chain,
            EnvConfig::Blackjack => EnvName::Blackjack,
            EnvConfig::Cartpole(_) => EnvName::Cartpole,
            EnvConfig::Taxi => EnvName::Taxi,
        }
    }

    pub fn build(&self) -> Result<Box<dyn Environment>> {
        Ok(match self {
            EnvConfig::Chain(c) => Box::new(make_chain(*c)?),
            EnvConfig::Blackjack => Box::new(make_blackjack()),
            EnvConfig::Cartpole(q) => Box::new(make_cartpole(q.clone())?),
            EnvConfig::Taxi => Box::new(make_taxi()),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RunRngs;
    use std::collections::HashMap;

    /// Every sampled (state, action) reward is a single value and equals the
    /// declared reward function.
    #[test]
    fn reward_determinism_audit() {
        for name in [EnvName::Chain, EnvName::Blackjack, EnvName::Cartpole, EnvName::Taxi] {
            let mut env = EnvConfig::default_for(name).build().unwrap();
            let mut rngs = RunRngs::new(17);
            let mut seen: HashMap<(usize, usize), f64> = HashMap::new();
            for _ in 0..300 {
                let mut s = env.reset(&mut rngs.env);
                loop {
                    let legal = env.legal_actions(s);
                    let a = legal
                        .nth(crate::rng::below(&mut rngs.policy, legal.len()))
                        .unwrap();
                    let step = env.step(s, a, &mut rngs.env).unwrap();
                    let t = step.transition;
                    assert_eq!(t.reward, env.reward(s, a), "{name} {s} {a}");
                    let prev = *seen.entry((s, a)).or_insert(t.reward);
                    assert_eq!(prev, t.reward);
                    if t.terminal || step.truncated {
                        break;
                    }
                    s = t.next_state;
                }
            }
        }
    }
}
