//! Run configuration and per-environment presets.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::deep::DeepConfig;
use crate::envs::{EnvConfig, EnvName};
use crate::error::{Error, Result};
use crate::tabular::{EpsilonKind, InitMode};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Q,
    Mc,
    DoubleQ,
    Dqn,
    Dbn,
}

impl Algorithm {
    pub fn is_tabular(self) -> bool {
        matches!(self, Algorithm::Q | Algorithm::Mc | Algorithm::DoubleQ)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Q => "q",
            Algorithm::Mc => "mc",
            Algorithm::DoubleQ => "double-q",
            Algorithm::Dqn => "dqn",
            Algorithm::Dbn => "dbn",
        }
    }
}

/// Hyperparameter presets. Taxi has two: the supplement's `gamma = 0.9` and
/// the main text's `gamma = 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    Chain,
    Blackjack,
    Cartpole,
    TaxiSupp,
    TaxiMain,
}

impl Preset {
    pub fn default_for(env: EnvName) -> Preset {
        match env {
            EnvName::Chain => Preset::Chain,
            EnvName::Blackjack => Preset::Blackjack,
            EnvName::Cartpole => Preset::Cartpole,
            EnvName::Taxi => Preset::TaxiSupp,
        }
    }

    pub fn env(self) -> EnvName {
        match self {
            Preset::Chain => EnvName::Chain,
            Preset::Blackjack => EnvName::Blackjack,
            Preset::Cartpole => EnvName::Cartpole,
            Preset::TaxiSupp | Preset::TaxiMain => EnvName::Taxi,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub env: EnvConfig,
    pub preset: Preset,
    pub algorithm: Algorithm,
    pub alpha: f64,
    pub gamma: f64,
    pub episodes: usize,
    pub epsilon: EpsilonKind,
    pub seed: u64,
    pub q_init: InitMode,
    pub h_init: InitMode,
    /// Learner-side cap on episode length, applied on top of the
    /// environment's own cap.
    pub max_steps: usize,
    /// Consistency is measured every this many episodes and at the end.
    pub checkpoint_every: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deep: Option<DeepConfig>,
}

impl RunConfig {
    pub fn preset(preset: Preset, algorithm: Algorithm, seed: u64) -> Self {
        let env = EnvConfig::default_for(preset.env());
        let (alpha, gamma, episodes, epsilon) = match preset {
            Preset::Chain => (
                0.1,
                1.0,
                5_000,
                EpsilonKind::ExponentialDecay {
                    start: 1.0,
                    end: 0.1,
                    decay_rate: 0.999,
                },
            ),
            Preset::Blackjack => (
                0.1,
                1.0,
                500_000,
                EpsilonKind::ExponentialDecay {
                    start: 1.0,
                    end: 0.05,
                    decay_rate: 0.9999,
                },
            ),
            Preset::Cartpole => (
                0.1,
                1.0,
                2_000,
                EpsilonKind::LinearDecay {
                    start: 1.0,
                    end: 0.1,
                    over_episodes: 500,
                },
            ),
            Preset::TaxiSupp | Preset::TaxiMain => (
                0.4,
                if preset == Preset::TaxiSupp { 0.9 } else { 1.0 },
                2_000,
                EpsilonKind::LinearDecay {
                    start: 1.0,
                    end: 0.1,
                    over_episodes: 250,
                },
            ),
        };
        let deep = (!algorithm.is_tabular()).then(|| DeepConfig::preset(preset));
        let (alpha, gamma) = match &deep {
            Some(d) => (d.adam.learning_rate, d.gamma),
            None => (alpha, gamma),
        };
        RunConfig {
            env,
            preset,
            algorithm,
            alpha,
            gamma,
            episodes,
            epsilon,
            seed,
            q_init: InitMode::Zero,
            h_init: InitMode::Zero,
            max_steps: 10_000,
            checkpoint_every: 1_000,
            deep,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.env.name() != self.preset.env() {
            return Err(Error::InvalidArgument(format!(
                "preset {:?} does not belong to environment {}",
                self.preset,
                self.env.name()
            )));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::InvalidArgument(format!("alpha {} outside [0, 1]", self.alpha)));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::InvalidArgument(format!("gamma {} outside [0, 1]", self.gamma)));
        }
        if self.max_steps == 0 || self.checkpoint_every == 0 {
            return Err(Error::InvalidArgument(
                "max_steps and checkpoint_every must be positive".into(),
            ));
        }
        if let Some(d) = &self.deep {
            if d.batch_size == 0 || d.target_sync_every == 0 || d.dbn_train_every == 0 {
                return Err(Error::InvalidArgument(
                    "batch_size, target_sync_every and dbn_train_every must be positive".into(),
                ));
            }
            if d.replay_capacity < d.batch_size {
                return Err(Error::InvalidArgument(format!(
                    "replay capacity {} is smaller than a batch of {}",
                    d.replay_capacity, d.batch_size
                )));
            }
        }
        if !self.algorithm.is_tabular() && self.deep.is_none() {
            return Err(Error::InvalidArgument(format!(
                "algorithm {} needs a deep configuration",
                self.algorithm.as_str()
            )));
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&bytes);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_carry_published_hyperparameters() {
        let bj = RunConfig::preset(Preset::Blackjack, Algorithm::Q, 1);
        assert_eq!((bj.alpha, bj.gamma), (0.1, 1.0));
        assert_eq!(
            bj.epsilon,
            EpsilonKind::ExponentialDecay {
                start: 1.0,
                end: 0.05,
                decay_rate: 0.9999
            }
        );
        let cp = RunConfig::preset(Preset::Cartpole, Algorithm::Mc, 1);
        assert_eq!((cp.alpha, cp.gamma), (0.1, 1.0));
        let taxi = RunConfig::preset(Preset::TaxiSupp, Algorithm::Q, 1);
        assert_eq!((taxi.alpha, taxi.gamma), (0.4, 0.9));
        assert_eq!(
            taxi.epsilon,
            EpsilonKind::LinearDecay {
                start: 1.0,
                end: 0.1,
                over_episodes: 250
            }
        );
        assert_eq!(RunConfig::preset(Preset::TaxiMain, Algorithm::Q, 1).gamma, 1.0);
    }

    #[test]
    fn config_round_trips_and_hash_is_stable() {
        for algo in [Algorithm::Q, Algorithm::DoubleQ, Algorithm::Dbn] {
            let c = RunConfig::preset(Preset::Cartpole, algo, 42);
            let json = serde_json::to_string(&c).unwrap();
            let back: RunConfig = serde_json::from_str(&json).unwrap();
            assert_eq!(back, c);
            assert_eq!(back.hash(), c.hash());
            assert_eq!(serde_json::to_string(&back).unwrap(), json);
        }
        let a = RunConfig::preset(Preset::Chain, Algorithm::Q, 1);
        let b = RunConfig::preset(Preset::Chain, Algorithm::Q, 2);
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn validation() {
        let mut c = RunConfig::preset(Preset::Chain, Algorithm::Q, 1);
        assert!(c.validate().is_ok());
        c.alpha = 2.0;
        assert!(c.validate().is_err());
        let mut c = RunConfig::preset(Preset::Chain, Algorithm::Q, 1);
        c.preset = Preset::TaxiMain;
        assert!(c.validate().is_err());
    }
}
