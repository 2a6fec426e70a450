//! Belief maps for tabular and deep value learners.
//!
//! A belief map `H` records, for every state-action pair, the discounted
//! expected visitation of every other state-action pair under the policy the
//! agent is learning. It is trained with the same updates as the Q-function,
//! so the agent's values decompose exactly into "where it expects to go"
//! times "what it expects to earn there". That decomposition is checked at
//! runtime ([`belief::verify_consistency`]) and turned into contrastive
//! explanations ([`explain`]).

pub mod belief;
pub mod cli;
pub mod config;
pub mod deep;
pub mod envs;
pub mod error;
pub mod eval;
pub mod explain;
pub mod io;
pub mod mdp;
pub mod par;
pub mod rng;
pub mod tabular;
pub mod train;

pub use error::{Error, Result};
