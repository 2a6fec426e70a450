//! Cart-pole balancing with Euler integration and a quantized observation.
//!
//! Codec: the physical state `(x, x_dot, theta, theta_dot)` is clipped to the
//! quantizer ranges and binned per dimension; the id is
//! `((bx * n_xdot + bxdot) * n_theta + btheta) * n_thetadot + bthetadot`.
//! With the default (3, 3, 6, 3) bins the upright cart at rest in the middle
//! of the track is state 82. Actions: `0 = push left`, `1 = push right`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{ActionId, CodecDoc, EnvSpec, Environment, GridLayout, StateId, Step, Transition};
use crate::rng::{uniform_range, Rng};

pub const GRAVITY: f64 = 9.8;
pub const CART_MASS: f64 = 1.0;
pub const POLE_MASS: f64 = 0.1;
pub const HALF_LENGTH: f64 = 0.5;
pub const FORCE: f64 = 10.0;
pub const TAU: f64 = 0.02;
pub const X_LIMIT: f64 = 2.4;
pub const THETA_LIMIT: f64 = 12.0 * std::f64::consts::PI / 180.0;
pub const STEP_CAP: usize = 200;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PhysicalState {
    pub x: f64,
    pub x_dot: f64,
    pub theta: f64,
    pub theta_dot: f64,
}

impl PhysicalState {
    pub fn as_array(&self) -> [f64; 4] {
        [self.x, self.x_dot, self.theta, self.theta_dot]
    }

    pub fn failed(&self) -> bool {
        self.x.abs() > X_LIMIT || self.theta.abs() > THETA_LIMIT
    }

    /// One Euler step of the classic cart-pole equations.
    pub fn advance(&self, action: ActionId) -> PhysicalState {
        let total_mass = CART_MASS + POLE_MASS;
        let pole_mass_length = POLE_MASS * HALF_LENGTH;
        let force = if action == 1 { FORCE } else { -FORCE };
        let (sin, cos) = self.theta.sin_cos();
        let temp = (force + pole_mass_length * self.theta_dot * self.theta_dot * sin) / total_mass;
        let theta_acc = (GRAVITY * sin - cos * temp)
            / (HALF_LENGTH * (4.0 / 3.0 - POLE_MASS * cos * cos / total_mass));
        let x_acc = temp - pole_mass_length * theta_acc * cos / total_mass;
        PhysicalState {
            x: self.x + TAU * self.x_dot,
            x_dot: self.x_dot + TAU * x_acc,
            theta: self.theta + TAU * self.theta_dot,
            theta_dot: self.theta_dot + TAU * theta_acc,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CartpoleQuantizer {
    pub bins: [usize; 4],
    /// Clip ranges for `(x, x_dot, theta, theta_dot)`.
    pub ranges: [(f64, f64); 4],
}

impl Default for CartpoleQuantizer {
    fn default() -> Self {
        CartpoleQuantizer {
            bins: [3, 3, 6, 3],
            ranges: [
                (-X_LIMIT, X_LIMIT),
                (-3.0, 3.0),
                (-THETA_LIMIT, THETA_LIMIT),
                (-3.5, 3.5),
            ],
        }
    }
}

impl CartpoleQuantizer {
    pub fn validate(&self) -> Result<()> {
        if self.bins.contains(&0) {
            return Err(Error::InvalidArgument("quantizer bin count is zero".into()));
        }
        if self
            .ranges
            .iter()
            .any(|&(lo, hi)| !(lo.is_finite() && hi.is_finite() && lo < hi))
        {
            return Err(Error::InvalidArgument("quantizer range is empty".into()));
        }
        Ok(())
    }

    pub fn num_states(&self) -> usize {
        self.bins.iter().product()
    }

    pub fn bin(&self, dim: usize, value: f64) -> usize {
        let (lo, hi) = self.ranges[dim];
        let n = self.bins[dim];
        let v = if value.is_nan() { lo } else { value.clamp(lo, hi) };
        let b = ((v - lo) / (hi - lo) * n as f64).floor() as usize;
        b.min(n - 1)
    }

    pub fn bins_of(&self, s: &PhysicalState) -> [usize; 4] {
        let v = s.as_array();
        std::array::from_fn(|d| self.bin(d, v[d]))
    }

    pub fn encode_bins(&self, b: [usize; 4]) -> StateId {
        ((b[0] * self.bins[1] + b[1]) * self.bins[2] + b[2]) * self.bins[3] + b[3]
    }

    pub fn decode_bins(&self, id: StateId) -> [usize; 4] {
        let mut rest = id;
        let mut out = [0; 4];
        for d in (0..4).rev() {
            out[d] = rest % self.bins[d];
            rest /= self.bins[d];
        }
        out
    }

    pub fn quantize(&self, s: &PhysicalState) -> StateId {
        self.encode_bins(self.bins_of(s))
    }
}

#[derive(Clone, Debug)]
pub struct Cartpole {
    spec: EnvSpec,
    quantizer: CartpoleQuantizer,
    physical: PhysicalState,
    steps: usize,
    done: bool,
}

pub fn make_cartpole(quantizer: CartpoleQuantizer) -> Result<Cartpole> {
    quantizer.validate()?;
    let spec = EnvSpec::new(quantizer.num_states(), 2, "cartpole")?;
    Ok(Cartpole {
        spec,
        quantizer,
        physical: PhysicalState::default(),
        steps: 0,
        done: false,
    })
}

impl Cartpole {
    pub fn quantizer(&self) -> &CartpoleQuantizer {
        &self.quantizer
    }

    pub fn physical(&self) -> PhysicalState {
        self.physical
    }

    /// Places the cart at an arbitrary physical state as a fresh episode.
    pub fn set_physical(&mut self, s: PhysicalState) -> StateId {
        self.physical = s;
        self.steps = 0;
        self.done = false;
        self.quantizer.quantize(&s)
    }

    pub fn current_state(&self) -> StateId {
        self.quantizer.quantize(&self.physical)
    }
}

impl Environment for Cartpole {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, rng: &mut Rng) -> StateId {
        let mut draw = || uniform_range(rng, -0.05, 0.05);
        let s = PhysicalState {
            x: draw(),
            x_dot: draw(),
            theta: draw(),
            theta_dot: draw(),
        };
        self.set_physical(s)
    }

    fn step(&mut self, state: StateId, action: ActionId, _rng: &mut Rng) -> Result<Step> {
        self.spec.check_state(state)?;
        if self.done {
            return Err(Error::TerminalStep { state });
        }
        let current = self.current_state();
        if state != current {
            return Err(Error::StateMismatch {
                given: state,
                current,
            });
        }
        if action > 1 {
            return Err(Error::IllegalAction { state, action });
        }
        self.physical = self.physical.advance(action);
        self.steps += 1;
        let terminal = self.physical.failed();
        self.done = terminal;
        let truncated = !terminal && self.steps >= STEP_CAP;
        Ok(Step {
            transition: Transition {
                state,
                action,
                reward: 1.0,
                next_state: self.current_state(),
                terminal,
            },
            truncated,
        })
    }

    fn reward(&self, _state: StateId, _action: ActionId) -> f64 {
        1.0
    }

    fn max_episode_steps(&self) -> Option<usize> {
        Some(STEP_CAP)
    }

    fn steps_taken(&self) -> usize {
        self.steps
    }

    fn observation(&self) -> Option<Vec<f64>> {
        Some(self.physical.as_array().to_vec())
    }

    fn codec(&self) -> CodecDoc {
        let q = &self.quantizer;
        CodecDoc {
            name: format!(
                "cartpole-v1(bins={}x{}x{}x{})",
                q.bins[0], q.bins[1], q.bins[2], q.bins[3]
            ),
            description: format!(
                "id = ((bx*{}+bxdot)*{}+btheta)*{}+bthetadot; equal-width bins after clipping x to [{}, {}], x_dot to [{}, {}], theta (rad) to [{:.6}, {:.6}], theta_dot to [{}, {}]; actions 0=left 1=right",
                q.bins[1], q.bins[2], q.bins[3],
                q.ranges[0].0, q.ranges[0].1, q.ranges[1].0, q.ranges[1].1,
                q.ranges[2].0, q.ranges[2].1, q.ranges[3].0, q.ranges[3].1,
            ),
        }
    }

    fn describe_state(&self, state: StateId) -> String {
        let b = self.quantizer.decode_bins(state);
        format!("x{}:xd{}:th{}:thd{}", b[0], b[1], b[2], b[3])
    }

    /// Rows enumerate `(x, x_dot)` bins, columns `(theta, theta_dot)` bins.
    fn grid_layout(&self) -> Option<GridLayout> {
        let q = &self.quantizer;
        let rows = q.bins[0] * q.bins[1];
        let cols = q.bins[2] * q.bins[3];
        let cells = (0..self.spec.num_states)
            .map(|id| {
                let b = q.decode_bins(id);
                Some((b[0] * q.bins[1] + b[1], b[2] * q.bins[3] + b[3]))
            })
            .collect();
        Some(GridLayout {
            rows,
            cols,
            row_labels: (0..rows)
                .map(|r| format!("x{}:xd{}", r / q.bins[1], r % q.bins[1]))
                .collect(),
            col_labels: (0..cols)
                .map(|c| format!("th{}:thd{}", c / q.bins[3], c % q.bins[3]))
                .collect(),
            cells,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn default_quantizer_has_162_states() {
        let q = CartpoleQuantizer::default();
        assert_eq!(q.num_states(), 162);
        assert_eq!(q.quantize(&PhysicalState::default()), 82);
    }

    #[test]
    fn bins_round_trip() {
        let q = CartpoleQuantizer::default();
        for id in 0..q.num_states() {
            assert_eq!(q.encode_bins(q.decode_bins(id)), id);
        }
    }

    #[test]
    fn out_of_range_values_clip_to_edge_bins() {
        let q = CartpoleQuantizer::default();
        assert_eq!(q.bin(1, -100.0), 0);
        assert_eq!(q.bin(1, 100.0), 2);
        assert_eq!(q.bin(1, 3.0), 2);
        assert_eq!(q.bin(2, f64::NAN), 0);
    }

    #[test]
    fn crossing_the_track_edge_terminates() {
        let mut env = make_cartpole(CartpoleQuantizer::default()).unwrap();
        let mut rng = seeded(0);
        let s = env.set_physical(PhysicalState {
            x: 2.399,
            x_dot: 1.0,
            theta: 0.0,
            theta_dot: 0.0,
        });
        let step = env.step(s, 1, &mut rng).unwrap();
        assert!(step.transition.terminal);
        assert!(!step.truncated);
        assert!(env.step(step.transition.next_state, 1, &mut rng).is_err());
    }

    #[test]
    fn dynamics_are_deterministic() {
        let mut a = make_cartpole(CartpoleQuantizer::default()).unwrap();
        let mut b = a.clone();
        let mut rng = seeded(0);
        let s = a.set_physical(PhysicalState::default());
        b.set_physical(PhysicalState::default());
        for action in [0, 1, 1, 0, 1] {
            let ta = a.step(a.current_state(), action, &mut rng).unwrap();
            let tb = b.step(b.current_state(), action, &mut rng).unwrap();
            assert_eq!(ta, tb);
        }
        assert_eq!(s, 82);
    }

    #[test]
    fn mismatched_state_is_rejected() {
        let mut env = make_cartpole(CartpoleQuantizer::default()).unwrap();
        let mut rng = seeded(0);
        let s = env.reset(&mut rng);
        assert!(matches!(
            env.step((s + 1) % 162, 0, &mut rng),
            Err(Error::StateMismatch { .. })
        ));
    }
}
