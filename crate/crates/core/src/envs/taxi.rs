//! The 5x5 taxi domain.
//!
//! ```text
//! +---------+
//! |R: | : :G|
//! | : | : : |
//! | : : : : |
//! | | : | : |
//! |Y| : |B: |
//! +---------+
//! ```
//!
//! Codec: `id = ((row * 5 + col) * 5 + passenger) * 4 + destination` where
//! passenger is `0..4` for R, G, Y, B and `4` for in-taxi, and destination is
//! `0..4`. Actions: `0 south, 1 north, 2 east, 3 west, 4 pickup, 5 dropoff`.
//! Each step costs 1, a successful dropoff pays 20 and ends the episode, a
//! pickup or dropoff that is not allowed costs 10. Moving into a wall leaves
//! the taxi where it is.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{ActionId, CodecDoc, EnvSpec, Environment, GridLayout, StateId, Step, Transition};
use crate::rng::{below, Rng};

pub const SOUTH: ActionId = 0;
pub const NORTH: ActionId = 1;
pub const EAST: ActionId = 2;
pub const WEST: ActionId = 3;
pub const PICKUP: ActionId = 4;
pub const DROPOFF: ActionId = 5;
pub const NUM_STATES: usize = 500;
pub const STEP_CAP: usize = 200;

/// Landmark cells `R, G, Y, B`.
pub const LANDMARKS: [(u8, u8); 4] = [(0, 0), (0, 4), (4, 0), (4, 3)];
pub const LANDMARK_NAMES: [&str; 4] = ["R", "G", "Y", "B"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PassengerLoc {
    At(u8),
    InTaxi,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TaxiState {
    pub taxi_row: u8,
    pub taxi_col: u8,
    pub passenger: PassengerLoc,
    pub destination: u8,
}

impl TaxiState {
    pub fn encode(&self) -> StateId {
        let p = match self.passenger {
            PassengerLoc::At(i) => i as usize,
            PassengerLoc::InTaxi => 4,
        };
        ((self.taxi_row as usize * 5 + self.taxi_col as usize) * 5 + p) * 4
            + self.destination as usize
    }

    pub fn decode(id: StateId) -> Option<TaxiState> {
        if id >= NUM_STATES {
            return None;
        }
        let destination = (id % 4) as u8;
        let rest = id / 4;
        let p = (rest % 5) as u8;
        let cell = rest / 5;
        Some(TaxiState {
            taxi_row: (cell / 5) as u8,
            taxi_col: (cell % 5) as u8,
            passenger: if p == 4 {
                PassengerLoc::InTaxi
            } else {
                PassengerLoc::At(p)
            },
            destination,
        })
    }

    fn cell(&self) -> (u8, u8) {
        (self.taxi_row, self.taxi_col)
    }
}

/// Wall between column `col` and `col + 1` in `row`.
pub fn wall_east_of(row: u8, col: u8) -> bool {
    matches!((row, col), (0 | 1, 1) | (3 | 4, 0) | (3 | 4, 2))
}

/// Deterministic successor, reward and success flag.
pub fn dynamics(s: TaxiState, action: ActionId) -> (TaxiState, f64, bool) {
    let mut next = s;
    let mut reward = -1.0;
    let mut done = false;
    match action {
        SOUTH => next.taxi_row = (s.taxi_row + 1).min(4),
        NORTH => next.taxi_row = s.taxi_row.saturating_sub(1),
        EAST => {
            if s.taxi_col < 4 && !wall_east_of(s.taxi_row, s.taxi_col) {
                next.taxi_col += 1;
            }
        }
        WEST => {
            if s.taxi_col > 0 && !wall_east_of(s.taxi_row, s.taxi_col - 1) {
                next.taxi_col -= 1;
            }
        }
        PICKUP => match s.passenger {
            PassengerLoc::At(i) if LANDMARKS[i as usize] == s.cell() => {
                next.passenger = PassengerLoc::InTaxi;
            }
            _ => reward = -10.0,
        },
        DROPOFF => {
            let landmark = LANDMARKS.iter().position(|&l| l == s.cell());
            match (s.passenger, landmark) {
                (PassengerLoc::InTaxi, Some(i)) if i as u8 == s.destination => {
                    next.passenger = PassengerLoc::At(s.destination);
                    reward = 20.0;
                    done = true;
                }
                (PassengerLoc::InTaxi, Some(i)) => next.passenger = PassengerLoc::At(i as u8),
                _ => reward = -10.0,
            }
        }
        _ => unreachable!("action checked by caller"),
    }
    (next, reward, done)
}

#[derive(Clone, Debug)]
pub struct Taxi {
    spec: EnvSpec,
    steps: usize,
    done: bool,
}

pub fn make_taxi() -> Taxi {
    Taxi {
        spec: EnvSpec::new(NUM_STATES, 6, "taxi").expect("static spec"),
        steps: 0,
        done: false,
    }
}

impl Taxi {
    /// Starts an episode from a chosen state instead of a random one.
    pub fn reset_to(&mut self, state: StateId) -> Result<StateId> {
        self.spec.check_state(state)?;
        self.steps = 0;
        self.done = false;
        Ok(state)
    }
}

impl Environment for Taxi {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, rng: &mut Rng) -> StateId {
        self.steps = 0;
        self.done = false;
        let taxi_row = below(rng, 5) as u8;
        let taxi_col = below(rng, 5) as u8;
        let p = below(rng, 4) as u8;
        let mut destination = below(rng, 3) as u8;
        if destination >= p {
            destination += 1;
        }
        TaxiState {
            taxi_row,
            taxi_col,
            passenger: PassengerLoc::At(p),
            destination,
        }
        .encode()
    }

    fn step(&mut self, state: StateId, action: ActionId, _rng: &mut Rng) -> Result<Step> {
        let s = TaxiState::decode(state).ok_or(Error::InvalidState {
            state,
            num_states: NUM_STATES,
        })?;
        if self.done {
            return Err(Error::TerminalStep { state });
        }
        if action > DROPOFF {
            return Err(Error::IllegalAction { state, action });
        }
        let (next, reward, terminal) = dynamics(s, action);
        self.steps += 1;
        self.done = terminal;
        Ok(Step {
            transition: Transition {
                state,
                action,
                reward,
                next_state: next.encode(),
                terminal,
            },
            truncated: !terminal && self.steps >= STEP_CAP,
        })
    }

    fn reward(&self, state: StateId, action: ActionId) -> f64 {
        match TaxiState::decode(state) {
            Some(s) if action <= DROPOFF => dynamics(s, action).1,
            _ => 0.0,
        }
    }

    fn max_episode_steps(&self) -> Option<usize> {
        Some(STEP_CAP)
    }

    fn steps_taken(&self) -> usize {
        self.steps
    }

    fn codec(&self) -> CodecDoc {
        CodecDoc {
            name: "taxi-v1".into(),
            description: "id = ((row*5+col)*5+passenger)*4+destination; passenger 0..3 = R(0,0) G(0,4) Y(4,0) B(4,3), 4 = in taxi; \
                          actions 0=south 1=north 2=east 3=west 4=pickup 5=dropoff"
                .into(),
        }
    }

    fn describe_state(&self, state: StateId) -> String {
        match TaxiState::decode(state) {
            Some(s) => {
                let p = match s.passenger {
                    PassengerLoc::At(i) => LANDMARK_NAMES[i as usize],
                    PassengerLoc::InTaxi => "taxi",
                };
                format!(
                    "taxi=({},{}),passenger={p},dest={}",
                    s.taxi_row, s.taxi_col, LANDMARK_NAMES[s.destination as usize]
                )
            }
            None => format!("invalid({state})"),
        }
    }

    /// The 5x5 map; every state is drawn at the taxi's cell.
    fn grid_layout(&self) -> Option<GridLayout> {
        let cells = (0..NUM_STATES)
            .map(|id| TaxiState::decode(id).map(|s| (s.taxi_row as usize, s.taxi_col as usize)))
            .collect();
        Some(GridLayout {
            rows: 5,
            cols: 5,
            row_labels: (0..5).map(|r| r.to_string()).collect(),
            col_labels: (0..5).map(|c| c.to_string()).collect(),
            cells,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn codec_round_trips_all_states() {
        for id in 0..NUM_STATES {
            assert_eq!(TaxiState::decode(id).unwrap().encode(), id);
        }
    }

    #[test]
    fn walls_bounce_back() {
        // (0,2) moving west hits the wall between columns 1 and 2
        let s = TaxiState {
            taxi_row: 0,
            taxi_col: 2,
            passenger: PassengerLoc::At(0),
            destination: 1,
        };
        let (next, r, done) = dynamics(s, WEST);
        assert_eq!((next, r, done), (s, -1.0, false));
        let (next, _, _) = dynamics(s, EAST);
        assert_eq!(next.taxi_col, 3);
        let corner = TaxiState { taxi_col: 0, ..s };
        assert_eq!(dynamics(corner, WEST).0, corner);
        let s4 = TaxiState {
            taxi_row: 4,
            taxi_col: 1,
            ..s
        };
        assert_eq!(dynamics(s4, WEST).0, s4);
        assert_eq!(dynamics(s4, EAST).0.taxi_col, 2);
        let s42 = TaxiState { taxi_col: 2, ..s4 };
        assert_eq!(dynamics(s42, EAST).0, s42);
    }

    #[test]
    fn illegal_pickup_and_dropoff_cost_ten() {
        let s = TaxiState {
            taxi_row: 2,
            taxi_col: 2,
            passenger: PassengerLoc::At(0),
            destination: 1,
        };
        assert_eq!(dynamics(s, PICKUP), (s, -10.0, false));
        assert_eq!(dynamics(s, DROPOFF), (s, -10.0, false));
        let riding = TaxiState {
            passenger: PassengerLoc::InTaxi,
            ..s
        };
        assert_eq!(dynamics(riding, DROPOFF), (riding, -10.0, false));
    }

    #[test]
    fn pickup_then_dropoff_at_destination() {
        let s = TaxiState {
            taxi_row: 0,
            taxi_col: 0,
            passenger: PassengerLoc::At(0),
            destination: 2,
        };
        let (s2, r, _) = dynamics(s, PICKUP);
        assert_eq!((s2.passenger, r), (PassengerLoc::InTaxi, -1.0));
        let at_y = TaxiState {
            taxi_row: 4,
            taxi_col: 0,
            ..s2
        };
        let (s3, r, done) = dynamics(at_y, DROPOFF);
        assert_eq!((s3.passenger, r, done), (PassengerLoc::At(2), 20.0, true));
        // dropping at another landmark leaves the passenger there
        let at_g = TaxiState {
            taxi_row: 0,
            taxi_col: 4,
            ..s2
        };
        let (s4, r, done) = dynamics(at_g, DROPOFF);
        assert_eq!((s4.passenger, r, done), (PassengerLoc::At(1), -1.0, false));
    }

    #[test]
    fn reset_is_seed_deterministic_and_valid() {
        let mut env = make_taxi();
        let a: Vec<_> = {
            let mut rng = seeded(9);
            (0..50).map(|_| env.reset(&mut rng)).collect()
        };
        let b: Vec<_> = {
            let mut rng = seeded(9);
            (0..50).map(|_| env.reset(&mut rng)).collect()
        };
        assert_eq!(a, b);
        for id in a {
            let s = TaxiState::decode(id).unwrap();
            assert_ne!(s.passenger, PassengerLoc::At(s.destination));
            assert_ne!(s.passenger, PassengerLoc::InTaxi);
        }
    }

    #[test]
    fn step_cap_truncates() {
        let mut env = make_taxi();
        let mut rng = seeded(0);
        let mut s = env.reset_to(0).unwrap();
        for i in 0..STEP_CAP {
            let step = env.step(s, NORTH, &mut rng).unwrap();
            assert_eq!(step.truncated, i + 1 == STEP_CAP);
            s = step.transition.next_state;
        }
    }
}
