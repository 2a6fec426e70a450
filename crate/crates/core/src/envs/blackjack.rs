//! Simplified blackjack with an infinite shoe, hit/stick only, no naturals.
//!
//! Rewards are moved onto four outcome states so that the reward is a
//! deterministic function of `(state, action)`: the stochastic part of the
//! game decides which outcome state is reached, and the single `resolve`
//! action of that state pays out.
//!
//! Codec (285 states):
//!
//! | ids       | meaning                                                    |
//! |-----------|------------------------------------------------------------|
//! | 0..=179   | no usable ace: `(player_sum - 4) * 10 + (dealer_card - 1)` |
//! | 180..=279 | usable ace: `180 + (player_sum - 12) * 10 + (dealer_card - 1)` |
//! | 280       | hit and bust                                               |
//! | 281       | stuck and won                                              |
//! | 282       | stuck and drew                                             |
//! | 283       | stuck and lost                                             |
//! | 284       | end (absorbing)                                            |
//!
//! Actions: `0 = stick`, `1 = hit` in playing states; outcome states allow
//! only `0 = resolve`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{
    ActionId, ActionSet, CodecDoc, EnvSpec, Environment, GridLayout, StateId, Step, Transition,
};
use crate::rng::{below, Rng};

pub const STICK: ActionId = 0;
pub const HIT: ActionId = 1;
pub const RESOLVE: ActionId = 0;

const NO_ACE_STATES: usize = 18 * 10;
const ACE_STATES: usize = 10 * 10;
pub const NUM_PLAYING: usize = NO_ACE_STATES + ACE_STATES;
pub const HIT_BUST: StateId = NUM_PLAYING;
pub const STUCK_WON: StateId = NUM_PLAYING + 1;
pub const STUCK_DREW: StateId = NUM_PLAYING + 2;
pub const STUCK_LOST: StateId = NUM_PLAYING + 3;
pub const END: StateId = NUM_PLAYING + 4;
pub const NUM_STATES: usize = NUM_PLAYING + 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Outcome {
    HitBust,
    StuckWon,
    StuckDrew,
    StuckLost,
}

impl Outcome {
    pub const ALL: [Outcome; 4] = [
        Outcome::HitBust,
        Outcome::StuckWon,
        Outcome::StuckDrew,
        Outcome::StuckLost,
    ];

    pub fn reward(self) -> f64 {
        match self {
            Outcome::StuckWon => 1.0,
            Outcome::StuckDrew => 0.0,
            Outcome::HitBust | Outcome::StuckLost => -1.0,
        }
    }

    pub fn state_id(self) -> StateId {
        match self {
            Outcome::HitBust => HIT_BUST,
            Outcome::StuckWon => STUCK_WON,
            Outcome::StuckDrew => STUCK_DREW,
            Outcome::StuckLost => STUCK_LOST,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlackjackState {
    Playing {
        player_sum: u8,
        dealer_card: u8,
        usable_ace: bool,
    },
    Outcome(Outcome),
    End,
}

impl BlackjackState {
    pub fn encode(self) -> Option<StateId> {
        match self {
            BlackjackState::Playing {
                player_sum,
                dealer_card,
                usable_ace,
            } => {
                if !(1..=10).contains(&dealer_card) {
                    return None;
                }
                let d = (dealer_card - 1) as usize;
                match (usable_ace, player_sum) {
                    (false, 4..=21) => Some((player_sum as usize - 4) * 10 + d),
                    (true, 12..=21) => Some(NO_ACE_STATES + (player_sum as usize - 12) * 10 + d),
                    _ => None,
                }
            }
            BlackjackState::Outcome(o) => Some(o.state_id()),
            BlackjackState::End => Some(END),
        }
    }

    pub fn decode(id: StateId) -> Option<Self> {
        match id {
            0..NO_ACE_STATES => Some(BlackjackState::Playing {
                player_sum: (id / 10 + 4) as u8,
                dealer_card: (id % 10 + 1) as u8,
                usable_ace: false,
            }),
            NO_ACE_STATES..NUM_PLAYING => {
                let k = id - NO_ACE_STATES;
                Some(BlackjackState::Playing {
                    player_sum: (k / 10 + 12) as u8,
                    dealer_card: (k % 10 + 1) as u8,
                    usable_ace: true,
                })
            }
            HIT_BUST => Some(BlackjackState::Outcome(Outcome::HitBust)),
            STUCK_WON => Some(BlackjackState::Outcome(Outcome::StuckWon)),
            STUCK_DREW => Some(BlackjackState::Outcome(Outcome::StuckDrew)),
            STUCK_LOST => Some(BlackjackState::Outcome(Outcome::StuckLost)),
            END => Some(BlackjackState::End),
            _ => None,
        }
    }
}

/// Probability of drawing a card of value `card` (ace = 1, faces = 10).
pub fn card_probability(card: u8) -> f64 {
    match card {
        1..=9 => 1.0 / 13.0,
        10 => 4.0 / 13.0,
        _ => 0.0,
    }
}

pub fn draw_card(rng: &mut Rng) -> u8 {
    (below(rng, 13) + 1).min(10) as u8
}

/// Adds a card to a hand `(sum, usable_ace)`, counting an ace as 11 when it
/// fits and demoting a usable ace on overflow.
pub fn add_card(sum: u8, usable_ace: bool, card: u8) -> (u8, bool) {
    let mut sum = sum + card;
    let mut usable = usable_ace;
    if card == 1 && !usable && sum + 10 <= 21 {
        sum += 10;
        usable = true;
    }
    if sum > 21 && usable {
        sum -= 10;
        usable = false;
    }
    (sum, usable)
}

/// Dealer's final total: hits below 17, stands on any 17 including soft.
pub fn dealer_play(up_card: u8, rng: &mut Rng) -> u8 {
    let (mut sum, mut usable) = add_card(0, false, up_card);
    loop {
        let (s, u) = add_card(sum, usable, draw_card(rng));
        sum = s;
        usable = u;
        if sum >= 17 {
            return sum;
        }
    }
}

pub fn settle(player_sum: u8, dealer_sum: u8) -> Outcome {
    if dealer_sum > 21 || player_sum > dealer_sum {
        Outcome::StuckWon
    } else if player_sum == dealer_sum {
        Outcome::StuckDrew
    } else {
        Outcome::StuckLost
    }
}

#[derive(Clone, Debug)]
pub struct Blackjack {
    spec: EnvSpec,
    steps: usize,
    done: bool,
}

pub fn make_blackjack() -> Blackjack {
    Blackjack {
        spec: EnvSpec::new(NUM_STATES, 2, "blackjack").expect("static spec"),
        steps: 0,
        done: false,
    }
}

impl Blackjack {
    fn decode_checked(&self, state: StateId) -> Result<BlackjackState> {
        BlackjackState::decode(state).ok_or(Error::InvalidState {
            state,
            num_states: NUM_STATES,
        })
    }

    pub fn is_outcome(state: StateId) -> bool {
        (HIT_BUST..=STUCK_LOST).contains(&state)
    }
}

impl Environment for Blackjack {
    fn spec(&self) -> &EnvSpec {
        &self.spec
    }

    fn reset(&mut self, rng: &mut Rng) -> StateId {
        self.steps = 0;
        self.done = false;
        let (s, u) = add_card(0, false, draw_card(rng));
        let (player_sum, usable_ace) = add_card(s, u, draw_card(rng));
        let dealer_card = draw_card(rng);
        BlackjackState::Playing {
            player_sum,
            dealer_card,
            usable_ace,
        }
        .encode()
        .expect("two-card hands are always encodable")
    }

    fn step(&mut self, state: StateId, action: ActionId, rng: &mut Rng) -> Result<Step> {
        let decoded = self.decode_checked(state)?;
        if self.done || decoded == BlackjackState::End {
            return Err(Error::TerminalStep { state });
        }
        if !self.legal_actions(state).contains(action) {
            return Err(Error::IllegalAction { state, action });
        }
        let (next, terminal) = match decoded {
            BlackjackState::Playing {
                player_sum,
                dealer_card,
                usable_ace,
            } => {
                if action == HIT {
                    let (sum, usable) = add_card(player_sum, usable_ace, draw_card(rng));
                    if sum > 21 {
                        (HIT_BUST, false)
                    } else {
                        let next = BlackjackState::Playing {
                            player_sum: sum,
                            dealer_card,
                            usable_ace: usable,
                        };
                        (next.encode().expect("sum in range"), false)
                    }
                } else {
                    let dealer = dealer_play(dealer_card, rng);
                    (settle(player_sum, dealer).state_id(), false)
                }
            }
            BlackjackState::Outcome(_) => (END, true),
            BlackjackState::End => unreachable!(),
        };
        self.steps += 1;
        self.done = terminal;
        Ok(Step {
            transition: Transition {
                state,
                action,
                reward: self.reward(state, action),
                next_state: next,
                terminal,
            },
            truncated: false,
        })
    }

    fn legal_actions(&self, state: StateId) -> ActionSet {
        if state < NUM_PLAYING {
            ActionSet::all(2)
        } else if Self::is_outcome(state) {
            ActionSet::only(RESOLVE)
        } else {
            ActionSet::from_bits(0)
        }
    }

    fn reward(&self, state: StateId, action: ActionId) -> f64 {
        match BlackjackState::decode(state) {
            Some(BlackjackState::Outcome(o)) if action == RESOLVE => o.reward(),
            _ => 0.0,
        }
    }

    fn is_absorbing(&self, state: StateId) -> bool {
        state == END
    }

    fn steps_taken(&self) -> usize {
        self.steps
    }

    fn codec(&self) -> CodecDoc {
        CodecDoc {
            name: "blackjack-v1".into(),
            description: "0..=179: no usable ace, (sum-4)*10+(dealer-1), sum 4..=21; \
                          180..=279: usable ace, 180+(sum-12)*10+(dealer-1), sum 12..=21; \
                          280 hit-bust, 281 stuck-won, 282 stuck-drew, 283 stuck-lost, 284 end; \
                          actions 0=stick 1=hit, outcome states allow only 0=resolve"
                .into(),
        }
    }

    fn describe_state(&self, state: StateId) -> String {
        match BlackjackState::decode(state) {
            Some(BlackjackState::Playing {
                player_sum,
                dealer_card,
                usable_ace,
            }) => format!(
                "sum={player_sum},dealer={dealer_card},ace={}",
                if usable_ace { "yes" } else { "no" }
            ),
            Some(BlackjackState::Outcome(o)) => format!("{o:?}"),
            Some(BlackjackState::End) => "end".into(),
            None => format!("invalid({state})"),
        }
    }

    fn outcome_states(&self) -> Vec<StateId> {
        Outcome::ALL.iter().map(|o| o.state_id()).collect()
    }

    /// Player sums 4..=21 as rows, dealer card as columns; the no-ace plane
    /// fills columns 0..10 and the usable-ace plane columns 10..20. The four
    /// outcome states occupy the first cells of an extra bottom row.
    fn grid_layout(&self) -> Option<GridLayout> {
        let mut cells = vec![None; NUM_STATES];
        for (id, cell) in cells.iter_mut().enumerate().take(NUM_PLAYING) {
            if let Some(BlackjackState::Playing {
                player_sum,
                dealer_card,
                usable_ace,
            }) = BlackjackState::decode(id)
            {
                let col = (dealer_card - 1) as usize + if usable_ace { 10 } else { 0 };
                *cell = Some(((player_sum - 4) as usize, col));
            }
        }
        for (k, o) in Outcome::ALL.iter().enumerate() {
            cells[o.state_id()] = Some((18, k));
        }
        let mut row_labels: Vec<String> = (4..=21).map(|s| s.to_string()).collect();
        row_labels.push("outcome".into());
        let col_labels = (0..20)
            .map(|c| {
                let d = c % 10 + 1;
                if c < 10 {
                    format!("{d}")
                } else {
                    format!("{d}*")
                }
            })
            .collect();
        Some(GridLayout {
            rows: 19,
            cols: 20,
            row_labels,
            col_labels,
            cells,
        })
    }

    fn is_displayable(&self, state: StateId) -> bool {
        state < NUM_PLAYING
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn codec_round_trips() {
        for id in 0..NUM_STATES {
            let s = BlackjackState::decode(id).unwrap();
            assert_eq!(s.encode(), Some(id));
        }
        assert!(BlackjackState::decode(NUM_STATES).is_none());
    }

    #[test]
    fn reset_lands_in_playing_range() {
        let mut env = make_blackjack();
        let mut rng = seeded(5);
        for _ in 0..2000 {
            let s = env.reset(&mut rng);
            match BlackjackState::decode(s).unwrap() {
                BlackjackState::Playing { player_sum, .. } => {
                    assert!((4..=21).contains(&player_sum))
                }
                other => panic!("reset produced {other:?}"),
            }
        }
    }

    #[test]
    fn resolve_pays_out_and_ends() {
        let mut env = make_blackjack();
        let mut rng = seeded(0);
        let t = env.step(STUCK_WON, RESOLVE, &mut rng).unwrap().transition;
        assert_eq!((t.reward, t.next_state, t.terminal), (1.0, END, true));
        env.reset(&mut rng);
        assert!(matches!(
            env.step(HIT_BUST, HIT, &mut rng),
            Err(Error::IllegalAction { .. })
        ));
        assert_eq!(env.reward(HIT_BUST, RESOLVE), -1.0);
        assert_eq!(env.reward(STUCK_DREW, RESOLVE), 0.0);
        assert_eq!(env.reward(STUCK_LOST, RESOLVE), -1.0);
        assert!(matches!(
            env.step(END, 0, &mut rng),
            Err(Error::TerminalStep { .. })
        ));
    }

    #[test]
    fn hitting_hard_21_always_busts() {
        for card in 1..=10 {
            let (sum, _) = add_card(21, false, card);
            assert!(sum > 21);
        }
        // a usable ace demotes instead of busting
        assert_eq!(add_card(21, true, 10), (21, false));
    }

    #[test]
    fn bust_probability_from_hard_12() {
        let p: f64 = (1..=10u8)
            .filter(|&c| add_card(12, false, c).0 > 21)
            .map(card_probability)
            .sum();
        assert!((p - 4.0 / 13.0).abs() < 1e-15);
    }

    #[test]
    fn card_distribution_sums_to_one() {
        let total: f64 = (1..=10).map(card_probability).sum();
        assert!((total - 1.0).abs() < 1e-15);
        let mut rng = seeded(11);
        let n = 130_000;
        let tens = (0..n).filter(|_| draw_card(&mut rng) == 10).count();
        let p = tens as f64 / n as f64;
        assert!((p - 4.0 / 13.0).abs() < 0.006);
    }

    #[test]
    fn dealer_stands_on_soft_17() {
        assert_eq!(add_card(6, false, 1), (17, true));
        assert_eq!(settle(20, 22), Outcome::StuckWon);
        assert_eq!(settle(18, 18), Outcome::StuckDrew);
        assert_eq!(settle(17, 19), Outcome::StuckLost);
    }
}
