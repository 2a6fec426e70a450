//! Explanations read off belief maps.
//!
//! All functions are pure reads of their inputs.

use serde::{Deserialize, Serialize};

use crate::belief::{marginal_state_visitation, BeliefTensor, RewardMap};
use crate::error::{Error, Result};
use crate::mdp::{ActionId, StateId};
use crate::tabular::QTable;

/// What changes in the expected future when `best_action` is taken instead
/// of `alt_action`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContrastiveExplanation {
    pub state: StateId,
    pub best_action: ActionId,
    pub alt_action: ActionId,
    /// `H(s, a0) - H(s, a1)` over `(s', a')`, row-major.
    pub g: Vec<f64>,
    pub q0: f64,
    pub q1: f64,
    /// `vec(g) . vec(R)`; equals `q0 - q1` for consistent maps.
    pub advantage_check: f64,
}

impl ContrastiveExplanation {
    pub fn advantage_residual(&self) -> f64 {
        (self.advantage_check - (self.q0 - self.q1)).abs()
    }
}

fn check_pair_args(h: &BeliefTensor, state: StateId, a0: ActionId, a1: ActionId) -> Result<()> {
    if a0 == a1 {
        return Err(Error::InvalidArgument(format!(
            "contrast needs two different actions, got {a0} twice"
        )));
    }
    if state >= h.num_states() {
        return Err(Error::InvalidState {
            state,
            num_states: h.num_states(),
        });
    }
    for a in [a0, a1] {
        if a >= h.num_actions() {
            return Err(Error::IllegalAction { state, action: a });
        }
    }
    Ok(())
}

pub fn contrastive(
    h: &BeliefTensor,
    q: &QTable,
    r: &RewardMap,
    state: StateId,
    a0: ActionId,
    a1: ActionId,
) -> Result<ContrastiveExplanation> {
    check_pair_args(h, state, a0, a1)?;
    if q.shape() != (h.num_states(), h.num_actions())
        || r.values().len() != h.row_len()
    {
        return Err(Error::shape(
            format!("{}x{}", h.num_states(), h.num_actions()),
            format!("q {:?}, r {}", q.shape(), r.values().len()),
        ));
    }
    let g: Vec<f64> = h
        .slice(state, a0)
        .iter()
        .zip(h.slice(state, a1))
        .map(|(x, y)| x - y)
        .collect();
    let advantage_check = g.iter().zip(r.values()).map(|(g, r)| g * r).sum();
    Ok(ContrastiveExplanation {
        state,
        best_action: a0,
        alt_action: a1,
        g,
        q0: q.get(state, a0),
        q1: q.get(state, a1),
        advantage_check,
    })
}

/// The best and second-best legal actions by the Q row, ties to the lowest
/// index. `None` when fewer than two actions are legal.
pub fn default_contrast_pair(q: &QTable, state: StateId) -> Option<(ActionId, ActionId)> {
    let row = q.row(state);
    let mut ranked: Vec<ActionId> = q.legal(state).iter().collect();
    // stable sort keeps lower indices first among equal values
    ranked.sort_by(|&x, &y| row[y].total_cmp(&row[x]));
    match ranked.as_slice() {
        [a0, a1, ..] => Some((*a0, *a1)),
        _ => None,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignedParts {
    /// Where `a0` leads more than `a1`: the positive part of `g`.
    pub only_a0: Vec<f64>,
    /// Where `a1` leads more than `a0`: the positive part of `-g`.
    pub only_a1: Vec<f64>,
}

pub fn signed_parts(g: &[f64]) -> SignedParts {
    SignedParts {
        only_a0: g.iter().map(|&x| x.max(0.0)).collect(),
        only_a1: g.iter().map(|&x| (-x).max(0.0)).collect(),
    }
}

/// Elementwise `min(H(s, a0), H(s, a1))`: the futures both actions share.
pub fn intersection(h: &BeliefTensor, state: StateId, a0: ActionId, a1: ActionId) -> Result<Vec<f64>> {
    check_pair_args(h, state, a0, a1)?;
    Ok(h.slice(state, a0)
        .iter()
        .zip(h.slice(state, a1))
        .map(|(x, y)| x.min(*y))
        .collect())
}

/// State-marginal belief of `(s, a)` restricted to `outcome_states`, in the
/// given order.
pub fn outcome_projection(
    h: &BeliefTensor,
    state: StateId,
    action: ActionId,
    outcome_states: &[StateId],
) -> Result<Vec<f64>> {
    let marginal = marginal_state_visitation(h, state, action)?;
    outcome_states
        .iter()
        .map(|&o| {
            marginal.get(o).copied().ok_or(Error::InvalidState {
                state: o,
                num_states: marginal.len(),
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisplayScaled {
    pub values: Vec<f64>,
    /// Extremes of the input before scaling.
    pub min: f64,
    pub max: f64,
}

/// Affine min-max scaling to `[0, 1]`; constant input maps to zeros.
pub fn normalize_for_display(t: &[f64]) -> DisplayScaled {
    let min = t.iter().copied().fold(f64::INFINITY, f64::min);
    let max = t.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if t.is_empty() {
        return DisplayScaled {
            values: Vec::new(),
            min: 0.0,
            max: 0.0,
        };
    }
    let span = max - min;
    let values = if span > 0.0 {
        t.iter().map(|&x| (x - min) / span).collect()
    } else {
        vec![0.0; t.len()]
    };
    DisplayScaled { values, min, max }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::belief::RewardSource;
    use crate::tabular::InitMode;
    use proptest::prelude::*;

    #[test]
    fn same_action_rejected() {
        let h = BeliefTensor::zeros(2, 2, 1.0);
        let r = RewardMap::empty_proxy(2, 2);
        assert!(contrastive(&h, &QTable::zeros(2, 2), &r, 0, 1, 1).is_err());
        assert!(intersection(&h, 0, 0, 0).is_err());
        assert!(contrastive(&h, &QTable::zeros(2, 2), &r, 5, 0, 1).is_err());
    }

    #[test]
    fn zero_h_gives_zero_g() {
        let h = BeliefTensor::zeros(3, 2, 1.0);
        let r = RewardMap::empty_proxy(3, 2);
        let c = contrastive(&h, &QTable::zeros(3, 2), &r, 1, 0, 1).unwrap();
        assert!(c.g.iter().all(|&x| x == 0.0));
        assert_eq!(c.advantage_check, 0.0);
        assert_eq!(outcome_projection(&h, 0, 0, &[1, 2]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn signed_parts_of_nonnegative_g() {
        let parts = signed_parts(&[0.0, 1.0, 2.5]);
        assert!(parts.only_a1.iter().all(|&x| x == 0.0));
        assert_eq!(parts.only_a0, vec![0.0, 1.0, 2.5]);
    }

    #[test]
    fn intersection_cases() {
        let mut h = BeliefTensor::zeros(2, 2, 1.0);
        h.slice_mut(0, 0)[0] = 1.0;
        h.slice_mut(0, 1)[3] = 1.0;
        assert_eq!(intersection(&h, 0, 0, 1).unwrap(), vec![0.0; 4]);
        let same = [0.25, 0.5, 0.0, 1.0];
        h.slice_mut(1, 0).copy_from_slice(&same);
        h.slice_mut(1, 1).copy_from_slice(&same);
        assert_eq!(intersection(&h, 1, 0, 1).unwrap(), same.to_vec());
    }

    #[test]
    fn normalization_cases() {
        let c = normalize_for_display(&[3.0, 3.0, 3.0]);
        assert_eq!(c.values, vec![0.0; 3]);
        assert_eq!((c.min, c.max), (3.0, 3.0));
        let unit = [0.0, 0.25, 1.0];
        assert_eq!(normalize_for_display(&unit).values, unit.to_vec());
        let t = [-2.0, 5.0, 1.0, 4.0];
        let n = normalize_for_display(&t);
        let argmax = |v: &[f64]| {
            v.iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .unwrap()
                .0
        };
        assert_eq!(argmax(&n.values), argmax(&t));
        assert_eq!(n.values[0], 0.0);
    }

    #[test]
    fn contrast_pair_ranks_by_q_then_index() {
        let q = QTable::from_values(1, 3, vec![1.0, 2.0, 2.0]).unwrap();
        assert_eq!(default_contrast_pair(&q, 0), Some((1, 2)));
        let q = QTable::from_values(1, 3, vec![5.0, 2.0, 3.0]).unwrap();
        assert_eq!(default_contrast_pair(&q, 0), Some((0, 2)));
    }

    proptest! {
        #[test]
        fn decomposition_identities(seed in 0u64..10_000, s in 0usize..3, rs in proptest::collection::vec(-3.0f64..3.0, 6)) {
            let h = BeliefTensor::new(3, 2, 0.9, InitMode::Random { seed, scale: 1.0 });
            let r = RewardMap::from_parts(3, 2, rs, vec![true; 6], RewardSource::EmpiricalProxy).unwrap();
            let q = crate::belief::recover_q(&h, &r).unwrap();
            let c = contrastive(&h, &q, &r, s, 0, 1).unwrap();
            prop_assert!(c.advantage_residual() <= 1e-12);
            let parts = signed_parts(&c.g);
            for i in 0..c.g.len() {
                prop_assert_eq!(parts.only_a0[i] - parts.only_a1[i], c.g[i]);
            }
            let inter = intersection(&h, s, 0, 1).unwrap();
            for (i, v) in inter.iter().enumerate() {
                prop_assert!(*v <= h.slice(s, 0)[i] && *v <= h.slice(s, 1)[i]);
            }
        }
    }
}
