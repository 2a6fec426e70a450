use beliefmap::belief::{recover_q, BeliefTensor, RewardMap, RewardSource};
use beliefmap::deep::{
    recover_q_deep, Architecture, BeliefHead, DeepStepParams, InputEncoding, Network, TargetPlacement,
};
use beliefmap::mdp::ActionSet;
use beliefmap::rng::{stream, uniform_range};

const NS: usize = 5;
const NA: usize = 2;

fn params(head: BeliefHead) -> DeepStepParams {
    DeepStepParams {
        gamma: 0.9,
        huber_delta: 1.0,
        grad_clip: 1.0,
        q_input: InputEncoding::OneHotState,
        placement: TargetPlacement::Standard,
        head,
        num_states: NS,
        num_actions: NA,
    }
}

fn randoms(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = stream(seed, 0);
    (0..n).map(|_| uniform_range(&mut rng, -1.0, 1.0)).collect()
}

/// A bias-free single linear layer whose weight matrix is `w` (`[in, out]`,
/// row-major): on one-hot input `e_i` it outputs row `i` of `w`.
fn linear(inputs: usize, outputs: usize, w: &[f64]) -> Network {
    let mut net = Network::new(&Architecture::mlp(&[inputs, outputs]), 0).unwrap();
    let mut flat = w.to_vec();
    flat.extend(std::iter::repeat_n(0.0, outputs));
    net.set_flat_params(&flat).unwrap();
    net
}

fn reward() -> RewardMap {
    RewardMap::from_parts(NS, NA, randoms(NS * NA, 9), vec![true; NS * NA], RewardSource::EnvGroundTruth).unwrap()
}

fn samples() -> Vec<(usize, Option<Vec<f64>>, ActionSet)> {
    (0..NS).map(|s| (s, None, ActionSet::all(NA))).collect()
}

#[test]
fn linear_full_head_matches_the_tabular_product() {
    // H as a tabular tensor; the network row for state s is H(s, ., ., .).
    let h_values = randoms(NS * NA * NS * NA, 1);
    let h = BeliefTensor::from_values(NS, NA, 0.9, h_values.clone()).unwrap();
    let r = reward();
    let q_tab = recover_q(&h, &r).unwrap();
    let hnet = linear(NS, NA * NS * NA, &h_values);
    let qnet = linear(NS, NA, q_tab.values());

    let rep = recover_q_deep(&hnet, &qnet, &params(BeliefHead::Full), &r, &samples()).unwrap();
    assert_eq!(rep.pairs, NS * NA);
    for (i, (&qh, &q)) in rep.q_hat.iter().zip(&rep.q).enumerate() {
        assert!((qh - q_tab.values()[i]).abs() < 1e-12);
        assert!((q - q_tab.values()[i]).abs() < 1e-12);
    }
    assert!(rep.max_abs_dev < 1e-12);
    assert!((rep.pearson - 1.0).abs() < 1e-12);
}

#[test]
fn linear_marginal_head_weights_states_by_greedy_reward() {
    let w = randoms((NS + NA) * NS, 2);
    let hnet = linear(NS + NA, NS, &w);
    let q_w = randoms(NS * NA, 3);
    let qnet = linear(NS, NA, &q_w);
    let r = reward();

    let greedy: Vec<usize> = (0..NS).map(|s| if q_w[s * NA + 1] > q_w[s * NA] { 1 } else { 0 }).collect();
    let mut expected = Vec::new();
    for s in 0..NS {
        for a in 0..NA {
            let dot: f64 = (0..NS).map(|n| (w[s * NS + n] + w[(NS + a) * NS + n]) * r.get(n, greedy[n])).sum();
            expected.push(dot);
        }
    }
    let rep = recover_q_deep(&hnet, &qnet, &params(BeliefHead::StateMarginal), &r, &samples()).unwrap();
    for (a, b) in rep.q_hat.iter().zip(&expected) {
        assert!((a - b).abs() < 1e-12, "{a} vs {b}");
    }
    assert_eq!(rep.q, q_w);
}

#[test]
fn legal_sets_limit_the_compared_pairs() {
    let h = randoms(NS * NA * NS * NA, 4);
    let hnet = linear(NS, NA * NS * NA, &h);
    let qnet = linear(NS, NA, &randoms(NS * NA, 5));
    let only: Vec<_> = (0..NS).map(|s| (s, None, ActionSet::only(s % NA))).collect();
    let rep = recover_q_deep(&hnet, &qnet, &params(BeliefHead::Full), &reward(), &only).unwrap();
    assert_eq!(rep.pairs, NS);
}
