use aigen_core::aig::random_aig;
use aigen_core::trajectory::{encode, encode_with_depth, to_model_inputs, trajectory_len, TrajectoryError};
use aigen_core::{decode_trajectory, Aig, Lit, Token, TokenKind};
use proptest::prelude::*;

/// Number of root-to-node paths, which is how often a memory-less walk visits each node.
fn path_multiplicity(aig: &Aig) -> Vec<usize> {
    let mut mult = vec![0usize; aig.n_nodes()];
    for o in aig.outputs() {
        mult[o.node()] += 1;
    }
    for node in (aig.first_and_index()..aig.n_nodes()).rev() {
        let [a, b] = aig.fanins(node).unwrap();
        mult[a.node()] += mult[node];
        mult[b.node()] += mult[node];
    }
    mult
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn round_trip(n in 1usize..=8, m in 1usize..=2, seed in any::<u64>()) {
        let aig = random_aig(n, m, 200, seed).unwrap();
        let traj = encode(&aig).unwrap();
        prop_assert_eq!(traj.len(), trajectory_len(&aig));
        prop_assert!(traj.is_terminated());
        let back = decode_trajectory(&traj, true).unwrap();
        prop_assert_eq!(back.eval_truth_tables().unwrap(), aig.eval_truth_tables().unwrap());
        prop_assert_eq!(back.count_ands(), aig.count_ands());
        prop_assert_eq!(encode(&back).unwrap(), traj);
    }

    #[test]
    fn gate_tokens_count_paths(n in 2usize..=8, seed in any::<u64>()) {
        let aig = random_aig(n, 2, 200, seed).unwrap();
        let traj = encode(&aig).unwrap();
        let vocab = traj.vocab();
        let gates = traj.items.iter().filter(|i| matches!(vocab.kind(i.token), Some(TokenKind::And { .. }))).count();
        let leaves = traj.items.iter().filter(|i| matches!(vocab.kind(i.token), Some(TokenKind::Input { .. }))).count();
        let mult = path_multiplicity(&aig);
        let expected_gates: usize = (aig.first_and_index()..aig.n_nodes()).map(|k| mult[k]).sum();
        let expected_leaves: usize = (1..=n).map(|k| mult[k]).sum();
        prop_assert_eq!(gates, expected_gates);
        prop_assert_eq!(leaves, expected_leaves);
    }

    #[test]
    fn poscode_parent_is_enclosing_gate(seed in any::<u64>()) {
        let aig = random_aig(6, 2, 200, seed).unwrap();
        let traj = encode(&aig).unwrap();
        let vocab = traj.vocab();
        let d = 32;
        for (k, item) in traj.items.iter().enumerate() {
            let Some(pos) = &item.pos else { continue };
            let bits = pos.to_bits(d, 2);
            prop_assert_eq!(bits.len(), 2 * d + 2);
            prop_assert_eq!(bits[2 * d..].iter().filter(|&&b| b == 1).count(), 1);
            let Some(parent) = pos.parent() else {
                prop_assert_eq!(pos.depth(), 0);
                continue;
            };
            // Removing the newest pair shifts the path bits left by two.
            let pbits = parent.to_bits(d, 2);
            prop_assert_eq!(&pbits[..2 * d - 2], &bits[2..2 * d]);
            prop_assert_eq!(&pbits[2 * d - 2..2 * d], &[0u8, 0][..]);
            prop_assert_eq!(&pbits[2 * d..], &bits[2 * d..]);
            let owner = traj.items[..k].iter().rev().find(|i| i.pos.as_ref() == Some(&parent));
            let owned_by_gate = owner.is_some_and(|o| matches!(vocab.kind(o.token), Some(TokenKind::And { .. })));
            prop_assert!(owned_by_gate);
        }
    }

    #[test]
    fn encode_is_deterministic(seed in any::<u64>()) {
        let a = random_aig(8, 2, 200, seed).unwrap();
        let b = a.clone();
        prop_assert_eq!(encode(&a).unwrap(), encode(&b).unwrap());
    }
}

#[test]
fn one_thousand_round_trips() {
    for seed in 0..1000 {
        let aig = random_aig(8, 2, 200, seed).unwrap();
        let back = decode_trajectory(&encode(&aig).unwrap(), true).unwrap();
        assert_eq!(
            back.eval_truth_tables().unwrap(),
            aig.eval_truth_tables().unwrap(),
            "seed {seed}"
        );
    }
}

#[test]
fn shared_gate_repeats_under_each_output() {
    let mut aig = Aig::new(3);
    let g = aig.add_and(Lit::new(1, false), Lit::new(2, false), true);
    let h = aig.add_and(g, Lit::new(3, true), true);
    aig.add_output(h).unwrap();
    aig.add_output(!g).unwrap();
    let traj = encode(&aig).unwrap();
    let v = traj.vocab();
    // o1: ∧ [∧ x1 x2] x̄3, o2: ∧̄ x1 x2
    let expected = [
        v.and(false),
        v.and(false),
        v.input(1, false),
        v.input(2, false),
        v.input(3, true),
        v.and(true),
        v.input(1, false),
        v.input(2, false),
        Token::EOS,
    ];
    assert_eq!(traj.tokens(), expected);
    let outputs: Vec<_> = traj
        .items
        .iter()
        .filter_map(|i| i.pos.as_ref().map(|p| p.output()))
        .collect();
    assert_eq!(outputs, [0, 0, 0, 0, 0, 1, 1, 1]);
}

#[test]
fn depth_limit_is_enforced() {
    let mut aig = Aig::new(2);
    let mut lit = Lit::new(1, false);
    for _ in 0..5 {
        lit = aig.add_and(lit, Lit::new(2, false), true);
    }
    aig.add_output(lit).unwrap();
    assert!(encode_with_depth(&aig, 5).is_ok());
    assert!(matches!(
        encode_with_depth(&aig, 4),
        Err(TrajectoryError::DepthOverflow { .. })
    ));
}

#[test]
fn model_inputs_overflow() {
    let mut aig = Aig::new(2);
    let mut lit = Lit::new(1, false);
    // 100 chained gates: 100 gate tokens, 101 leaves, EOS.
    for _ in 0..100 {
        lit = aig.add_and(lit, Lit::new(2, false), true);
    }
    aig.add_output(lit).unwrap();
    let traj = encode_with_depth(&aig, 128).unwrap();
    assert_eq!(traj.len(), 202);
    assert!(matches!(
        to_model_inputs(&traj, 201, 128),
        Err(TrajectoryError::LengthOverflow { len: 202, max_len: 201 })
    ));
    let ok = to_model_inputs(&traj, 202, 128).unwrap();
    assert_eq!(ok.live, 202);
}
