use std::collections::HashMap;

use aigen_core::decoder::DecodeMode;
use aigen_core::search::{mcts_decide, SearchConfig};
use aigen_core::{generate, synthesize_mcts, Aig, DecodeState, EquivSpec, Lit, TruthTable, UniformPolicy};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Minimal AND count for every 2-input function reachable with at most two gates,
/// by enumerating all circuits with up to two ANDs.
fn minimal_two_input_circuits() -> HashMap<String, usize> {
    let mut best: HashMap<String, usize> = HashMap::new();
    let mut record = |aig: &Aig, out: Lit| {
        let mut a = aig.clone();
        a.add_output(out).unwrap();
        let t = a.eval_truth_tables().unwrap()[0].to_string();
        let cost = a.count_ands();
        best.entry(t).and_modify(|c| *c = (*c).min(cost)).or_insert(cost);
    };
    let leaves: Vec<Lit> = (1..=2).flat_map(|i| [Lit::new(i, false), Lit::new(i, true)]).collect();
    let base = Aig::new(2);
    for &l in &leaves {
        record(&base, l);
    }
    for &a in &leaves {
        for &b in &leaves {
            let mut one = base.clone();
            let g = one.add_and(a, b, false);
            record(&one, g);
            record(&one, !g);
            let mut pool = leaves.clone();
            pool.extend([g, !g]);
            for &c in &pool {
                for &d in &pool {
                    let mut two = one.clone();
                    let h = two.add_and(c, d, false);
                    record(&two, h);
                    record(&two, !h);
                }
            }
        }
    }
    best
}

#[test]
fn enumeration_covers_expected_functions() {
    let best = minimal_two_input_circuits();
    assert_eq!(best["0101"], 0);
    assert_eq!(best["0001"], 1);
    assert_eq!(best["0111"], 1);
    assert_eq!(best["0000"], 1);
    assert_eq!(best["1111"], 1);
    // XOR needs three ANDs, so it is out of reach.
    assert!(!best.contains_key("0110"));
}

#[test]
fn mcts_reaches_enumerated_optimum() {
    let best = minimal_two_input_circuits();
    let mut hits = 0;
    let mut runs = 0;
    for (table, &optimum) in &best {
        let spec = EquivSpec::new(2, vec![TruthTable::parse(2, table).unwrap()]).unwrap();
        for seed in 0..10 {
            let cfg = SearchConfig::new(usize::MAX, 50, seed);
            let out = synthesize_mcts(&UniformPolicy, &spec, &cfg, 20).unwrap();
            assert_eq!(out.aig.eval_truth_tables().unwrap(), spec.tables().to_vec());
            assert_eq!(out.reward, -(out.aig.count_ands() as i64));
            assert!(out.aig.count_ands() >= optimum);
            runs += 1;
            hits += usize::from(out.aig.count_ands() == optimum);
        }
    }
    assert!(hits * 100 >= runs * 95, "{hits}/{runs}");
}

#[test]
fn more_rollouts_do_not_hurt_on_and2() {
    let spec = EquivSpec::new(2, vec![TruthTable::parse(2, "0001").unwrap()]).unwrap();
    let mut means = Vec::new();
    for r in [5, 10, 20] {
        let total: usize = (0..50)
            .map(|seed| {
                let cfg = SearchConfig::new(1, r, seed);
                synthesize_mcts(&UniformPolicy, &spec, &cfg, 20)
                    .unwrap()
                    .aig
                    .count_ands()
            })
            .sum();
        means.push(total as f64 / 50.0);
    }
    assert!(means[0] >= means[1] && means[1] >= means[2], "{means:?}");
}

#[test]
fn search_is_reproducible() {
    let src = aigen_core::aig::random_aig(5, 2, 80, 3).unwrap();
    let spec = EquivSpec::from_aig(&src).unwrap();
    let cfg = SearchConfig::new(3, 10, 99);
    let a = synthesize_mcts(&UniformPolicy, &spec, &cfg, 100).unwrap();
    let b = synthesize_mcts(&UniformPolicy, &spec, &cfg, 100).unwrap();
    assert_eq!(a.trajectory, b.trajectory);
    assert_eq!(a.decisions, b.decisions);
    assert_eq!(a.aig, b.aig);
}

#[test]
fn zero_search_steps_is_greedy() {
    for seed in 0..20 {
        let src = aigen_core::aig::random_aig(4, 2, 80, seed).unwrap();
        let spec = EquivSpec::from_aig(&src).unwrap();
        let greedy = generate(&UniformPolicy, &spec, 100, DecodeMode::Greedy);
        let searched = synthesize_mcts(&UniformPolicy, &spec, &SearchConfig::new(0, 5, seed), 100);
        match (greedy, searched) {
            (Ok(g), Ok(s)) => assert_eq!(g.trajectory, s.trajectory),
            (Err(a), Err(b)) => assert_eq!(a, b),
            (g, s) => panic!("diverged: {g:?} vs {s:?}"),
        }
    }
}

#[test]
fn decision_is_a_valid_root_child() {
    let spec = EquivSpec::new(3, vec![TruthTable::parse(3, "00000001").unwrap()]).unwrap();
    let root = DecodeState::for_spec(&spec);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cfg = SearchConfig::new(1, 30, 5);
    let d = mcts_decide(&root, &UniformPolicy, &spec, &cfg, 30, &mut rng).unwrap();
    assert!(root.valid_choices(&spec).contains(d.token));
    let visits: u32 = d.children.iter().map(|c| c.visits).sum();
    assert_eq!(visits as usize, 30);
    let chosen = d.children.iter().find(|c| c.token == d.token).unwrap();
    let best = d.children.iter().filter_map(|c| c.best_return).max();
    assert_eq!(chosen.best_return, best);
    assert_eq!(d.completed_rollouts + d.failed_rollouts, 30);
}
