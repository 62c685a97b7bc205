use aigen_core::aig::random_aig;
use aigen_core::decoder::{DecodeState, EquivSpec, Policy, TokenMask};
use aigen_core::trajectory::encode_with_depth;
use aigen_core::{Aig, Token};
use aigen_neural::{Arch, Graph, Mat, ModelConfig, NeuralError, PolicyExample, PolicyModel, TtClassifier, TtExample};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const DEPTH: usize = 16;

fn small_policy_cfg() -> ModelConfig {
    ModelConfig {
        arch: Arch::EncoderDecoder,
        n_layers: 1,
        n_decoder_layers: 2,
        embed_width: 16,
        ffn_width: 16,
        n_heads: 2,
        vocab_size: 2 * 4 + 4,
        poscode_width: 2 * DEPTH + 2,
        max_len: 120,
        n_labels: 0,
    }
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

#[test]
fn untrained_classifier_gives_finite_logits_of_width_two_to_the_n() {
    let model = TtClassifier::new(ModelConfig::tt_classifier(1, 4, 3), 0).unwrap();
    let ex = TtExample::sample(4, 3, &mut ChaCha8Rng::seed_from_u64(1));
    let logits = model.logits(&ex.tokens, &ex.poscodes).unwrap();
    assert_eq!(logits.len(), 16);
    assert!(logits.iter().all(|v| v.is_finite()));
}

#[test]
fn parameter_counts_are_near_the_reference_family() {
    // Reference counts for 1..=4 layers; same architecture family within +-50%.
    let reference = [1840.0, 3472.0, 5104.0, 6736.0];
    for (l, r) in (1..=4).zip(reference) {
        let m = TtClassifier::new(ModelConfig::tt_classifier(l, 4, 3), 0).unwrap();
        let n = m.params().n_scalars() as f64;
        assert!((n - r).abs() / r <= 0.5, "{l} layers: {n} parameters vs {r}");
    }
}

#[test]
fn classifier_rejects_bad_shapes() {
    let model = TtClassifier::new(ModelConfig::tt_classifier(1, 4, 3), 0).unwrap();
    let ex = TtExample::sample(4, 3, &mut ChaCha8Rng::seed_from_u64(1));
    let short = Mat::zeros(ex.tokens.len() - 1, ex.poscodes.cols());
    assert!(matches!(model.logits(&ex.tokens, &short), Err(NeuralError::Input(_))));
    let mut bad_ids = ex.tokens.clone();
    bad_ids[0] = 99;
    assert!(matches!(
        model.logits(&bad_ids, &ex.poscodes),
        Err(NeuralError::Input(_))
    ));
    let long = ex.padded(40);
    assert!(matches!(
        model.logits(&long.tokens, &long.poscodes),
        Err(NeuralError::Input(_))
    ));
    assert!(matches!(
        TtClassifier::new(
            ModelConfig {
                embed_width: 15,
                ..ModelConfig::tt_classifier(1, 4, 3)
            },
            0
        ),
        Err(NeuralError::Config(_))
    ));
    assert!(matches!(
        PolicyModel::new(ModelConfig::tt_classifier(1, 4, 3), 0),
        Err(NeuralError::Config(_))
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn classifier_ignores_trailing_pad(seed in any::<u64>(), extra in 1usize..8) {
        let model = TtClassifier::new(ModelConfig::tt_classifier(2, 4, 3), seed ^ 7).unwrap();
        let ex = TtExample::sample(4, 3, &mut ChaCha8Rng::seed_from_u64(seed));
        prop_assume!(ex.tokens.len() + extra <= model.config().max_len);
        let a = model.logits(&ex.tokens, &ex.poscodes).unwrap();
        let p = ex.padded(extra);
        let b = model.logits(&p.tokens, &p.poscodes).unwrap();
        prop_assert!(close(&a, &b, 1e-9), "{a:?} vs {b:?}");
    }

    #[test]
    fn policy_ignores_context_pad_and_future_tokens(seed in 0u64..500, extra in 1usize..6) {
        let cfg = small_policy_cfg();
        let model = PolicyModel::new(cfg.clone(), seed).unwrap();
        let aig = random_aig(4, 2, 100, seed).unwrap();
        let traj = encode_with_depth(&aig, DEPTH);
        prop_assume!(traj.is_ok());
        let traj = traj.unwrap();
        prop_assume!(traj.len() + extra <= cfg.max_len);
        let ex = PolicyExample::new(&traj, &traj, &cfg).unwrap();
        let run = |ctx_ids: &[usize], ctx_pos: &Mat, dec_ids: &[usize], dec_pos: &Mat| {
            let mut g = Graph::new(model.params());
            let v = model.logits_var(&mut g, ctx_ids, ctx_pos, dec_ids, dec_pos).unwrap();
            g.value(v).clone()
        };
        let base = run(&ex.context_ids, &ex.context_pos, &ex.decoder_ids, &ex.decoder_pos);
        // Padded context.
        let mut ids = ex.context_ids.clone();
        ids.extend(std::iter::repeat_n(0, extra));
        let mut pos = ex.context_pos.data().to_vec();
        pos.extend(std::iter::repeat_n(0.0, extra * cfg.poscode_width));
        let padded = run(&ids, &Mat::from_vec(ids.len(), cfg.poscode_width, pos), &ex.decoder_ids, &ex.decoder_pos);
        prop_assert!(close(base.data(), padded.data(), 1e-9));
        // Truncated decoder prefix: earlier rows are unaffected by later tokens.
        let k = (ex.decoder_ids.len() / 2).max(1);
        let w = cfg.poscode_width;
        let short = run(
            &ex.context_ids,
            &ex.context_pos,
            &ex.decoder_ids[..k],
            &Mat::from_vec(k, w, ex.decoder_pos.data()[..k * w].to_vec()),
        );
        prop_assert!(close(short.data(), &base.data()[..k * cfg.vocab_size], 1e-9));
    }
}

#[test]
fn swapping_sibling_poscodes_changes_the_output() {
    // AND(x1, !x2) with the two leaves' positional codes exchanged.
    let mut aig = Aig::new(4);
    let x1 = aig.input_literal(1, false).unwrap();
    let nx2 = aig.input_literal(2, true).unwrap();
    let x3 = aig.input_literal(3, false).unwrap();
    let a = aig.add_and(x1, nx2, true);
    let b = aig.add_and(a, x3, true);
    aig.add_output(b).unwrap();
    let ex = TtExample::from_aig(&aig, 3).unwrap();
    let leaves: Vec<usize> = (0..ex.tokens.len())
        .filter(|&i| (2..10).contains(&ex.tokens[i]))
        .collect();
    let (i, j) = (leaves[0], leaves[1]);
    let mut swapped = ex.poscodes.clone();
    for c in 0..swapped.cols() {
        let (x, y) = (swapped.get(i, c), swapped.get(j, c));
        swapped.set(i, c, y);
        swapped.set(j, c, x);
    }
    assert_ne!(swapped, ex.poscodes);
    for seed in 0..5 {
        let model = TtClassifier::new(ModelConfig::tt_classifier(1, 4, 3), seed).unwrap();
        let a = model.logits(&ex.tokens, &ex.poscodes).unwrap();
        let b = model.logits(&ex.tokens, &swapped).unwrap();
        assert!(!close(&a, &b, 1e-9), "seed {seed}");
    }
}

#[test]
fn same_seed_same_parameters() {
    let cfg = small_policy_cfg();
    let a = PolicyModel::new(cfg.clone(), 5).unwrap();
    let b = PolicyModel::new(cfg.clone(), 5).unwrap();
    let c = PolicyModel::new(cfg, 6).unwrap();
    assert_eq!(a.params(), b.params());
    assert_ne!(a.params(), c.params());
}

#[test]
fn neural_policy_scores_match_teacher_forced_logits() {
    let cfg = small_policy_cfg();
    let model = PolicyModel::new(cfg.clone(), 3).unwrap();
    let aig = random_aig(4, 2, 100, 9).unwrap();
    let traj = encode_with_depth(&aig, DEPTH).unwrap();
    let ex = PolicyExample::new(&traj, &traj, &cfg).unwrap();
    let mut g = Graph::new(model.params());
    let v = model
        .logits_var(
            &mut g,
            &ex.context_ids,
            &ex.context_pos,
            &ex.decoder_ids,
            &ex.decoder_pos,
        )
        .unwrap();
    let full = g.value(v).clone();
    let policy = model.policy_for(&traj).unwrap();
    let spec = EquivSpec::from_aig(&aig).unwrap();
    let mut state = DecodeState::for_spec(&spec).with_max_depth(DEPTH);
    for (t, item) in traj.items.iter().enumerate() {
        let s = policy.scores(&state).unwrap();
        assert!(close(&s, full.row(t), 1e-9), "step {t}");
        assert_eq!(state.feasible_choices(&spec).bits(), ex.allowed[t]);
        state.step(item.token, &spec).unwrap();
    }
}

#[test]
fn empty_prefix_mask_keeps_only_root_tokens() {
    let cfg = small_policy_cfg();
    let model = PolicyModel::new(cfg, 3).unwrap();
    // x1 and x1&x2 as outputs: the first root is x1 itself or a gate, never another leaf.
    let mut aig = Aig::new(4);
    let x1 = aig.input_literal(1, false).unwrap();
    let x2 = aig.input_literal(2, false).unwrap();
    let t = aig.add_and(x1, x2, true);
    aig.add_output(x1).unwrap();
    aig.add_output(t).unwrap();
    let traj = encode_with_depth(&aig, DEPTH).unwrap();
    let policy = model.policy_for(&traj).unwrap();
    let spec = EquivSpec::from_aig(&aig).unwrap();
    let state = DecodeState::for_spec(&spec).with_max_depth(DEPTH);
    let scores = policy.scores(&state).unwrap();
    assert_eq!(scores.len(), 12);
    assert!(scores.iter().all(|v| v.is_finite()));
    let mask = state.valid_choices(&spec);
    let mut expect = TokenMask::empty();
    for t in [Token(2), Token(10), Token(11)] {
        expect.insert(t);
    }
    assert_eq!(mask, expect);
}
