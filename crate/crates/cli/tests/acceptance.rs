//! End-to-end acceptance run: one PASS/FAIL line per criterion.
//!
//! Set `AIGEN_ACCEPTANCE=AC1,AC3` to run a subset.

use std::collections::{HashMap, HashSet};
use std::time::Instant;

use aigen_cli::dataset::{gen_dataset, load_aag, GenConfig, TargetSource};
use aigen_cli::eval::{item_seed, synthesize, Method, PolicySource};
use aigen_cli::training::{
    load_policy_examples, policy_config, train_policy, train_tt, tt_accuracy, tt_test_set, LoopOptions, PolicyShape,
};
use aigen_core::aig::random_aig;
use aigen_core::aiger::{parse_aag, write_aag};
use aigen_core::decoder::{generate, DecodeMode};
use aigen_core::trajectory::{decode_trajectory, encode};
use aigen_core::{
    synthesize_mcts, Aig, DecodeState, EquivSpec, Lit, SearchConfig, TokenMask, TruthTable, UniformPolicy,
};
use aigen_neural::graph::Mask;
use aigen_neural::params::normal_mat;
use aigen_neural::{
    grad_check, Arch, ModelConfig, ParamStore, PolicyExample, PolicyModel, TrainConfig, TtClassifier, TtExample,
};
use anyhow::{ensure, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { pass, detail })
}

/// Row-by-row evaluation, independent of the bit-parallel tables.
fn scalar_eval(aig: &Aig, lit: Lit, row: usize) -> bool {
    let n = lit.node();
    let v = if n == 0 {
        false
    } else if n <= aig.n_inputs() {
        (row >> (n - 1)) & 1 == 1
    } else {
        let [a, b] = aig.ands()[n - aig.first_and_index()];
        scalar_eval(aig, a, row) && scalar_eval(aig, b, row)
    };
    v ^ lit.is_inverted()
}

fn scalar_tables(aig: &Aig) -> Vec<Vec<bool>> {
    aig.outputs()
        .iter()
        .map(|&o| (0..1usize << aig.n_inputs()).map(|r| scalar_eval(aig, o, r)).collect())
        .collect()
}

fn ac1() -> Result<Outcome> {
    let (mut completed, mut verified) = (0, 0);
    for seed in 0..1000u64 {
        let source = random_aig(8, 2, 100, seed)?;
        let spec = EquivSpec::from_aig(&source)?;
        if let Ok(g) = generate(&UniformPolicy, &spec, 100, DecodeMode::Sample { seed: seed ^ 0xac1 }) {
            completed += 1;
            verified += usize::from(scalar_tables(&g.aig) == scalar_tables(&source));
        }
    }
    outcome(
        completed > 0 && verified == completed,
        format!("1000 specs, {completed} completed within 100 tokens, {verified} verified"),
    )
}

fn ac2() -> Result<Outcome> {
    let dir = tempfile::tempdir()?;
    let test = tt_test_set(1000, 0x7e57);
    let mut accs = Vec::new();
    for layers in 1..=4 {
        let tc = TrainConfig {
            steps: 30_000,
            batch_size: 32,
            lr: 1e-2,
            warmup: 1500,
            seed: layers as u64,
            ..TrainConfig::default()
        };
        let opts = LoopOptions {
            out: dir.path().join(format!("tt{layers}.ckpt")),
            loss_csv: None,
            checkpoint_every: 0,
            log_every: 0,
        };
        let model = train_tt(layers, &tc, None, &opts)?;
        accs.push(tt_accuracy(&model, &test)?.per_bit);
    }
    let monotone = accs.windows(2).all(|w| w[1] >= w[0] - 0.02);
    let shown: Vec<String> = accs.iter().map(|a| format!("{a:.4}")).collect();
    outcome(
        accs[3] >= 0.95 && monotone,
        format!(
            "per-bit accuracy by layers 1..4: {} (need 4-layer >= 0.95, monotone within 0.02)",
            shown.join("/")
        ),
    )
}

fn fig2() -> Aig {
    let mut aig = Aig::new(3);
    let x = |i| Lit::new(i, false);
    let a1 = aig.add_and(x(1), x(2), true);
    let a2 = aig.add_and(x(2), x(3), true);
    let o = aig.add_and(a1, a2, true);
    aig.add_output(o).unwrap();
    aig
}

fn ac3() -> Result<Outcome> {
    let aig = fig2();
    let traj = encode(&aig)?;
    let code = |i: usize| {
        traj.items[i - 1]
            .pos
            .as_ref()
            .map(|p| p.to_string())
            .unwrap_or_default()
    };
    let codes = [code(2), code(4), code(6)];
    let back = decode_trajectory(&traj, true)?;
    let same = scalar_tables(&back) == scalar_tables(&aig);
    outcome(
        codes == ["10", "0110", "1001"] && same,
        format!(
            "e_2={} e_4={} e_6={}; decoded tables identical: {same}",
            codes[0], codes[1], codes[2]
        ),
    )
}

fn ac4() -> Result<Outcome> {
    let spec = EquivSpec::new(3, vec![TruthTable::parse(3, "00000001").unwrap()])?;
    let mut st = DecodeState::for_spec(&spec);
    let v = st.vocab();
    // AND, AND, x1, x2: the next slot is the sibling of the x2 leaf's parent.
    for t in [v.and(false), v.and(false), v.input(1, false), v.input(2, false)] {
        ensure!(st.valid_choices(&spec).contains(t), "prefix token {} masked", v.name(t));
        st.step(t, &spec)?;
    }
    let mask = st.valid_choices(&spec);
    let allowed: Vec<String> = mask.iter().map(|t| v.name(t)).collect();
    outcome(
        mask == TokenMask::only(v.input(3, false)),
        format!("allowed after AND AND x1 x2: [{}]", allowed.join(" ")),
    )
}

fn ac5() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut episodes, mut matched, mut attempts) = (0, 0, 0);
    while episodes < 10_000 && attempts < 200_000 {
        attempts += 1;
        let n = rng.gen_range(2..=6);
        let m = rng.gen_range(1..=2);
        let source = random_aig(n, m, 60, rng.gen())?;
        let spec = EquivSpec::from_aig(&source)?;
        if let Ok(g) = generate(&UniformPolicy, &spec, 120, DecodeMode::Sample { seed: rng.gen() }) {
            episodes += 1;
            matched += usize::from(g.reward == -(g.aig.count_ands() as i64));
        }
    }
    outcome(
        episodes == 10_000 && matched == episodes,
        format!("{matched}/{episodes} episodes with reward = -#AND"),
    )
}

/// Mean #AND per item; a failed synthesis keeps the original circuit.
fn mean_ands(sources: &[Aig], policy: PolicySource<'_>, method: Method, seed: u64) -> Result<(f64, usize)> {
    let results: Vec<Result<usize, String>> = sources
        .par_iter()
        .enumerate()
        .map(|(i, s)| match synthesize(s, policy, method, 128, item_seed(seed, i)) {
            Ok(a) => Ok(a.count_ands()),
            Err(e @ aigen_cli::eval::SynthError::Verification { .. }) => Err(e.to_string()),
            Err(_) => Ok(usize::MAX),
        })
        .collect();
    let mut sum = 0;
    let mut failed = 0;
    for (s, r) in sources.iter().zip(results) {
        match r.map_err(anyhow::Error::msg)? {
            usize::MAX => {
                failed += 1;
                sum += s.count_ands();
            }
            a => sum += a,
        }
    }
    Ok((sum as f64 / sources.len() as f64, failed))
}

fn ac6() -> Result<Outcome> {
    let dir = tempfile::tempdir()?;
    let (train_dir, eval_dir) = (dir.path().join("train"), dir.path().join("eval"));
    let base = GenConfig {
        n_inputs: 4,
        n_outputs: 2,
        count: 1000,
        max_traj_len: 64,
        seed: 11,
        targets: TargetSource::InternalMcts { steps: 8, rollouts: 4 },
        exclude: HashSet::new(),
    };
    let (train, _) = gen_dataset(&base, &train_dir)?;
    let eval_cfg = GenConfig {
        count: 200,
        seed: 12,
        targets: TargetSource::None,
        exclude: train.digests().into_iter().map(String::from).collect(),
        ..base
    };
    let (eval, _) = gen_dataset(&eval_cfg, &eval_dir)?;
    ensure!(eval.overlap(&train).is_empty(), "evaluation set overlaps training set");

    let shape = PolicyShape {
        n_layers: 2,
        n_decoder_layers: 2,
        embed_width: 32,
        ffn_width: 64,
        n_heads: 4,
        max_len: 128,
    };
    let cfg = policy_config(&shape, 4, 2);
    let (_, examples) = load_policy_examples(&train_dir, &cfg)?;
    let tc = TrainConfig {
        steps: 3000,
        batch_size: 32,
        lr: 3e-3,
        warmup: 150,
        seed: 0,
        ..TrainConfig::default()
    };
    let opts = LoopOptions {
        out: dir.path().join("policy.ckpt"),
        loss_csv: None,
        checkpoint_every: 0,
        log_every: 0,
    };
    let model = train_policy(&cfg, &examples, false, &tc, None, &opts)?;

    let sources: Vec<Aig> = eval
        .items
        .iter()
        .map(|it| load_aag(&eval_dir, &it.file))
        .collect::<Result<_>>()?;
    let policy = PolicySource::Neural(&model);
    let (greedy, greedy_failed) = mean_ands(&sources, policy, Method::Greedy, 0)?;
    let mut ordered = true;
    let mut strict = 0;
    let mut lines = vec![format!(
        "original {:.3}, greedy {greedy:.3} ({greedy_failed} failed)",
        mean_of(&sources)
    )];
    let seeds = [1u64, 2, 3];
    for &seed in &seeds {
        let (r5, f5) = mean_ands(&sources, policy, Method::Mcts { steps: 1, rollouts: 5 }, seed)?;
        let (r20, f20) = mean_ands(&sources, policy, Method::Mcts { steps: 1, rollouts: 20 }, seed)?;
        ordered &= greedy >= r5 && r5 >= r20;
        strict += usize::from(r20 < greedy);
        lines.push(format!(
            "seed {seed}: R=5 {r5:.3} ({f5} failed), R=20 {r20:.3} ({f20} failed)"
        ));
    }
    outcome(
        ordered && strict * 2 >= seeds.len(),
        format!("mean #AND on 200 held-out circuits: {}", lines.join("; ")),
    )
}

fn mean_of(aigs: &[Aig]) -> f64 {
    aigs.iter().map(|a| a.count_ands() as f64).sum::<f64>() / aigs.len() as f64
}

/// Minimal #AND of every single-output 2-input function buildable with at most two gates.
fn two_gate_optima() -> HashMap<Vec<bool>, usize> {
    let mut best: HashMap<Vec<bool>, usize> = HashMap::new();
    let mut record = |aig: &Aig, out: Lit| {
        let mut a = aig.clone();
        a.add_output(out).unwrap();
        let t = scalar_tables(&a).remove(0);
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

fn ac7() -> Result<Outcome> {
    let optima = two_gate_optima();
    let (mut hits, mut runs) = (0, 0);
    for (bits, &opt) in &optima {
        let spec = EquivSpec::new(2, vec![TruthTable::from_bits(2, bits)])?;
        for seed in 0..20 {
            let out = synthesize_mcts(&UniformPolicy, &spec, &SearchConfig::new(usize::MAX, 50, seed), 20)?;
            ensure!(scalar_tables(&out.aig)[0] == *bits, "search result is not equivalent");
            runs += 1;
            hits += usize::from(out.aig.count_ands() == opt);
        }
    }
    outcome(
        hits * 100 >= runs * 95,
        format!(
            "{} functions x 20 seeds: optimum reached in {hits}/{runs} runs",
            optima.len()
        ),
    )
}

fn random_store(shapes: &[(&str, usize, usize)], seed: u64) -> ParamStore {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s = ParamStore::new();
    for &(n, r, c) in shapes {
        s.add(n, normal_mat(&mut rng, r, c, 0.7));
    }
    s
}

fn ac8() -> Result<Outcome> {
    let mut rows: Vec<(&str, f64)> = Vec::new();
    let x = normal_mat(&mut ChaCha8Rng::seed_from_u64(1), 5, 6, 1.0);

    let p = random_store(
        &[("w", 6, 6), ("b", 1, 6), ("gain", 1, 6), ("bias", 1, 6), ("head", 6, 4)],
        2,
    );
    let r = grad_check(
        &p,
        |g| {
            let xv = g.constant(x.clone());
            let (w, b) = (g.param(p.id("w").unwrap()), g.param(p.id("b").unwrap()));
            let h = g.matmul(xv, w);
            let h = g.add_row(h, b);
            let (gain, bias) = (g.param(p.id("gain").unwrap()), g.param(p.id("bias").unwrap()));
            let h = g.layer_norm(h, gain, bias);
            let h = g.gelu(h);
            let head = g.param(p.id("head").unwrap());
            let z = g.matmul(h, head);
            Ok(g.cross_entropy(z, &[Some(1), None, Some(3), Some(0), Some(2)], None))
        },
        1e-5,
        usize::MAX,
        0,
    )?;
    rows.push(("linear+layernorm+gelu+ce", r.max_rel_error));

    let p = random_store(&[("q", 6, 4), ("k", 6, 4), ("v", 6, 4)], 3);
    for (name, mask) in [
        ("attention", Mask::None),
        ("causal attention", Mask::Causal),
        ("key-masked attention", Mask::Keys(vec![true, false, true, true, false])),
    ] {
        let r = grad_check(
            &p,
            |g| {
                let xv = g.constant(x.clone());
                let (q, k, v) = (
                    g.param(p.id("q").unwrap()),
                    g.param(p.id("k").unwrap()),
                    g.param(p.id("v").unwrap()),
                );
                let (q, k, v) = (g.matmul(xv, q), g.matmul(xv, k), g.matmul(xv, v));
                let s = g.matmul_bt(q, k);
                let s = g.scale(s, 0.5);
                let a = g.softmax(s, mask.clone());
                let o = g.matmul(a, v);
                Ok(g.cross_entropy(o, &[Some(0), Some(1), Some(2), Some(3), Some(0)], None))
            },
            1e-5,
            usize::MAX,
            0,
        )?;
        rows.push((name, r.max_rel_error));
    }

    let p = random_store(&[("emb", 6, 4), ("out", 4, 6)], 4);
    let r = grad_check(
        &p,
        |g| {
            let e = g.param(p.id("emb").unwrap());
            let h = g.gather(e, &[0, 3, 3, 5]);
            let o = g.param(p.id("out").unwrap());
            let z = g.matmul(h, o);
            Ok(g.cross_entropy(
                z,
                &[Some(2), Some(1), Some(5), Some(0)],
                Some(&[0b111, 0b10, 0b110000, 0b111111]),
            ))
        },
        1e-5,
        usize::MAX,
        0,
    )?;
    rows.push(("embedding+masked ce", r.max_rel_error));

    let model = TtClassifier::new(ModelConfig::tt_classifier(2, 4, 3), 5)?;
    let ex = TtExample::sample(4, 3, &mut ChaCha8Rng::seed_from_u64(6));
    let r = grad_check(model.params(), |g| model.loss(g, &ex), 1e-5, usize::MAX, 0)?;
    rows.push(("encoder classifier+pool+bce", r.max_rel_error));

    let cfg = ModelConfig {
        arch: Arch::EncoderDecoder,
        n_layers: 1,
        n_decoder_layers: 1,
        embed_width: 8,
        ffn_width: 12,
        n_heads: 2,
        vocab_size: 10,
        poscode_width: 2 * 8 + 2,
        max_len: 80,
        n_labels: 0,
    };
    let model = PolicyModel::new(cfg.clone(), 7)?;
    let traj = aigen_core::trajectory::encode_with_depth(&random_aig(3, 2, 60, 8)?, 8)?;
    let ex = PolicyExample::new(&traj, &traj, &cfg)?;
    let r = grad_check(model.params(), |g| model.loss(g, &ex, false), 1e-5, usize::MAX, 0)?;
    rows.push(("encoder-decoder cross-attention", r.max_rel_error));

    let worst = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    let shown: Vec<String> = rows.iter().map(|(n, e)| format!("{n} {e:.1e}")).collect();
    outcome(
        worst < 1e-3,
        format!("max relative error {worst:.2e} ({})", shown.join(", ")),
    )
}

fn ac9() -> Result<Outcome> {
    let mut ok = 0;
    for seed in 0..1000u64 {
        let n = 1 + (seed % 8) as usize;
        let m = 1 + (seed / 8 % 2) as usize;
        let aig = random_aig(n, m, 100, seed)?;
        let back = parse_aag(&write_aag(&aig))?;
        ok += usize::from(
            back.n_inputs() == aig.n_inputs()
                && back.count_ands() == aig.count_ands()
                && scalar_tables(&back) == scalar_tables(&aig),
        );
    }
    outcome(
        ok == 1000,
        format!("{ok}/1000 generator circuits round-tripped with identical tables"),
    )
}

type Criterion = (&'static str, &'static str, fn() -> Result<Outcome>);

fn main() {
    let all: [Criterion; 9] = [
        ("AC1", "equivalence preservation", ac1),
        ("AC2", "classifier depth trend", ac2),
        ("AC3", "golden encoding", ac3),
        ("AC4", "golden mask", ac4),
        ("AC5", "reward identity", ac5),
        ("AC6", "search trend", ac6),
        ("AC7", "small-instance optimality", ac7),
        ("AC8", "gradient check", ac8),
        ("AC9", "AIGER round trip", ac9),
    ];
    let only: Option<Vec<String>> = std::env::var("AIGEN_ACCEPTANCE")
        .ok()
        .map(|s| s.split(',').map(|x| x.trim().to_uppercase()).collect());
    let mut failed = 0;
    for (id, name, run) in all {
        if only.as_ref().is_some_and(|o| !o.iter().any(|x| x == id)) {
            continue;
        }
        let t = Instant::now();
        let (pass, detail) = match run() {
            Ok(o) => (o.pass, o.detail),
            Err(e) => (false, format!("error: {e:#}")),
        };
        failed += usize::from(!pass);
        println!(
            "{id} {} {name}: {detail} [{:.1}s]",
            if pass { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
