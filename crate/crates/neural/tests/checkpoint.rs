use aigen_neural::checkpoint::{MAGIC, VERSION};
use aigen_neural::{Checkpoint, ModelConfig, NeuralError, TrainConfig, Trainer, TtClassifier, TtExample};

fn trained_checkpoint() -> (TtClassifier, Checkpoint) {
    let cfg = ModelConfig::tt_classifier(1, 4, 3);
    let mut model = TtClassifier::new(cfg.clone(), 1).unwrap();
    let mut tr = Trainer::new(
        TrainConfig {
            steps: 5,
            batch_size: 4,
            ..TrainConfig::default()
        },
        model.params(),
    );
    for _ in 0..3 {
        let batch: Vec<TtExample> = (0..4).map(|_| TtExample::sample(4, 3, &mut tr.rng)).collect();
        tr.step(&mut model, &batch, |m, g, ex| m.loss(g, ex)).unwrap();
    }
    let ck = Checkpoint::from_trainer(cfg, model.params().clone(), &tr);
    (model, ck)
}

#[test]
fn save_load_save_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let (_, ck) = trained_checkpoint();
    let p1 = dir.path().join("a.ckpt");
    let p2 = dir.path().join("b.ckpt");
    ck.save(&p1).unwrap();
    let loaded = Checkpoint::load(&p1).unwrap();
    assert_eq!(loaded, ck);
    loaded.save(&p2).unwrap();
    assert_eq!(std::fs::read(&p1).unwrap(), std::fs::read(&p2).unwrap());
    let weights = Checkpoint::weights(ck.config.clone(), ck.params.clone());
    assert_eq!(Checkpoint::from_bytes(&weights.to_bytes()).unwrap(), weights);
}

#[test]
fn loaded_model_gives_identical_logits_and_resumes_identically() {
    let (model, ck) = trained_checkpoint();
    let back = Checkpoint::from_bytes(&ck.to_bytes()).unwrap();
    let restored = TtClassifier::from_params(back.config.clone(), &back.params).unwrap();
    let mut tr_a = ck.trainer().unwrap();
    let mut tr_b = back.trainer().unwrap();
    assert_eq!(tr_b.step, 3);
    let ex = TtExample::sample(4, 3, &mut tr_a.rng.clone());
    assert_eq!(
        model.logits(&ex.tokens, &ex.poscodes).unwrap(),
        restored.logits(&ex.tokens, &ex.poscodes).unwrap()
    );
    let (mut ma, mut mb) = (model, restored);
    for _ in 0..2 {
        let ba: Vec<TtExample> = (0..4).map(|_| TtExample::sample(4, 3, &mut tr_a.rng)).collect();
        let bb: Vec<TtExample> = (0..4).map(|_| TtExample::sample(4, 3, &mut tr_b.rng)).collect();
        let la = tr_a.step(&mut ma, &ba, |m, g, e| m.loss(g, e)).unwrap();
        let lb = tr_b.step(&mut mb, &bb, |m, g, e| m.loss(g, e)).unwrap();
        assert_eq!(la.loss.to_bits(), lb.loss.to_bits());
    }
    assert_eq!(ma.params(), mb.params());
}

#[test]
fn truncated_and_damaged_files_fail_cleanly() {
    let (_, ck) = trained_checkpoint();
    let bytes = ck.to_bytes();
    for cut in [0, 4, 8, 12, 19, 40, bytes.len() / 2, bytes.len() - 1] {
        let err = Checkpoint::from_bytes(&bytes[..cut]).unwrap_err();
        assert!(matches!(err, NeuralError::Corrupt(_)), "cut {cut}: {err}");
    }
    let mut extra = bytes.clone();
    extra.push(0);
    assert!(matches!(Checkpoint::from_bytes(&extra), Err(NeuralError::Corrupt(_))));
    let mut magic = bytes.clone();
    magic[0] ^= 1;
    assert!(matches!(Checkpoint::from_bytes(&magic), Err(NeuralError::Corrupt(_))));
    let mut version = bytes.clone();
    version[8..12].copy_from_slice(&(VERSION + 1).to_le_bytes());
    assert!(matches!(
        Checkpoint::from_bytes(&version),
        Err(NeuralError::Version { found, expected }) if found == VERSION + 1 && expected == VERSION
    ));
    assert_eq!(&bytes[..8], MAGIC);
    // Flipping bytes anywhere must never panic.
    for i in (0..bytes.len()).step_by(97) {
        let mut b = bytes.clone();
        b[i] ^= 0xa5;
        let _ = Checkpoint::from_bytes(&b);
    }
}

#[test]
fn mismatched_config_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let (_, ck) = trained_checkpoint();
    let path = dir.path().join("m.ckpt");
    ck.save(&path).unwrap();
    let other = ModelConfig {
        vocab_size: 14,
        ..ck.config.clone()
    };
    assert!(matches!(
        Checkpoint::load_expecting(&path, &other),
        Err(NeuralError::ConfigMismatch(_))
    ));
    assert!(matches!(
        TtClassifier::from_params(other, &ck.params),
        Err(NeuralError::ConfigMismatch(_))
    ));
    let deeper = ModelConfig::tt_classifier(2, 4, 3);
    assert!(matches!(
        TtClassifier::from_params(deeper, &ck.params),
        Err(NeuralError::ConfigMismatch(_))
    ));
    assert!(Checkpoint::load_expecting(&path, &ck.config).is_ok());
    assert!(matches!(
        Checkpoint::load(dir.path().join("missing.ckpt")),
        Err(NeuralError::Io(_))
    ));
}
