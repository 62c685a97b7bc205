//! Training loops behind `aigen train`.

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use aigen_core::trajectory::{encode, DEFAULT_MAX_DEPTH};
use aigen_neural::train::Trainable;
use aigen_neural::{
    Checkpoint, Graph, ModelConfig, NeuralError, PolicyExample, PolicyModel, StepLog, TrainConfig, Trainer, TtAccuracy,
    TtClassifier, TtExample, Var,
};
use anyhow::{bail, Context, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::load_aag;
use crate::manifest::DatasetManifest;

/// Circuit family of the truth-table task.
pub const TT_INPUTS: usize = 4;
pub const TT_DEPTH: usize = 3;

#[derive(Clone, Debug)]
pub struct LoopOptions {
    pub out: PathBuf,
    pub loss_csv: Option<PathBuf>,
    /// Save a checkpoint every this many steps; 0 saves only at the end.
    pub checkpoint_every: u64,
    pub log_every: u64,
}

fn open_csv(path: &Path, resume: bool) -> Result<BufWriter<File>> {
    let append = resume && path.exists();
    let f = OpenOptions::new()
        .create(true)
        .write(true)
        .append(append)
        .truncate(!append)
        .open(path)
        .with_context(|| format!("opening {}", path.display()))?;
    let mut w = BufWriter::new(f);
    if !append {
        writeln!(w, "{}", StepLog::CSV_HEADER)?;
    }
    Ok(w)
}

fn run_loop<M, E, B, L>(
    model: &mut M,
    cfg: &ModelConfig,
    trainer: &mut Trainer,
    resumed: bool,
    opts: &LoopOptions,
    mut batch: B,
    loss: L,
) -> Result<()>
where
    M: Trainable,
    B: FnMut(&mut ChaCha8Rng, usize) -> Vec<E>,
    L: Fn(&M, &mut Graph, &E) -> Result<Var, NeuralError>,
{
    let mut csv = opts.loss_csv.as_deref().map(|p| open_csv(p, resumed)).transpose()?;
    let save = |model: &M, trainer: &Trainer| -> Result<()> {
        Checkpoint::from_trainer(cfg.clone(), model.params().clone(), trainer)
            .save(&opts.out)
            .with_context(|| format!("writing {}", opts.out.display()))
    };
    while !trainer.is_done() {
        let b = batch(&mut trainer.rng, trainer.cfg.batch_size);
        let log = trainer.step(model, &b, &loss)?;
        if let Some(w) = csv.as_mut() {
            writeln!(w, "{}", log.csv_row())?;
        }
        if opts.log_every > 0 && (log.step + 1) % opts.log_every == 0 {
            eprintln!(
                "step {} loss {:.5} lr {:.2e} |g| {:.3}",
                log.step + 1,
                log.loss,
                log.lr,
                log.grad_norm
            );
        }
        if opts.checkpoint_every > 0 && trainer.step.is_multiple_of(opts.checkpoint_every) && !trainer.is_done() {
            save(model, trainer)?;
        }
    }
    if let Some(w) = csv.as_mut() {
        w.flush()?;
    }
    save(model, trainer)
}

/// Returns the model or trainer stored in `resume`, or fresh ones.
fn start<M>(
    resume: Option<&Path>,
    cfg: &ModelConfig,
    tc: &TrainConfig,
    fresh: impl FnOnce() -> Result<M, NeuralError>,
    bind: impl FnOnce(&Checkpoint) -> Result<M, NeuralError>,
) -> Result<(M, Trainer, bool)>
where
    M: Trainable,
{
    match resume {
        Some(path) => {
            let ck =
                Checkpoint::load_expecting(path, cfg).with_context(|| format!("resuming from {}", path.display()))?;
            let model = bind(&ck)?;
            let mut trainer = ck.trainer()?;
            // The step budget may be extended on resume.
            trainer.cfg.steps = tc.steps.max(trainer.cfg.steps);
            Ok((model, trainer, true))
        }
        None => {
            let model = fresh()?;
            let trainer = Trainer::new(tc.clone(), model.params());
            Ok((model, trainer, false))
        }
    }
}

/// Fixed held-out set for the truth-table task.
pub fn tt_test_set(size: usize, seed: u64) -> Vec<TtExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..size)
        .map(|_| TtExample::sample(TT_INPUTS, TT_DEPTH, &mut rng))
        .collect()
}

/// Trains the classifier on freshly sampled circuits.
pub fn train_tt(layers: usize, tc: &TrainConfig, resume: Option<&Path>, opts: &LoopOptions) -> Result<TtClassifier> {
    let cfg = ModelConfig::tt_classifier(layers, TT_INPUTS, TT_DEPTH);
    let (mut model, mut trainer, resumed) = start(
        resume,
        &cfg,
        tc,
        || TtClassifier::new(cfg.clone(), tc.seed),
        |ck| TtClassifier::from_params(cfg.clone(), &ck.params),
    )?;
    run_loop(
        &mut model,
        &cfg,
        &mut trainer,
        resumed,
        opts,
        |rng, n| (0..n).map(|_| TtExample::sample(TT_INPUTS, TT_DEPTH, rng)).collect(),
        |m: &TtClassifier, g, e: &TtExample| m.loss(g, e),
    )?;
    Ok(model)
}

pub fn tt_accuracy(model: &TtClassifier, test: &[TtExample]) -> Result<TtAccuracy> {
    Ok(model.evaluate(test)?)
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolicyShape {
    pub n_layers: usize,
    pub n_decoder_layers: usize,
    pub embed_width: usize,
    pub ffn_width: usize,
    pub n_heads: usize,
    pub max_len: usize,
}

impl Default for PolicyShape {
    fn default() -> Self {
        let c = ModelConfig::policy(1, 1, DEFAULT_MAX_DEPTH, 128);
        PolicyShape {
            n_layers: c.n_layers,
            n_decoder_layers: c.n_decoder_layers,
            embed_width: c.embed_width,
            ffn_width: c.ffn_width,
            n_heads: c.n_heads,
            max_len: c.max_len,
        }
    }
}

pub fn policy_config(shape: &PolicyShape, n_inputs: usize, n_outputs: usize) -> ModelConfig {
    ModelConfig {
        n_layers: shape.n_layers,
        n_decoder_layers: shape.n_decoder_layers,
        embed_width: shape.embed_width,
        ffn_width: shape.ffn_width,
        n_heads: shape.n_heads,
        ..ModelConfig::policy(n_inputs, n_outputs, DEFAULT_MAX_DEPTH, shape.max_len)
    }
}

/// Teacher-forcing pairs (source context, target trajectory) from a dataset.
pub fn load_policy_examples(dir: &Path, cfg: &ModelConfig) -> Result<(DatasetManifest, Vec<PolicyExample>)> {
    if !dir.is_dir() {
        bail!("dataset directory {} does not exist", dir.display());
    }
    let manifest = DatasetManifest::read(dir)?;
    if manifest.items.is_empty() {
        bail!("dataset {} has no items", dir.display());
    }
    let mut out = Vec::with_capacity(manifest.items.len());
    for it in &manifest.items {
        let source = encode(&load_aag(dir, &it.file)?)?;
        let target = encode(&load_aag(dir, &it.target_file)?)?;
        if source.len() > cfg.max_len || target.len() > cfg.max_len {
            bail!("item {} is longer than the model max_len {}", it.id, cfg.max_len);
        }
        out.push(PolicyExample::new(&source, &target, cfg).with_context(|| format!("item {}", it.id))?);
    }
    Ok((manifest, out))
}

pub fn train_policy(
    cfg: &ModelConfig,
    examples: &[PolicyExample],
    masked_loss: bool,
    tc: &TrainConfig,
    resume: Option<&Path>,
    opts: &LoopOptions,
) -> Result<PolicyModel> {
    let (mut model, mut trainer, resumed) = start(
        resume,
        cfg,
        tc,
        || PolicyModel::new(cfg.clone(), tc.seed),
        |ck| PolicyModel::from_params(cfg.clone(), &ck.params),
    )?;
    run_loop(
        &mut model,
        cfg,
        &mut trainer,
        resumed,
        opts,
        |rng, n| (0..n).map(|_| &examples[rng.gen_range(0..examples.len())]).collect(),
        |m: &PolicyModel, g, e: &&PolicyExample| m.loss(g, e, masked_loss),
    )?;
    Ok(model)
}

/// Teacher-forced masked-argmax accuracy over `examples`.
pub fn policy_token_accuracy(model: &PolicyModel, examples: &[PolicyExample]) -> Result<f64> {
    let (mut ok, mut total) = (0, 0);
    for ex in examples {
        let (c, t) = model.token_accuracy(ex)?;
        ok += c;
        total += t;
    }
    Ok(ok as f64 / total.max(1) as f64)
}
