//! Model configuration, parameter layout and the Transformer building blocks.
//!
//! Blocks are pre-norm. Each attention head owns its query/key/value/output
//! projections; head outputs are summed, which equals concatenation followed
//! by one output projection. Position enters only through a learned linear
//! projection of the tree positional code added to the token embedding.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::graph::{Graph, Mask, Var};
use crate::params::{normal_mat, ParamId, ParamStore};
use crate::tensor::Mat;
use crate::NeuralError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arch {
    EncoderOnly,
    EncoderDecoder,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub arch: Arch,
    /// Encoder layers.
    pub n_layers: usize,
    /// Decoder layers; zero for encoder-only models.
    pub n_decoder_layers: usize,
    pub embed_width: usize,
    pub ffn_width: usize,
    pub n_heads: usize,
    pub vocab_size: usize,
    pub poscode_width: usize,
    pub max_len: usize,
    /// Classifier outputs (2^N for truth tables); zero for the policy.
    pub n_labels: usize,
}

impl ModelConfig {
    /// Truth-table classifier: width 16, intermediate size 16.
    pub fn tt_classifier(n_layers: usize, n_inputs: usize, max_depth: usize) -> Self {
        ModelConfig {
            arch: Arch::EncoderOnly,
            n_layers,
            n_decoder_layers: 0,
            embed_width: 16,
            ffn_width: 16,
            n_heads: 2,
            vocab_size: 2 * n_inputs + 4,
            poscode_width: 2 * max_depth + 1,
            max_len: (1 << (max_depth + 1)) + 1,
            n_labels: 1 << n_inputs,
        }
    }

    /// Desk-scale next-gate policy.
    pub fn policy(n_inputs: usize, n_outputs: usize, max_depth: usize, max_len: usize) -> Self {
        ModelConfig {
            arch: Arch::EncoderDecoder,
            n_layers: 2,
            n_decoder_layers: 2,
            embed_width: 32,
            ffn_width: 64,
            n_heads: 4,
            vocab_size: 2 * n_inputs + 4,
            poscode_width: 2 * max_depth + n_outputs,
            max_len,
            n_labels: 0,
        }
    }

    pub fn validate(&self) -> Result<(), NeuralError> {
        let bad = |m: &str| Err(NeuralError::Config(m.to_string()));
        if self.embed_width == 0 || self.n_heads == 0 || !self.embed_width.is_multiple_of(self.n_heads) {
            return bad("embed_width must be a positive multiple of n_heads");
        }
        if self.vocab_size < 6 || !self.vocab_size.is_multiple_of(2) {
            return bad("vocab_size must be 2N + 4 for some N >= 1");
        }
        if self.vocab_size > 64 {
            return bad("vocab_size above 64 is not supported");
        }
        if self.poscode_width == 0 || self.max_len == 0 || self.ffn_width == 0 {
            return bad("poscode_width, max_len and ffn_width must be positive");
        }
        match self.arch {
            Arch::EncoderOnly if self.n_labels == 0 || self.n_decoder_layers != 0 => {
                bad("encoder-only models need n_labels > 0 and no decoder layers")
            }
            Arch::EncoderDecoder if self.n_decoder_layers == 0 || self.n_labels != 0 => {
                bad("encoder-decoder models need decoder layers and no label head")
            }
            _ => Ok(()),
        }
    }

    pub fn n_inputs(&self) -> usize {
        (self.vocab_size - 4) / 2
    }

    pub fn head_width(&self) -> usize {
        self.embed_width / self.n_heads
    }
}

enum Init {
    Normal(f64),
    Zeros,
    Ones,
}

/// Registers fresh parameters, or binds existing ones by name with shape checks.
pub(crate) struct Builder<'a> {
    existing: Option<&'a ParamStore>,
    store: ParamStore,
    rng: ChaCha8Rng,
    used: usize,
}

impl<'a> Builder<'a> {
    pub(crate) fn fresh(seed: u64) -> Self {
        Builder {
            existing: None,
            store: ParamStore::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            used: 0,
        }
    }

    pub(crate) fn bind(existing: &'a ParamStore) -> Self {
        Builder {
            existing: Some(existing),
            store: ParamStore::new(),
            rng: ChaCha8Rng::seed_from_u64(0),
            used: 0,
        }
    }

    fn mat(&mut self, name: &str, rows: usize, cols: usize, init: Init) -> Result<ParamId, NeuralError> {
        match self.existing {
            Some(store) => {
                let id = store
                    .id(name)
                    .ok_or_else(|| NeuralError::ConfigMismatch(format!("missing parameter {name}")))?;
                let shape = store.get(id).shape();
                if shape != (rows, cols) {
                    return Err(NeuralError::ConfigMismatch(format!(
                        "parameter {name} has shape {shape:?}, expected {:?}",
                        (rows, cols)
                    )));
                }
                self.used += 1;
                Ok(id)
            }
            None => {
                let m = match init {
                    Init::Normal(std) => normal_mat(&mut self.rng, rows, cols, std),
                    Init::Zeros => Mat::zeros(rows, cols),
                    Init::Ones => Mat::filled(rows, cols, 1.0),
                };
                Ok(self.store.add(name, m))
            }
        }
    }

    /// The bound or freshly built store; binding fails if the store has extra entries.
    pub(crate) fn finish(self) -> Result<ParamStore, NeuralError> {
        match self.existing {
            Some(store) if store.len() != self.used => Err(NeuralError::ConfigMismatch(format!(
                "checkpoint has {} parameters, model expects {}",
                store.len(),
                self.used
            ))),
            Some(store) => Ok(store.clone()),
            None => Ok(self.store),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Linear {
    w: ParamId,
    b: Option<ParamId>,
}

impl Linear {
    fn new(bld: &mut Builder, name: &str, fan_in: usize, fan_out: usize) -> Result<Self, NeuralError> {
        Ok(Linear {
            b: Some(bld.mat(&format!("{name}.b"), 1, fan_out, Init::Zeros)?),
            ..Self::no_bias(bld, name, fan_in, fan_out)?
        })
    }

    fn no_bias(bld: &mut Builder, name: &str, fan_in: usize, fan_out: usize) -> Result<Self, NeuralError> {
        Ok(Linear {
            w: bld.mat(
                &format!("{name}.w"),
                fan_in,
                fan_out,
                Init::Normal((1.0 / fan_in as f64).sqrt()),
            )?,
            b: None,
        })
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let w = g.param(self.w);
        let y = g.matmul(x, w);
        match self.b {
            Some(b) => {
                let b = g.param(b);
                g.add_row(y, b)
            }
            None => y,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Norm {
    gain: ParamId,
    bias: ParamId,
}

impl Norm {
    fn new(bld: &mut Builder, name: &str, d: usize) -> Result<Self, NeuralError> {
        Ok(Norm {
            gain: bld.mat(&format!("{name}.gain"), 1, d, Init::Ones)?,
            bias: bld.mat(&format!("{name}.bias"), 1, d, Init::Zeros)?,
        })
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let gain = g.param(self.gain);
        let bias = g.param(self.bias);
        g.layer_norm(x, gain, bias)
    }
}

#[derive(Clone, Debug)]
pub struct Attention {
    q: Vec<Linear>,
    k: Vec<Linear>,
    v: Vec<Linear>,
    o: Vec<ParamId>,
    o_bias: ParamId,
    scale: f64,
}

impl Attention {
    fn new(bld: &mut Builder, name: &str, cfg: &ModelConfig) -> Result<Self, NeuralError> {
        let (d, dh) = (cfg.embed_width, cfg.head_width());
        let mut a = Attention {
            q: Vec::new(),
            k: Vec::new(),
            v: Vec::new(),
            o: Vec::new(),
            o_bias: bld.mat(&format!("{name}.o.b"), 1, d, Init::Zeros)?,
            scale: 1.0 / (dh as f64).sqrt(),
        };
        for h in 0..cfg.n_heads {
            a.q.push(Linear::new(bld, &format!("{name}.h{h}.q"), d, dh)?);
            // A key bias only shifts each score row by a constant, which softmax ignores.
            a.k.push(Linear::no_bias(bld, &format!("{name}.h{h}.k"), d, dh)?);
            a.v.push(Linear::new(bld, &format!("{name}.h{h}.v"), d, dh)?);
            a.o.push(bld.mat(
                &format!("{name}.h{h}.o.w"),
                dh,
                d,
                Init::Normal((1.0 / d as f64).sqrt()),
            )?);
        }
        Ok(a)
    }

    /// Queries from `xq` attend over keys/values computed from `xkv`.
    pub fn forward(&self, g: &mut Graph, xq: Var, xkv: Var, mask: &Mask) -> Var {
        let mut acc: Option<Var> = None;
        for h in 0..self.q.len() {
            let q = self.q[h].forward(g, xq);
            let k = self.k[h].forward(g, xkv);
            let v = self.v[h].forward(g, xkv);
            let s = g.matmul_bt(q, k);
            let s = g.scale(s, self.scale);
            let p = g.softmax(s, mask.clone());
            let ctx = g.matmul(p, v);
            let wo = g.param(self.o[h]);
            let out = g.matmul(ctx, wo);
            acc = Some(match acc {
                Some(a) => g.add(a, out),
                None => out,
            });
        }
        let b = g.param(self.o_bias);
        g.add_row(acc.expect("at least one head"), b)
    }
}

#[derive(Clone, Debug)]
pub struct FeedForward {
    up: Linear,
    down: Linear,
}

impl FeedForward {
    fn new(bld: &mut Builder, name: &str, cfg: &ModelConfig) -> Result<Self, NeuralError> {
        Ok(FeedForward {
            up: Linear::new(bld, &format!("{name}.up"), cfg.embed_width, cfg.ffn_width)?,
            down: Linear::new(bld, &format!("{name}.down"), cfg.ffn_width, cfg.embed_width)?,
        })
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let h = self.up.forward(g, x);
        let h = g.gelu(h);
        self.down.forward(g, h)
    }
}

#[derive(Clone, Debug)]
pub struct EncoderBlock {
    ln1: Norm,
    attn: Attention,
    ln2: Norm,
    ffn: FeedForward,
}

impl EncoderBlock {
    fn new(bld: &mut Builder, name: &str, cfg: &ModelConfig) -> Result<Self, NeuralError> {
        Ok(EncoderBlock {
            ln1: Norm::new(bld, &format!("{name}.ln1"), cfg.embed_width)?,
            attn: Attention::new(bld, &format!("{name}.attn"), cfg)?,
            ln2: Norm::new(bld, &format!("{name}.ln2"), cfg.embed_width)?,
            ffn: FeedForward::new(bld, &format!("{name}.ffn"), cfg)?,
        })
    }

    pub fn forward(&self, g: &mut Graph, x: Var, mask: &Mask) -> Var {
        let h = self.ln1.forward(g, x);
        let a = self.attn.forward(g, h, h, mask);
        let x = g.add(x, a);
        let h = self.ln2.forward(g, x);
        let f = self.ffn.forward(g, h);
        g.add(x, f)
    }
}

#[derive(Clone, Debug)]
pub struct DecoderBlock {
    ln1: Norm,
    self_attn: Attention,
    ln2: Norm,
    cross_attn: Attention,
    ln3: Norm,
    ffn: FeedForward,
}

impl DecoderBlock {
    fn new(bld: &mut Builder, name: &str, cfg: &ModelConfig) -> Result<Self, NeuralError> {
        Ok(DecoderBlock {
            ln1: Norm::new(bld, &format!("{name}.ln1"), cfg.embed_width)?,
            self_attn: Attention::new(bld, &format!("{name}.self"), cfg)?,
            ln2: Norm::new(bld, &format!("{name}.ln2"), cfg.embed_width)?,
            cross_attn: Attention::new(bld, &format!("{name}.cross"), cfg)?,
            ln3: Norm::new(bld, &format!("{name}.ln3"), cfg.embed_width)?,
            ffn: FeedForward::new(bld, &format!("{name}.ffn"), cfg)?,
        })
    }

    pub fn forward(&self, g: &mut Graph, x: Var, memory: Var, memory_mask: &Mask) -> Var {
        let h = self.ln1.forward(g, x);
        let a = self.self_attn.forward(g, h, h, &Mask::Causal);
        let x = g.add(x, a);
        let h = self.ln2.forward(g, x);
        let c = self.cross_attn.forward(g, h, memory, memory_mask);
        let x = g.add(x, c);
        let h = self.ln3.forward(g, x);
        let f = self.ffn.forward(g, h);
        g.add(x, f)
    }
}

/// Token embedding plus projected positional code.
#[derive(Clone, Debug)]
pub struct Embedding {
    tokens: ParamId,
    pos: Linear,
    vocab_size: usize,
    poscode_width: usize,
}

impl Embedding {
    fn new(bld: &mut Builder, name: &str, cfg: &ModelConfig) -> Result<Self, NeuralError> {
        Ok(Embedding {
            tokens: bld.mat(
                &format!("{name}.tok"),
                cfg.vocab_size,
                cfg.embed_width,
                Init::Normal(1.0),
            )?,
            pos: Linear::new(bld, &format!("{name}.pos"), cfg.poscode_width, cfg.embed_width)?,
            vocab_size: cfg.vocab_size,
            poscode_width: cfg.poscode_width,
        })
    }

    pub fn forward(&self, g: &mut Graph, ids: &[usize], poscodes: &Mat) -> Result<Var, NeuralError> {
        if poscodes.shape() != (ids.len(), self.poscode_width) {
            return Err(NeuralError::Input(format!(
                "poscode matrix is {:?}, expected ({}, {})",
                poscodes.shape(),
                ids.len(),
                self.poscode_width
            )));
        }
        if let Some(&bad) = ids.iter().find(|&&t| t >= self.vocab_size) {
            return Err(NeuralError::Input(format!(
                "token id {bad} outside vocabulary of {}",
                self.vocab_size
            )));
        }
        let table = g.param(self.tokens);
        let e = g.gather(table, ids);
        let p = g.constant(poscodes.clone());
        let p = self.pos.forward(g, p);
        Ok(g.add(e, p))
    }
}

#[derive(Clone, Debug)]
pub struct Encoder {
    embed: Embedding,
    blocks: Vec<EncoderBlock>,
    ln_f: Norm,
}

impl Encoder {
    pub(crate) fn new(bld: &mut Builder, name: &str, cfg: &ModelConfig) -> Result<Self, NeuralError> {
        Ok(Encoder {
            embed: Embedding::new(bld, name, cfg)?,
            blocks: (0..cfg.n_layers)
                .map(|l| EncoderBlock::new(bld, &format!("{name}.{l}"), cfg))
                .collect::<Result<_, _>>()?,
            ln_f: Norm::new(bld, &format!("{name}.ln_f"), cfg.embed_width)?,
        })
    }

    /// Hidden states for every position; PAD positions are hidden from attention.
    pub fn forward(&self, g: &mut Graph, ids: &[usize], poscodes: &Mat) -> Result<(Var, Mask), NeuralError> {
        let keys: Vec<bool> = ids.iter().map(|&t| t != 0).collect();
        if !keys.iter().any(|&k| k) {
            return Err(NeuralError::Input("sequence has no live tokens".into()));
        }
        let mask = Mask::Keys(keys);
        let mut x = self.embed.forward(g, ids, poscodes)?;
        for b in &self.blocks {
            x = b.forward(g, x, &mask);
        }
        Ok((self.ln_f.forward(g, x), mask))
    }
}

#[derive(Clone, Debug)]
pub struct Decoder {
    embed: Embedding,
    blocks: Vec<DecoderBlock>,
    ln_f: Norm,
    head: Linear,
}

impl Decoder {
    pub(crate) fn new(bld: &mut Builder, name: &str, cfg: &ModelConfig) -> Result<Self, NeuralError> {
        Ok(Decoder {
            embed: Embedding::new(bld, name, cfg)?,
            blocks: (0..cfg.n_decoder_layers)
                .map(|l| DecoderBlock::new(bld, &format!("{name}.{l}"), cfg))
                .collect::<Result<_, _>>()?,
            ln_f: Norm::new(bld, &format!("{name}.ln_f"), cfg.embed_width)?,
            head: Linear::new(bld, &format!("{name}.head"), cfg.embed_width, cfg.vocab_size)?,
        })
    }

    /// Next-token logits for every prefix position.
    pub fn forward(
        &self,
        g: &mut Graph,
        ids: &[usize],
        poscodes: &Mat,
        memory: Var,
        memory_mask: &Mask,
    ) -> Result<Var, NeuralError> {
        let mut x = self.embed.forward(g, ids, poscodes)?;
        for b in &self.blocks {
            x = b.forward(g, x, memory, memory_mask);
        }
        let x = self.ln_f.forward(g, x);
        Ok(self.head.forward(g, x))
    }
}

#[derive(Clone, Debug)]
pub struct ClassifierHead {
    head: Linear,
}

impl ClassifierHead {
    pub(crate) fn new(bld: &mut Builder, cfg: &ModelConfig) -> Result<Self, NeuralError> {
        Ok(ClassifierHead {
            head: Linear::new(bld, "head", cfg.embed_width, cfg.n_labels)?,
        })
    }

    /// Mean over live positions followed by the label projection.
    pub fn forward(&self, g: &mut Graph, hidden: Var, live: &[bool]) -> Var {
        let n = live.iter().filter(|&&l| l).count().max(1) as f64;
        let pool = Mat::from_vec(
            1,
            live.len(),
            live.iter().map(|&l| if l { 1.0 / n } else { 0.0 }).collect(),
        );
        let pool = g.constant(pool);
        let pooled = g.matmul(pool, hidden);
        self.head.forward(g, pooled)
    }
}
