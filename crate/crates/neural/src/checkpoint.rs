//! Binary checkpoints.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic      8 bytes  "AIGENCKP"
//! version    u32
//! manifest   u64 length + UTF-8 JSON (config, step, RNG state, optimizer scalars)
//! sections   u32 count, then per section:
//!              u32 name length + name ("param/…", "adam_m/…", "adam_v/…")
//!              u32 rows, u32 cols, rows*cols f64
//! ```
//!
//! Nothing may follow the last section. Saving a loaded checkpoint
//! reproduces the file byte for byte.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::model::ModelConfig;
use crate::optim::Adam;
use crate::params::ParamStore;
use crate::tensor::Mat;
use crate::train::{TrainConfig, Trainer};
use crate::NeuralError;

pub const MAGIC: &[u8; 8] = b"AIGENCKP";
pub const VERSION: u32 = 1;

/// Position of a ChaCha8 stream.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    /// 32-byte seed, hex.
    pub seed: String,
    pub stream: u64,
    /// Word position as a decimal string (it is a u128).
    pub word_pos: String,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        RngState {
            seed: rng.get_seed().iter().map(|b| format!("{b:02x}")).collect(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos().to_string(),
        }
    }

    pub fn restore(&self) -> Result<ChaCha8Rng, NeuralError> {
        let bad = || NeuralError::Corrupt("invalid RNG state".into());
        if self.seed.len() != 64 || !self.seed.is_ascii() {
            return Err(bad());
        }
        let mut seed = [0u8; 32];
        for (i, b) in seed.iter_mut().enumerate() {
            *b = u8::from_str_radix(&self.seed[2 * i..2 * i + 2], 16).map_err(|_| bad())?;
        }
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos.parse().map_err(|_| bad())?);
        Ok(rng)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct AdamScalars {
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Manifest {
    config: ModelConfig,
    step: u64,
    train: Option<TrainConfig>,
    rng: Option<RngState>,
    adam: Option<AdamScalars>,
}

/// Model weights, plus optimizer and data-stream state when saved mid-training.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub step: u64,
    pub train: Option<TrainConfig>,
    pub rng: Option<RngState>,
    pub params: ParamStore,
    pub adam: Option<Adam>,
}

impl Checkpoint {
    /// Weights only.
    pub fn weights(config: ModelConfig, params: ParamStore) -> Self {
        Checkpoint {
            config,
            step: 0,
            train: None,
            rng: None,
            params,
            adam: None,
        }
    }

    pub fn from_trainer(config: ModelConfig, params: ParamStore, trainer: &Trainer) -> Self {
        Checkpoint {
            config,
            step: trainer.step,
            train: Some(trainer.cfg.clone()),
            rng: Some(RngState::capture(&trainer.rng)),
            params,
            adam: Some(trainer.opt.clone()),
        }
    }

    /// Rebuilds the trainer saved with this checkpoint.
    pub fn trainer(&self) -> Result<Trainer, NeuralError> {
        let missing = |what: &str| NeuralError::Corrupt(format!("checkpoint has no {what} state"));
        Ok(Trainer {
            cfg: self.train.clone().ok_or_else(|| missing("training"))?,
            opt: self.adam.clone().ok_or_else(|| missing("optimizer"))?,
            rng: self.rng.as_ref().ok_or_else(|| missing("RNG"))?.restore()?,
            step: self.step,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let manifest = Manifest {
            config: self.config.clone(),
            step: self.step,
            train: self.train.clone(),
            rng: self.rng.clone(),
            adam: self.adam.as_ref().map(|a| AdamScalars {
                beta1: a.beta1,
                beta2: a.beta2,
                eps: a.eps,
                t: a.t,
            }),
        };
        let json = serde_json::to_vec(&manifest).expect("manifest serializes");
        let mut sections: Vec<(String, &Mat)> = self.params.iter().map(|(_, n, m)| (format!("param/{n}"), m)).collect();
        if let Some(adam) = &self.adam {
            for (prefix, moments) in [("adam_m", adam.first_moments()), ("adam_v", adam.second_moments())] {
                for ((_, n, _), m) in self.params.iter().zip(moments) {
                    sections.push((format!("{prefix}/{n}"), m));
                }
            }
        }
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&(sections.len() as u32).to_le_bytes());
        for (name, m) in sections {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(m.rows() as u32).to_le_bytes());
            out.extend_from_slice(&(m.cols() as u32).to_le_bytes());
            for v in m.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NeuralError> {
        let mut r = Reader { bytes, at: 0 };
        if r.take(8, "magic")? != MAGIC {
            return Err(NeuralError::Corrupt("bad magic".into()));
        }
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(NeuralError::Version {
                found: version,
                expected: VERSION,
            });
        }
        let len = r.u64("manifest length")?;
        let len = usize::try_from(len).map_err(|_| NeuralError::Corrupt("manifest length".into()))?;
        let manifest: Manifest = serde_json::from_slice(r.take(len, "manifest")?)
            .map_err(|e| NeuralError::Corrupt(format!("manifest: {e}")))?;
        let n = r.u32("section count")? as usize;
        let mut params = ParamStore::new();
        let (mut m, mut v) = (Vec::new(), Vec::new());
        for _ in 0..n {
            let name_len = r.u32("section name length")? as usize;
            let name = std::str::from_utf8(r.take(name_len, "section name")?)
                .map_err(|_| NeuralError::Corrupt("section name is not UTF-8".into()))?
                .to_string();
            let rows = r.u32("rows")? as usize;
            let cols = r.u32("cols")? as usize;
            let count = rows
                .checked_mul(cols)
                .filter(|c| c.checked_mul(8).is_some_and(|b| b <= r.remaining()))
                .ok_or_else(|| NeuralError::Corrupt(format!("section {name} is truncated")))?;
            let data = r
                .take(count * 8, "section data")?
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            let mat = Mat::from_vec(rows, cols, data);
            let (kind, pname) = name
                .split_once('/')
                .ok_or_else(|| NeuralError::Corrupt(format!("section name {name}")))?;
            let expect_name = |idx: usize| {
                let want = params.iter().nth(idx).map(|(_, n, _)| n.to_string());
                (want.as_deref() == Some(pname))
                    .then_some(())
                    .ok_or_else(|| NeuralError::Corrupt(format!("unexpected section {name}")))
            };
            match kind {
                "param" if m.is_empty() && v.is_empty() => {
                    if params.id(pname).is_some() {
                        return Err(NeuralError::Corrupt(format!("duplicate section {name}")));
                    }
                    params.add(pname, mat);
                }
                "adam_m" if v.is_empty() => {
                    expect_name(m.len())?;
                    m.push(mat);
                }
                "adam_v" => {
                    expect_name(v.len())?;
                    v.push(mat);
                }
                _ => return Err(NeuralError::Corrupt(format!("unexpected section {name}"))),
            }
        }
        if r.remaining() != 0 {
            return Err(NeuralError::Corrupt(format!("{} trailing bytes", r.remaining())));
        }
        let adam = match manifest.adam {
            Some(s) => Some(
                Adam::from_state(&params, s.beta1, s.beta2, s.eps, s.t, m, v)
                    .ok_or_else(|| NeuralError::Corrupt("optimizer moments do not match parameters".into()))?,
            ),
            None if m.is_empty() && v.is_empty() => None,
            None => return Err(NeuralError::Corrupt("optimizer moments without optimizer state".into())),
        };
        Ok(Checkpoint {
            config: manifest.config,
            step: manifest.step,
            train: manifest.train,
            rng: manifest.rng,
            params,
            adam,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), NeuralError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, NeuralError> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// Loads and checks the stored config against `expected`.
    pub fn load_expecting(path: impl AsRef<Path>, expected: &ModelConfig) -> Result<Self, NeuralError> {
        let ck = Self::load(path)?;
        if &ck.config != expected {
            return Err(NeuralError::ConfigMismatch(format!(
                "checkpoint config {:?} differs from expected {:?}",
                ck.config, expected
            )));
        }
        Ok(ck)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn remaining(&self) -> usize {
        self.bytes.len() - self.at
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], NeuralError> {
        if n > self.remaining() {
            return Err(NeuralError::Corrupt(format!("truncated while reading {what}")));
        }
        let s = &self.bytes[self.at..self.at + n];
        self.at += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32, NeuralError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &str) -> Result<u64, NeuralError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
}
