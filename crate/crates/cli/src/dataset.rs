//! Dataset generation: unique random circuits plus optimized targets.

use std::collections::HashSet;
use std::path::Path;

use aigen_core::aig::random_aig;
use aigen_core::aiger::{parse_aag, write_aag};
use aigen_core::trajectory::trajectory_len;
use aigen_core::{synthesize_mcts, Aig, EquivSpec, SearchConfig, UniformPolicy};
use anyhow::{bail, Context, Result};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bridge::ExternalTool;
use crate::manifest::{table_digest, DatasetManifest, GeneratorInfo, ManifestItem, SkippedItem, Supervision};

#[derive(Clone, Debug)]
pub enum TargetSource {
    /// Uniform-policy tree search over the first `steps` decisions.
    InternalMcts {
        steps: usize,
        rollouts: usize,
    },
    External(ExternalTool),
    None,
}

impl TargetSource {
    pub fn tag(&self) -> Supervision {
        match self {
            TargetSource::InternalMcts { .. } => Supervision::InternalMcts,
            TargetSource::External(_) => Supervision::ExternalTool,
            TargetSource::None => Supervision::None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GenConfig {
    pub n_inputs: usize,
    pub n_outputs: usize,
    pub count: usize,
    pub max_traj_len: usize,
    pub seed: u64,
    pub targets: TargetSource,
    /// Digests that must not be generated (e.g. a training set).
    pub exclude: HashSet<String>,
}

pub const SOURCE_DIR: &str = "aig";
pub const TARGET_DIR: &str = "target";

fn item_name(id: usize) -> String {
    format!("{id:06}.aag")
}

/// Unique-function circuits, in candidate order.
pub fn sample_unique(cfg: &GenConfig) -> Result<Vec<(Aig, String)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut seen: HashSet<String> = cfg.exclude.clone();
    let mut out = Vec::with_capacity(cfg.count);
    let budget = cfg.count.saturating_mul(50).max(1000);
    for _ in 0..budget {
        if out.len() == cfg.count {
            break;
        }
        let aig = random_aig(cfg.n_inputs, cfg.n_outputs, cfg.max_traj_len, rng.next_u64())?.cleanup();
        let digest = table_digest(&aig)?;
        if seen.insert(digest.clone()) {
            out.push((aig, digest));
        }
    }
    if out.len() < cfg.count {
        bail!(
            "found only {} distinct functions for {} requested ({} inputs, {} outputs)",
            out.len(),
            cfg.count,
            cfg.n_inputs,
            cfg.n_outputs
        );
    }
    Ok(out)
}

/// Smallest verified equivalent of `source` with a trajectory within `max_len`.
pub fn supervise(source: &Aig, targets: &TargetSource, max_len: usize, seed: u64) -> Result<Aig> {
    let spec = EquivSpec::from_aig(source)?;
    let candidate = match targets {
        TargetSource::None => None,
        TargetSource::InternalMcts { steps, rollouts } => {
            let cfg = SearchConfig::new(*steps, *rollouts, seed);
            synthesize_mcts(&UniformPolicy, &spec, &cfg, 2 * max_len)
                .ok()
                .map(|s| s.aig)
        }
        TargetSource::External(tool) => Some(tool.run(source)?.cleanup()),
    };
    let best = match candidate {
        Some(c) if c.count_ands() < source.count_ands() && trajectory_len(&c) <= max_len => c,
        _ => source.clone(),
    };
    if let Some((o, r)) = spec.first_mismatch(&best) {
        bail!("target differs from source at output {o}, row {r}");
    }
    Ok(best)
}

/// Writes `<out>/aig/*.aag`, `<out>/target/*.aag` and the manifest; returns the manifest digest.
pub fn gen_dataset(cfg: &GenConfig, out: &Path) -> Result<(DatasetManifest, String)> {
    let sources = sample_unique(cfg)?;
    for d in [SOURCE_DIR, TARGET_DIR] {
        std::fs::create_dir_all(out.join(d)).with_context(|| format!("creating {}", out.join(d).display()))?;
    }
    let results: Vec<Result<Aig>> = sources
        .par_iter()
        .enumerate()
        .map(|(id, (aig, _))| {
            supervise(
                aig,
                &cfg.targets,
                cfg.max_traj_len,
                cfg.seed ^ (id as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15),
            )
        })
        .collect();
    let mut manifest = DatasetManifest {
        generator: GeneratorInfo {
            n_inputs: cfg.n_inputs,
            n_outputs: cfg.n_outputs,
            max_traj_len: cfg.max_traj_len,
            seed: cfg.seed,
            count: cfg.count,
        },
        supervision: cfg.targets.tag(),
        items: Vec::new(),
        skipped: Vec::new(),
    };
    for (id, ((source, digest), target)) in sources.into_iter().zip(results).enumerate() {
        let target = match target {
            Ok(t) => t,
            Err(e) => {
                manifest.skipped.push(SkippedItem {
                    id,
                    reason: format!("{e:#}"),
                });
                continue;
            }
        };
        let name = item_name(id);
        let file = format!("{SOURCE_DIR}/{name}");
        let target_file = format!("{TARGET_DIR}/{name}");
        std::fs::write(out.join(&file), write_aag(&source))?;
        std::fs::write(out.join(&target_file), write_aag(&target))?;
        manifest.items.push(ManifestItem {
            id,
            file,
            target_file,
            ands_original: source.count_ands(),
            ands_target: target.count_ands(),
            digest,
        });
    }
    let digest = manifest.write(out)?;
    Ok((manifest, digest))
}

/// Loads one circuit referenced by a manifest.
pub fn load_aag(dir: &Path, rel: &str) -> Result<Aig> {
    let path = dir.join(rel);
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    parse_aag(&text).with_context(|| format!("parsing {}", path.display()))
}
