//! JSON Lines dataset manifests.
//!
//! The first line is a header record; each further line is an item or a
//! skipped candidate. Truth-table digests identify functions, so train/eval
//! disjointness and in-set uniqueness are checkable from manifests alone.

use std::collections::HashSet;
use std::path::Path;

use aigen_core::Aig;
use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Supervision {
    /// Best of the source and a uniform-policy tree search.
    InternalMcts,
    ExternalTool,
    /// Targets are the sources themselves.
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorInfo {
    pub n_inputs: usize,
    pub n_outputs: usize,
    pub max_traj_len: usize,
    pub seed: u64,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestItem {
    pub id: usize,
    pub file: String,
    pub target_file: String,
    pub ands_original: usize,
    pub ands_target: usize,
    pub digest: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedItem {
    pub id: usize,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum Record {
    Header {
        generator: GeneratorInfo,
        supervision: Supervision,
    },
    Item(ManifestItem),
    Skipped(SkippedItem),
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub generator: GeneratorInfo,
    pub supervision: Supervision,
    pub items: Vec<ManifestItem>,
    pub skipped: Vec<SkippedItem>,
}

/// SHA-256 over the signature and every output's truth-table words.
pub fn table_digest(aig: &Aig) -> Result<String> {
    let tables = aig.eval_truth_tables()?;
    let mut h = Sha256::new();
    h.update((aig.n_inputs() as u64).to_le_bytes());
    h.update((aig.n_outputs() as u64).to_le_bytes());
    for t in &tables {
        for w in t.words() {
            h.update(w.to_le_bytes());
        }
    }
    Ok(hex::encode(h.finalize()))
}

pub fn file_digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl DatasetManifest {
    pub const FILE_NAME: &'static str = "manifest.jsonl";

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let mut push = |r: &Record| {
            out.push_str(&serde_json::to_string(r).expect("manifest record serializes"));
            out.push('\n');
        };
        push(&Record::Header {
            generator: self.generator.clone(),
            supervision: self.supervision,
        });
        for it in &self.items {
            push(&Record::Item(it.clone()));
        }
        for s in &self.skipped {
            push(&Record::Skipped(s.clone()));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, first) = lines.next().context("empty manifest")?;
        let Record::Header { generator, supervision } = serde_json::from_str(first).context("manifest line 1")? else {
            bail!("manifest line 1 is not a header record");
        };
        let mut m = DatasetManifest {
            generator,
            supervision,
            items: Vec::new(),
            skipped: Vec::new(),
        };
        for (i, line) in lines {
            match serde_json::from_str(line).with_context(|| format!("manifest line {}", i + 1))? {
                Record::Item(it) => m.items.push(it),
                Record::Skipped(s) => m.skipped.push(s),
                Record::Header { .. } => bail!("manifest line {}: second header", i + 1),
            }
        }
        m.check_unique()?;
        Ok(m)
    }

    pub fn write(&self, dir: &Path) -> Result<String> {
        let text = self.to_jsonl();
        let path = dir.join(Self::FILE_NAME);
        std::fs::write(&path, &text).with_context(|| format!("writing {}", path.display()))?;
        Ok(file_digest(text.as_bytes()))
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(Self::FILE_NAME);
        let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn digests(&self) -> HashSet<&str> {
        self.items.iter().map(|i| i.digest.as_str()).collect()
    }

    /// Every function appears at most once.
    pub fn check_unique(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for it in &self.items {
            if !seen.insert(it.digest.as_str()) {
                bail!("duplicate truth-table digest {} (item {})", it.digest, it.id);
            }
        }
        Ok(())
    }

    /// Digests shared with `other`.
    pub fn overlap(&self, other: &DatasetManifest) -> Vec<String> {
        let theirs = other.digests();
        self.items
            .iter()
            .filter(|i| theirs.contains(i.digest.as_str()))
            .map(|i| i.digest.clone())
            .collect()
    }
}
