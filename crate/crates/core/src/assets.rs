//! The on-disk asset directory shared by the pipeline, the CLI and the
//! service.
//!
//! Client-facing files (trie, sticker map, class table, combiner weights)
//! form the bundle and determine its version. The reply model stays on the
//! server and is loaded alongside when present.

use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::clusterer::ClassTable;
use crate::error::{Error, Result};
use crate::hybrid::CombinerWeights;
use crate::replynet::ClusterClassifier;
use crate::stickers::StickerMapping;
use crate::trie::TypedTrie;

pub const TRIE_FILE: &str = "trie.bin";
pub const STICKERS_FILE: &str = "stickers.bin";
pub const CLUSTERS_FILE: &str = "clusters.tsv";
pub const COMBINER_FILE: &str = "combiner.json";
pub const REPLY_FILE: &str = "reply.ckpt";

/// Raw bytes of the client bundle exactly as stored.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BundleFiles {
    pub trie: Vec<u8>,
    pub stickers: Vec<u8>,
    pub clusters: Vec<u8>,
    pub combiner: Vec<u8>,
}

impl BundleFiles {
    /// Hex SHA-256 over every file's name, length and bytes.
    pub fn version(&self) -> String {
        let mut h = Sha256::new();
        for (name, bytes) in self.named() {
            h.update(name.as_bytes());
            h.update((bytes.len() as u64).to_le_bytes());
            h.update(bytes);
        }
        hex::encode(h.finalize())
    }

    pub fn named(&self) -> [(&'static str, &[u8]); 4] {
        [
            (TRIE_FILE, &self.trie),
            (STICKERS_FILE, &self.stickers),
            (CLUSTERS_FILE, &self.clusters),
            (COMBINER_FILE, &self.combiner),
        ]
    }
}

/// A loaded asset directory.
#[derive(Debug, Clone)]
pub struct Assets {
    pub files: BundleFiles,
    pub version: String,
    pub trie: TypedTrie,
    pub mapping: StickerMapping,
    pub table: ClassTable,
    pub weights: CombinerWeights,
    pub reply: Option<ClusterClassifier>,
}

fn read(dir: &Path, name: &str) -> Result<Vec<u8>> {
    let p = dir.join(name);
    std::fs::read(&p).map_err(|e| Error::Invalid(format!("cannot read asset {}: {e}", p.display())))
}

impl Assets {
    pub fn load(dir: &Path) -> Result<Self> {
        let files = BundleFiles {
            trie: read(dir, TRIE_FILE)?,
            stickers: read(dir, STICKERS_FILE)?,
            clusters: read(dir, CLUSTERS_FILE)?,
            combiner: read(dir, COMBINER_FILE)?,
        };
        let trie = TypedTrie::from_bytes(&files.trie)?;
        let mapping = StickerMapping::from_bytes(&files.stickers)?;
        let table = ClassTable::from_tsv(
            std::str::from_utf8(&files.clusters).map_err(|_| Error::Invalid("cluster table is not UTF-8".into()))?,
        )?;
        let weights: CombinerWeights = serde_json::from_slice(&files.combiner)?;
        weights.validate()?;
        let reply_path = dir.join(REPLY_FILE);
        let reply = if reply_path.exists() {
            Some(ClusterClassifier::load(&reply_path)?)
        } else {
            None
        };
        Ok(Assets {
            version: files.version(),
            files,
            trie,
            mapping,
            table,
            weights,
            reply,
        })
    }

    /// Writes every asset into `dir` (created if missing).
    pub fn write(
        dir: &Path,
        trie: &TypedTrie,
        mapping: &StickerMapping,
        table: &ClassTable,
        weights: &CombinerWeights,
        reply: Option<&ClusterClassifier>,
    ) -> Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        trie.save(&dir.join(TRIE_FILE))?;
        mapping.save(&dir.join(STICKERS_FILE))?;
        table.save(&dir.join(CLUSTERS_FILE))?;
        std::fs::write(dir.join(COMBINER_FILE), serde_json::to_vec_pretty(weights)?)?;
        if let Some(r) = reply {
            r.save(&dir.join(REPLY_FILE))?;
        }
        Ok(dir.to_path_buf())
    }
}
