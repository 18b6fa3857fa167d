//! Prefix trie over frequent phrases. Each phrase-terminal node holds the
//! phrase's (cluster id, frequency); queries score clusters by their share
//! of the matched frequency mass.

use std::collections::BTreeMap;
use std::path::Path;

use crate::binio::{put_short_str, Reader};
use crate::clusterer::ClassTable;
use crate::error::{Error, FormatError, Result};

pub const TRIE_MAGIC: &[u8; 6] = b"HTRIE1";
pub const TRIE_VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Payload {
    pub cluster_id: u32,
    pub freq: u64,
}

#[derive(Debug, Clone, Default)]
struct Node {
    /// Sorted by edge byte.
    children: Vec<(u8, u32)>,
    payload: Option<Payload>,
    /// Frequency summed over the subtree.
    total: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Match {
    pub phrase: String,
    pub cluster_id: u32,
    pub freq: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrieScoreResult {
    pub scores: BTreeMap<u32, f64>,
    pub matched: usize,
    pub empty_match: bool,
}

impl TrieScoreResult {
    pub fn score(&self, cluster: u32) -> f64 {
        self.scores.get(&cluster).copied().unwrap_or(0.0)
    }

    /// Clusters by descending score, ties by id.
    pub fn ranked(&self) -> Vec<(u32, f64)> {
        let mut v: Vec<(u32, f64)> = self.scores.iter().map(|(&c, &s)| (c, s)).collect();
        v.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        v
    }
}

#[derive(Debug, Clone)]
pub struct TypedTrie {
    nodes: Vec<Node>,
    len: usize,
}

impl Default for TypedTrie {
    fn default() -> Self {
        TypedTrie::new()
    }
}

impl PartialEq for TypedTrie {
    fn eq(&self, other: &Self) -> bool {
        self.entries() == other.entries()
    }
}

impl TypedTrie {
    pub fn new() -> Self {
        TypedTrie {
            nodes: vec![Node::default()],
            len: 0,
        }
    }

    pub fn from_class_table(table: &ClassTable) -> Result<Self> {
        let mut t = TypedTrie::new();
        for r in &table.rows {
            let id = u32::try_from(r.cluster_id).map_err(|_| Error::Invalid("cluster id exceeds u32".into()))?;
            t.insert(&r.phrase, id, r.freq)?;
        }
        Ok(t)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    fn child(&self, node: usize, b: u8) -> Option<usize> {
        let ch = &self.nodes[node].children;
        ch.binary_search_by_key(&b, |c| c.0).ok().map(|i| ch[i].1 as usize)
    }

    fn walk(&self, key: &str) -> Option<usize> {
        key.bytes().try_fold(0, |n, b| self.child(n, b))
    }

    /// Inserts or replaces a phrase.
    pub fn insert(&mut self, phrase: &str, cluster_id: u32, freq: u64) -> Result<()> {
        if phrase.is_empty() {
            return Err(Error::EmptyPhrase);
        }
        if freq == 0 {
            return Err(Error::Invalid(format!("phrase {phrase:?} has zero frequency")));
        }
        let old = self.get(phrase).map(|p| p.freq).unwrap_or(0);
        let mut path = vec![0usize];
        let mut node = 0;
        for b in phrase.bytes() {
            node = match self.child(node, b) {
                Some(c) => c,
                None => {
                    let id = self.nodes.len();
                    self.nodes.push(Node::default());
                    let ch = &mut self.nodes[node].children;
                    let at = ch.partition_point(|c| c.0 < b);
                    ch.insert(at, (b, id as u32));
                    id
                }
            };
            path.push(node);
        }
        for &n in &path {
            self.nodes[n].total = self.nodes[n].total - old + freq;
        }
        if self.nodes[node].payload.replace(Payload { cluster_id, freq }).is_none() {
            self.len += 1;
        }
        Ok(())
    }

    pub fn get(&self, phrase: &str) -> Option<Payload> {
        self.walk(phrase).and_then(|n| self.nodes[n].payload)
    }

    /// Total frequency of stored phrases starting with `typ`.
    pub fn prefix_total(&self, typ: &str) -> u64 {
        self.walk(typ).map(|n| self.nodes[n].total).unwrap_or(0)
    }

    /// All stored phrases having `typ` as a prefix, in byte order.
    pub fn prefix_query(&self, typ: &str) -> Vec<Match> {
        let mut out = Vec::new();
        if let Some(start) = self.walk(typ) {
            self.for_each_below(start, typ.as_bytes(), |key, p| {
                out.push(Match {
                    phrase: String::from_utf8(key.to_vec()).expect("stored phrases are UTF-8"),
                    cluster_id: p.cluster_id,
                    freq: p.freq,
                })
            });
        }
        out
    }

    fn for_each_below(&self, start: usize, prefix: &[u8], mut f: impl FnMut(&[u8], Payload)) {
        let mut key = prefix.to_vec();
        let mut stack: Vec<(usize, Option<u8>, usize)> = vec![(start, None, key.len())];
        while let Some((n, edge, depth)) = stack.pop() {
            key.truncate(depth);
            if let Some(b) = edge {
                key.push(b);
            }
            if let Some(p) = self.nodes[n].payload {
                f(&key, p);
            }
            for &(b, c) in self.nodes[n].children.iter().rev() {
                stack.push((c as usize, Some(b), key.len()));
            }
        }
    }

    fn payloads_below(&self, start: usize, mut f: impl FnMut(Payload)) {
        let mut stack = vec![start];
        while let Some(n) = stack.pop() {
            if let Some(p) = self.nodes[n].payload {
                f(p);
            }
            stack.extend(self.nodes[n].children.iter().map(|c| c.1 as usize));
        }
    }

    /// Cluster scores for typed text: each cluster's share of the total
    /// frequency of phrases starting with `typ`.
    pub fn trie_scores(&self, typ: &str) -> TrieScoreResult {
        let Some(start) = self.walk(typ).filter(|_| !typ.is_empty()) else {
            return TrieScoreResult {
                empty_match: true,
                ..Default::default()
            };
        };
        let mut mass: BTreeMap<u32, u64> = BTreeMap::new();
        let mut total = 0u64;
        let mut matched = 0;
        self.payloads_below(start, |p| {
            *mass.entry(p.cluster_id).or_insert(0) += p.freq;
            total += p.freq;
            matched += 1;
        });
        if total == 0 {
            return TrieScoreResult {
                empty_match: true,
                ..Default::default()
            };
        }
        let denom = total as f64;
        TrieScoreResult {
            scores: mass.into_iter().map(|(c, m)| (c, m as f64 / denom)).collect(),
            matched,
            empty_match: false,
        }
    }

    /// Every entry in byte order of the phrase.
    pub fn entries(&self) -> Vec<Match> {
        let mut out = Vec::with_capacity(self.len);
        self.for_each_below(0, &[], |key, p| {
            out.push(Match {
                phrase: String::from_utf8(key.to_vec()).expect("stored phrases are UTF-8"),
                cluster_id: p.cluster_id,
                freq: p.freq,
            })
        });
        out
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let entries = self.entries();
        let mut out = Vec::with_capacity(12 + entries.len() * 24);
        out.extend_from_slice(TRIE_MAGIC);
        out.extend_from_slice(&TRIE_VERSION.to_le_bytes());
        out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
        for e in &entries {
            put_short_str(&mut out, &e.phrase)?;
            out.extend_from_slice(&e.cluster_id.to_le_bytes());
            out.extend_from_slice(&e.freq.to_le_bytes());
        }
        Ok(out)
    }

    /// Parses the canonical form; entries must be strictly increasing.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        r.magic(TRIE_MAGIC)?;
        let version = r.u16()?;
        if version != TRIE_VERSION {
            return Err(FormatError::UnsupportedVersion(version).into());
        }
        let n = r.u32()? as usize;
        let mut t = TypedTrie::new();
        let mut prev: Option<&str> = None;
        for _ in 0..n {
            let phrase = r.short_str()?;
            let cluster_id = r.u32()?;
            let freq = r.u64()?;
            if prev.is_some_and(|p| p.as_bytes() >= phrase.as_bytes()) {
                return Err(FormatError::Malformed(format!("entry {phrase:?} out of order")).into());
            }
            if phrase.is_empty() || freq == 0 {
                return Err(FormatError::Malformed("empty phrase or zero frequency".into()).into());
            }
            t.insert(phrase, cluster_id, freq)?;
            prev = Some(phrase);
        }
        r.finish()?;
        Ok(t)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        TypedTrie::from_bytes(&std::fs::read(path)?)
    }
}
