//! Plain-text corpus files.
//!
//! Corpus: one conversation per line, messages separated by tabs.
//! Ground truth: `phrase \t intent_id` per line.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use super::{conversation_from_raw, Conversation, MessagePair};
use crate::error::{Error, Result};

fn sanitize(msg: &str) -> String {
    msg.replace(['\t', '\n', '\r'], " ")
}

pub fn write_corpus(path: &Path, conversations: &[Vec<String>]) -> Result<()> {
    let mut out = String::new();
    for conv in conversations {
        let line: Vec<String> = conv.iter().map(|m| sanitize(m)).collect();
        out.push_str(&line.join("\t"));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_corpus(path: &Path) -> Result<Vec<Conversation>> {
    let text = std::fs::read_to_string(path)?;
    Ok(text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, line)| {
            let msgs: Vec<&str> = line.split('\t').collect();
            conversation_from_raw(i as u64, &msgs)
        })
        .collect())
}

pub fn write_ground_truth(path: &Path, ground_truth: &BTreeMap<String, usize>) -> Result<()> {
    let mut out = String::new();
    for (phrase, intent) in ground_truth {
        writeln!(out, "{}\t{}", sanitize(phrase), intent).unwrap();
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn read_ground_truth(path: &Path) -> Result<BTreeMap<String, usize>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = BTreeMap::new();
    for (n, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let (phrase, id) = line
            .rsplit_once('\t')
            .ok_or_else(|| Error::Invalid(format!("ground truth line {}: missing tab", n + 1)))?;
        let id = id
            .trim()
            .parse()
            .map_err(|_| Error::Invalid(format!("ground truth line {}: bad intent id {id:?}", n + 1)))?;
        out.insert(phrase.to_string(), id);
    }
    Ok(out)
}

/// How often each normalized phrase occurs, counting every message once.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PhraseFrequencies {
    counts: HashMap<String, u64>,
}

impl PhraseFrequencies {
    pub fn from_conversations(conversations: &[Conversation]) -> Self {
        let mut counts = HashMap::new();
        for m in conversations.iter().flatten() {
            if m.is_sticker_only() || m.tokens.is_empty() {
                continue;
            }
            *counts.entry(m.phrase()).or_insert(0) += 1;
        }
        PhraseFrequencies { counts }
    }

    pub fn from_pairs(pairs: &[MessagePair]) -> Self {
        let mut seen = std::collections::HashSet::new();
        let mut counts = HashMap::new();
        for p in pairs {
            for m in [&p.current, &p.next] {
                if seen.insert((m.conversation_id, m.position)) {
                    *counts.entry(m.phrase()).or_insert(0) += 1;
                }
            }
        }
        PhraseFrequencies { counts }
    }

    pub fn get(&self, phrase: &str) -> u64 {
        self.counts.get(phrase).copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Phrases by descending frequency, ties lexicographic; at most `limit`.
    pub fn top(&self, limit: usize) -> Vec<(String, u64)> {
        let mut v: Vec<(String, u64)> = self.counts.iter().map(|(p, c)| (p.clone(), *c)).collect();
        v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        v.truncate(limit);
        v
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for (p, c) in self.top(usize::MAX) {
            writeln!(out, "{p}\t{c}").unwrap();
        }
        std::fs::write(path, out)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut counts = HashMap::new();
        for line in text.lines().filter(|l| !l.is_empty()) {
            let (p, c) = line
                .rsplit_once('\t')
                .ok_or_else(|| Error::Invalid(format!("bad phrase frequency line {line:?}")))?;
            let c = c
                .parse()
                .map_err(|_| Error::Invalid(format!("bad frequency in line {line:?}")))?;
            counts.insert(p.to_string(), c);
        }
        Ok(PhraseFrequencies { counts })
    }
}
