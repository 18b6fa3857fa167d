use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::{MessagePair, Token};
use crate::error::{Error, Result};

pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;
const FIRST_ID: usize = 2;

/// Word and character vocabularies.
///
/// Both id spaces reserve 0 for padding and 1 for unknown entries; retained
/// words start at 2 in descending-frequency order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocab {
    words: Vec<(String, u64)>,
    chars: Vec<char>,
    #[serde(skip)]
    word_index: HashMap<String, usize>,
    #[serde(skip)]
    char_index: HashMap<char, usize>,
}

/// A token ready for the encoder: its word id and padded character ids.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct EncodedWord {
    pub word_id: usize,
    pub chars: Vec<usize>,
}

impl Vocab {
    pub fn new(words: Vec<(String, u64)>, chars: Vec<char>) -> Self {
        let mut v = Vocab {
            words,
            chars,
            word_index: HashMap::new(),
            char_index: HashMap::new(),
        };
        v.reindex();
        v
    }

    fn reindex(&mut self) {
        self.word_index = self
            .words
            .iter()
            .enumerate()
            .map(|(i, (w, _))| (w.clone(), i + FIRST_ID))
            .collect();
        self.char_index = self.chars.iter().enumerate().map(|(i, c)| (*c, i + FIRST_ID)).collect();
    }

    /// Number of word ids including pad and unk.
    pub fn word_slots(&self) -> usize {
        self.words.len() + FIRST_ID
    }

    /// Number of char ids including pad and unk.
    pub fn char_slots(&self) -> usize {
        self.chars.len() + FIRST_ID
    }

    pub fn words(&self) -> &[(String, u64)] {
        &self.words
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    pub fn word_id(&self, word: &str) -> usize {
        self.word_index.get(word).copied().unwrap_or(UNK_ID)
    }

    pub fn char_id(&self, c: char) -> usize {
        self.char_index.get(&c).copied().unwrap_or(UNK_ID)
    }

    /// Maps a token to ids; characters are truncated or padded to `max_chars`.
    pub fn encode_token(&self, token: &str, max_chars: usize) -> EncodedWord {
        let mut chars: Vec<usize> = token.chars().take(max_chars).map(|c| self.char_id(c)).collect();
        chars.resize(max_chars, PAD_ID);
        EncodedWord {
            word_id: self.word_id(token),
            chars,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let mut v: Vocab = serde_json::from_str(s)?;
        v.reindex();
        Ok(v)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Vocab::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Ranks tokens by frequency (ties broken lexicographically) and keeps the top
/// `max_words`. Each message is counted once even though interior messages of
/// a conversation appear in two pairs.
pub fn build_vocab(pairs: &[MessagePair], max_words: usize) -> Result<Vocab> {
    if max_words == 0 {
        return Err(Error::Config("max_words must be at least 1".into()));
    }
    let mut seen = HashSet::new();
    let mut counts: BTreeMap<&str, u64> = BTreeMap::new();
    for pair in pairs {
        for m in [&pair.current, &pair.next] {
            if m.conversation_id != u64::MAX && !seen.insert((m.conversation_id, m.position)) {
                continue;
            }
            for t in &m.tokens {
                if let Token::Word(s) | Token::Emoticon(s) = t {
                    *counts.entry(s.as_str()).or_default() += 1;
                }
            }
        }
    }
    if counts.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    let mut ranked: Vec<(String, u64)> = counts.into_iter().map(|(w, c)| (w.to_string(), c)).collect();
    // BTreeMap order is lexicographic already; a stable sort keeps it for ties.
    ranked.sort_by(|a, b| b.1.cmp(&a.1));
    ranked.truncate(max_words);
    let chars: BTreeSet<char> = ranked.iter().flat_map(|(w, _)| w.chars()).collect();
    Ok(Vocab::new(ranked, chars.into_iter().collect()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{conversation_from_raw, extract_pairs};

    fn pairs_of(convs: &[&[&str]]) -> Vec<MessagePair> {
        let convs: Vec<_> = convs
            .iter()
            .enumerate()
            .map(|(i, c)| conversation_from_raw(i as u64, c))
            .collect();
        extract_pairs(&convs)
    }

    #[test]
    fn top_k_by_count() {
        let pairs = pairs_of(&[&["a a a", "b b", "c"]]);
        let v = build_vocab(&pairs, 2).unwrap();
        let words: Vec<_> = v.words().iter().map(|(w, _)| w.as_str()).collect();
        assert_eq!(words, ["a", "b"]);
        assert_eq!(v.word_id("a"), 2);
        assert_eq!(v.word_id("c"), UNK_ID);
    }

    #[test]
    fn ties_broken_lexicographically() {
        let pairs = pairs_of(&[&["b a", "a b"]]);
        let v = build_vocab(&pairs, 1).unwrap();
        assert_eq!(v.words()[0].0, "a");
    }

    #[test]
    fn empty_corpus_rejected() {
        assert!(matches!(build_vocab(&[], 10), Err(Error::EmptyCorpus)));
    }

    #[test]
    fn chars_padded_and_truncated() {
        let pairs = pairs_of(&[&["ab", "ba"]]);
        let v = build_vocab(&pairs, 10).unwrap();
        let e = v.encode_token("abz", 4);
        assert_eq!(e.chars, vec![v.char_id('a'), v.char_id('b'), UNK_ID, PAD_ID]);
        assert_eq!(v.encode_token("abababababab", 10).chars.len(), 10);
        assert_ne!(PAD_ID, UNK_ID);
    }

    #[test]
    fn json_round_trip_restores_index() {
        let pairs = pairs_of(&[&["hi there", "hello"]]);
        let v = build_vocab(&pairs, 10).unwrap();
        let back = Vocab::from_json(&v.to_json().unwrap()).unwrap();
        assert_eq!(back.word_id("hello"), v.word_id("hello"));
        assert_eq!(back.char_id('h'), v.char_id('h'));
    }
}
