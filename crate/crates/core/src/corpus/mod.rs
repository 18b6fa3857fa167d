//! Chat corpus ingestion: normalization, tokenization, training pairs,
//! vocabulary, and the synthetic corpus generator.

mod io;
mod normalize;
mod synthetic;
mod tokenize;
mod vocab;

use serde::{Deserialize, Serialize};

pub use io::{read_corpus, read_ground_truth, write_corpus, write_ground_truth, PhraseFrequencies};
pub use normalize::{normalize_repeats, normalize_typed, MAX_REPEAT};
pub use synthetic::{
    apply_rule, generate_synthetic_corpus, SyntheticConfig, SyntheticCorpus, SyntheticIntent, VariantRule,
};
pub use tokenize::{phrase_of, tokenize, Token, Tokenizer, STICKER_MARKER};
pub use vocab::{build_vocab, EncodedWord, Vocab, PAD_ID, UNK_ID};

/// Messages with more word tokens than this never enter a training pair.
pub const MAX_PAIR_WORDS: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub raw: String,
    pub tokens: Vec<Token>,
    pub conversation_id: u64,
    pub position: usize,
}

impl Message {
    pub fn new(raw: &str, conversation_id: u64, position: usize) -> Self {
        Message {
            raw: raw.to_string(),
            tokens: tokenize(&normalize_repeats(raw)),
            conversation_id,
            position,
        }
    }

    /// A message outside any conversation, e.g. a tag phrase or typed text.
    pub fn standalone(raw: &str) -> Self {
        Message::new(raw, u64::MAX, 0)
    }

    pub fn word_count(&self) -> usize {
        self.tokens.iter().filter(|t| t.is_word()).count()
    }

    pub fn is_sticker_only(&self) -> bool {
        !self.tokens.is_empty() && self.tokens.iter().all(|t| matches!(t, Token::Sticker))
    }

    /// Canonical phrase: normalized tokens joined by single spaces.
    pub fn phrase(&self) -> String {
        phrase_of(&self.tokens)
    }

    /// Tokens that carry text (sticker markers dropped).
    pub fn text_tokens(&self) -> impl Iterator<Item = &Token> {
        self.tokens.iter().filter(|t| !matches!(t, Token::Sticker))
    }

    fn usable_in_pair(&self) -> bool {
        self.text_tokens().next().is_some() && self.word_count() <= MAX_PAIR_WORDS
    }
}

pub type Conversation = Vec<Message>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MessagePair {
    pub current: Message,
    pub next: Message,
}

/// Builds a conversation from raw message texts.
pub fn conversation_from_raw<S: AsRef<str>>(conversation_id: u64, raws: &[S]) -> Conversation {
    raws.iter()
        .enumerate()
        .map(|(i, r)| Message::new(r.as_ref(), conversation_id, i))
        .collect()
}

/// Every adjacent (m_i, m_{i+1}) inside one conversation where both sides have
/// at most [`MAX_PAIR_WORDS`] words and some text. Sticker-only and empty
/// messages never form pairs.
pub fn extract_pairs(conversations: &[Conversation]) -> Vec<MessagePair> {
    let mut pairs = Vec::new();
    for conv in conversations {
        for w in conv.windows(2) {
            if w[0].usable_in_pair() && w[1].usable_in_pair() {
                pairs.push(MessagePair {
                    current: w[0].clone(),
                    next: w[1].clone(),
                });
            }
        }
    }
    pairs
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn adjacent_pairs_in_one_conversation() {
        let conv = conversation_from_raw(0, &["hi", "hello", "kaise ho"]);
        let pairs = extract_pairs(&[conv]);
        assert_eq!(pairs.len(), 2);
        assert_eq!(pairs[0].current.phrase(), "hi");
        assert_eq!(pairs[1].next.phrase(), "kaise ho");
    }

    #[test]
    fn long_next_message_excluded() {
        let conv = conversation_from_raw(0, &["hi", "one two three four five six"]);
        assert!(extract_pairs(&[conv]).is_empty());
        let conv = conversation_from_raw(0, &["hi", "one two three four five :)"]);
        assert_eq!(extract_pairs(&[conv]).len(), 1);
    }

    #[test]
    fn pairs_never_cross_conversations() {
        let a = conversation_from_raw(1, &["hi", "hello"]);
        let b = conversation_from_raw(2, &["bye", "tc"]);
        let pairs = extract_pairs(&[a, b]);
        assert_eq!(pairs.len(), 2);
        for p in &pairs {
            assert_eq!(p.current.conversation_id, p.next.conversation_id);
            assert_eq!(p.current.position + 1, p.next.position);
        }
    }

    #[test]
    fn sticker_only_messages_skipped() {
        let conv = conversation_from_raw(0, &["hi", "<sticker>", "bye"]);
        assert!(extract_pairs(&[conv]).is_empty());
    }

    proptest! {
        #[test]
        fn pair_count_bounded(convs in prop::collection::vec(prop::collection::vec("[a-c ]{0,14}", 0..6), 0..5)) {
            let convs: Vec<Conversation> = convs
                .iter()
                .enumerate()
                .map(|(i, c)| conversation_from_raw(i as u64, c))
                .collect();
            let bound: usize = convs.iter().map(|c| c.len().saturating_sub(1)).sum();
            prop_assert!(extract_pairs(&convs).len() <= bound);
        }
    }
}
