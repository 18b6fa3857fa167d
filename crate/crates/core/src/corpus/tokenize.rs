use std::collections::HashSet;

use serde::{Deserialize, Serialize};

/// Reserved token standing in for a sticker sent inside a conversation.
pub const STICKER_MARKER: &str = "<sticker>";

const DEFAULT_LEXICON: &str = include_str!("../../data/emoticons.txt");

/// Characters stripped from the edges of word pieces.
const EDGE_PUNCT: &[char] = &['.', ',', '!', '?', ';', ':', '"', '\'', '(', ')'];

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", content = "text", rename_all = "snake_case")]
pub enum Token {
    Word(String),
    Emoticon(String),
    Sticker,
}

impl Token {
    pub fn as_str(&self) -> &str {
        match self {
            Token::Word(s) | Token::Emoticon(s) => s,
            Token::Sticker => STICKER_MARKER,
        }
    }

    pub fn is_word(&self) -> bool {
        matches!(self, Token::Word(_))
    }
}

/// Whitespace tokenizer with emoticon detection.
///
/// Emoticons that begin with punctuation are found anywhere in a chunk, longest
/// entry first, so `"n8:)"` splits into `n8` and `:)`. Entries that begin with a
/// letter or digit (`xD`, `B)`) only match a whole chunk; otherwise words like
/// `"b)"` would be mangled.
#[derive(Debug, Clone)]
pub struct Tokenizer {
    glued: Vec<String>,
    whole: HashSet<String>,
}

impl Default for Tokenizer {
    fn default() -> Self {
        Tokenizer::from_lexicon(DEFAULT_LEXICON)
    }
}

impl Tokenizer {
    /// Builds a tokenizer from a lexicon file body: one emoticon per line,
    /// `#` comments and blank lines ignored.
    pub fn from_lexicon(lexicon: &str) -> Self {
        let mut glued = Vec::new();
        let mut whole = HashSet::new();
        for line in lexicon.lines() {
            let entry = line.trim();
            if entry.is_empty() || entry.starts_with('#') {
                continue;
            }
            whole.insert(entry.to_string());
            if !entry.chars().next().is_some_and(char::is_alphanumeric) {
                glued.push(entry.to_string());
            }
        }
        // Longest first so ":))" wins over ":)".
        glued.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
        glued.dedup();
        Tokenizer { glued, whole }
    }

    pub fn tokenize(&self, text: &str) -> Vec<Token> {
        let mut tokens = Vec::new();
        for chunk in text.split_whitespace() {
            if chunk == STICKER_MARKER {
                tokens.push(Token::Sticker);
                continue;
            }
            if self.whole.contains(chunk) {
                tokens.push(Token::Emoticon(chunk.to_string()));
                continue;
            }
            let mut word_start = 0;
            let mut i = 0;
            while i < chunk.len() {
                if let Some(emo) = self.glued.iter().find(|e| chunk[i..].starts_with(e.as_str())) {
                    push_word(&mut tokens, &chunk[word_start..i]);
                    tokens.push(Token::Emoticon(emo.clone()));
                    i += emo.len();
                    word_start = i;
                } else {
                    i += chunk[i..].chars().next().map_or(1, char::len_utf8);
                }
            }
            push_word(&mut tokens, &chunk[word_start..]);
        }
        tokens
    }
}

fn push_word(tokens: &mut Vec<Token>, piece: &str) {
    let trimmed = piece.trim_matches(EDGE_PUNCT);
    if !trimmed.is_empty() {
        tokens.push(Token::Word(trimmed.to_lowercase()));
    }
}

/// Tokenizes with the default emoticon lexicon.
pub fn tokenize(text: &str) -> Vec<Token> {
    thread_local! {
        static DEFAULT: Tokenizer = Tokenizer::default();
    }
    DEFAULT.with(|t| t.tokenize(text))
}

/// Canonical text of a token sequence: tokens joined by single spaces.
pub fn phrase_of(tokens: &[Token]) -> String {
    let mut out = String::new();
    for (i, t) in tokens.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(t.as_str());
    }
    out
}
