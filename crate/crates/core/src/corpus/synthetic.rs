//! Synthetic chat corpus with ground-truth intents.
//!
//! Each intent has a canonical phrase, a fixed pool of surface variants
//! produced by orthographic rules (vowel dropping, chat-speak substitutions,
//! character repetition, transliteration respellings) and a reply
//! distribution over other intents. Conversations are random walks over the
//! reply distributions; every message is one variant of its intent.

use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{conversation_from_raw, normalize_repeats, tokenize, Conversation};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantRule {
    /// Drops a non-initial vowel when a consonant follows it: "raha" → "rha".
    VowelDrop,
    /// Chat-speak lookup table: good → gud, night → n8, you → u.
    Substitution,
    /// Repeats the final character: "hi" → "hii".
    CharRepeat,
    /// Romanization respellings: accha ↔ acha ↔ achha.
    Transliteration,
}

const ALL_RULES: [VariantRule; 4] = [
    VariantRule::VowelDrop,
    VariantRule::Substitution,
    VariantRule::CharRepeat,
    VariantRule::Transliteration,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticIntent {
    pub intent_id: usize,
    pub canonical_phrase: String,
    pub variant_rules: Vec<VariantRule>,
    /// Next-intent probabilities; sums to 1.
    pub reply_distribution: BTreeMap<usize, f64>,
    /// Surface variants (normalized phrases) with sampling weights.
    pub variants: Vec<(String, f64)>,
    /// Relative weight of starting a conversation with this intent.
    pub popularity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub seed: u64,
    pub n_intents: usize,
    pub n_conversations: usize,
    pub mean_conversation_len: usize,
    pub min_variants: usize,
    pub max_variants: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            seed: 1,
            n_intents: 200,
            n_conversations: 50,
            mean_conversation_len: 12,
            min_variants: 6,
            max_variants: 14,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub intents: Vec<SyntheticIntent>,
    /// Raw message texts, one vector per conversation.
    pub raw_conversations: Vec<Vec<String>>,
    /// Normalized phrase → intent id for every surface form the generator can emit.
    pub ground_truth: BTreeMap<String, usize>,
}

impl SyntheticCorpus {
    pub fn conversations(&self) -> Vec<Conversation> {
        self.raw_conversations
            .iter()
            .enumerate()
            .map(|(i, c)| conversation_from_raw(i as u64, c))
            .collect()
    }

    pub fn intent_of(&self, phrase: &str) -> Option<usize> {
        self.ground_truth.get(phrase).copied()
    }
}

const CANONICAL: &[&str] = &[
    "good morning",
    "good night",
    "where are you",
    "kya kar raha hai",
    "i love you",
    "love you too",
    "miss you",
    "me too",
    "thank you",
    "welcome",
    "hello",
    "how are you",
    "i am fine",
    "what are you doing",
    "nothing much",
    "khana khaya",
    "theek hai",
    "chal bye",
    "see you",
    "take care",
    "sorry yaar",
    "no problem",
    "happy birthday",
    "good evening",
    "sweet dreams",
    "call me",
    "busy hu",
    "kal milte hai",
    "kaise ho",
    "main theek hu",
    "kya hua",
    "kuch nahi",
    "so ja",
    "office me hu",
    "ghar pe hu",
    "kab aa rahe ho",
    "abhi aata hu",
    "pagal hai kya",
    "seriously",
    "congratulations",
    "all the best",
    "get well soon",
    "please",
    "wait karo",
    "nice pic",
    "awesome",
    "beautiful",
    "shut up",
    "chup kar",
    "kya baat hai",
    "bahut accha",
    "mast hai",
    "jaldi aa",
    "late ho gaya",
    "kitne baje",
    "free ho",
    "baat karo",
    "reply karo",
    "online aa",
    "good luck",
    "same to you",
    "happy diwali",
    "eid mubarak",
    "namaste",
    "well done",
    "i dont know",
    "pata nahi",
    "yaad aa rahi hai",
    "neend aa rahi hai",
    "bhook lagi hai",
    "movie dekhne chale",
    "party kab hai",
    "kal exam hai",
    "padhai kar raha hu",
    "khelne chal",
    "accha",
    "haan bolo",
    "nahi yaar",
    "what happened",
    "tell me",
];

/// Extra words for procedurally built phrases once the curated list runs out.
const WORD_POOL: &[&str] = &[
    "aaj", "kal", "abhi", "phir", "kab", "kahan", "kyun", "kaun", "mera", "tera", "uska", "hamara", "ghar",
    "school", "college", "office", "market", "paani", "chai", "khana", "doodh", "gaana", "movie", "game",
    "cricket", "match", "bus", "train", "gaadi", "phone", "message", "photo", "video", "dost", "bhai",
    "behen", "mummy", "papa", "yaar", "baby", "jaan", "pyaar", "dil", "dard", "khushi", "gussa", "mazaa",
    "thanda", "garam", "barish", "dhoop", "subah", "shaam", "raat", "din", "hafta", "mahina", "saal",
    "jana", "aana", "khana", "peena", "sona", "uthna", "baithna", "chalna", "dekhna", "sunna", "bolna",
    "likhna", "padhna", "khelna", "naachna", "gaana", "milna", "rukna", "sochna", "samajh", "bata",
    "pucho", "chalo", "ruko", "dekho", "suno", "bolo", "karo", "lao", "do", "lo", "please", "sorry",
    "thanks", "welcome", "hello", "night", "morning", "evening", "love", "miss", "good", "nice", "great",
    "happy", "sad", "tired", "bored", "hungry", "late", "early", "soon", "today", "tomorrow", "weekend",
];

/// Word-level chat-speak table used by [`VariantRule::Substitution`].
fn substitutions(word: &str) -> &'static [&'static str] {
    match word {
        "good" => &["gud", "gd", "gudd"],
        "morning" => &["mrng", "mornin", "morng"],
        "night" => &["n8", "nite", "nyt"],
        "evening" => &["evng", "eve"],
        "you" => &["u", "yu"],
        "are" => &["r"],
        "love" => &["luv", "lv"],
        "please" => &["plz", "pls"],
        "thank" => &["thnk", "thanku"],
        "thanks" => &["thx", "thnx"],
        "what" => &["wat", "wht"],
        "where" => &["whr", "wer"],
        "doing" => &["doin"],
        "nothing" => &["nthng", "nuthing"],
        "much" => &["mch"],
        "see" => &["c"],
        "too" => &["2", "to"],
        "kya" => &["kia", "kyaa"],
        "hai" => &["h", "he"],
        "nahi" => &["nhi", "nai", "nahin"],
        "accha" => &["acha", "achha"],
        "theek" => &["thik", "thk"],
        "kar" => &["kr"],
        "raha" => &["rha"],
        "rahe" => &["rhe"],
        "rahi" => &["rhi"],
        "hu" => &["hoon", "hun"],
        "main" => &["mai", "me"],
        "kaise" => &["kese", "kaisey"],
        "yaar" => &["yar", "yr"],
        "baat" => &["bat"],
        "bahut" => &["bhut", "boht"],
        "karo" => &["kro"],
        "happy" => &["hapy", "hpy"],
        "birthday" => &["bday", "bdy"],
        "welcome" => &["wlcm", "welcm"],
        "sorry" => &["sry", "sorri"],
        "congratulations" => &["congrats", "congo"],
        "awesome" => &["awsm", "osm"],
        "beautiful" => &["butiful", "bful"],
        "know" => &["knw", "no"],
        "dont" => &["don't", "dnt"],
        "seriously" => &["srsly", "seriusly"],
        "tell" => &["tel"],
        "me" => &["mi"],
        "problem" => &["prob", "prblm"],
        "hello" => &["helo", "hllo"],
        "care" => &["cr"],
        "pic" => &["pik"],
        _ => &[],
    }
}

const VOWELS: &[char] = &['a', 'e', 'i', 'o', 'u'];

fn vowel_drop(word: &str) -> String {
    let chars: Vec<char> = word.chars().collect();
    let mut out = String::new();
    for (i, &c) in chars.iter().enumerate() {
        let next_is_consonant = chars
            .get(i + 1)
            .is_some_and(|n| n.is_alphabetic() && !VOWELS.contains(n));
        if i > 0 && VOWELS.contains(&c) && next_is_consonant {
            continue;
        }
        out.push(c);
    }
    out
}

/// Respellings tried in order; the first that applies wins.
const TRANSLIT: &[(&str, &str)] = &[
    ("cch", "ch"),
    ("cc", "ch"),
    ("ch", "chh"),
    ("aa", "a"),
    ("ee", "i"),
    ("oo", "u"),
    ("w", "v"),
    ("v", "w"),
    ("ph", "f"),
    ("z", "j"),
];

fn transliterate(word: &str, pick: usize) -> String {
    let applicable: Vec<&(&str, &str)> = TRANSLIT.iter().filter(|(from, _)| word.contains(from)).collect();
    if applicable.is_empty() {
        // vowel lengthening at the end: "acha" → "achaa"
        return match word.chars().last() {
            Some(c) if VOWELS.contains(&c) => format!("{word}{c}"),
            _ => word.to_string(),
        };
    }
    let (from, to) = applicable[pick % applicable.len()];
    word.replacen(from, to, 1)
}

/// Applies one rule to every word of `phrase`. `pick` selects among
/// alternatives where a rule has several outputs for a word.
pub fn apply_rule(rule: VariantRule, phrase: &str, pick: usize) -> String {
    phrase
        .split(' ')
        .map(|w| match rule {
            VariantRule::VowelDrop => {
                if w.chars().count() >= 3 {
                    vowel_drop(w)
                } else {
                    w.to_string()
                }
            }
            VariantRule::Substitution => {
                let subs = substitutions(w);
                if subs.is_empty() {
                    w.to_string()
                } else {
                    subs[pick % subs.len()].to_string()
                }
            }
            VariantRule::CharRepeat => match w.chars().last() {
                Some(c) => format!("{w}{c}"),
                None => String::new(),
            },
            VariantRule::Transliteration => transliterate(w, pick),
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// One candidate variant: each word independently keeps its form or takes
/// one of the intent's rules.
fn sample_variant(rng: &mut ChaCha8Rng, canonical: &str, rules: &[VariantRule]) -> String {
    canonical
        .split(' ')
        .map(|w| {
            if rng.gen_bool(0.45) {
                return w.to_string();
            }
            let rule = rules[rng.gen_range(0..rules.len())];
            let pick = rng.gen_range(0..8);
            apply_rule(rule, w, pick)
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn normalized_phrase(raw: &str) -> String {
    super::phrase_of(&tokenize(&normalize_repeats(raw)))
}

fn canonical_phrases(rng: &mut ChaCha8Rng, n: usize) -> Vec<String> {
    let mut out: Vec<String> = CANONICAL.iter().take(n).map(|s| s.to_string()).collect();
    let mut used: std::collections::HashSet<String> = out.iter().cloned().collect();
    while out.len() < n {
        let len = rng.gen_range(2..=4);
        let words: Vec<&str> = (0..len).map(|_| *WORD_POOL.choose(rng).unwrap()).collect();
        let phrase = words.join(" ");
        if used.insert(phrase.clone()) {
            out.push(phrase);
        }
    }
    out
}

/// Generates a deterministic corpus for `config.seed`.
pub fn generate_synthetic_corpus(config: &SyntheticConfig) -> Result<SyntheticCorpus> {
    if config.n_intents < 2 {
        return Err(Error::Config(format!(
            "synthetic corpus needs at least 2 intents, got {}",
            config.n_intents
        )));
    }
    if config.min_variants < 1 || config.max_variants < config.min_variants {
        return Err(Error::Config("variant bounds must satisfy 1 <= min <= max".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = config.n_intents;
    let phrases = canonical_phrases(&mut rng, n);

    // Canonical phrases are reserved up front so no variant of another intent
    // can claim them.
    let mut owner: HashMap<String, usize> = HashMap::new();
    for (i, p) in phrases.iter().enumerate() {
        owner.insert(normalized_phrase(p), i);
    }

    // Each intent is the dominant reply of exactly one other intent, so that
    // no two intents share a reply profile.
    let mut primary: Vec<usize> = (0..n).collect();
    primary.shuffle(&mut rng);

    let mut popularity_rank: Vec<usize> = (0..n).collect();
    popularity_rank.shuffle(&mut rng);

    let mut intents = Vec::with_capacity(n);
    for (id, canonical) in phrases.iter().enumerate() {
        let mut rules: Vec<VariantRule> = ALL_RULES.iter().copied().filter(|_| rng.gen_bool(0.75)).collect();
        if rules.is_empty() {
            rules.push(ALL_RULES[rng.gen_range(0..ALL_RULES.len())]);
        }

        let target = rng.gen_range(config.min_variants..=config.max_variants);
        let canonical_norm = normalized_phrase(canonical);
        let mut variants = vec![canonical_norm.clone()];
        let mut attempts = 0;
        while variants.len() < target && attempts < 400 {
            attempts += 1;
            let candidate = normalized_phrase(&sample_variant(&mut rng, canonical, &rules));
            if candidate.is_empty() || candidate.split(' ').count() > super::MAX_PAIR_WORDS {
                continue;
            }
            match owner.get(&candidate) {
                Some(&o) if o != id => continue,
                _ => {}
            }
            if !variants.contains(&candidate) {
                owner.insert(candidate.clone(), id);
                variants.push(candidate);
            }
        }
        if variants.len() < 2 {
            let stretched = normalized_phrase(&apply_rule(VariantRule::CharRepeat, canonical, 0));
            if !owner.contains_key(&stretched) {
                owner.insert(stretched.clone(), id);
                variants.push(stretched);
                if !rules.contains(&VariantRule::CharRepeat) {
                    rules.push(VariantRule::CharRepeat);
                }
            }
        }
        // Zipf-like weights: the canonical spelling is the most common.
        let weighted = variants
            .into_iter()
            .enumerate()
            .map(|(rank, v)| (v, 1.0 / (rank as f64 + 1.0).powf(0.6)))
            .collect();

        let reply_distribution = reply_distribution(&mut rng, id, primary[id], n);
        intents.push(SyntheticIntent {
            intent_id: id,
            canonical_phrase: canonical_norm,
            variant_rules: rules,
            reply_distribution,
            variants: weighted,
            popularity: 1.0 / (popularity_rank[id] as f64 + 1.0).powf(0.5),
        });
    }

    let popularity: Vec<f64> = intents.iter().map(|i| i.popularity).collect();
    let mut raw_conversations = Vec::with_capacity(config.n_conversations);
    let mean = config.mean_conversation_len.max(2);
    for _ in 0..config.n_conversations {
        let len = rng.gen_range(mean / 2..=mean + mean / 2).max(2);
        let mut intent = sample_weighted(&mut rng, popularity.iter().copied());
        let mut conv = Vec::with_capacity(len);
        for _ in 0..len {
            conv.push(emit(&mut rng, &intents[intent]));
            let dist = &intents[intent].reply_distribution;
            let k = sample_weighted(&mut rng, dist.values().copied());
            intent = *dist.keys().nth(k).unwrap();
        }
        raw_conversations.push(conv);
    }

    let mut ground_truth = BTreeMap::new();
    for intent in &intents {
        for (v, _) in &intent.variants {
            ground_truth.insert(v.clone(), intent.intent_id);
        }
    }

    Ok(SyntheticCorpus {
        intents,
        raw_conversations,
        ground_truth,
    })
}

fn reply_distribution(rng: &mut ChaCha8Rng, id: usize, primary: usize, n: usize) -> BTreeMap<usize, f64> {
    // Half the intents have a concentrated reply profile (p >= 0.8).
    let main = if id % 2 == 0 {
        rng.gen_range(0.8..0.92)
    } else {
        rng.gen_range(0.5..0.75)
    };
    let mut dist = BTreeMap::new();
    dist.insert(primary, main);
    let extra = rng.gen_range(1..=2usize).min(n - 1);
    let mut others: Vec<usize> = (0..n).filter(|&j| j != primary).collect();
    others.shuffle(rng);
    let mut rest = 1.0 - main;
    for (k, &j) in others.iter().take(extra).enumerate() {
        let share = if k + 1 == extra { rest } else { rest * rng.gen_range(0.4..0.7) };
        *dist.entry(j).or_insert(0.0) += share;
        rest -= share;
    }
    dist
}

fn sample_weighted(rng: &mut ChaCha8Rng, weights: impl Iterator<Item = f64> + Clone) -> usize {
    let total: f64 = weights.clone().sum();
    let mut x = rng.gen_range(0.0..total);
    let mut last = 0;
    for (i, w) in weights.enumerate() {
        if x < w {
            return i;
        }
        x -= w;
        last = i;
    }
    last
}

/// Renders one raw message for an intent: a weighted variant, sometimes with
/// a capital first letter or a stretched final character. Both are undone by
/// normalization, so the phrase stays in the ground truth.
fn emit(rng: &mut ChaCha8Rng, intent: &SyntheticIntent) -> String {
    let k = sample_weighted(rng, intent.variants.iter().map(|(_, w)| *w));
    let mut text = intent.variants[k].0.clone();
    if rng.gen_bool(0.1) {
        let mut chars = text.chars();
        if let Some(first) = chars.next() {
            text = first.to_uppercase().chain(chars).collect();
        }
    }
    if rng.gen_bool(0.1) {
        if let Some(last) = text.chars().last() {
            if text.ends_with(&format!("{last}{last}")) {
                text.push(last);
                text.push(last);
            }
        }
    }
    text
}
