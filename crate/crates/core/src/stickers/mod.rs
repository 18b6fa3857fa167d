//! Cluster-to-sticker mapping: stickers attach to clusters whose phrases
//! resemble their tags, ranked within each cluster and re-ranked from
//! shown/sent feedback.

mod asset;

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use asset::{STICKER_MAP_MAGIC, STICKER_MAP_VERSION};

use crate::clusterer::ClassTable;
use crate::corpus::Message;
use crate::embedder::EncoderModel;
use crate::error::{Error, Result};
use crate::nn::cosine;

/// Default attachment threshold on cosine similarity.
pub const DEFAULT_THRESHOLD: f64 = 0.7;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sticker {
    pub sticker_id: String,
    pub pack_id: String,
    pub tags: Vec<String>,
    pub label: String,
}

impl Sticker {
    /// Tags in the corpus's normalized phrase form.
    pub fn normalized_tags(&self) -> Vec<String> {
        self.tags.iter().map(|t| Message::standalone(t).phrase()).collect()
    }
}

pub fn read_catalog(path: &Path) -> Result<Vec<Sticker>> {
    let file = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (n, line) in file.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let s: Sticker = serde_json::from_str(&line)
            .map_err(|e| Error::Invalid(format!("catalog line {}: {e}", n + 1)))?;
        if s.tags.is_empty() {
            return Err(Error::Invalid(format!("sticker {} has no tags", s.sticker_id)));
        }
        out.push(s);
    }
    Ok(out)
}

pub fn write_catalog(path: &Path, stickers: &[Sticker]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for s in stickers {
        writeln!(f, "{}", serde_json::to_string(s)?)?;
    }
    f.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappedSticker {
    pub sticker_id: String,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct StickerMapping {
    /// Ranked stickers per cluster.
    pub clusters: BTreeMap<u32, Vec<MappedSticker>>,
    /// Display labels by sticker id.
    pub labels: BTreeMap<String, String>,
}

impl StickerMapping {
    pub fn stickers_for(&self, cluster: u32) -> &[MappedSticker] {
        self.clusters.get(&cluster).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Number of (cluster, sticker) attachments.
    pub fn num_attachments(&self) -> usize {
        self.clusters.values().map(Vec::len).sum()
    }

    pub fn label(&self, sticker_id: &str) -> &str {
        self.labels.get(sticker_id).map(String::as_str).unwrap_or("")
    }
}

fn by_similarity(a: &MappedSticker, b: &MappedSticker) -> std::cmp::Ordering {
    b.similarity.total_cmp(&a.similarity).then_with(|| a.sticker_id.cmp(&b.sticker_id))
}

/// Mapping from precomputed vectors: `cluster_vecs[c]` holds the embeddings
/// of cluster `c`'s phrases and `tag_vecs[s]` those of sticker `s`'s tags.
/// A sticker's similarity to a cluster is the best cosine over all
/// (tag, phrase) pairs.
pub fn build_mapping_from_vectors(
    cluster_vecs: &BTreeMap<u32, Vec<Vec<f64>>>,
    stickers: &[Sticker],
    tag_vecs: &[Vec<Vec<f64>>],
    threshold: f64,
) -> Result<StickerMapping> {
    if stickers.len() != tag_vecs.len() {
        return Err(Error::Shape(format!("{} stickers but {} tag lists", stickers.len(), tag_vecs.len())));
    }
    let mut clusters: BTreeMap<u32, Vec<MappedSticker>> = BTreeMap::new();
    for (c, phrases) in cluster_vecs {
        for (s, tags) in stickers.iter().zip(tag_vecs) {
            let best = tags
                .iter()
                .flat_map(|t| phrases.iter().map(move |p| cosine(t, p)))
                .fold(f64::NEG_INFINITY, f64::max)
                .clamp(-1.0, 1.0);
            if best >= threshold {
                clusters.entry(*c).or_default().push(MappedSticker {
                    sticker_id: s.sticker_id.clone(),
                    similarity: best,
                });
            }
        }
    }
    for v in clusters.values_mut() {
        v.sort_by(by_similarity);
    }
    let labels = stickers.iter().map(|s| (s.sticker_id.clone(), s.label.clone())).collect();
    Ok(StickerMapping { clusters, labels })
}

/// Embeds cluster phrases and sticker tags with `encoder` and maps them.
pub fn build_mapping(
    table: &ClassTable,
    stickers: &[Sticker],
    encoder: &EncoderModel,
    threshold: f64,
) -> Result<StickerMapping> {
    let mut ids = HashMap::new();
    for s in stickers {
        if s.tags.is_empty() {
            return Err(Error::Invalid(format!("sticker {} has no tags", s.sticker_id)));
        }
        if ids.insert(s.sticker_id.as_str(), ()).is_some() {
            return Err(Error::Invalid(format!("duplicate sticker id {}", s.sticker_id)));
        }
    }
    let embed = |texts: &[String]| -> Result<Vec<Vec<f64>>> {
        // texts with no tokens have no embedding and never match
        let keep: Vec<&String> = texts.iter().filter(|t| !encoder.encode_text(t).is_empty()).collect();
        Ok(encoder.embed_many(&keep)?.into_iter().map(|e| e.vector).collect())
    };
    let mut cluster_vecs = BTreeMap::new();
    for (c, phrases) in table.by_cluster().into_iter().enumerate() {
        let texts: Vec<String> = phrases.into_iter().map(|p| p.0).collect();
        cluster_vecs.insert(c as u32, embed(&texts)?);
    }
    let tag_vecs = stickers
        .iter()
        .map(|s| embed(&s.normalized_tags()))
        .collect::<Result<Vec<_>>>()?;
    build_mapping_from_vectors(&cluster_vecs, stickers, &tag_vecs, threshold)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecommendedSticker {
    pub sticker_id: String,
    pub cluster: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Recommendation {
    pub stickers: Vec<RecommendedSticker>,
    /// None of the ranked clusters has a sticker.
    pub no_stickers: bool,
}

/// Round robin over the ranked clusters, taking each cluster's best sticker
/// not yet chosen, until `n` are collected or all lists are exhausted.
pub fn recommend(ranked_clusters: &[u32], mapping: &StickerMapping, n: usize) -> Recommendation {
    let lists: Vec<(u32, &[MappedSticker])> =
        ranked_clusters.iter().map(|&c| (c, mapping.stickers_for(c))).collect();
    let mut cursor = vec![0usize; lists.len()];
    let mut out: Vec<RecommendedSticker> = Vec::new();
    let mut progressed = true;
    while out.len() < n && progressed {
        progressed = false;
        for (i, (c, list)) in lists.iter().enumerate() {
            if out.len() >= n {
                break;
            }
            while cursor[i] < list.len() {
                let s = &list[cursor[i]];
                cursor[i] += 1;
                if !out.iter().any(|r| r.sticker_id == s.sticker_id) {
                    out.push(RecommendedSticker {
                        sticker_id: s.sticker_id.clone(),
                        cluster: *c,
                    });
                    progressed = true;
                    break;
                }
            }
        }
    }
    let no_stickers = lists.iter().all(|(_, l)| l.is_empty());
    Recommendation { stickers: out, no_stickers }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackEvent {
    pub cluster_id: u32,
    pub sticker_id: String,
    pub shown: u64,
    pub sent: u64,
}

pub fn read_feedback(path: &Path) -> Result<Vec<FeedbackEvent>> {
    let text = std::fs::read_to_string(path)?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| serde_json::from_str(l).map_err(|e| Error::Invalid(format!("feedback line {}: {e}", n + 1))))
        .collect()
}

/// Laplace-smoothed send rate.
pub fn send_rate(shown: u64, sent: u64) -> f64 {
    (sent as f64 + 1.0) / (shown as f64 + 2.0)
}

/// Re-ranks each cluster's stickers by smoothed send rate, similarity
/// breaking ties. Attachments never change; events for unknown pairs are
/// ignored and counted.
pub fn refresh_from_feedback(mapping: &StickerMapping, events: &[FeedbackEvent]) -> (StickerMapping, usize) {
    let mut counts: HashMap<(u32, &str), (u64, u64)> = HashMap::new();
    let mut ignored = 0;
    for e in events {
        let known = mapping.stickers_for(e.cluster_id).iter().any(|s| s.sticker_id == e.sticker_id);
        if !known {
            ignored += 1;
            continue;
        }
        let c = counts.entry((e.cluster_id, e.sticker_id.as_str())).or_default();
        c.0 += e.shown;
        c.1 += e.sent;
    }
    if ignored > 0 {
        log::warn!("ignored {ignored} feedback events for unknown (cluster, sticker) pairs");
    }
    let mut out = mapping.clone();
    for (c, list) in out.clusters.iter_mut() {
        if !counts.keys().any(|k| k.0 == *c) {
            continue;
        }
        let rate = |s: &MappedSticker| {
            let (shown, sent) = counts.get(&(*c, s.sticker_id.as_str())).copied().unwrap_or((0, 0));
            send_rate(shown, sent)
        };
        list.sort_by(|a, b| rate(b).total_cmp(&rate(a)).then_with(|| by_similarity(a, b)));
    }
    (out, ignored)
}

#[cfg(test)]
mod tests;
