//! The class table: `phrase \t cluster_id \t frequency`, sorted by
//! (cluster_id, descending frequency).

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use super::ClusterModel;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassRow {
    pub phrase: String,
    pub cluster_id: usize,
    pub freq: u64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ClassTable {
    pub rows: Vec<ClassRow>,
}

/// Keeps the `cap` clusters with the largest summed phrase frequency and
/// renumbers them densely by that rank.
pub fn export_classes(model: &ClusterModel, cap: usize) -> ClassTable {
    let mut ranked: Vec<(usize, u64)> = (0..model.num_clusters())
        .map(|c| (c, model.cluster_frequency(c)))
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.truncate(cap);
    let mut rows = Vec::new();
    for (new_id, (old, _)) in ranked.into_iter().enumerate() {
        for (p, f) in &model.clusters[old] {
            rows.push(ClassRow {
                phrase: p.clone(),
                cluster_id: new_id,
                freq: *f,
            });
        }
    }
    ClassTable::new(rows)
}

impl ClassTable {
    pub fn new(mut rows: Vec<ClassRow>) -> Self {
        rows.sort_by(|a, b| {
            a.cluster_id
                .cmp(&b.cluster_id)
                .then(b.freq.cmp(&a.freq))
                .then_with(|| a.phrase.cmp(&b.phrase))
        });
        ClassTable { rows }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// One past the largest cluster id.
    pub fn num_clusters(&self) -> usize {
        self.rows.iter().map(|r| r.cluster_id + 1).max().unwrap_or(0)
    }

    pub fn assignment(&self) -> HashMap<String, usize> {
        self.rows.iter().map(|r| (r.phrase.clone(), r.cluster_id)).collect()
    }

    /// Phrases of each cluster, most frequent first.
    pub fn by_cluster(&self) -> Vec<Vec<(String, u64)>> {
        let mut out = vec![Vec::new(); self.num_clusters()];
        for r in &self.rows {
            out[r.cluster_id].push((r.phrase.clone(), r.freq));
        }
        out
    }

    pub fn total_frequency(&self) -> u64 {
        self.rows.iter().map(|r| r.freq).sum()
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for r in &self.rows {
            writeln!(out, "{}\t{}\t{}", r.phrase, r.cluster_id, r.freq).unwrap();
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let bad = || Error::Invalid(format!("cluster table line {}: expected phrase, id, freq", n + 1));
            let mut parts = line.rsplitn(3, '\t');
            let freq = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
            let cluster_id = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
            let phrase = parts.next().ok_or_else(bad)?.to_string();
            rows.push(ClassRow {
                phrase,
                cluster_id,
                freq,
            });
        }
        Ok(ClassTable::new(rows))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_tsv())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        ClassTable::from_tsv(&std::fs::read_to_string(path)?)
    }
}
