//! HDBSCAN over message embeddings and export of the resulting classes.

mod hdbscan;
mod table;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use hdbscan::{
    core_distances, hdbscan_labels, l2_normalize, minimum_spanning_tree, mutual_reachability, Condensed,
    CondensedChild,
    CondensedEdge,
};
pub use table::{export_classes, ClassRow, ClassTable};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterConfig {
    pub min_cluster_size: usize,
    /// Only this many of the most frequent phrases are clustered.
    pub top_phrases: usize,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        ClusterConfig {
            min_cluster_size: 5,
            top_phrases: 34_000,
        }
    }
}

impl ClusterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_cluster_size < 2 {
            return Err(Error::Config("min_cluster_size must be >= 2".into()));
        }
        if self.top_phrases == 0 {
            return Err(Error::Config("top_phrases must be >= 1".into()));
        }
        Ok(())
    }
}

/// Every clustered phrase with its class. Cluster ids are dense and ordered by
/// descending total phrase frequency.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ClusterModel {
    pub assignment: BTreeMap<String, usize>,
    /// Phrases of each cluster with their frequencies, most frequent first.
    pub clusters: Vec<Vec<(String, u64)>>,
}

impl ClusterModel {
    /// Builds a model from raw labels (noise as `None`). Noise points become
    /// singleton clusters; ids are renumbered by descending summed frequency,
    /// ties by the cluster's smallest phrase.
    pub fn from_labels(phrases: &[(String, u64)], labels: &[Option<usize>]) -> Result<Self> {
        if phrases.len() != labels.len() {
            return Err(Error::Shape(format!("{} phrases but {} labels", phrases.len(), labels.len())));
        }
        let mut groups: BTreeMap<(bool, usize), Vec<(String, u64)>> = BTreeMap::new();
        for (i, ((p, f), l)) in phrases.iter().zip(labels).enumerate() {
            let key = match l {
                Some(c) => (false, *c),
                None => (true, i),
            };
            groups.entry(key).or_default().push((p.clone(), *f));
        }
        let mut clusters: Vec<Vec<(String, u64)>> = groups.into_values().collect();
        for c in &mut clusters {
            c.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        }
        clusters.sort_by(|a, b| {
            let fa: u64 = a.iter().map(|x| x.1).sum();
            let fb: u64 = b.iter().map(|x| x.1).sum();
            let ma = a.iter().map(|x| &x.0).min();
            let mb = b.iter().map(|x| &x.0).min();
            fb.cmp(&fa).then_with(|| ma.cmp(&mb))
        });
        let mut assignment = BTreeMap::new();
        for (id, c) in clusters.iter().enumerate() {
            for (p, _) in c {
                if assignment.insert(p.clone(), id).is_some() {
                    return Err(Error::Invalid(format!("phrase {p:?} listed twice")));
                }
            }
        }
        Ok(ClusterModel { assignment, clusters })
    }

    pub fn num_clusters(&self) -> usize {
        self.clusters.len()
    }

    pub fn cluster_of(&self, phrase: &str) -> Option<usize> {
        self.assignment.get(phrase).copied()
    }

    pub fn cluster_frequency(&self, id: usize) -> u64 {
        self.clusters.get(id).map(|c| c.iter().map(|x| x.1).sum()).unwrap_or(0)
    }

    /// Clusters holding more than one phrase.
    pub fn num_multi(&self) -> usize {
        self.clusters.iter().filter(|c| c.len() > 1).count()
    }
}

/// Clusters phrases by their embeddings. `phrases` and `embeddings` are
/// parallel; only the `top_phrases` most frequent phrases take part.
pub fn cluster_phrases(
    phrases: &[(String, u64)],
    embeddings: &[Vec<f64>],
    config: &ClusterConfig,
) -> Result<ClusterModel> {
    config.validate()?;
    if phrases.len() != embeddings.len() {
        return Err(Error::Shape(format!(
            "{} phrases but {} embeddings",
            phrases.len(),
            embeddings.len()
        )));
    }
    let mut order: Vec<usize> = (0..phrases.len()).collect();
    order.sort_by(|&a, &b| phrases[b].1.cmp(&phrases[a].1).then_with(|| phrases[a].0.cmp(&phrases[b].0)));
    order.truncate(config.top_phrases);
    let kept: Vec<(String, u64)> = order.iter().map(|&i| phrases[i].clone()).collect();
    let points: Vec<Vec<f64>> = order.iter().map(|&i| l2_normalize(&embeddings[i])).collect();
    let labels = hdbscan_labels(&points, config.min_cluster_size);
    ClusterModel::from_labels(&kept, &labels)
}
