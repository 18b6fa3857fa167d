//! Keystroke simulation: reveal the next message one character at a time and
//! record when its cluster first shows up among the top suggestions.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestCase {
    pub prev: String,
    pub next: String,
    /// Cluster of `next`; `None` when the phrase is outside the class table.
    pub cluster: Option<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypingMetrics {
    pub model_name: String,
    /// Mean characters typed before the true cluster enters the top k.
    pub chars_to_type: f64,
    /// Mean number of steps, before that, at which a non-empty list without
    /// the true cluster was on screen.
    pub inaccurate_shown: f64,
    pub fraction_retrieved: f64,
    /// Test messages with a known cluster.
    pub n: usize,
    /// Test messages skipped because their phrase has no cluster.
    pub excluded: usize,
}

/// Runs every case through `model(prev, typed) -> ranked cluster ids`,
/// with typed prefixes of length 0..=len(next) in characters. Means are over
/// retrieved messages only.
pub fn simulate_typing<F>(model_name: &str, cases: &[TestCase], k: usize, mut model: F) -> Result<TypingMetrics>
where
    F: FnMut(&str, &str) -> Result<Vec<u32>>,
{
    if k == 0 {
        return Err(Error::Invalid("k must be >= 1".into()));
    }
    let (mut n, mut excluded, mut retrieved) = (0usize, 0usize, 0usize);
    let (mut chars_sum, mut wrong_sum) = (0usize, 0usize);
    for case in cases {
        let Some(truth) = case.cluster else {
            excluded += 1;
            continue;
        };
        n += 1;
        let boundaries: Vec<usize> = case
            .next
            .char_indices()
            .map(|(i, _)| i)
            .skip(1)
            .chain(std::iter::once(case.next.len()))
            .collect();
        let mut wrong = 0usize;
        for len in 0..=boundaries.len() {
            let typed = if len == 0 { "" } else { &case.next[..boundaries[len - 1]] };
            let ranked = model(&case.prev, typed)?;
            let shown = &ranked[..ranked.len().min(k)];
            if shown.contains(&truth) {
                retrieved += 1;
                chars_sum += len;
                wrong_sum += wrong;
                break;
            }
            if !shown.is_empty() {
                wrong += 1;
            }
        }
    }
    let mean = |s: usize| if retrieved == 0 { 0.0 } else { s as f64 / retrieved as f64 };
    Ok(TypingMetrics {
        model_name: model_name.to_string(),
        chars_to_type: mean(chars_sum),
        inaccurate_shown: mean(wrong_sum),
        fraction_retrieved: if n == 0 { 0.0 } else { retrieved as f64 / n as f64 },
        n,
        excluded,
    })
}

/// Plain-text table, one row per model.
pub fn render_table(rows: &[TypingMetrics]) -> String {
    let width = rows.iter().map(|r| r.model_name.len()).max().unwrap_or(5).max(5);
    let mut out = String::new();
    writeln!(
        out,
        "{:<width$}  {:>13}  {:>16}  {:>18}",
        "model", "chars to type", "inaccurate shown", "fraction retrieved"
    )
    .unwrap();
    for r in rows {
        writeln!(
            out,
            "{:<width$}  {:>13.3}  {:>16.3}  {:>18.3}",
            r.model_name, r.chars_to_type, r.inaccurate_shown, r.fraction_retrieved
        )
        .unwrap();
    }
    out
}
