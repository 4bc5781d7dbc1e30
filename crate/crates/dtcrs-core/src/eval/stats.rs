//! Node and evidence-coverage statistics over built trees.

use crate::error::{Error, Result};
use crate::model::SummaryTree;
use crate::retrieval::RetrievalResult;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};

/// Per-layer averages and evidence coverage for a set of trees.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TreeStatsReport {
    pub avg_nodes_per_layer: BTreeMap<u32, f64>,
    /// Share of evidence-bearing retrieved nodes per layer; omitted (empty)
    /// when no gold evidence was supplied.
    pub evidence_coverage_per_layer: BTreeMap<u32, f64>,
    pub build_seconds: f64,
}

fn normalize(text: &str) -> String {
    text.to_lowercase()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

/// Average layer sizes over `trees`, plus evidence coverage of the
/// retrieved nodes: a retrieved node is an evidence node when its text
/// contains (normalized substring) any gold evidence string for its query.
/// `retrievals` and `gold_evidence` are aligned by index.
pub fn tree_stats(
    trees: &[SummaryTree],
    retrievals: &[RetrievalResult],
    gold_evidence: &[Vec<String>],
) -> Result<TreeStatsReport> {
    if trees.is_empty() {
        return Err(Error::invalid("tree statistics need at least one tree"));
    }
    if retrievals.len() != gold_evidence.len() {
        return Err(Error::invalid(format!(
            "{} retrievals for {} evidence sets",
            retrievals.len(),
            gold_evidence.len()
        )));
    }

    let mut totals: BTreeMap<u32, usize> = BTreeMap::new();
    for tree in trees {
        for (layer, ids) in tree.layers() {
            *totals.entry(*layer).or_insert(0) += ids.len();
        }
    }
    let avg_nodes_per_layer: BTreeMap<u32, f64> = totals
        .into_iter()
        .map(|(layer, count)| (layer, count as f64 / trees.len() as f64))
        .collect();

    let mut node_text: HashMap<&str, (u32, String)> = HashMap::new();
    for tree in trees {
        for node in tree.nodes() {
            node_text.insert(&node.id, (node.layer, normalize(&node.text)));
        }
    }

    let mut evidence_per_layer: BTreeMap<u32, usize> = BTreeMap::new();
    let mut total_evidence_nodes = 0usize;
    let mut any_gold = false;
    for (retrieval, gold) in retrievals.iter().zip(gold_evidence) {
        let gold_normalized: Vec<String> = gold
            .iter()
            .map(|g| normalize(g))
            .filter(|g| !g.is_empty())
            .collect();
        if gold_normalized.is_empty() {
            continue;
        }
        any_gold = true;
        for item in &retrieval.items {
            let Some((layer, text)) = node_text.get(item.node_id.as_str()) else {
                return Err(Error::invalid(format!(
                    "retrieval references unknown node `{}`",
                    item.node_id
                )));
            };
            if gold_normalized.iter().any(|g| text.contains(g.as_str())) {
                *evidence_per_layer.entry(*layer).or_insert(0) += 1;
                total_evidence_nodes += 1;
            }
        }
    }

    let evidence_coverage_per_layer = if any_gold && total_evidence_nodes > 0 {
        evidence_per_layer
            .into_iter()
            .map(|(layer, count)| (layer, count as f64 / total_evidence_nodes as f64))
            .collect()
    } else {
        BTreeMap::new()
    };

    let build_seconds = trees.iter().map(|t| t.stats.total_seconds).sum::<f64>()
        / trees.len() as f64;

    Ok(TreeStatsReport {
        avg_nodes_per_layer,
        evidence_coverage_per_layer,
        build_seconds,
    })
}
