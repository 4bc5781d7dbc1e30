//! Dense retrieval over chunks and summary trees.
//!
//! All ranking is exact full scan; ordering is total and deterministic
//! (score descending, then node id ascending).

use crate::error::{Error, Result};
use crate::model::{Chunk, EmbeddingVector, SummaryTree};
use serde::{Deserialize, Serialize};

/// How a context was retrieved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetrievalMethod {
    Dpr,
    Collapsed,
    Traversal,
}

/// One retrieved node with its similarity score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedItem {
    pub node_id: String,
    pub score: f64,
    pub layer: u32,
}

/// A ranked retrieval outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub query_id: String,
    pub items: Vec<RetrievedItem>,
    pub total_tokens: usize,
    pub method: RetrievalMethod,
}

/// Cosine similarity. Errors on dimension mismatch or zero vectors.
pub fn cosine(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::invalid(format!(
            "cosine over mismatched dims {} and {}",
            a.dim(),
            b.dim()
        )));
    }
    let norm_a = a.l2_norm();
    let norm_b = b.l2_norm();
    if norm_a == 0.0 || norm_b == 0.0 {
        return Err(Error::invalid("cosine is undefined for zero vectors"));
    }
    let dot: f64 = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| x * y)
        .sum();
    Ok((dot / (norm_a * norm_b)).clamp(-1.0, 1.0))
}

fn rank(mut scored: Vec<RetrievedItem>) -> Vec<RetrievedItem> {
    scored.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| a.node_id.cmp(&b.node_id))
    });
    scored
}

/// Top-k chunks by cosine similarity (all chunks when fewer than k).
pub fn dpr_topk(
    query_id: &str,
    query: &EmbeddingVector,
    chunks: &[Chunk],
    embeddings: &[EmbeddingVector],
    k: usize,
) -> Result<RetrievalResult> {
    if k == 0 {
        return Err(Error::invalid("top-k requires k >= 1"));
    }
    if chunks.len() != embeddings.len() {
        return Err(Error::invalid(format!(
            "{} chunks but {} embeddings",
            chunks.len(),
            embeddings.len()
        )));
    }
    let mut scored = Vec::with_capacity(chunks.len());
    for (chunk, embedding) in chunks.iter().zip(embeddings) {
        scored.push(RetrievedItem {
            node_id: chunk.id.clone(),
            score: cosine(query, embedding)?,
            layer: 0,
        });
    }
    let mut items = rank(scored);
    items.truncate(k);
    let total_tokens = items
        .iter()
        .map(|item| {
            chunks
                .iter()
                .find(|c| c.id == item.node_id)
                .map(|c| c.token_count)
                .unwrap_or(0)
        })
        .sum();
    Ok(RetrievalResult {
        query_id: query_id.to_string(),
        items,
        total_tokens,
        method: RetrievalMethod::Dpr,
    })
}

/// Collapsed-tree retrieval: every node of every layer ranked in one pool,
/// then admitted greedily under the token budget. Nodes that would overflow
/// are skipped and ranking continues, so the budget is used fully.
pub fn collapsed_retrieve(
    query_id: &str,
    query: &EmbeddingVector,
    tree: &SummaryTree,
    budget_tokens: usize,
) -> Result<RetrievalResult> {
    let mut scored = Vec::with_capacity(tree.nodes().len());
    for node in tree.nodes() {
        scored.push(RetrievedItem {
            node_id: node.id.clone(),
            score: cosine(query, &node.embedding)?,
            layer: node.layer,
        });
    }
    let ranked = rank(scored);
    let mut items = Vec::new();
    let mut total_tokens = 0usize;
    for item in ranked {
        let tokens = tree
            .node(&item.node_id)
            .map(|n| n.token_count)
            .unwrap_or(0);
        if total_tokens + tokens <= budget_tokens {
            total_tokens += tokens;
            items.push(item);
        }
    }
    Ok(RetrievalResult {
        query_id: query_id.to_string(),
        items,
        total_tokens,
        method: RetrievalMethod::Collapsed,
    })
}

/// Tree-traversal retrieval: top-k at the top layer, then repeatedly rank
/// the children of the previous selection, until the frontier has no
/// children. The result is the union across layers in selection order.
pub fn traverse_retrieve(
    query_id: &str,
    query: &EmbeddingVector,
    tree: &SummaryTree,
    k_per_layer: usize,
) -> Result<RetrievalResult> {
    if k_per_layer == 0 {
        return Err(Error::invalid("traversal requires k >= 1"));
    }
    let Some(top) = tree.top_layer() else {
        return Ok(RetrievalResult {
            query_id: query_id.to_string(),
            items: Vec::new(),
            total_tokens: 0,
            method: RetrievalMethod::Traversal,
        });
    };
    let mut frontier: Vec<String> = tree.layers()[&top].clone();
    let mut items: Vec<RetrievedItem> = Vec::new();
    let mut seen = std::collections::HashSet::new();

    while !frontier.is_empty() {
        let mut scored = Vec::with_capacity(frontier.len());
        for id in &frontier {
            let node = tree
                .node(id)
                .ok_or_else(|| Error::schema(id.clone(), "traversal hit a dangling id"))?;
            scored.push(RetrievedItem {
                node_id: node.id.clone(),
                score: cosine(query, &node.embedding)?,
                layer: node.layer,
            });
        }
        let mut selected = rank(scored);
        selected.truncate(k_per_layer);

        let mut next = Vec::new();
        for item in selected {
            if let Some(node) = tree.node(&item.node_id) {
                for child in &node.children {
                    if !next.contains(child) {
                        next.push(child.clone());
                    }
                }
            }
            if seen.insert(item.node_id.clone()) {
                items.push(item);
            }
        }
        frontier = next;
    }

    let total_tokens = items
        .iter()
        .filter_map(|item| tree.node(&item.node_id).map(|n| n.token_count))
        .sum();
    Ok(RetrievalResult {
        query_id: query_id.to_string(),
        items,
        total_tokens,
        method: RetrievalMethod::Traversal,
    })
}
