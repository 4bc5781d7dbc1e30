//! Shared domain types, configuration, and the tree JSON schema.

use crate::error::{Error, Result};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::collections::{BTreeMap, HashMap};

/// A source document entering the pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub title: String,
    pub text: String,
    pub char_count: usize,
}

impl Document {
    pub fn new(id: impl Into<String>, title: impl Into<String>, text: impl Into<String>) -> Self {
        let text = text.into();
        Document {
            id: id.into(),
            title: title.into(),
            char_count: text.chars().count(),
            text,
        }
    }
}

/// A sentence-aligned slice of a document, at most `chunk_size_limit` tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chunk {
    pub id: String,
    pub doc_id: String,
    pub index: usize,
    pub text: String,
    pub token_count: usize,
}

/// A dense embedding. Serialized as a bare number array at full precision;
/// the dimension is the array length.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    values: Vec<f64>,
}

impl EmbeddingVector {
    /// Build a vector, rejecting non-finite components.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("embedding contains non-finite component"));
        }
        Ok(EmbeddingVector { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn l2_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// L2-normalized copy. Zero vectors are returned unchanged.
    pub fn normalized(&self) -> Self {
        let norm = self.l2_norm();
        if norm == 0.0 {
            return self.clone();
        }
        EmbeddingVector {
            values: self.values.iter().map(|v| v / norm).collect(),
        }
    }
}

impl Serialize for EmbeddingVector {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.values.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for EmbeddingVector {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let values = Vec::<f64>::deserialize(deserializer)?;
        EmbeddingVector::new(values).map_err(serde::de::Error::custom)
    }
}

/// One node of a summary tree. Layer 0 nodes are chunks; higher layers are
/// LLM summaries of their children.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryNode {
    pub id: String,
    pub layer: u32,
    pub text: String,
    pub token_count: usize,
    pub embedding: EmbeddingVector,
    pub children: Vec<String>,
}

/// Construction accounting for one tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct BuildStats {
    pub nodes_per_layer: BTreeMap<u32, usize>,
    pub llm_summary_calls: usize,
    pub clustering_seconds: f64,
    pub summarization_seconds: f64,
    pub total_seconds: f64,
}

impl BuildStats {
    /// Drop wall-clock fields, keeping only structural counts. Used when a
    /// byte-reproducible artifact is required.
    pub fn without_timings(&self) -> Self {
        BuildStats {
            nodes_per_layer: self.nodes_per_layer.clone(),
            llm_summary_calls: self.llm_summary_calls,
            clustering_seconds: 0.0,
            summarization_seconds: 0.0,
            total_seconds: 0.0,
        }
    }
}

/// A layered DAG of chunks and recursive summaries.
///
/// `question_id` is set for dynamic (per-question) trees and `None` for
/// static baseline trees.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryTree {
    pub doc_id: String,
    pub question_id: Option<String>,
    nodes: Vec<SummaryNode>,
    layers: BTreeMap<u32, Vec<String>>,
    pub stats: BuildStats,
}

#[derive(Serialize, Deserialize)]
struct TreeFile {
    doc_id: String,
    question_id: Option<String>,
    nodes: Vec<SummaryNode>,
    stats: BuildStats,
}

impl SummaryTree {
    /// Assemble and validate a tree. Nodes are canonically ordered by
    /// (layer, id); the layer index is derived.
    pub fn from_parts(
        doc_id: impl Into<String>,
        question_id: Option<String>,
        mut nodes: Vec<SummaryNode>,
        stats: BuildStats,
    ) -> Result<Self> {
        nodes.sort_by(|a, b| (a.layer, &a.id).cmp(&(b.layer, &b.id)));

        let mut by_id: HashMap<&str, &SummaryNode> = HashMap::new();
        for node in &nodes {
            if by_id.insert(&node.id, node).is_some() {
                return Err(Error::schema(&node.id, "duplicate node id"));
            }
        }

        let mut dim: Option<usize> = None;
        for node in &nodes {
            match dim {
                None => dim = Some(node.embedding.dim()),
                Some(d) if d != node.embedding.dim() => {
                    return Err(Error::schema(
                        &node.id,
                        format!("embedding dim {} differs from {}", node.embedding.dim(), d),
                    ));
                }
                _ => {}
            }
            if node.layer == 0 {
                if !node.children.is_empty() {
                    return Err(Error::schema(&node.id, "layer-0 node has children"));
                }
            } else {
                if node.children.is_empty() {
                    return Err(Error::schema(&node.id, "summary node has no children"));
                }
                let mut max_child_layer = 0;
                for child in &node.children {
                    let Some(child_node) = by_id.get(child.as_str()) else {
                        return Err(Error::schema(
                            &node.id,
                            format!("child `{child}` does not resolve"),
                        ));
                    };
                    if child_node.layer >= node.layer {
                        return Err(Error::schema(
                            &node.id,
                            format!(
                                "child `{child}` at layer {} is not below layer {}",
                                child_node.layer, node.layer
                            ),
                        ));
                    }
                    max_child_layer = max_child_layer.max(child_node.layer);
                }
                if max_child_layer != node.layer - 1 {
                    return Err(Error::schema(
                        &node.id,
                        format!("no child at layer {}", node.layer - 1),
                    ));
                }
            }
        }

        let mut layers: BTreeMap<u32, Vec<String>> = BTreeMap::new();
        for node in &nodes {
            layers.entry(node.layer).or_default().push(node.id.clone());
        }
        let counts: Vec<(u32, usize)> = layers.iter().map(|(l, ids)| (*l, ids.len())).collect();
        for pair in counts.windows(2) {
            let (layer_a, count_a) = pair[0];
            let (layer_b, count_b) = pair[1];
            if layer_b != layer_a + 1 {
                return Err(Error::schema(
                    format!("layer {layer_b}"),
                    format!("layer {} is missing", layer_a + 1),
                ));
            }
            if layer_a >= 1 && count_b >= count_a {
                return Err(Error::schema(
                    format!("layer {layer_b}"),
                    format!("layer sizes must strictly decrease above layer 1 ({count_a} -> {count_b})"),
                ));
            }
        }

        for (layer, ids) in &layers {
            match stats.nodes_per_layer.get(layer) {
                Some(count) if *count == ids.len() => {}
                _ => {
                    return Err(Error::schema(
                        format!("layer {layer}"),
                        "stats.nodes_per_layer disagrees with node list",
                    ));
                }
            }
        }
        if stats.nodes_per_layer.keys().any(|l| !layers.contains_key(l)) {
            return Err(Error::schema(
                "stats",
                "stats.nodes_per_layer names an absent layer",
            ));
        }

        Ok(SummaryTree {
            doc_id: doc_id.into(),
            question_id,
            nodes,
            layers,
            stats,
        })
    }

    pub fn nodes(&self) -> &[SummaryNode] {
        &self.nodes
    }

    pub fn node(&self, id: &str) -> Option<&SummaryNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn layers(&self) -> &BTreeMap<u32, Vec<String>> {
        &self.layers
    }

    pub fn layer_count(&self) -> usize {
        self.layers.len()
    }

    pub fn top_layer(&self) -> Option<u32> {
        self.layers.keys().next_back().copied()
    }

    pub fn summary_node_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.layer > 0).count()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Copy of this tree with wall-clock stats zeroed.
    pub fn without_timings(&self) -> Self {
        let mut tree = self.clone();
        tree.stats = self.stats.without_timings();
        tree
    }
}

/// Serialize a tree to its self-contained JSON document.
pub fn serialize_tree(tree: &SummaryTree) -> Vec<u8> {
    let file = TreeFile {
        doc_id: tree.doc_id.clone(),
        question_id: tree.question_id.clone(),
        nodes: tree.nodes.clone(),
        stats: tree.stats.clone(),
    };
    let mut bytes = serde_json::to_vec_pretty(&file).expect("tree serialization cannot fail");
    bytes.push(b'\n');
    bytes
}

/// Parse and validate a tree from JSON bytes.
pub fn deserialize_tree(bytes: &[u8]) -> Result<SummaryTree> {
    let file: TreeFile = serde_json::from_slice(bytes)?;
    SummaryTree::from_parts(file.doc_id, file.question_id, file.nodes, file.stats)
}

/// An LLM-generated document outline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableOfContents {
    pub entries: Vec<TocEntry>,
    pub raw_text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TocEntry {
    pub level: u32,
    pub heading: String,
}

impl TableOfContents {
    pub fn empty() -> Self {
        TableOfContents {
            entries: Vec::new(),
            raw_text: String::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Render as indented heading lines for prompt interpolation.
    pub fn render(&self) -> String {
        self.entries
            .iter()
            .map(|e| {
                let indent = "  ".repeat(e.level.saturating_sub(1) as usize);
                format!("{indent}- {}", e.heading)
            })
            .collect::<Vec<_>>()
            .join("\n")
    }
}

/// Decomposed sub-questions for one question, with embeddings used as
/// cluster seeds. Embeddings are attached by the embedding stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubQuestionSet {
    pub question_id: String,
    pub sub_questions: Vec<String>,
    pub embeddings: Vec<EmbeddingVector>,
}

impl SubQuestionSet {
    pub fn new(question_id: impl Into<String>, sub_questions: Vec<String>) -> Result<Self> {
        if sub_questions.is_empty() || sub_questions.iter().any(|q| q.trim().is_empty()) {
            return Err(Error::invalid("sub-question set must hold non-empty questions"));
        }
        Ok(SubQuestionSet {
            question_id: question_id.into(),
            sub_questions,
            embeddings: Vec::new(),
        })
    }

    pub fn count(&self) -> usize {
        self.sub_questions.len()
    }

    pub fn with_embeddings(mut self, embeddings: Vec<EmbeddingVector>) -> Result<Self> {
        if embeddings.len() != self.sub_questions.len() {
            return Err(Error::invalid(format!(
                "{} embeddings for {} sub-questions",
                embeddings.len(),
                self.sub_questions.len()
            )));
        }
        self.embeddings = embeddings;
        Ok(self)
    }

    /// True once embeddings are attached and aligned.
    pub fn is_embedded(&self) -> bool {
        self.embeddings.len() == self.sub_questions.len()
    }
}

/// A produced answer: freeform text or a 0-based option ordinal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerValue {
    Text(String),
    Choice(usize),
}

/// Question category used for per-type reporting.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionType {
    Extractive,
    Abstractive,
    Boolean,
    Unanswerable,
}

impl QuestionType {
    pub fn as_str(&self) -> &'static str {
        match self {
            QuestionType::Extractive => "extractive",
            QuestionType::Abstractive => "abstractive",
            QuestionType::Boolean => "boolean",
            QuestionType::Unanswerable => "unanswerable",
        }
    }
}

/// One evaluable question over one document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub id: String,
    pub doc_id: String,
    pub text: String,
    #[serde(default)]
    pub gold_answers: Vec<String>,
    #[serde(default)]
    pub options: Option<Vec<String>>,
    #[serde(default)]
    pub gold_option: Option<usize>,
    #[serde(default)]
    pub gold_evidence: Option<Vec<String>>,
    #[serde(default)]
    pub predicted_label: Option<u8>,
    #[serde(default)]
    pub qtype: Option<QuestionType>,
}

impl QuestionRecord {
    pub fn validate(&self) -> Result<()> {
        if self.options.is_some() != self.gold_option.is_some() {
            return Err(Error::invalid(format!(
                "question {}: options and gold_option must be present together",
                self.id
            )));
        }
        if let (Some(options), Some(gold)) = (&self.options, self.gold_option) {
            if gold >= options.len() {
                return Err(Error::invalid(format!(
                    "question {}: gold option {gold} out of range",
                    self.id
                )));
            }
        }
        Ok(())
    }
}

/// Which reducer backs dimensionality reduction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ReductionBackend {
    /// UMAP-style manifold projection.
    #[default]
    Manifold,
    /// Centered principal-axes projection; exactly seed-reproducible.
    Linear,
}

/// Per-step sampling temperatures.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Temperatures {
    pub toc: f64,
    pub classify: f64,
    pub decompose: f64,
    pub summarize: f64,
    pub answer: f64,
}

impl Default for Temperatures {
    fn default() -> Self {
        Temperatures {
            toc: 0.0,
            classify: 0.0,
            decompose: 0.0,
            summarize: 0.3,
            answer: 0.0,
        }
    }
}

/// Pipeline-wide configuration. Serialized field names are the config-file
/// schema; unknown fields are rejected nowhere so configs stay forward-open.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub chunk_size_limit: usize,
    pub summary_max_tokens: usize,
    pub dpr_top_k: usize,
    pub collapsed_budget_tokens: usize,
    pub gmm_threshold: f64,
    pub umap_n_neighbors: usize,
    pub umap_dim: usize,
    pub umap_metric: String,
    pub max_layers: u32,
    pub rng_seed: u64,
    pub no_classify: bool,
    pub no_toc: bool,
    pub hierarchical_clustering: bool,
    pub temperatures: Temperatures,
    pub reduction_backend: ReductionBackend,
    pub bic_max_clusters: usize,
    pub hierarchical_size_cap: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            chunk_size_limit: 500,
            summary_max_tokens: 100,
            dpr_top_k: 5,
            collapsed_budget_tokens: 3500,
            gmm_threshold: 0.5,
            umap_n_neighbors: 10,
            umap_dim: 10,
            umap_metric: "cosine".to_string(),
            max_layers: 5,
            rng_seed: 0,
            no_classify: false,
            no_toc: false,
            hierarchical_clustering: false,
            temperatures: Temperatures::default(),
            reduction_backend: ReductionBackend::default(),
            bic_max_clusters: 50,
            hierarchical_size_cap: 10,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.chunk_size_limit == 0
            || self.summary_max_tokens == 0
            || self.dpr_top_k == 0
        {
            return Err(Error::invalid("token limits and top-k must be positive"));
        }
        if !(self.gmm_threshold > 0.0 && self.gmm_threshold <= 1.0) {
            return Err(Error::invalid("gmm_threshold must lie in (0, 1]"));
        }
        if self.umap_n_neighbors < 2 {
            return Err(Error::invalid("umap_n_neighbors must be at least 2"));
        }
        if self.umap_dim == 0 || self.max_layers == 0 {
            return Err(Error::invalid("umap_dim and max_layers must be positive"));
        }
        if self.umap_metric != "cosine" {
            return Err(Error::invalid("only the cosine metric is supported"));
        }
        Ok(())
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let config: PipelineConfig = serde_json::from_slice(bytes)?;
        config.validate()?;
        Ok(config)
    }
}

/// Mix a label into a base seed to derive independent RNG streams.
pub fn derive_seed(base: u64, label: &str) -> u64 {
    // FNV-1a over the label, then splitmix-style avalanche with the base.
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in label.as_bytes() {
        hash ^= u64::from(*byte);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = base ^ hash;
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn leaf(id: &str, dim: usize) -> SummaryNode {
        SummaryNode {
            id: id.to_string(),
            layer: 0,
            text: format!("text of {id}"),
            token_count: 3,
            embedding: EmbeddingVector::new(vec![0.5; dim]).unwrap(),
            children: vec![],
        }
    }

    fn stats_for(counts: &[(u32, usize)]) -> BuildStats {
        BuildStats {
            nodes_per_layer: counts.iter().copied().collect(),
            ..Default::default()
        }
    }

    #[test]
    fn empty_tree_serializes_with_empty_node_list() {
        let tree = SummaryTree::from_parts("d", None, vec![], BuildStats::default()).unwrap();
        let bytes = serialize_tree(&tree);
        let text = String::from_utf8(bytes.clone()).unwrap();
        assert!(text.contains("\"nodes\": []"));
        assert_eq!(deserialize_tree(&bytes).unwrap(), tree);
    }

    #[test]
    fn single_chunk_tree_round_trips() {
        let tree = SummaryTree::from_parts(
            "d",
            Some("q1".into()),
            vec![leaf("d-c0000", 4)],
            stats_for(&[(0, 1)]),
        )
        .unwrap();
        let restored = deserialize_tree(&serialize_tree(&tree)).unwrap();
        assert_eq!(restored, tree);
        assert_eq!(restored.layer_count(), 1);
    }

    #[test]
    fn dangling_child_is_a_schema_error() {
        let mut parent = leaf("p", 4);
        parent.layer = 1;
        parent.children = vec!["missing".into()];
        let err = SummaryTree::from_parts(
            "d",
            None,
            vec![leaf("a", 4), parent],
            stats_for(&[(0, 1), (1, 1)]),
        )
        .unwrap_err();
        match err {
            Error::Schema { node, .. } => assert_eq!(node, "p"),
            other => panic!("expected schema error, got {other}"),
        }
    }

    #[test]
    fn layer_gap_below_parent_is_a_schema_error() {
        // A layer-2 node whose children are all layer 2.
        let mut a = leaf("a", 4);
        a.layer = 2;
        a.children = vec!["b".into()];
        let mut b = leaf("b", 4);
        b.layer = 2;
        b.children = vec!["a".into()];
        let err =
            SummaryTree::from_parts("d", None, vec![a, b], stats_for(&[(2, 2)])).unwrap_err();
        assert!(matches!(err, Error::Schema { .. }));
    }

    #[test]
    fn stats_mismatch_is_a_schema_error() {
        let err = SummaryTree::from_parts("d", None, vec![leaf("a", 4)], stats_for(&[(0, 2)]))
            .unwrap_err();
        assert!(matches!(err, Error::Schema { .. }));
    }

    #[test]
    fn config_defaults_match_contract() {
        let config = PipelineConfig::default();
        assert_eq!(config.chunk_size_limit, 500);
        assert_eq!(config.summary_max_tokens, 100);
        assert_eq!(config.dpr_top_k, 5);
        assert_eq!(config.collapsed_budget_tokens, 3500);
        assert_eq!(config.gmm_threshold, 0.5);
        assert_eq!(config.umap_n_neighbors, 10);
        assert_eq!(config.umap_dim, 10);
        assert_eq!(config.temperatures.summarize, 0.3);
        assert_eq!(config.temperatures.classify, 0.0);
        config.validate().unwrap();
    }

    #[test]
    fn config_rejects_bad_threshold() {
        let mut config = PipelineConfig::default();
        config.gmm_threshold = 0.0;
        assert!(config.validate().is_err());
        config.gmm_threshold = 1.5;
        assert!(config.validate().is_err());
    }

    #[test]
    fn derive_seed_separates_streams() {
        let a = derive_seed(7, "q1");
        let b = derive_seed(7, "q2");
        let c = derive_seed(8, "q1");
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, derive_seed(7, "q1"));
    }
}
