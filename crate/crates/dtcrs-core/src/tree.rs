//! Summary-tree construction.
//!
//! Dynamic trees cluster layer 1 with sub-question seeds (component count =
//! sub-question count); deeper layers re-reduce the layer's embeddings from
//! the original space and pick their component count by BIC. Static
//! baseline trees are question-independent and may use the hierarchical
//! two-stage clustering. Recursion stops when no further compression is
//! possible.

use crate::chunker;
use crate::clustering::{
    clusters_from_memberships, em_fit, hierarchical_cluster, responsibilities,
    select_clusters_bic, soft_assign,
};
use crate::embed::{EmbeddingBatch, EmbeddingProvider};
use crate::error::{Error, Result};
use crate::llm::LlmGateway;
use crate::model::{
    derive_seed, BuildStats, Chunk, EmbeddingVector, PipelineConfig, SubQuestionSet,
    SummaryNode, SummaryTree,
};
use crate::reduction::{reduce_batch, reduce_joint, ReductionParams};
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::time::Instant;

/// Closed form of the static workload series N + N/2 + N/4 + ...
pub fn workload_static(n_chunks: u64) -> u64 {
    2 * n_chunks
}

/// Closed form of the dynamic workload series N + Q + Q/2 + ...
pub fn workload_dynamic(n_chunks: u64, n_sub_questions: u64) -> u64 {
    n_chunks + 2 * n_sub_questions
}

/// Accounting for one built layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerBuildRecord {
    pub layer: u32,
    pub input_nodes: usize,
    pub cluster_count: usize,
    pub seeded: bool,
    pub skipped_reduction: bool,
}

/// A built tree plus its per-layer records and non-fatal warnings.
#[derive(Debug, Clone)]
pub struct TreeBuildOutcome {
    pub tree: SummaryTree,
    pub layer_records: Vec<LayerBuildRecord>,
    pub warnings: Vec<String>,
}

/// Single-use builder binding providers and configuration.
pub struct TreeBuilder<'a> {
    gateway: &'a LlmGateway,
    embedder: &'a dyn EmbeddingProvider,
    config: &'a PipelineConfig,
}

struct LayerNode {
    id: String,
    text: String,
    embedding: EmbeddingVector,
}

enum LayerClusters {
    Built {
        clusters: Vec<Vec<usize>>,
        seeded: bool,
        skipped_reduction: bool,
        dropped: usize,
    },
    Stop,
}

impl<'a> TreeBuilder<'a> {
    pub fn new(
        gateway: &'a LlmGateway,
        embedder: &'a dyn EmbeddingProvider,
        config: &'a PipelineConfig,
    ) -> Self {
        TreeBuilder {
            gateway,
            embedder,
            config,
        }
    }

    /// Build a per-question tree seeded by the sub-question embeddings.
    pub fn build_dynamic(
        &self,
        chunks: &[Chunk],
        subqs: &SubQuestionSet,
    ) -> Result<TreeBuildOutcome> {
        if chunks.is_empty() {
            return Err(Error::invalid("dynamic build needs at least one chunk"));
        }
        if subqs.count() < 1 || !subqs.is_embedded() {
            return Err(Error::invalid(
                "dynamic build needs an embedded, non-empty sub-question set",
            ));
        }
        self.build(chunks, Some(subqs))
    }

    /// Build a question-independent baseline tree.
    pub fn build_static(&self, chunks: &[Chunk]) -> Result<TreeBuildOutcome> {
        if chunks.len() < 2 {
            return Err(Error::invalid("static build needs at least two chunks"));
        }
        self.build(chunks, None)
    }

    fn build(&self, chunks: &[Chunk], subqs: Option<&SubQuestionSet>) -> Result<TreeBuildOutcome> {
        let doc_id = chunks[0].doc_id.clone();
        let question_id = subqs.map(|s| s.question_id.clone());

        // Chunk embedding is preprocessing; the construction clock starts
        // after it.
        let texts: Vec<String> = chunks.iter().map(|c| c.text.clone()).collect();
        let chunk_batch = self.embedder.embed(&texts)?;
        let build_start = Instant::now();

        let mut warnings = Vec::new();
        let mut layer_records = Vec::new();
        let mut all_nodes: Vec<SummaryNode> = Vec::new();
        let mut current: Vec<LayerNode> = Vec::new();
        for (chunk, embedding) in chunks.iter().zip(&chunk_batch.vectors) {
            let node = SummaryNode {
                id: chunk.id.clone(),
                layer: 0,
                text: chunk.text.clone(),
                token_count: chunk.token_count,
                embedding: embedding.clone(),
                children: Vec::new(),
            };
            current.push(LayerNode {
                id: node.id.clone(),
                text: node.text.clone(),
                embedding: node.embedding.clone(),
            });
            all_nodes.push(node);
        }

        let mut clustering_seconds = 0.0f64;
        let mut summarization_seconds = 0.0f64;
        let mut llm_summary_calls = 0usize;

        for layer in 1..=self.config.max_layers {
            let input_nodes = current.len();
            // Stop rules: a single node cannot cluster; a summary layer of
            // two or fewer nodes is not compressed further.
            if input_nodes == 1 || (layer >= 2 && input_nodes <= 2) {
                break;
            }

            let clustering_start = Instant::now();
            let outcome = self.cluster_layer(layer, &current, subqs)?;
            clustering_seconds += clustering_start.elapsed().as_secs_f64();

            let (clusters, seeded, skipped_reduction, dropped) = match outcome {
                LayerClusters::Stop => break,
                LayerClusters::Built {
                    clusters,
                    seeded,
                    skipped_reduction,
                    dropped,
                } => (clusters, seeded, skipped_reduction, dropped),
            };
            if dropped > 0 {
                warnings.push(format!(
                    "layer {layer}: dropped {dropped} empty cluster(s) after soft assignment"
                ));
            }
            // No compression: further clustering is no longer possible.
            if clusters.is_empty() || clusters.len() >= input_nodes {
                break;
            }

            let summarize_start = Instant::now();
            let cluster_texts: Vec<Vec<String>> = clusters
                .iter()
                .map(|members| members.iter().map(|&i| current[i].text.clone()).collect())
                .collect();
            let summaries: Vec<Result<crate::llm::SummaryResult>> = cluster_texts
                .par_iter()
                .map(|texts| {
                    self.gateway
                        .summarize_cluster(texts, self.config.summary_max_tokens)
                })
                .collect();
            let mut summary_texts = Vec::with_capacity(summaries.len());
            for summary in summaries {
                match summary {
                    Ok(result) => summary_texts.push(result.text),
                    Err(err) => {
                        return Err(self.partial_build_error(
                            layer,
                            err,
                            doc_id,
                            question_id,
                            all_nodes,
                            llm_summary_calls,
                            clustering_seconds,
                            summarization_seconds,
                            build_start,
                        ));
                    }
                }
            }
            let summary_batch = match self.embedder.embed(&summary_texts) {
                Ok(batch) => batch,
                Err(err) => {
                    return Err(self.partial_build_error(
                        layer,
                        err,
                        doc_id,
                        question_id,
                        all_nodes,
                        llm_summary_calls,
                        clustering_seconds,
                        summarization_seconds,
                        build_start,
                    ));
                }
            };
            summarization_seconds += summarize_start.elapsed().as_secs_f64();
            llm_summary_calls += clusters.len();

            let tokenizer = self.gateway.tokenizer();
            let mut next: Vec<LayerNode> = Vec::with_capacity(clusters.len());
            for (idx, (members, text)) in clusters.iter().zip(&summary_texts).enumerate() {
                let id = format!("{doc_id}-L{layer}-s{idx:03}");
                let node = SummaryNode {
                    id: id.clone(),
                    layer,
                    text: text.clone(),
                    token_count: tokenizer.count(text),
                    embedding: summary_batch.vectors[idx].clone(),
                    children: members.iter().map(|&i| current[i].id.clone()).collect(),
                };
                next.push(LayerNode {
                    id,
                    text: node.text.clone(),
                    embedding: node.embedding.clone(),
                });
                all_nodes.push(node);
            }
            layer_records.push(LayerBuildRecord {
                layer,
                input_nodes,
                cluster_count: clusters.len(),
                seeded,
                skipped_reduction,
            });
            current = next;
        }

        let stats = BuildStats {
            nodes_per_layer: layer_counts(&all_nodes),
            llm_summary_calls,
            clustering_seconds,
            summarization_seconds,
            total_seconds: build_start.elapsed().as_secs_f64(),
        };
        let tree = SummaryTree::from_parts(doc_id, question_id, all_nodes, stats)?;
        Ok(TreeBuildOutcome {
            tree,
            layer_records,
            warnings,
        })
    }

    fn cluster_layer(
        &self,
        layer: u32,
        current: &[LayerNode],
        subqs: Option<&SubQuestionSet>,
    ) -> Result<LayerClusters> {
        let n = current.len();
        let params = ReductionParams {
            rng_seed: derive_seed(self.config.rng_seed, &format!("reduce-layer{layer}")),
            ..ReductionParams::from_config(self.config)
        };
        let layer_seed = derive_seed(self.config.rng_seed, &format!("cluster-layer{layer}"));
        let threshold = self.config.gmm_threshold;
        let batch = EmbeddingBatch::new(
            current.iter().map(|node| node.id.clone()).collect(),
            current.iter().map(|node| node.embedding.clone()).collect(),
        )?;

        if self.config.hierarchical_clustering {
            let reduced = reduce_batch(&batch, &params)?;
            let clusters = hierarchical_cluster(
                &reduced.vectors,
                layer_seed,
                self.config.hierarchical_size_cap,
                threshold,
            )?;
            return Ok(LayerClusters::Built {
                clusters,
                seeded: false,
                skipped_reduction: reduced.skipped,
                dropped: 0,
            });
        }

        if layer == 1 {
            if let Some(subqs) = subqs {
                if subqs.count() < n {
                    let seed_batch = EmbeddingBatch::new(
                        subqs.sub_questions.clone(),
                        subqs.embeddings.clone(),
                    )?;
                    let reduced = reduce_joint(&batch, &seed_batch, &params)?;
                    let m = subqs.count();
                    let model = em_fit(
                        reduced.chunk_rows(),
                        m,
                        Some(reduced.seed_rows()),
                        layer_seed,
                    )?;
                    let assignment = soft_assign(
                        &responsibilities(&model, reduced.chunk_rows())?,
                        threshold,
                    )?;
                    let clusters = clusters_from_memberships(&assignment.memberships, m);
                    let dropped = m - clusters.len();
                    return Ok(LayerClusters::Built {
                        clusters,
                        seeded: true,
                        skipped_reduction: reduced.skipped,
                        dropped,
                    });
                }
                // As many sub-questions as nodes: seeding degenerates, fall
                // back to BIC selection.
            }
        }

        let reduced = reduce_batch(&batch, &params)?;
        let max_m = self.config.bic_max_clusters.min(n - 1).max(1);
        let (m, model) = select_clusters_bic(&reduced.vectors, 1..=max_m, layer_seed)?;
        if m >= n {
            return Ok(LayerClusters::Stop);
        }
        let assignment = soft_assign(&responsibilities(&model, &reduced.vectors)?, threshold)?;
        let clusters = clusters_from_memberships(&assignment.memberships, m);
        let dropped = m - clusters.len();
        Ok(LayerClusters::Built {
            clusters,
            seeded: false,
            skipped_reduction: reduced.skipped,
            dropped,
        })
    }

    #[allow(clippy::too_many_arguments)]
    fn partial_build_error(
        &self,
        layer: u32,
        err: Error,
        doc_id: String,
        question_id: Option<String>,
        completed_nodes: Vec<SummaryNode>,
        llm_summary_calls: usize,
        clustering_seconds: f64,
        summarization_seconds: f64,
        build_start: Instant,
    ) -> Error {
        let stats = BuildStats {
            nodes_per_layer: layer_counts(&completed_nodes),
            llm_summary_calls,
            clustering_seconds,
            summarization_seconds,
            total_seconds: build_start.elapsed().as_secs_f64(),
        };
        match SummaryTree::from_parts(doc_id, question_id, completed_nodes, stats) {
            Ok(partial) => Error::PartialBuild {
                phase: format!("layer {layer} summarization"),
                reason: err.to_string(),
                partial: Box::new(partial),
            },
            Err(schema_err) => schema_err,
        }
    }
}

fn layer_counts(nodes: &[SummaryNode]) -> BTreeMap<u32, usize> {
    let mut counts = BTreeMap::new();
    for node in nodes {
        *counts.entry(node.layer).or_insert(0) += 1;
    }
    counts
}

/// Chunk a document and build a static tree in one call (CLI helper).
pub fn chunk_document(
    document: &crate::model::Document,
    config: &PipelineConfig,
    tokenizer: &dyn crate::tokenizer::Tokenizer,
) -> Result<chunker::ChunkOutcome> {
    chunker::chunk(document, config.chunk_size_limit, tokenizer)
}
