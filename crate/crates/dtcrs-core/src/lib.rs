//! Query-conditioned recursive summary trees for retrieval-augmented QA.
//!
//! The pipeline classifies a question against an LLM-generated table of
//! contents, then either answers from dense top-k chunk retrieval or builds
//! a per-question summary tree: the question is decomposed into
//! sub-questions whose embeddings seed Gaussian-mixture clustering of the
//! document's chunks, each cluster is summarized, and the process recurses
//! until no further compression is possible. Retrieval over the tree ranks
//! every node in a collapsed pool under a token budget (or walks the tree
//! layer by layer).
//!
//! Modules map one-to-one onto the subsystems:
//!
//! - [`model`]: shared types, configuration, tree JSON persistence
//! - [`chunker`]: sentence-aligned fixed-size chunking
//! - [`llm`]: chat-completion gateway, prompt templates, mock provider
//! - [`embed`]: embedding providers (HTTP and deterministic test backend)
//! - [`reduction`]: dimensionality reduction ahead of clustering
//! - [`clustering`]: seeded GMM soft clustering with BIC model selection
//! - [`tree`]: dynamic and static summary-tree construction
//! - [`retrieval`]: dense top-k, collapsed-tree, and traversal retrieval
//! - [`pipeline`]: end-to-end question answering and ablations
//! - [`eval`]: datasets, QA metrics, and tree statistics

pub mod chunker;
pub mod clustering;
pub mod embed;
pub mod error;
pub mod eval;
pub mod llm;
pub mod model;
pub mod pipeline;
pub mod reduction;
pub mod retrieval;
pub mod tokenizer;
pub mod tree;

pub use error::{Error, Result};
pub use model::{
    Chunk, Document, EmbeddingVector, PipelineConfig, QuestionRecord, SubQuestionSet,
    SummaryNode, SummaryTree,
};
