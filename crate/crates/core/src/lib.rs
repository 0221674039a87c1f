//! An evidence-based-medicine RAG engine.
//!
//! The pipeline follows the clinical evidence workflow end to end: queries
//! are classified (clinical intent and question type) and reformulated;
//! hybrid dense+sparse retrieval produces a unified candidate set; a
//! coarse-to-fine reranker scores candidates by evidence hierarchy,
//! usefulness to a proxy model, and document-category alignment, filtering
//! conflicting low-evidence documents; chain-of-thought generation feeds
//! back into retrieval until the evidence set stabilizes; and the packed
//! evidence plus reasoning drive the final answer.
//!
//! All model capabilities sit behind [`gateway::Gateway`], so every stage
//! can run against deterministic scripted backends (`mock://` profiles) or
//! real HTTP endpoints.

pub mod config;
pub mod corpus;
pub mod error;
pub mod formulate;
pub mod gateway;
pub mod pipeline;
pub mod prompts;
pub mod rerank;
pub mod retrieve;

pub use error::{Error, Result};
