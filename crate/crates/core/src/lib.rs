//! Academic knowledge graph toolkit.
//!
//! Builds a schema-validated graph of papers and their semantic elements
//! from a structured corpus using LLM extraction, curates it, and answers
//! questions over it by summarizing sub-graph communities of related papers.

pub mod corpus;
pub mod curation;
pub mod evaluation;
pub mod extraction;
pub mod graph;
pub mod llm;
pub mod qa;
pub mod schema;
pub mod text;
