//! Command-line pipeline and read-only query service for the academic
//! knowledge graph.

pub mod config;
pub mod manifest;
pub mod pipeline;
pub mod service;
pub mod views;
