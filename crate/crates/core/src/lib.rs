//! Hybrid agent pipeline for resolving vulnerability issue reports in C/C++
//! repositories.
//!
//! Two tool-using agents enrich the issue report before a deterministic
//! localize / generate / select workflow produces a single patch:
//!
//! - a context pre-collection agent that explores the repository with the
//!   code search and symbol analysis toolkits, and
//! - a safety property agent that instruments the code with
//!   `SAFETY_PROPERTY_ASSERT` checks and validates them by running the PoC.
//!
//! Every model interaction goes through [`harness::llm::LlmBackend`], so the
//! whole pipeline runs offline against a scripted replay backend.

pub mod agents;
pub mod code_search;
pub mod edit_engine;
pub mod execution;
pub mod harness;
pub mod localization;
pub mod repair;
pub mod repo_model;
pub mod symbol_analysis;

pub(crate) mod text;
