//! Pipeline orchestration, model and embedding backends, instance loading,
//! metrics and cost accounting.

pub mod config;
pub mod embed;
pub mod evaluate;
pub mod instance;
pub mod live;
pub mod llm;
pub mod pipeline;
pub mod replay;
pub mod telemetry;
pub mod workspace;
