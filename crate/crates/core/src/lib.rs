//! Solubility-prediction pipelines built from four layers:
//!
//! * [`chem`] — SMILES parsing, molecular descriptors, fingerprints.
//! * [`dataset`] — ESOL ingestion and similarity-based splits.
//! * [`surrogate`] — Gaussian-process regression on descriptor vectors.
//! * [`llm`] + [`cot`] — LLM backends and the deviation-gated
//!   chain-of-thought loops that accumulate an error-analysis corpus.
//! * [`report`] — evaluation metrics and CSV/markdown report emission.
//!
//! The two pipeline flavours are `cot::build_llm_cot` (LLM predicts, analyzer
//! explains, >100 % deviation triggers a rethink) and `cot::build_ml_llm_cot`
//! (GP predicts first, LLM refines only when the GP misses by >30 %).

pub mod chem;
pub mod cot;
pub mod dataset;
pub mod llm;
pub mod report;
pub mod surrogate;
