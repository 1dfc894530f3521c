//! Context distillation toolkit.
//!
//! - [`context`]: corpora, chunking, decomposition into context units
//! - [`synth`]: seed selection, query backtranslation, verification, rollouts
//! - [`retail`]: the retail discount benchmark and its pricing oracle
//! - [`distill`]: top-K targets, KL objective, student model and trainer
//! - [`eval`]: answer extraction, chrF, evaluation reports

pub mod backend;
pub mod context;
pub mod jsonl;
pub mod prompts;
pub mod tokenize;
pub mod retail;
pub mod eval;
pub mod synth;
pub mod distill;
pub mod micro;
