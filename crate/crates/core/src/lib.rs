//! Propositional knowledge-base editing engine.
//!
//! The crate turns "update what a model knows" into checkable logic:
//!
//! - [`formula`]: the propositional language (parse, print, evaluate);
//! - [`cnf`] / [`entail`]: clause encoding, a deterministic DPLL search,
//!   and an independent truth-table oracle;
//! - [`knowledge`]: consistent bases, query universes, deductive closure;
//! - [`editing`]: deletion sets, anchors, the editing boundary, and edit
//!   outcomes (including explosion);
//! - [`anchor`]: greedy anchor construction, a seeded instance generator,
//!   and the replayable verification harness for the four editing claims;
//! - [`scenario`]: one JSON document holding a (kb, edit, anchor, universe)
//!   setup, for fixtures and fuzzer exemplars;
//! - [`lmprobe`]: probability-threshold knowledge probes against a language
//!   model (live endpoint or offline mock) and pre/post certainty reports;
//! - [`selfedit`]: the prompt pipeline that filters, augments, and quizzes
//!   edit events into fine-tuning data, plus abstention scoring.

pub mod anchor;
pub mod cnf;
pub mod editing;
pub mod entail;
pub mod formula;
pub mod knowledge;
pub mod lmprobe;
pub mod scenario;
pub mod selfedit;
