//! `flatlink` compiles RDF N-Triples dumps into flat, single-line entity
//! records and joins them with `sameAs` ground-truth pairs into
//! self-contained linkage files.
//!
//! Every line of every output file carries its complete information set and
//! parses with one `split('\t')` plus a linear scan; no line ever needs
//! another line or another file.
//!
//! The pipeline:
//!
//! ```text
//! N-Triples files ──compile──▶ entity file ─┐
//! N-Triples files ──compile──▶ entity file ─┼─join2──▶ 2-way linkage file ─┐
//!                 ground-truth pairs ───────┘                              ├─join3──▶ 3-way linkage file
//!                                       another 2-way linkage file ───────┘
//! ```
//!
//! | module | role |
//! |---|---|
//! | [`rdf_ingest`] | streaming, fault-tolerant N-Triples parsing |
//! | [`flat_record`] | the flat entity line codec |
//! | [`exec`] | map / shuffle / reduce with external sort and spill |
//! | [`compile`] | one entity file per knowledge base |
//! | [`link_join`] | 2-way and 3-way linkage files |
//! | [`tools`] | sampling, type filtering, statistics, validation |
//! | [`pipeline`] | key=value configuration and end-to-end orchestration |
//!
//! Runnable walkthroughs live in the crate's `examples/` directory
//! (`cargo run --example <name>`).

pub mod compile;
pub mod exec;
pub mod flat_record;
pub mod link_join;
mod lines;
pub mod pipeline;
pub mod rdf_ingest;
pub mod synth;
pub mod tools;

pub use compile::{compile_kb, CompileReport, KbSpec};
pub use exec::{ExecConfig, KeyedItem};
pub use flat_record::{parse_record, serialize_record, EntityRecord};
pub use link_join::{join2, join3, GroundTruthPair, GtFormat};
pub use rdf_ingest::{ObjectValue, Triple};
