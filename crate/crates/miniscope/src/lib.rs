//! Mini-app package scanner and exploitability analyzer.
//!
//! The crate splits into a few layers:
//! - [`container`]: the MAPK v1 package codec and directory loader
//! - [`scanner`]: credential detection over package contents
//! - [`catalog`]: the backend API model (Get/Modify, parameter provenance)
//! - [`prober`]: live validation of found credentials against an endpoint
//! - [`mock`]: a deterministic stand-in for the super-app backend
//! - [`report`]: per-app reports, corpus summaries and temporal diffs
//! - [`corpusgen`]: seeded synthetic corpora with ground-truth manifests
//! - [`pipeline`]: the scan → probe → report orchestration used by the CLI

pub mod catalog;
pub mod codes;
pub mod container;
pub mod corpusgen;
pub mod jsonpath;
pub mod mock;
pub mod pipeline;
pub mod prober;
pub mod report;
pub mod scanner;
