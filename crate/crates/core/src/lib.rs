//! Retrieval toolkit for humour-aware search experiments.
//!
//! The crate covers the offline half of a two-stage retrieval pipeline:
//!
//! * [`corpus`]: documents, topics and binary relevance judgements
//! * [`store`]: flat `f32` embedding matrices with an id manifest, memory-mapped on open
//! * [`dense`]: exact cosine top-k over a store
//! * [`bm25`]: tokenizer, inverted index and Okapi BM25 ranking
//! * [`rerank`]: candidate selection, external re-scoring and reciprocal rank fusion
//! * [`run`]: TREC run files
//! * [`metrics`]: MAP, GMAP, R-Prec, MRR, P@K and nDCG@K with trec_eval conventions
//! * [`bridge`]: line-delimited JSON protocol spoken with encoder and scorer processes

pub mod bm25;
pub mod bridge;
pub mod corpus;
pub mod dense;
mod error;
pub mod metrics;
pub mod ranking;
pub mod rerank;
pub mod run;
pub mod store;

pub use error::{Error, Result};
pub use ranking::{RankedList, ScoredDoc};
