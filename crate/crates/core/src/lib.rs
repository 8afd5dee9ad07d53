//! Narrative extraction from timestamped short posts.
//!
//! The crate covers the batch pipeline end to end: ingest posts and prices
//! ([`corpus`]), clean and stem text ([`preprocess`]), discover stopwords with
//! TF-IDF ([`stopwords`]), cluster posts into narratives with a collapsed Gibbs
//! sampler for the Dirichlet multinomial mixture ([`gsdmm`]), score sentiment
//! ([`sentiment`]), find structural breaks in prices ([`breaks`]) and build
//! per-narrative daily series joined with prices ([`series`]). The [`pipeline`]
//! module wires the stages together behind the `narrate` binary.

pub mod breaks;
pub mod corpus;
pub mod error;
pub mod fixture;
pub mod gsdmm;
pub mod pipeline;
pub mod preprocess;
pub mod sentiment;
pub mod series;
pub mod stopwords;

pub use error::{Error, Result};
