//! Atypical-aspect recommender pipeline.
//!
//! Items are described by their reviews. The pipeline pulls out the aspects of
//! an item that fall outside its category's core business, judges how useful
//! each aspect is to a given user profile, and re-ranks search results by a
//! serendipity score built from those judgements.
//!
//! Every call to a generative model goes through [`gateway`], which ships a
//! scripted replay backend and a seeded-hash backend so the whole pipeline runs
//! offline and deterministically.

pub mod cli;
pub mod corpus;
pub mod evaluation;
pub mod extraction;
pub mod gateway;
pub mod personalization;
pub mod scoring;
mod text;

pub use corpus::{
    AspectForm, AtypicalAspect, Corpus, DomainCategory, HitRecord, Item, Layer, Provenance, Query,
    Review, UserProfile, UtilityLabel,
};
pub use gateway::{EmbeddingVector, Gateway, GenerationRequest};
