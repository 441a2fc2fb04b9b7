//! Extract, validate, enumerate: a multi-query language-model pipeline for
//! STPA hazard analysis.
//!
//! A document is queried `m_e` times per component kind (sensor,
//! controller, actuator); the union of answers forms the candidate set.
//! Each candidate is then put to `m_v` independent yes/no validators and
//! kept on a majority, and coreferent survivors are merged. The validated
//! control structure drives a deterministic enumeration of every unsafe
//! control action (UCA) path.
//!
//! Every model call goes through [`gateway::LanguageModel`], so runs can be
//! recorded to a cassette and replayed byte for byte.

pub mod cli;
pub mod config;
pub mod corpus;
pub mod enumerate;
pub mod evaluate;
pub mod extract;
pub mod gateway;
pub mod kind;
pub mod pipeline;
pub mod pools;
pub mod sampling;
pub mod text;
pub mod theory;
pub mod validate;

pub use kind::ComponentKind;
