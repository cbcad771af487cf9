//! Conversational machine reading over natural-language rule texts.

pub mod dialog;
pub mod par;
pub mod rules;
pub mod text;
pub mod classify;
pub mod linear;
pub mod tfidf;
pub mod followup;
pub mod entail;
pub mod metrics;
pub mod pipeline;
pub mod corpus;
