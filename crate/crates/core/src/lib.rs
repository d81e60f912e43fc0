//! Core engine of the literature hub.
//!
//! Records flow through [`corpus`] (ingest and dedup), [`triage`] (relevance
//! gate), [`topics`] and [`entities`] (annotation), and [`longcovid`] (the
//! human-in-the-loop review collection), and are served by [`search`] and
//! [`insights`]. [`pipeline`] wires the daily update together.

pub mod corpus;
pub mod demo;
pub mod entities;
pub mod eval;
pub mod export;
pub mod hub;
pub mod insights;
pub mod linear;
pub mod longcovid;
pub mod model_io;
pub mod pipeline;
pub mod search;
pub mod synth;
pub mod text;
pub mod topics;
pub mod triage;
