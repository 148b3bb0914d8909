//! Generation, filtering and curation of LLM-authored practice exercises.
//!
//! A priming exercise and a set of target keywords are rendered into a
//! few-shot prompt ([`prompt`]), completed by a backend ([`generation`]),
//! split into sections ([`parser`]), checked automatically ([`math`],
//! [`code`], [`novelty`], combined in [`pipeline`]) and finally reviewed by
//! people through an event-sourced store ([`curation`]). [`report`] turns
//! filter reports into the programmatic analysis summary.

pub mod api;
pub mod code;
pub mod config;
pub mod curation;
pub mod error;
pub mod generation;
pub mod math;
pub mod model;
pub mod novelty;
pub mod parser;
pub mod pipeline;
pub mod prompt;
pub mod report;
pub mod runner;

pub use error::*;
pub use model::*;
