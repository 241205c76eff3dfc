//! Selective pre-translation prompting toolkit.
//!
//! Enumerates per-component language configurations for cross-lingual
//! prompts, compiles them into prompt text, runs evaluation sweeps against
//! pluggable model and translation providers, scores the outputs, and mines
//! result tables for the best configurations.

pub mod analysis;
pub mod api;
pub mod biose;
pub mod config_space;
pub mod corpus;
pub mod gateway;
pub mod http;
pub mod metrics;
pub mod postproc;
pub mod prompting;
pub mod recommend;
pub mod runner;
pub mod store;
pub mod translation;

pub use biose::{BioseTag, EntitySpan, EntityType};
pub use config_space::{
    classify_language, enumerate_configurations, parse_config_code, Component, ComponentLang,
    Configuration, ExamplesMode, LanguageInfo, LanguageRegistry, ResourceClass, TaskKind,
};
pub use corpus::{NliLabel, Payload, SamplePolicy, TaskInstance};
