pub mod abstraction;
pub mod config;
pub mod corpus;
pub mod demo;
pub mod dp;
pub mod error;
pub mod generation;
pub mod metrics;
pub mod mia;
pub mod pii;
pub mod pipeline;
pub mod refinement;
pub mod rng;
pub mod surrogate;
pub mod text;
