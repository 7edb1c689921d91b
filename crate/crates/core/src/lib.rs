//! Semantic image transmission over a lossy text channel.
//!
//! An image is captioned, the caption is corrupted by a seeded character or
//! word error model, images are generated from the corrupted caption, and the
//! generations are scored against the original and a fixed control image.

pub mod backends;
pub mod cli;
pub mod experiment;
pub mod imagecore;
pub mod linkmath;
pub mod metrics;
pub mod pipeline;
pub mod report;
pub mod rng;
pub mod text_channel;
