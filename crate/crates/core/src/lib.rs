//! Verification of "body double" identity claims from two labeled face sets.
//!
//! The pipeline aligns faces ([`ingest`]), scores image quality ([`quality`]),
//! embeds faces with a descriptor ([`descriptors`]), compares every pair and
//! calibrates the resulting genuine/impostor distributions against a reference
//! population ([`analysis`]), and emits heatmaps, distribution plots and
//! reports ([`render`]).

pub mod analysis;
pub mod descriptors;
pub mod ingest;
pub mod onnx;
pub mod quality;
pub mod render;
pub mod synth;
