//! Desk-scale multimodal question answering for face-forgery images:
//! dataset construction from raw annotations (or a procedural synthetic
//! corpus), contrastive triplet mining, a four-block vision-language
//! transformer trained with language-modeling plus text/image InfoNCE
//! losses, greedy answer generation with verdict extraction, and feature
//! fusion into a small binary detector.

pub mod dataset;
pub mod fusion;
pub mod image;
pub mod inference;
pub mod model;
pub mod rng;
pub mod training;
