pub mod annotate;
pub mod catalog;
pub mod config;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod pipeline;
pub mod render;
pub mod rng;
pub mod scene;
pub mod settle;
pub mod visibility;
