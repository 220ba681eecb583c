//! Desk-scale art-style analysis.
//!
//! The crate covers the whole pipeline:
//!
//! - [`manifest`]: painting metadata, cleaning rules and train/test splits.
//! - [`nnet`]: a miniature convolutional classifier with hand-written
//!   backpropagation, a 512-wide feature head, Grad-CAM and filter
//!   visualization.
//! - [`eval`]: accuracy, confusion matrices and misclassification reports.
//! - [`embed`]: painting embeddings, per-artist profiles and the
//!   Euclidean / cosine metrics.
//! - [`tsne`]: exact T-SNE to two or three dimensions.
//! - [`graph`]: maximum-cosine-similarity artist networks, chronological
//!   lineage graphs, timeline layout and DOT / JSON export.
//! - [`cli`]: command-line orchestration and SVG scatter rendering.

pub mod cli;
pub mod embed;
pub mod eval;
pub mod fixtures;
pub mod graph;
pub mod image;
pub mod manifest;
pub mod nnet;
pub mod tsne;

pub use manifest::{DatasetManifest, PaintingRecord, StyleClass};
