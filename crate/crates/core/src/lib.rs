//! # emoscale
//!
//! EEG emotion recognition with a multi-scale convolutional network.
//!
//! ```text
//! Dataset (manifest + binary32 signals)
//!   │
//!   ├─ preprocess    baseline template removal → per-window z-score
//!   │                → anti-clockwise channel order → [n, 1, C, W]
//!   ├─ model         temporal (5 kernel scales) → spatial (global,
//!   │                hemisphere, quadrant) → fusion → dense head
//!   ├─ training      trial-level k-fold / 64:16:20 splits, Adam,
//!   │                early stopping on validation loss
//!   └─ metrics       precision, recall, F1, accuracy, MCC, AUROC, kappa
//! ```
//!
//! Everything is deterministic given its seeds and runs single-threaded.

pub mod data;
pub mod error;
pub mod metrics;
pub mod model;
pub mod preprocess;
pub mod training;

pub use error::{Error, Result};
