//! Deterministic spectral-alignment certificate toolkit for chains of layer
//! weight matrices.
//!
//! The crate computes gauge-fixed SVDs, power-law orbit fits with their
//! rigidity budgets, effective-rank windows, interface transport matrices,
//! block-sparse alignment structures with pairwise margins, block-energy
//! heatmap data, and the assembled per-interface certificate report. All
//! operations are pure and deterministic: the same inputs produce the same
//! bytes, independent of thread count.

pub mod alignment;
pub mod block_energy;
pub mod capacity;
pub mod certificate;
pub mod error;
pub mod finetune;
pub mod io;
pub mod matrix;
pub mod oracle;
pub mod orbit;
pub mod synth;
pub mod transport;

pub use error::{GsaError, Result};
pub use matrix::{
    gauged_svd, gauged_svd_default, square_embed, tail_energy, truncate, GaugedSvd, LayerMatrix,
    RankWindow, WindowSide,
};
