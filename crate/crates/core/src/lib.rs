//! Link-level model of clipped OFDM/OFDMA transmission and Bayesian recovery
//! of the sparse clipping distortion at the receiver.
//!
//! The crate is organized bottom-up:
//!
//! * [`dsp`] — unitary DFT/IDFT, Gray-coded square QAM, PAPR.
//! * [`link`] — OFDM frame construction, amplitude clipping, circulant
//!   Rayleigh channel with calibrated AWGN, zero-forcing equalization.
//! * [`rc`] — per-subcarrier reliability metric, reliable-carrier selection
//!   and assembly of the real-valued compressed-sensing measurement system.
//! * [`engine`] — the weighted, phase-augmented Bayesian matching pursuit
//!   that estimates the clipping signal, plus oracle and ablation baselines.
//! * [`simo`] — per-branch and joint recovery for multi-antenna receivers
//!   with maximal ratio combining.
//! * [`ofdma`] — two-user interleaved OFDMA with joint estimation and the
//!   decoupled two-stage recovery procedure.
//! * [`chanest`] — pilot-based channel estimation under clipping
//!   contamination (MMSE, reliable-carrier augmentation, contaminated-pilot
//!   refinement).
//! * [`pipeline`] — the single-antenna receive chain shared by the
//!   simulation harness and the channel-error sensitivity study.

pub mod chanest;
pub mod dsp;
pub mod engine;
pub mod error;
pub mod link;
pub mod ofdma;
pub mod pipeline;
pub mod rc;
pub mod simo;
pub mod util;

pub use error::{Error, Result};
