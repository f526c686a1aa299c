//! Capacity analysis and simulation of the varying binary symmetric channel
//! (VBSC): a BSC whose crossover probability is redrawn i.i.d. for every
//! channel use, as seen by error correction for SRAM-PUF responses.
//!
//! The crate is organized around five modules:
//!
//! * [`state_models`] -- distributions of the per-cell crossover probability,
//!   including the SRAM reliability model behind the worked example, plus
//!   quantization of the state space into certified interval bins.
//! * [`capacity`] -- closed-form and certified-numeric channel capacities for
//!   the five channel-state-information regimes.
//! * [`channel`] -- a bit-exact seeded channel simulator, the Shannon-strategy
//!   mapper for causal encoder CSI, and a Monte-Carlo mutual-information
//!   estimator used as an oracle against the analytic capacities.
//! * [`polar`] -- polar encoding/decoding and the interval-binned multi-code
//!   scheme that approaches the CSI-at-both-sides capacity.
//! * [`fuzzy_extractor`] -- code-offset key generation: enrollment, helper
//!   data, and reproduction with optional per-cell reliability tags.

pub mod capacity;
pub mod channel;
mod error;
pub mod fuzzy_extractor;
pub mod polar;
mod quad;
pub mod state_models;

pub use error::{Error, Result};
