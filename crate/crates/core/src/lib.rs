//! Robust transceiver and IRS phase design for an IRS-assisted MIMO
//! full-duplex link pair under Kronecker-structured CSI errors.
//!
//! The BS serves one uplink user and one downlink user simultaneously.
//! Every channel, direct or through the IRS, is known only up to a zero-mean
//! Gaussian error `ΔH ~ CN(0, J ⊗ K)`. The design maximizes a closed-form
//! lower bound on the ergodic weighted sum rate by alternating between
//! WMMSE-style transceiver updates and a majorization-minimization step on
//! the IRS phases.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::large_enum_variant)]

pub mod baselines;
pub mod channel_gen;
pub mod error;
pub mod ewmmse;
pub mod irs_mm;
pub mod kron_expectation;
pub mod linalg;
pub mod oracle;
pub mod rate;
pub mod streams;
pub mod system_model;
#[doc(hidden)]
pub mod testing;

pub use error::{Error, Result};
pub use system_model::{
    BeamformingState, ChannelEstimates, Channels, ErrorCovariances, IrsPhase, Link,
    LinkCovariance, SystemConfig, TrueChannels,
};
