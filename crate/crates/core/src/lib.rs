//! OAM-based integrated sensing and communication under jamming: vortex-wave
//! channel synthesis, enhanced-MUSIC jammer localisation and weighted-MMSE
//! alternating optimisation of joint transmit/receive beamforming and power.

// `!(x > 0.0)` is used deliberately so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod emusic;
pub mod harness;
pub mod numerics;
pub mod optimizer;
pub mod rng;
pub mod sensing;
pub mod waveform;
