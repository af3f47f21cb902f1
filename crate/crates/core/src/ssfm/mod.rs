//! Waveform-level fiber simulation and receiver processing.

pub mod amplifier;
pub mod chain;
pub mod cpr;
pub mod fft;
pub mod propagate;
pub mod rrc;
pub mod waveform;
pub mod wdm;

pub use amplifier::edfa;
pub use chain::{DeskChain, Reception};
pub use cpr::{cpr_pilot, pilot_mask, PILOT_SPACING};
pub use propagate::{cd_compensate, ssfm_propagate, Polarization, Propagator, SsfmConfig, SsfmStats, StepPolicy};
pub use rrc::{rrc_receive, rrc_shape, rrc_taps};
pub use waveform::Waveform;
pub use wdm::{channel_offsets, wdm_demux, wdm_mux};
