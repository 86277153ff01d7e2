//! Joint transmit and pinching beamforming for pinching-antenna (PASS)
//! downlink systems.

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod batch;
pub mod error;
pub mod io;
pub mod ipm;
pub mod kkt;
pub mod linalg;
pub mod mmpdd;
pub mod model;
pub mod wmmse;

pub use error::{PassError, Result};
pub use model::{
    check_feasibility, effective_channel, evaluate, BetaConvention, EffectiveChannel, Placement,
    RateReport, Scenario, TransmitBeam, Violation, C64,
};
pub use wmmse::WmmseState;
