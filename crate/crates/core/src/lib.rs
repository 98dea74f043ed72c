//! Bit-error-rate analysis of RIS-assisted uplink NOMA with square M-QAM.
//!
//! The crate covers the full chain: the cascaded-channel model and its
//! per-realization alignment ([`channel`]), the superimposed constellation
//! and its conditional BER expressions ([`constellation`]), the
//! characteristic-function average over fading ([`analytic`]), a seeded
//! Monte Carlo link simulator ([`mc`]), BER-driven uplink power allocation
//! ([`pa`]) and declarative experiment presets ([`experiment`]).

pub mod analytic;
pub mod channel;
pub mod constellation;
pub mod error;
pub mod experiment;
pub mod mc;
pub mod pa;
pub mod quadrature;
pub mod special;

pub use error::{Error, Result};
