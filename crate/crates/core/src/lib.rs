//! Link-level BER simulator for an airborne-platform-to-ground mmWave downlink.
//!
//! An airliner-mounted L×L planar array serves one intended ground user while
//! co-channel users in surrounding micro-cell tiers interfere. The transmitter
//! applies null-steering beamforming, the waveform is either OTFS (symbols on a
//! delay-Doppler grid) or cyclic-prefix OFDM, and the receiver performs
//! zero-forcing equalization — in the delay-Doppler domain for OTFS, per
//! subcarrier for OFDM. The `sim` module drives Monte Carlo BER sweeps over
//! SNR, Rician factor, platform altitude, velocity, and array dimension.

pub mod array;
pub mod channel;
pub mod config;
pub mod equalizer;
pub mod geometry;
pub mod modem;
pub mod precoder;
pub mod sim;

/// Propagation speed used for delays, Doppler shifts, and wavelengths (m/s).
///
/// The rounded value keeps derived quantities (max supported velocity,
/// free-space path loss) consistent with the link-budget tables this
/// simulator reproduces.
pub const SPEED_OF_LIGHT: f64 = 3.0e8;

/// Boltzmann constant (J/K).
pub const BOLTZMANN: f64 = 1.380_649e-23;

pub use config::{LinkBudget, ScenarioConfig, Waveform};
pub use modem::{FrameParams, Grid, TimeSignal};
