//! Scenario configuration: physical layout, waveform numerology, link budget.
//!
//! A [`ScenarioConfig`] is loadable from JSON; unknown keys are rejected so
//! typos fail loudly instead of silently falling back to defaults.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::Path;
use thiserror::Error;

use crate::geometry::max_supported_velocity;
use crate::modem::FrameParams;

/// Waveform carried by every transmit stream in a trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Waveform {
    Otfs,
    Ofdm,
}

impl fmt::Display for Waveform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Waveform::Otfs => write!(f, "otfs"),
            Waveform::Ofdm => write!(f, "ofdm"),
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("macro/micro radius ratio must be >= 10 (got R={macro_radius_m}, r={micro_radius_m})")]
    MacroMicroRatio {
        macro_radius_m: f64,
        micro_radius_m: f64,
    },
    #[error("reuse factor 7 requires reuse_distance_m = 4 * micro_radius_m (got D={reuse_distance_m}, r={micro_radius_m})")]
    ReuseDistance {
        reuse_distance_m: f64,
        micro_radius_m: f64,
    },
    #[error("velocity {velocity_mps} m/s exceeds supported bound {bound_mps:.1} m/s for this numerology")]
    VelocityBound { velocity_mps: f64, bound_mps: f64 },
    #[error("{name} must be a power of two >= 4 (got {value})")]
    GridSize { name: &'static str, value: usize },
    #[error("only 4-QAM is supported (got order {0})")]
    QamOrder(u32),
    #[error("heading_unit_vector must be a horizontal unit vector (z = 0)")]
    Heading,
    #[error("{name} must be positive (got {value})")]
    NonPositive { name: &'static str, value: f64 },
    #[error("cp_len must not exceed the subcarrier count (got cp={cp_len}, M={subcarriers})")]
    CpLen { cp_len: usize, subcarriers: usize },
    #[error("array_side must be >= 1")]
    ArraySide,
    #[error("trials_per_point must be >= 1")]
    Trials,
    #[error("rician_kappa_db must not be NaN")]
    Kappa,
    #[error("failed to read config {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("failed to parse config {path}: {source}")]
    Parse {
        path: String,
        source: serde_json::Error,
    },
}

/// Receiver-side link budget entries (dB / dBm / K / Hz).
///
/// Defaults mirror the 28 GHz airliner downlink budget this simulator targets:
/// 5 dBm transmit power into a 100×100 array (40 dB gain), 10 dB back-off,
/// 7.9 dB atmospheric and cloud loss, 60.2 dB receive gain, 1.8 dB other
/// receiver losses, 6 dB noise figure over 15.36 MHz at 290 K.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LinkBudget {
    pub tx_power_dbm: f64,
    pub tx_gain_db: f64,
    pub backoff_db: f64,
    pub atmos_loss_db: f64,
    pub rx_gain_db: f64,
    pub rx_other_loss_db: f64,
    pub noise_figure_db: f64,
    pub temperature_k: f64,
    pub bandwidth_hz: f64,
}

impl Default for LinkBudget {
    fn default() -> Self {
        LinkBudget {
            tx_power_dbm: 5.0,
            tx_gain_db: 40.0,
            backoff_db: 10.0,
            atmos_loss_db: 7.9,
            rx_gain_db: 60.2,
            rx_other_loss_db: 1.8,
            noise_figure_db: 6.0,
            temperature_k: 290.0,
            bandwidth_hz: 15.36e6,
        }
    }
}

impl LinkBudget {
    fn validate(&self) -> Result<(), ConfigError> {
        for (name, v) in [
            ("temperature_k", self.temperature_k),
            ("bandwidth_hz", self.bandwidth_hz),
        ] {
            if v.is_nan() || v <= 0.0 {
                return Err(ConfigError::NonPositive { name, value: v });
            }
        }
        Ok(())
    }
}

/// Full scenario description: cell layout, platform motion, fading, waveform
/// numerology, and Monte Carlo bookkeeping.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Macro-cell radius R (m).
    pub macro_radius_m: f64,
    /// Micro-cell radius r (m).
    pub micro_radius_m: f64,
    /// Platform altitude above the user plane (m).
    pub altitude_m: f64,
    /// Co-channel reuse distance D between micro-cell centers (m).
    pub reuse_distance_m: f64,
    /// Frequency reuse factor; 7 pins D = 4r.
    #[serde(default = "default_reuse_factor")]
    pub reuse_factor: u32,
    /// Number of interfering micro-cell tiers Q around the cell of interest.
    pub tier_count: usize,
    /// Carrier frequency (Hz).
    pub carrier_hz: f64,
    /// Platform ground speed (m/s).
    pub velocity_mps: f64,
    /// Horizontal flight direction; unit norm, z component zero.
    pub heading_unit_vector: [f64; 3],
    /// Rician K factor of every user channel (dB).
    pub rician_kappa_db: f64,
    /// Delay bins / subcarriers per frame (M).
    pub subcarriers: usize,
    /// Doppler bins / time slots per frame (N).
    pub doppler_bins: usize,
    /// Subcarrier spacing (Hz).
    pub subcarrier_spacing_hz: f64,
    /// QAM constellation order; only 4 is supported.
    pub qam_order: u32,
    /// Cyclic prefix length in samples, per time-slot block.
    #[serde(default = "default_cp_len")]
    pub cp_len: usize,
    /// Planar array side count L (the array has L² elements).
    #[serde(default = "default_array_side")]
    pub array_side: usize,
    /// Monte Carlo trials per sweep point.
    pub trials_per_point: usize,
    /// Master seed; every trial derives its own deterministic stream.
    pub rng_seed: u64,
    /// Waveform used when running a single point.
    pub waveform_selector: Waveform,
    /// Receiver link budget, used by the absolute-power operating mode.
    #[serde(default)]
    pub link_budget: LinkBudget,
}

fn default_reuse_factor() -> u32 {
    7
}

fn default_cp_len() -> usize {
    4
}

fn default_array_side() -> usize {
    16
}

impl ScenarioConfig {
    /// Desk-scale profile: full physics, reduced numerology and array so a
    /// sweep point runs in seconds. Micro-cells are enlarged in proportion to
    /// the smaller array: a 16×16 aperture resolves users ~1.2 km apart at
    /// 10 km range, the same way the full 100×100 aperture resolves the
    /// full-scale 300 m reuse distance.
    pub fn desk() -> Self {
        ScenarioConfig {
            macro_radius_m: 8_000.0,
            micro_radius_m: 600.0,
            altitude_m: 10_000.0,
            reuse_distance_m: 2_400.0,
            reuse_factor: 7,
            tier_count: 1,
            carrier_hz: 28.0e9,
            velocity_mps: 150.0,
            heading_unit_vector: [1.0, 0.0, 0.0],
            rician_kappa_db: 10.0,
            subcarriers: 64,
            doppler_bins: 16,
            subcarrier_spacing_hz: 30.0e3,
            qam_order: 4,
            cp_len: 4,
            array_side: 16,
            trials_per_point: 200,
            rng_seed: 1,
            waveform_selector: Waveform::Otfs,
            link_budget: LinkBudget {
                tx_gain_db: 10.0 * (16.0_f64 * 16.0).log10(),
                bandwidth_hz: 64.0 * 30.0e3,
                ..LinkBudget::default()
            },
        }
    }

    /// Full-scale profile: 512×16 frame, 100×100 array, five interference
    /// tiers, 75 m micro-cells. Trials take tens of seconds each; intended
    /// for long unattended runs.
    pub fn full_scale() -> Self {
        ScenarioConfig {
            micro_radius_m: 75.0,
            reuse_distance_m: 300.0,
            subcarriers: 512,
            array_side: 100,
            tier_count: 5,
            link_budget: LinkBudget::default(),
            ..ScenarioConfig::desk()
        }
    }

    pub fn from_json_str(json: &str) -> Result<Self, ConfigError> {
        let cfg: ScenarioConfig = serde_json::from_str(json).map_err(|source| {
            ConfigError::Parse {
                path: "<inline>".into(),
                source,
            }
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let cfg: ScenarioConfig =
            serde_json::from_str(&text).map_err(|source| ConfigError::Parse {
                path: path.display().to_string(),
                source,
            })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for (name, v) in [
            ("macro_radius_m", self.macro_radius_m),
            ("micro_radius_m", self.micro_radius_m),
            ("altitude_m", self.altitude_m),
            ("carrier_hz", self.carrier_hz),
            ("subcarrier_spacing_hz", self.subcarrier_spacing_hz),
        ] {
            if v.is_nan() || v <= 0.0 {
                return Err(ConfigError::NonPositive { name, value: v });
            }
        }
        if self.macro_radius_m / self.micro_radius_m < 10.0 {
            return Err(ConfigError::MacroMicroRatio {
                macro_radius_m: self.macro_radius_m,
                micro_radius_m: self.micro_radius_m,
            });
        }
        if self.reuse_factor == 7
            && (self.reuse_distance_m - 4.0 * self.micro_radius_m).abs()
                > 1e-6 * self.micro_radius_m
        {
            return Err(ConfigError::ReuseDistance {
                reuse_distance_m: self.reuse_distance_m,
                micro_radius_m: self.micro_radius_m,
            });
        }
        let bound = max_supported_velocity(self.subcarrier_spacing_hz, self.carrier_hz);
        if self.velocity_mps < 0.0 || self.velocity_mps > bound {
            return Err(ConfigError::VelocityBound {
                velocity_mps: self.velocity_mps,
                bound_mps: bound,
            });
        }
        for (name, value) in [
            ("subcarriers", self.subcarriers),
            ("doppler_bins", self.doppler_bins),
        ] {
            if value < 4 || !value.is_power_of_two() {
                return Err(ConfigError::GridSize { name, value });
            }
        }
        if self.qam_order != 4 {
            return Err(ConfigError::QamOrder(self.qam_order));
        }
        let [hx, hy, hz] = self.heading_unit_vector;
        if hz != 0.0 || ((hx * hx + hy * hy).sqrt() - 1.0).abs() > 1e-9 {
            return Err(ConfigError::Heading);
        }
        if self.cp_len > self.subcarriers {
            return Err(ConfigError::CpLen {
                cp_len: self.cp_len,
                subcarriers: self.subcarriers,
            });
        }
        if self.array_side < 1 {
            return Err(ConfigError::ArraySide);
        }
        if self.trials_per_point < 1 {
            return Err(ConfigError::Trials);
        }
        if self.rician_kappa_db.is_nan() {
            return Err(ConfigError::Kappa);
        }
        self.link_budget.validate()
    }

    /// Linear Rician factor κ.
    pub fn kappa_linear(&self) -> f64 {
        10f64.powf(self.rician_kappa_db / 10.0)
    }

    /// Waveform numerology shared by the modem, channel, and equalizer.
    pub fn frame_params(&self) -> FrameParams {
        FrameParams {
            subcarriers: self.subcarriers,
            time_slots: self.doppler_bins,
            cp_len: self.cp_len,
            subcarrier_spacing_hz: self.subcarrier_spacing_hz,
        }
    }

    /// Occupied bandwidth M·Δf (Hz).
    pub fn bandwidth_hz(&self) -> f64 {
        self.subcarriers as f64 * self.subcarrier_spacing_hz
    }

    /// Bits carried by one frame of the intended user (2 bits per 4-QAM symbol).
    pub fn bits_per_frame(&self) -> usize {
        2 * self.subcarriers * self.doppler_bins
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_and_full_scale_profiles_validate() {
        ScenarioConfig::desk().validate().unwrap();
        ScenarioConfig::full_scale().validate().unwrap();
    }

    #[test]
    fn unknown_json_key_is_rejected() {
        let mut v = serde_json::to_value(ScenarioConfig::desk()).unwrap();
        v.as_object_mut()
            .unwrap()
            .insert("subcariers".into(), 64.into());
        let err = ScenarioConfig::from_json_str(&v.to_string()).unwrap_err();
        assert!(matches!(err, ConfigError::Parse { .. }), "{err}");
    }

    #[test]
    fn json_round_trip() {
        let cfg = ScenarioConfig::desk();
        let json = serde_json::to_string_pretty(&cfg).unwrap();
        let back = ScenarioConfig::from_json_str(&json).unwrap();
        assert_eq!(back.subcarriers, cfg.subcarriers);
        assert_eq!(back.rng_seed, cfg.rng_seed);
        assert_eq!(back.waveform_selector, cfg.waveform_selector);
    }

    #[test]
    fn omitted_defaults_are_filled() {
        let mut v = serde_json::to_value(ScenarioConfig::desk()).unwrap();
        let obj = v.as_object_mut().unwrap();
        obj.remove("cp_len");
        obj.remove("array_side");
        obj.remove("reuse_factor");
        obj.remove("link_budget");
        let cfg = ScenarioConfig::from_json_str(&v.to_string()).unwrap();
        assert_eq!(cfg.cp_len, 4);
        assert_eq!(cfg.array_side, 16);
        assert_eq!(cfg.reuse_factor, 7);
    }

    #[test]
    fn invariants_are_enforced() {
        let mut cfg = ScenarioConfig::desk();
        cfg.macro_radius_m = 500.0; // R/r < 10
        assert!(matches!(
            cfg.validate(),
            Err(ConfigError::MacroMicroRatio { .. })
        ));

        let mut cfg = ScenarioConfig::desk();
        cfg.reuse_distance_m = 280.0;
        assert!(matches!(
            cfg.validate(),
            Err(ConfigError::ReuseDistance { .. })
        ));

        let mut cfg = ScenarioConfig::desk();
        cfg.velocity_mps = 200.0; // above c*Δf/(2 f_c) = 160.7
        assert!(matches!(
            cfg.validate(),
            Err(ConfigError::VelocityBound { .. })
        ));

        let mut cfg = ScenarioConfig::desk();
        cfg.subcarriers = 48;
        assert!(matches!(cfg.validate(), Err(ConfigError::GridSize { .. })));

        let mut cfg = ScenarioConfig::desk();
        cfg.qam_order = 16;
        assert!(matches!(cfg.validate(), Err(ConfigError::QamOrder(16))));

        let mut cfg = ScenarioConfig::desk();
        cfg.heading_unit_vector = [0.6, 0.8, 0.1];
        assert!(matches!(cfg.validate(), Err(ConfigError::Heading)));
    }

    #[test]
    fn full_scale_bandwidth_is_15_36_mhz() {
        let cfg = ScenarioConfig::full_scale();
        assert!((cfg.bandwidth_hz() - 15.36e6).abs() < 1e-6);
    }
}
