//! Per-element Rician line-of-sight + scattered channel, its application to
//! transmit signals, and receiver-side power/noise bookkeeping.
//!
//! Each (user, element) pair carries exactly one LoS and one NLoS path. The
//! LoS gain is deterministic with the propagation phase toward the user — the
//! conjugate of the transmit steering phase, so weighted elements combine
//! coherently — while the NLoS gain is an independent complex Gaussian per
//! element. Both paths of a user share its Doppler shift (scatterers are
//! static) and the NLoS path arrives 150 ns after the LoS path.
//!
//! Path gains are frozen over a frame (block fading); the Doppler phase
//! rotates continuously across the whole frame. Absolute delays are referenced
//! to the LoS delay: frame synchronization absorbs the common offset, so only
//! the excess delay enters the discrete channel, rounded to the nearest
//! sample.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use std::f64::consts::PI;
use thiserror::Error;

use crate::array::{hermitian_inner, steering_vector, ArrayGeometry, SteeringVector};
use crate::config::LinkBudget;
use crate::geometry::{AnglePair, LinkKinematics, UserLayout};
use crate::modem::{FrameParams, TimeSignal};
use crate::precoder::PrecodeSet;
use crate::{BOLTZMANN, SPEED_OF_LIGHT};

/// Excess delay of the scattered path over the line-of-sight path (s).
pub const NLOS_EXCESS_DELAY_S: f64 = 150.0e-9;

#[derive(Debug, Error)]
pub enum ChannelError {
    #[error("expected {expected} element signals, got {got}")]
    ElementCount { expected: usize, got: usize },
    #[error("signals must share one frame geometry")]
    LengthMismatch,
    #[error("relative delay of {delay_samples} samples exceeds cp_len {cp_len}")]
    DelayExceedsCp { delay_samples: usize, cp_len: usize },
    #[error("signal list is empty")]
    Empty,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PathKind {
    Los,
    Nlos,
}

/// One propagation path: complex gain, absolute delay, Doppler shift.
#[derive(Debug, Clone, Copy)]
pub struct PathTap {
    pub gain: Complex64,
    pub delay_s: f64,
    pub doppler_hz: f64,
    pub kind: PathKind,
}

/// Realized channel of every user: `paths[user][element] = [LoS, NLoS]`,
/// elements indexed like the array grid.
#[derive(Debug, Clone)]
pub struct PathSet {
    paths: Vec<Vec<[PathTap; 2]>>,
    kappa_linear: f64,
}

impl PathSet {
    pub fn new(paths: Vec<Vec<[PathTap; 2]>>, kappa_linear: f64) -> Self {
        PathSet {
            paths,
            kappa_linear,
        }
    }

    pub fn user_count(&self) -> usize {
        self.paths.len()
    }

    pub fn element_count(&self) -> usize {
        self.paths.first().map_or(0, Vec::len)
    }

    pub fn user(&self, user: usize) -> &[[PathTap; 2]] {
        &self.paths[user]
    }

    pub fn kappa_linear(&self) -> f64 {
        self.kappa_linear
    }

    /// Smallest delay among the user's paths; the discrete channel is
    /// referenced to it.
    pub fn reference_delay_s(&self, user: usize) -> f64 {
        self.paths[user]
            .iter()
            .flatten()
            .map(|t| t.delay_s)
            .fold(f64::INFINITY, f64::min)
    }
}

/// Rician power split: (LoS amplitude weight, NLoS per-component std dev).
fn rician_weights(kappa_linear: f64) -> (f64, f64) {
    if kappa_linear.is_infinite() {
        (1.0, 0.0)
    } else {
        let los = (kappa_linear / (kappa_linear + 1.0)).sqrt();
        // CN(0, 1/(κ+1)): each quadrature has variance 1/(2(κ+1)).
        let nlos_sd = (0.5 / (kappa_linear + 1.0)).sqrt();
        (los, nlos_sd)
    }
}

/// Draws one frame's channel for every user. Gains are constant within the
/// frame; the LoS path of user i carries the conjugate steering phase toward
/// that user, the NLoS gain is i.i.d. complex Gaussian per element, and both
/// paths carry the user's Doppler shift.
pub fn realize_channel<R: Rng>(
    layout: &UserLayout,
    angles: &[AnglePair],
    kinematics: &[LinkKinematics],
    kappa_db: f64,
    geometry: &ArrayGeometry,
    rng: &mut R,
) -> PathSet {
    let users = layout.user_count();
    assert_eq!(angles.len(), users);
    assert_eq!(kinematics.len(), users);
    let kappa_linear = 10f64.powf(kappa_db / 10.0);
    let (los_amp, nlos_sd) = rician_weights(kappa_linear);

    let mut paths = Vec::with_capacity(users);
    for i in 0..users {
        let steer = steering_vector(geometry, &angles[i]);
        let kin = &kinematics[i];
        let mut per_element = Vec::with_capacity(steer.len());
        for alpha in steer.entries() {
            let los = PathTap {
                gain: los_amp * alpha.conj(),
                delay_s: kin.delay_s,
                doppler_hz: kin.doppler_hz,
                kind: PathKind::Los,
            };
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            let nlos = PathTap {
                gain: Complex64::new(re * nlos_sd, im * nlos_sd),
                delay_s: kin.delay_s + NLOS_EXCESS_DELAY_S,
                doppler_hz: kin.doppler_hz,
                kind: PathKind::Nlos,
            };
            per_element.push([los, nlos]);
        }
        paths.push(per_element);
    }
    PathSet::new(paths, kappa_linear)
}

/// Accumulates `gain · e^{j2πν(t - τ)} · src(t - τ)` into `out`, with the
/// delay cyclic inside each CP-extended slot and the Doppler phase evaluated
/// on the global frame clock.
fn accumulate_tap(
    out: &mut [Complex64],
    src: &[Complex64],
    gain: Complex64,
    delay_samples: usize,
    rel_delay_s: f64,
    doppler_hz: f64,
    params: &FrameParams,
) {
    let block = params.block_len();
    let rate = params.sample_rate_hz();
    let d = delay_samples;
    for (p, o) in out.iter_mut().enumerate() {
        let b = p / block;
        let u = p % block;
        let s = src[b * block + (u + block - d) % block];
        let phase = 2.0 * PI * doppler_hz * (p as f64 / rate - rel_delay_s);
        *o += gain * Complex64::from_polar(1.0, phase) * s;
    }
}

fn delay_to_samples(
    rel_delay_s: f64,
    params: &FrameParams,
) -> Result<usize, ChannelError> {
    let d = (rel_delay_s * params.sample_rate_hz()).round() as i64;
    debug_assert!(d >= 0, "delays must not precede the reference");
    let d = d.max(0) as usize;
    if d > params.cp_len {
        return Err(ChannelError::DelayExceedsCp {
            delay_samples: d,
            cp_len: params.cp_len,
        });
    }
    Ok(d)
}

/// Received signal of one user from the per-element transmit signals:
/// r(t) = scale · Σ_j Σ_paths g · e^{j2πν(t−τ)} · s̃_j(t−τ).
pub fn apply_channel(
    element_signals: &[TimeSignal],
    paths: &PathSet,
    user: usize,
    amplitude_scale: f64,
) -> Result<TimeSignal, ChannelError> {
    if element_signals.is_empty() {
        return Err(ChannelError::Empty);
    }
    if element_signals.len() != paths.element_count() {
        return Err(ChannelError::ElementCount {
            expected: paths.element_count(),
            got: element_signals.len(),
        });
    }
    let params = element_signals[0].params;
    if element_signals.iter().any(|s| s.params != params) {
        return Err(ChannelError::LengthMismatch);
    }
    let reference = paths.reference_delay_s(user);
    let mut out = TimeSignal::zeros(params);
    for (j, sig) in element_signals.iter().enumerate() {
        for tap in &paths.user(user)[j] {
            if tap.gain == Complex64::ZERO {
                continue;
            }
            let rel = tap.delay_s - reference;
            let d = delay_to_samples(rel, &params)?;
            accumulate_tap(
                &mut out.samples,
                &sig.samples,
                tap.gain * amplitude_scale,
                d,
                rel,
                tap.doppler_hz,
                &params,
            );
        }
    }
    Ok(out)
}

/// Aggregated channel from one transmit stream to the receiving user. Because
/// every element of a path kind shares (τ, ν), summing the per-element gains
/// against the stream's weights collapses the L² element channels into one
/// two-tap channel per stream, exactly.
#[derive(Debug, Clone, Copy)]
pub struct StreamTap {
    pub gain: Complex64,
    pub delay_s: f64,
    pub doppler_hz: f64,
}

/// Collapses the per-element channel of `user` against each stream's weights:
/// stream i sees taps with gains Σ_j g_{user,j} · w_i(j).
pub fn stream_taps(paths: &PathSet, weights: &PrecodeSet, user: usize) -> Vec<[StreamTap; 2]> {
    assert_eq!(weights.element_count(), paths.element_count());
    let elements = paths.user(user);
    (0..weights.user_count())
        .map(|i| {
            let w = weights.weight(i);
            let mut taps = [StreamTap {
                gain: Complex64::ZERO,
                delay_s: 0.0,
                doppler_hz: 0.0,
            }; 2];
            for slot in 0..2 {
                let mut g = Complex64::ZERO;
                for (j, wj) in w.iter().enumerate() {
                    g += elements[j][slot].gain * wj;
                }
                taps[slot] = StreamTap {
                    gain: g,
                    delay_s: elements[0][slot].delay_s,
                    doppler_hz: elements[0][slot].doppler_hz,
                };
            }
            taps
        })
        .collect()
}

/// Received signal computed stream-by-stream with aggregated taps; identical
/// to [`apply_channel`] after [`crate::precoder::beamform_superpose`], at a
/// cost independent of the element count.
pub fn apply_stream_channel(
    user_signals: &[TimeSignal],
    taps: &[[StreamTap; 2]],
    amplitude_scale: f64,
) -> Result<TimeSignal, ChannelError> {
    if user_signals.is_empty() {
        return Err(ChannelError::Empty);
    }
    if user_signals.len() != taps.len() {
        return Err(ChannelError::ElementCount {
            expected: taps.len(),
            got: user_signals.len(),
        });
    }
    let params = user_signals[0].params;
    if user_signals.iter().any(|s| s.params != params) {
        return Err(ChannelError::LengthMismatch);
    }
    let reference = taps
        .iter()
        .flatten()
        .map(|t| t.delay_s)
        .fold(f64::INFINITY, f64::min);
    let mut out = TimeSignal::zeros(params);
    for (sig, stream) in user_signals.iter().zip(taps) {
        for tap in stream {
            if tap.gain == Complex64::ZERO {
                continue;
            }
            let rel = tap.delay_s - reference;
            let d = delay_to_samples(rel, &params)?;
            accumulate_tap(
                &mut out.samples,
                &sig.samples,
                tap.gain * amplitude_scale,
                d,
                rel,
                tap.doppler_hz,
                &params,
            );
        }
    }
    Ok(out)
}

/// Ensemble-mean received sample power for unit-power transmit streams:
/// Σ_i [ κ/(κ+1)·|α₀^H w_i|² + ‖w_i‖²/(κ+1) ].
pub fn expected_rx_power(
    intended_steering: &SteeringVector,
    weights: &PrecodeSet,
    kappa_linear: f64,
) -> f64 {
    let (los_amp, nlos_sd) = rician_weights(kappa_linear);
    let nlos_var = 2.0 * nlos_sd * nlos_sd;
    (0..weights.user_count())
        .map(|i| {
            let w = weights.weight(i);
            let los = hermitian_inner(intended_steering.entries(), w);
            let w_energy: f64 = w.iter().map(|c| c.norm_sqr()).sum();
            los_amp * los_amp * los.norm_sqr() + nlos_var * w_energy
        })
        .sum()
}

/// Thermal noise power k·T·B·N_f in watts.
pub fn noise_power_watts(temperature_k: f64, bandwidth_hz: f64, noise_figure_db: f64) -> f64 {
    BOLTZMANN * temperature_k * bandwidth_hz * 10f64.powf(noise_figure_db / 10.0)
}

/// Free-space path loss 20·log10(4πd/λ) in dB.
pub fn fspl_db(distance_m: f64, carrier_hz: f64) -> f64 {
    20.0 * (4.0 * PI * distance_m * carrier_hz / SPEED_OF_LIGHT).log10()
}

/// Received power in dBm from the budget entries and free-space loss.
pub fn received_power_dbm(budget: &LinkBudget, distance_m: f64, carrier_hz: f64) -> f64 {
    budget.tx_power_dbm + budget.tx_gain_db - budget.backoff_db - budget.atmos_loss_db
        - fspl_db(distance_m, carrier_hz)
        + budget.rx_gain_db
        - budget.rx_other_loss_db
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    1e-3 * 10f64.powf(dbm / 10.0)
}

pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * (watts / 1e-3).log10()
}

/// Adds circularly symmetric white Gaussian noise of total variance σ² per
/// sample.
pub fn add_noise<R: Rng>(signal: &mut TimeSignal, sigma2_w: f64, rng: &mut R) {
    if sigma2_w == 0.0 {
        return;
    }
    let sd = (sigma2_w / 2.0).sqrt();
    for s in &mut signal.samples {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        *s += Complex64::new(re * sd, im * sd);
    }
}
