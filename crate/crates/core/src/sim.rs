//! Monte Carlo BER engine: seeded trials, parameter sweeps, CSV output.
//!
//! Every trial derives one ChaCha stream from the master seed, the sweep-point
//! parameters, and the trial index, so results are bit-identical across runs,
//! worker counts, and execution order. Both waveforms of a point share the
//! trial streams, which pairs their curves on common layouts, fades, and
//! noise.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use thiserror::Error;

use serde::{Deserialize, Serialize};

use crate::array::{steering_vector, ArrayGeometry, SteeringVector};
use crate::channel::{
    add_noise, apply_stream_channel, dbm_to_watts, expected_rx_power, noise_power_watts,
    realize_channel, received_power_dbm, stream_taps,
};
use crate::config::{ConfigError, ScenarioConfig, Waveform};
use crate::equalizer::{effective_dd_matrix, zf_equalize_dd, zf_equalize_ofdm, FreqChannel};
use crate::geometry::{link_kinematics, mci_center, place_users, user_angles};
use crate::modem::{qam_demap, qam_map, DdModem, Grid};
use crate::precoder::{nsb_weights, PrecoderError};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("failed to access {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("failed to parse {path}: {source}")]
    Parse {
        path: String,
        source: serde_json::Error,
    },
    #[error("malformed results file {path}, line {line}: {reason}")]
    Csv {
        path: String,
        line: usize,
        reason: String,
    },
    #[error("sweep specification invalid: {0}")]
    Spec(String),
}

// ---------------------------------------------------------------------------
// Deterministic seeding
// ---------------------------------------------------------------------------

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds the sweep-point parameters and the trial index into one stream seed.
/// The waveform is deliberately excluded so OTFS and OFDM trials share
/// layouts, fades, data, and noise.
fn trial_seed(config: &ScenarioConfig, snr_db: f64, trial_index: u64) -> u64 {
    let mut h = config.rng_seed;
    for v in [
        snr_db.to_bits(),
        config.rician_kappa_db.to_bits(),
        config.altitude_m.to_bits(),
        config.velocity_mps.to_bits(),
        config.array_side as u64,
        config.subcarriers as u64,
        config.doppler_bins as u64,
        config.tier_count as u64,
        config.carrier_hz.to_bits(),
        config.subcarrier_spacing_hz.to_bits(),
        config.cp_len as u64,
    ] {
        h = splitmix64(h ^ v);
    }
    splitmix64(h ^ trial_index)
}

// ---------------------------------------------------------------------------
// Single trial
// ---------------------------------------------------------------------------

/// How the noise level of a trial is chosen.
#[derive(Debug, Clone, Copy)]
pub enum NoiseMode {
    /// Noise scaled so the ensemble-mean received power over σ² equals the
    /// target receiver-input SNR. `f64::INFINITY` disables noise.
    TargetSnrDb(f64),
    /// Absolute levels: received power from the link budget at the trial's
    /// intended-user distance, noise power k·T·B·N_f.
    LinkBudget,
}

/// Outcome of one end-to-end frame.
#[derive(Debug, Clone, Copy, Default)]
pub struct TrialResult {
    pub bit_errors: u64,
    pub total_bits: u64,
    pub singular_flag: bool,
}

/// Runs one frame end-to-end: placement → angles → steering → null-steering
/// weights → QAM → modulation → channel with all interferers → noise → ZF →
/// demapping, counting bit errors on the intended user's frame. Deterministic
/// given (config, snr_db, trial_index).
pub fn run_trial(config: &ScenarioConfig, snr_db: f64, trial_index: u64) -> TrialResult {
    run_trial_with_mode(config, NoiseMode::TargetSnrDb(snr_db), trial_index)
}

pub fn run_trial_with_mode(
    config: &ScenarioConfig,
    mode: NoiseMode,
    trial_index: u64,
) -> TrialResult {
    let snr_key = match mode {
        NoiseMode::TargetSnrDb(s) => s,
        NoiseMode::LinkBudget => f64::NEG_INFINITY,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(config, snr_key, trial_index));
    let params = config.frame_params();
    let modem = DdModem::new(params);

    // Geometry and beamforming for this trial's layout.
    let layout = place_users(config, &mut rng);
    let hap = [0.0, 0.0, 0.0];
    let angles: Vec<_> = layout
        .positions
        .iter()
        .map(|p| user_angles(*p, hap))
        .collect();
    let kinematics: Vec<_> = layout
        .positions
        .iter()
        .map(|p| link_kinematics(*p, 0.0, config))
        .collect();
    let geometry = ArrayGeometry::for_carrier(config.array_side, config.carrier_hz);
    let steering: Vec<SteeringVector> =
        angles.iter().map(|a| steering_vector(&geometry, a)).collect();
    let weights = match nsb_weights(&steering) {
        Ok(w) => w,
        Err(PrecoderError::DegenerateLayout { .. }) | Err(PrecoderError::TooManyUsers { .. }) => {
            return TrialResult {
                singular_flag: true,
                ..TrialResult::default()
            }
        }
        Err(e) => panic!("beamforming failed: {e}"),
    };

    let paths = realize_channel(
        &layout,
        &angles,
        &kinematics,
        config.rician_kappa_db,
        &geometry,
        &mut rng,
    );
    let taps = stream_taps(&paths, &weights, 0);

    // Per-stream frames: the intended user's bits first, then one independent
    // random frame per interferer.
    let bits_per_frame = config.bits_per_frame();
    let intended_bits: Vec<u8> = (0..bits_per_frame)
        .map(|_| rng.random::<bool>() as u8)
        .collect();
    let mut signals = Vec::with_capacity(layout.user_count());
    let make_signal = |bits: &[u8]| {
        let symbols = qam_map(bits).expect("even bit count");
        match config.waveform_selector {
            Waveform::Otfs => {
                let grid = Grid::from_vec(params.time_slots, params.subcarriers, symbols);
                modem.heisenberg(&modem.isfft(&grid))
            }
            Waveform::Ofdm => modem.ofdm_modulate(&symbols).expect("frame-sized symbols"),
        }
    };
    signals.push(make_signal(&intended_bits));
    for _ in 1..layout.user_count() {
        let bits: Vec<u8> = (0..bits_per_frame)
            .map(|_| rng.random::<bool>() as u8)
            .collect();
        signals.push(make_signal(&bits));
    }

    let mut rx = apply_stream_channel(&signals, &taps, 1.0).expect("stream counts match");

    // Noise sized from the analytic ensemble-mean received power, so the
    // realized per-frame SNR fluctuates with the fading around the target.
    let mean_power = expected_rx_power(&steering[0], &weights, config.kappa_linear());
    let sigma2 = match mode {
        NoiseMode::TargetSnrDb(snr_db) => {
            if snr_db.is_infinite() && snr_db > 0.0 {
                0.0
            } else {
                mean_power / 10f64.powf(snr_db / 10.0)
            }
        }
        NoiseMode::LinkBudget => {
            let budget = &config.link_budget;
            let p_r = dbm_to_watts(received_power_dbm(
                budget,
                kinematics[0].distance_m,
                config.carrier_hz,
            ));
            let thermal = noise_power_watts(
                budget.temperature_k,
                budget.bandwidth_hz,
                budget.noise_figure_db,
            );
            // The normalized channel keeps unit mean power; only the ratio
            // P_r/σ² reaches the decision variable.
            mean_power * thermal / p_r
        }
    };
    add_noise(&mut rx, sigma2, &mut rng);

    // Demodulate and equalize the intended user's frame.
    let decided_bits = match config.waveform_selector {
        Waveform::Otfs => {
            let dd = modem.sfft(&modem.wigner(&rx).expect("frame length"));
            let h_eff = match effective_dd_matrix(&paths, &weights, params) {
                Ok(h) => h,
                Err(_) => {
                    return TrialResult {
                        singular_flag: true,
                        ..TrialResult::default()
                    }
                }
            };
            match zf_equalize_dd(&dd, &h_eff) {
                Ok(eq) => qam_demap(eq.as_slice()),
                Err(_) => {
                    return TrialResult {
                        singular_flag: true,
                        ..TrialResult::default()
                    }
                }
            }
        }
        Waveform::Ofdm => {
            let tf = modem.wigner(&rx).expect("frame length");
            let fc = FreqChannel::from_taps(&taps[0], params);
            let (eq, erasures) = zf_equalize_ofdm(&tf, &fc);
            let mut bits = qam_demap(eq.as_slice());
            for sym in erasures {
                bits[2 * sym] = rng.random::<bool>() as u8;
                bits[2 * sym + 1] = rng.random::<bool>() as u8;
            }
            bits
        }
    };

    let bit_errors = intended_bits
        .iter()
        .zip(&decided_bits)
        .filter(|(a, b)| a != b)
        .count() as u64;
    TrialResult {
        bit_errors,
        total_bits: bits_per_frame as u64,
        singular_flag: false,
    }
}

/// Measured receiver-input SNR of one trial (noiseless signal power over σ²),
/// used by calibration checks.
pub fn measure_snr_db(config: &ScenarioConfig, snr_db: f64, trial_index: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(config, snr_db, trial_index));
    let params = config.frame_params();
    let modem = DdModem::new(params);
    let layout = place_users(config, &mut rng);
    let angles: Vec<_> = layout
        .positions
        .iter()
        .map(|p| user_angles(*p, [0.0, 0.0, 0.0]))
        .collect();
    let kinematics: Vec<_> = layout
        .positions
        .iter()
        .map(|p| link_kinematics(*p, 0.0, config))
        .collect();
    let geometry = ArrayGeometry::for_carrier(config.array_side, config.carrier_hz);
    let steering: Vec<SteeringVector> =
        angles.iter().map(|a| steering_vector(&geometry, a)).collect();
    let weights = nsb_weights(&steering).expect("non-degenerate layout");
    let paths = realize_channel(
        &layout,
        &angles,
        &kinematics,
        config.rician_kappa_db,
        &geometry,
        &mut rng,
    );
    let taps = stream_taps(&paths, &weights, 0);
    let bits_per_frame = config.bits_per_frame();
    let signals: Vec<_> = (0..layout.user_count())
        .map(|_| {
            let bits: Vec<u8> = (0..bits_per_frame)
                .map(|_| rng.random::<bool>() as u8)
                .collect();
            let symbols = qam_map(&bits).unwrap();
            let grid = Grid::from_vec(params.time_slots, params.subcarriers, symbols);
            modem.heisenberg(&modem.isfft(&grid))
        })
        .collect();
    let rx = apply_stream_channel(&signals, &taps, 1.0).unwrap();
    let signal_power = rx.energy() / rx.len() as f64;
    let mean_power = expected_rx_power(&steering[0], &weights, config.kappa_linear());
    let sigma2 = mean_power / 10f64.powf(snr_db / 10.0);
    10.0 * (signal_power / sigma2).log10()
}

// ---------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------

/// Parameter swept across a set of BER curves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweptParameter {
    SnrDb,
    KappaDb,
    AltitudeM,
    VelocityMps,
    ArraySide,
}

/// Declarative sweep: one value list for the swept parameter, an SNR grid,
/// and the waveforms to compare.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub swept_parameter: SweptParameter,
    pub values: Vec<f64>,
    #[serde(default)]
    pub snr_grid: Vec<f64>,
    pub waveforms: Vec<Waveform>,
    pub trials_per_point: usize,
    pub master_seed: u64,
}

impl SweepSpec {
    pub fn from_path(path: &Path) -> Result<Self, SimError> {
        let text = std::fs::read_to_string(path).map_err(|source| SimError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let spec: SweepSpec = serde_json::from_str(&text).map_err(|source| SimError::Parse {
            path: path.display().to_string(),
            source,
        })?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.values.is_empty() {
            return Err(SimError::Spec("values must not be empty".into()));
        }
        if self.swept_parameter != SweptParameter::SnrDb && self.snr_grid.is_empty() {
            return Err(SimError::Spec(
                "snr_grid must not be empty unless snr_db itself is swept".into(),
            ));
        }
        if self.waveforms.is_empty() {
            return Err(SimError::Spec("waveforms must not be empty".into()));
        }
        if self.trials_per_point < 1 {
            return Err(SimError::Spec("trials_per_point must be >= 1".into()));
        }
        Ok(())
    }
}

/// One aggregated sweep point.
#[derive(Debug, Clone, PartialEq)]
pub struct BerPoint {
    pub waveform: Waveform,
    pub snr_db: f64,
    pub kappa_db: f64,
    pub altitude_m: f64,
    pub velocity_mps: f64,
    pub array_side: usize,
    pub trials: usize,
    pub total_bits: u64,
    pub bit_errors: u64,
    pub flagged_trials: u64,
    pub ber: f64,
}

fn apply_swept(config: &mut ScenarioConfig, param: SweptParameter, value: f64) {
    match param {
        SweptParameter::SnrDb => {}
        SweptParameter::KappaDb => config.rician_kappa_db = value,
        SweptParameter::AltitudeM => config.altitude_m = value,
        SweptParameter::VelocityMps => config.velocity_mps = value,
        SweptParameter::ArraySide => config.array_side = value.round() as usize,
    }
}

/// Aggregates `trials` seeded trials of one configuration at one SNR,
/// distributing trial indices over `workers` threads. Aggregation is a plain
/// sum, so the result does not depend on scheduling.
pub fn run_point(config: &ScenarioConfig, snr_db: f64, trials: usize, workers: usize) -> BerPoint {
    let workers = workers.clamp(1, trials.max(1));
    let next = AtomicUsize::new(0);
    let totals = Mutex::new((0u64, 0u64, 0u64)); // (errors, bits, flagged)
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| {
                let mut local = (0u64, 0u64, 0u64);
                loop {
                    let idx = next.fetch_add(1, Ordering::Relaxed);
                    if idx >= trials {
                        break;
                    }
                    let r = run_trial(config, snr_db, idx as u64);
                    if r.singular_flag {
                        local.2 += 1;
                    } else {
                        local.0 += r.bit_errors;
                        local.1 += r.total_bits;
                    }
                }
                let mut t = totals.lock().unwrap();
                t.0 += local.0;
                t.1 += local.1;
                t.2 += local.2;
            });
        }
    });
    let (bit_errors, total_bits, flagged_trials) = totals.into_inner().unwrap();
    BerPoint {
        waveform: config.waveform_selector,
        snr_db,
        kappa_db: config.rician_kappa_db,
        altitude_m: config.altitude_m,
        velocity_mps: config.velocity_mps,
        array_side: config.array_side,
        trials,
        total_bits,
        bit_errors,
        flagged_trials,
        ber: if total_bits > 0 {
            bit_errors as f64 / total_bits as f64
        } else {
            0.0
        },
    }
}

/// Runs the full sweep: parameter values × waveforms × SNR grid, in a fixed
/// deterministic order.
pub fn ber_sweep(
    spec: &SweepSpec,
    base_config: &ScenarioConfig,
    workers: usize,
) -> Result<Vec<BerPoint>, SimError> {
    spec.validate()?;
    let (param_values, snr_list): (Vec<f64>, Vec<f64>) =
        if spec.swept_parameter == SweptParameter::SnrDb {
            (vec![f64::NAN], spec.values.clone())
        } else {
            (spec.values.clone(), spec.snr_grid.clone())
        };

    let mut points = Vec::new();
    for &value in &param_values {
        let mut config = base_config.clone();
        config.rng_seed = spec.master_seed;
        config.trials_per_point = spec.trials_per_point;
        if !value.is_nan() {
            apply_swept(&mut config, spec.swept_parameter, value);
        }
        config.validate()?;
        for &waveform in &spec.waveforms {
            config.waveform_selector = waveform;
            for &snr_db in &snr_list {
                points.push(run_point(&config, snr_db, spec.trials_per_point, workers));
            }
        }
    }
    Ok(points)
}

// ---------------------------------------------------------------------------
// Figure presets
// ---------------------------------------------------------------------------

/// SNR grid used by the canned BER-versus-SNR comparisons (dB).
pub const DEFAULT_SNR_GRID_DB: [f64; 9] = [0.0, 2.0, 4.0, 6.0, 8.0, 10.0, 12.0, 14.0, 16.0];

/// Canned sweeps 3–6: Rician factor, altitude, velocity, and array dimension
/// comparisons between OTFS and OFDM.
pub fn figure_preset(which: u8, base: &ScenarioConfig) -> Option<SweepSpec> {
    let (swept_parameter, values) = match which {
        3 => (SweptParameter::KappaDb, vec![0.0, 5.0, 10.0]),
        4 => (
            SweptParameter::AltitudeM,
            vec![8_000.0, 10_000.0, 12_000.0],
        ),
        5 => (SweptParameter::VelocityMps, vec![100.0, 150.0]),
        6 => (SweptParameter::ArraySide, vec![75.0, 100.0]),
        _ => return None,
    };
    Some(SweepSpec {
        swept_parameter,
        values,
        snr_grid: DEFAULT_SNR_GRID_DB.to_vec(),
        waveforms: vec![Waveform::Otfs, Waveform::Ofdm],
        trials_per_point: base.trials_per_point,
        master_seed: base.rng_seed,
    })
}

// ---------------------------------------------------------------------------
// CSV results
// ---------------------------------------------------------------------------

pub const CSV_HEADER: &str =
    "waveform,snr_db,kappa_db,altitude_m,velocity_mps,array_side,trials,total_bits,bit_errors,flagged_trials,ber";

/// Formats with six significant digits, trimming trailing zeros.
fn fmt_sig6(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let mag = x.abs().log10().floor() as i32;
    let s = if (-4..=8).contains(&mag) {
        let decimals = (5 - mag).max(0) as usize;
        format!("{x:.decimals$}")
    } else {
        format!("{x:.5e}")
    };
    if s.contains('.') && !s.contains('e') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else if let Some((mantissa, exp)) = s.split_once('e') {
        let m = if mantissa.contains('.') {
            mantissa.trim_end_matches('0').trim_end_matches('.')
        } else {
            mantissa
        };
        format!("{m}e{exp}")
    } else {
        s
    }
}

pub fn write_results<W: Write>(points: &[BerPoint], mut w: W) -> std::io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for p in points {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{}",
            p.waveform,
            fmt_sig6(p.snr_db),
            fmt_sig6(p.kappa_db),
            fmt_sig6(p.altitude_m),
            fmt_sig6(p.velocity_mps),
            p.array_side,
            p.trials,
            p.total_bits,
            p.bit_errors,
            p.flagged_trials,
            fmt_sig6(p.ber),
        )?;
    }
    Ok(())
}

/// Writes the results CSV: header plus one row per point.
pub fn emit_results(points: &[BerPoint], path: &Path) -> Result<(), SimError> {
    let file = std::fs::File::create(path).map_err(|source| SimError::Io {
        path: path.display().to_string(),
        source,
    })?;
    write_results(points, std::io::BufWriter::new(file)).map_err(|source| SimError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Reads a results CSV back; the inverse of [`emit_results`] up to float
/// formatting.
pub fn parse_results(path: &Path) -> Result<Vec<BerPoint>, SimError> {
    let text = std::fs::read_to_string(path).map_err(|source| SimError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == CSV_HEADER => {}
        _ => {
            return Err(SimError::Csv {
                path: path.display().to_string(),
                line: 1,
                reason: "missing or wrong header".into(),
            })
        }
    }
    let mut points = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let err = |reason: &str| SimError::Csv {
            path: path.display().to_string(),
            line: idx + 1,
            reason: reason.to_string(),
        };
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 11 {
            return Err(err("expected 11 fields"));
        }
        let waveform = match fields[0] {
            "otfs" => Waveform::Otfs,
            "ofdm" => Waveform::Ofdm,
            other => return Err(err(&format!("unknown waveform {other:?}"))),
        };
        let f = |i: usize| -> Result<f64, SimError> {
            fields[i].parse().map_err(|_| err("bad float"))
        };
        let u = |i: usize| -> Result<u64, SimError> {
            fields[i].parse().map_err(|_| err("bad integer"))
        };
        points.push(BerPoint {
            waveform,
            snr_db: f(1)?,
            kappa_db: f(2)?,
            altitude_m: f(3)?,
            velocity_mps: f(4)?,
            array_side: u(5)? as usize,
            trials: u(6)? as usize,
            total_bits: u(7)?,
            bit_errors: u(8)?,
            flagged_trials: u(9)?,
            ber: f(10)?,
        });
    }
    Ok(points)
}

/// Per-user beamforming diagnostics of one seeded layout: kept gain fraction
/// ‖w‖²/‖α‖² and the worst residual null |w^H α_k|/L².
pub fn nsb_diagnostics_csv(config: &ScenarioConfig, path: &Path) -> Result<(), SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(config, f64::NAN, 0));
    let layout = place_users(config, &mut rng);
    let angles: Vec<_> = layout
        .positions
        .iter()
        .map(|p| user_angles(*p, [0.0, 0.0, 0.0]))
        .collect();
    let geometry = ArrayGeometry::for_carrier(config.array_side, config.carrier_hz);
    let steering: Vec<SteeringVector> =
        angles.iter().map(|a| steering_vector(&geometry, a)).collect();
    let weights = nsb_weights(&steering)
        .map_err(|e| SimError::Spec(format!("degenerate layout for diagnostics: {e}")))?;
    let l2 = geometry.element_count() as f64;
    let mut out = String::from("user,tier,gain_kept,worst_null\n");
    for i in 0..steering.len() {
        let mut worst: f64 = 0.0;
        for (k, s) in steering.iter().enumerate() {
            if k == i {
                continue;
            }
            let cross = crate::array::hermitian_inner(weights.weight(i), s.entries()).norm() / l2;
            worst = worst.max(cross);
        }
        out.push_str(&format!(
            "{},{},{},{}\n",
            i,
            layout.tier_of_user[i],
            fmt_sig6(weights.gain_loss(i, &steering[i])),
            fmt_sig6(worst),
        ));
    }
    std::fs::write(path, out).map_err(|source| SimError::Io {
        path: path.display().to_string(),
        source,
    })
}

// ---------------------------------------------------------------------------
// Self test
// ---------------------------------------------------------------------------

/// Fast property suite for the CLI: prints one line per check, returns
/// overall success.
pub fn selftest() -> bool {
    let mut ok = true;
    let mut check = |name: &str, pass: bool| {
        println!("[{}] {name}", if pass { "PASS" } else { "FAIL" });
        ok &= pass;
    };

    // Transform identities on random grids.
    {
        let mut worst: f64 = 0.0;
        for (m, n) in [(8usize, 4usize), (64, 16)] {
            let params = crate::modem::FrameParams {
                subcarriers: m,
                time_slots: n,
                cp_len: 0,
                subcarrier_spacing_hz: 30.0e3,
            };
            let modem = DdModem::new(params);
            let mut rng = ChaCha8Rng::seed_from_u64(1);
            for _ in 0..20 {
                let x = Grid::from_vec(
                    n,
                    m,
                    (0..n * m)
                        .map(|_| {
                            Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
                        })
                        .collect(),
                );
                worst = worst.max(modem.sfft(&modem.isfft(&x)).max_abs_diff(&x));
                worst =
                    worst.max(modem.wigner(&modem.heisenberg(&x)).unwrap().max_abs_diff(&x));
            }
        }
        check(
            &format!("transform identities (max err {worst:.2e})"),
            worst < 1e-12,
        );
    }

    // Null depth over seeded layouts.
    {
        let cfg = ScenarioConfig::desk();
        let geometry = ArrayGeometry::for_carrier(16, cfg.carrier_hz);
        let mut worst: f64 = 0.0;
        for seed in 0..5u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let layout = place_users(&cfg, &mut rng);
            let steering: Vec<_> = layout
                .positions
                .iter()
                .map(|p| steering_vector(&geometry, &user_angles(*p, [0.0, 0.0, 0.0])))
                .collect();
            let w = nsb_weights(&steering).unwrap();
            for i in 0..steering.len() {
                for (k, s) in steering.iter().enumerate() {
                    if i != k {
                        let c = crate::array::hermitian_inner(w.weight(i), s.entries()).norm();
                        worst = worst.max(c / 256.0);
                    }
                }
            }
        }
        check(
            &format!("null-steering depth (worst {worst:.2e})"),
            worst <= 1e-8,
        );
    }

    // Noiseless end-to-end recovery: exact for the delay-Doppler equalizer
    // at speed, and for per-bin OFDM equalization once Doppler is absent.
    {
        let mut cfg = ScenarioConfig::desk();
        let mut pass = true;
        for t in 0..3 {
            let r = run_trial(&cfg, f64::INFINITY, t);
            pass &= !r.singular_flag && r.bit_errors == 0;
        }
        cfg.waveform_selector = Waveform::Ofdm;
        cfg.velocity_mps = 0.0;
        for t in 0..3 {
            let r = run_trial(&cfg, f64::INFINITY, t);
            pass &= !r.singular_flag && r.bit_errors == 0;
        }
        check("noiseless end-to-end recovery", pass);
    }

    // Doppler and velocity anchors.
    {
        let d = crate::geometry::doppler_shift(28.0e9, 150.0, 0.0);
        let v = crate::geometry::max_supported_velocity(30.0e3, 28.0e9);
        check(
            &format!("doppler anchor 14 kHz (got {d:.1} Hz)"),
            (d - 14_000.0).abs() < 1.0,
        );
        check(
            &format!("velocity bound 160.7 m/s (got {v:.2})"),
            (v - 160.7).abs() < 0.05,
        );
    }

    // Link budget arithmetic.
    {
        let p = received_power_dbm(&crate::config::LinkBudget::default(), 10_000.0, 28.0e9);
        let n = crate::channel::watts_to_dbm(noise_power_watts(290.0, 15.36e6, 6.0));
        check(
            &format!("received power -55.89 dBm (got {p:.3})"),
            (p + 55.89).abs() < 0.05,
        );
        check(
            &format!("noise power -96.11 dBm (got {n:.3})"),
            (n + 96.11).abs() < 0.05,
        );
    }

    ok
}

/// Nominal intended-user distance of a configuration (platform to the center
/// of the cell of interest).
pub fn nominal_distance_m(config: &ScenarioConfig) -> f64 {
    let c = mci_center(config);
    (c[0] * c[0] + c[1] * c[1] + config.altitude_m * config.altitude_m).sqrt()
}

/// Resolves the worker count: explicit flag, then the OTFS_AIRLINK_WORKERS
/// environment variable, then available parallelism.
pub fn resolve_workers(flag: Option<usize>) -> usize {
    flag.or_else(|| {
        std::env::var("OTFS_AIRLINK_WORKERS")
            .ok()
            .and_then(|v| v.parse().ok())
    })
    .unwrap_or_else(|| {
        std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1)
    })
    .max(1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn quick_cfg() -> ScenarioConfig {
        let mut cfg = ScenarioConfig::desk();
        cfg.subcarriers = 16;
        cfg.doppler_bins = 8;
        cfg.array_side = 8;
        cfg.cp_len = 2;
        cfg.trials_per_point = 4;
        cfg.link_budget.bandwidth_hz = 16.0 * 30.0e3;
        cfg
    }

    #[test]
    fn noiseless_trials_are_error_free() {
        // The delay-Doppler equalizer inverts the channel exactly at any
        // supported velocity; per-bin OFDM equalization is only exact without
        // Doppler, since inter-carrier leakage is the impairment under test.
        let mut cfg = quick_cfg();
        for t in 0..5 {
            let r = run_trial(&cfg, f64::INFINITY, t);
            assert!(!r.singular_flag);
            assert_eq!(r.bit_errors, 0, "otfs trial {t}");
            assert_eq!(r.total_bits, 256);
        }
        cfg.waveform_selector = Waveform::Ofdm;
        cfg.velocity_mps = 0.0;
        for t in 0..5 {
            let r = run_trial(&cfg, f64::INFINITY, t);
            assert!(!r.singular_flag);
            assert_eq!(r.bit_errors, 0, "ofdm trial {t}");
        }
    }

    #[test]
    fn deep_noise_is_a_coin_flip() {
        let mut cfg = quick_cfg();
        cfg.waveform_selector = Waveform::Otfs;
        let mut errors = 0u64;
        let mut bits = 0u64;
        for t in 0..100 {
            let r = run_trial(&cfg, -30.0, t);
            errors += r.bit_errors;
            bits += r.total_bits;
        }
        let ber = errors as f64 / bits as f64;
        assert!((0.45..=0.55).contains(&ber), "BER {ber}");
    }

    #[test]
    fn trials_are_deterministic() {
        let cfg = quick_cfg();
        let a = run_trial(&cfg, 8.0, 3);
        let b = run_trial(&cfg, 8.0, 3);
        assert_eq!(a.bit_errors, b.bit_errors);
        assert_eq!(a.total_bits, b.total_bits);
    }

    #[test]
    fn measured_snr_tracks_target() {
        let cfg = quick_cfg();
        let mut acc = 0.0;
        let frames = 100;
        for t in 0..frames {
            acc += measure_snr_db(&cfg, 10.0, t);
        }
        let mean = acc / frames as f64;
        assert!((mean - 10.0).abs() < 0.1, "mean measured SNR {mean:.3} dB");
    }

    #[test]
    fn run_point_is_worker_count_invariant() {
        let mut cfg = quick_cfg();
        cfg.waveform_selector = Waveform::Ofdm;
        let a = run_point(&cfg, 6.0, 8, 1);
        let b = run_point(&cfg, 6.0, 8, 4);
        assert_eq!(a.bit_errors, b.bit_errors);
        assert_eq!(a.total_bits, b.total_bits);
        assert_eq!(a.flagged_trials, b.flagged_trials);
    }

    #[test]
    fn sweep_points_are_ordered_and_complete() {
        let spec = SweepSpec {
            swept_parameter: SweptParameter::KappaDb,
            values: vec![0.0, 10.0],
            snr_grid: vec![0.0, 6.0],
            waveforms: vec![Waveform::Otfs, Waveform::Ofdm],
            trials_per_point: 2,
            master_seed: 9,
        };
        let points = ber_sweep(&spec, &quick_cfg(), 2).unwrap();
        assert_eq!(points.len(), 8);
        assert_eq!(points[0].kappa_db, 0.0);
        assert_eq!(points[0].waveform, Waveform::Otfs);
        assert_eq!(points[1].snr_db, 6.0);
        assert_eq!(points[7].kappa_db, 10.0);
        assert_eq!(points[7].waveform, Waveform::Ofdm);
    }

    #[test]
    fn snr_swept_directly_uses_values() {
        let spec = SweepSpec {
            swept_parameter: SweptParameter::SnrDb,
            values: vec![0.0, 4.0, 8.0],
            snr_grid: vec![],
            waveforms: vec![Waveform::Otfs],
            trials_per_point: 1,
            master_seed: 2,
        };
        let points = ber_sweep(&spec, &quick_cfg(), 1).unwrap();
        assert_eq!(points.len(), 3);
        assert_eq!(points[2].snr_db, 8.0);
    }

    #[test]
    fn csv_round_trip_is_a_fixpoint() {
        let spec = SweepSpec {
            swept_parameter: SweptParameter::SnrDb,
            values: vec![0.0, 8.0],
            snr_grid: vec![],
            waveforms: vec![Waveform::Otfs, Waveform::Ofdm],
            trials_per_point: 2,
            master_seed: 5,
        };
        let points = ber_sweep(&spec, &quick_cfg(), 2).unwrap();
        let dir = std::env::temp_dir().join("otfs_airlink_csv_test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("round_trip.csv");
        emit_results(&points, &path).unwrap();
        let parsed = parse_results(&path).unwrap();
        assert_eq!(parsed.len(), points.len());
        for (a, b) in parsed.iter().zip(&points) {
            assert_eq!(a.waveform, b.waveform);
            assert_eq!(a.total_bits, b.total_bits);
            assert_eq!(a.bit_errors, b.bit_errors);
        }
        let path2 = dir.join("round_trip2.csv");
        emit_results(&parsed, &path2).unwrap();
        assert_eq!(
            std::fs::read(&path).unwrap(),
            std::fs::read(&path2).unwrap()
        );
    }

    #[test]
    fn empty_point_list_is_header_only() {
        let mut buf = Cursor::new(Vec::new());
        write_results(&[], &mut buf).unwrap();
        let text = String::from_utf8(buf.into_inner()).unwrap();
        assert_eq!(text, format!("{CSV_HEADER}\n"));
    }

    #[test]
    fn fmt_sig6_cases() {
        assert_eq!(fmt_sig6(0.0), "0");
        assert_eq!(fmt_sig6(150.0), "150");
        assert_eq!(fmt_sig6(10_000.0), "10000");
        assert_eq!(fmt_sig6(0.001234567), "0.00123457");
        assert_eq!(fmt_sig6(1.0 / 3.0), "0.333333");
        assert_eq!(fmt_sig6(-2.5), "-2.5");
        assert_eq!(fmt_sig6(1.5e-9), "1.5e-9");
    }

    #[test]
    fn link_budget_mode_runs() {
        let mut cfg = quick_cfg();
        cfg.waveform_selector = Waveform::Otfs;
        // The desk budget at ~10.8 km gives a comfortably positive SNR, so a
        // frame should decode cleanly.
        let r = run_trial_with_mode(&cfg, NoiseMode::LinkBudget, 0);
        assert!(!r.singular_flag);
        assert_eq!(r.total_bits, 256);
    }

    #[test]
    fn selftest_passes() {
        assert!(selftest());
    }
}
