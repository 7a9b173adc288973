//! Command-line front end: single points, sweeps, canned figure presets, and
//! a quick self test.

use clap::{Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;

use otfs_airlink::config::{ScenarioConfig, Waveform};
use otfs_airlink::sim::{
    ber_sweep, emit_results, figure_preset, nsb_diagnostics_csv, resolve_workers, run_point,
    selftest, write_results, BerPoint, NoiseMode, SweepSpec,
};

#[derive(Parser)]
#[command(
    name = "otfs-airlink",
    about = "Link-level BER simulator for OTFS and OFDM over an airborne mmWave downlink",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum WaveformArg {
    Otfs,
    Ofdm,
    Both,
}

impl WaveformArg {
    fn list(self) -> Vec<Waveform> {
        match self {
            WaveformArg::Otfs => vec![Waveform::Otfs],
            WaveformArg::Ofdm => vec![Waveform::Ofdm],
            WaveformArg::Both => vec![Waveform::Otfs, Waveform::Ofdm],
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Profile {
    /// Reduced numerology (64×16 frame, 16×16 array, one tier); seconds per
    /// point.
    Desk,
    /// Full numerology (512×16 frame, 100×100 array, five tiers); tens of
    /// seconds per trial.
    Full,
}

impl Profile {
    fn config(self) -> ScenarioConfig {
        match self {
            Profile::Desk => ScenarioConfig::desk(),
            Profile::Full => ScenarioConfig::full_scale(),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one sweep point and print (optionally write) its BER row.
    Run {
        /// Scenario JSON; overrides --profile.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "desk")]
        profile: Profile,
        /// Receiver-input SNR in dB.
        #[arg(long, default_value_t = 10.0, allow_hyphen_values = true)]
        snr: f64,
        /// Take noise and received power from the link budget instead of
        /// targeting --snr.
        #[arg(long, default_value_t = false)]
        budget: bool,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long, value_enum)]
        waveform: Option<WaveformArg>,
        /// Master seed override.
        #[arg(long)]
        seed: Option<u64>,
        /// Also write the rows to a CSV file.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
        /// Dump per-user beamforming gain loss and worst residual null.
        #[arg(long)]
        nsb_diagnostics: Option<PathBuf>,
    },
    /// Run a sweep described by a JSON spec and write a CSV.
    Sweep {
        /// Sweep specification JSON.
        spec: PathBuf,
        /// Scenario JSON; overrides --profile.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "desk")]
        profile: Profile,
        #[arg(long, default_value = "ber_results.csv")]
        out: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Run one of the canned comparisons (3: Rician factor, 4: altitude,
    /// 5: velocity, 6: array dimension).
    Figure {
        #[arg(value_parser = clap::value_parser!(u8).range(3..=6))]
        which: u8,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "desk")]
        profile: Profile,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Run the fast property suite and exit nonzero on failure.
    Selftest,
}

fn load_config(path: &Option<PathBuf>, profile: Profile) -> Result<ScenarioConfig, String> {
    match path {
        Some(p) => ScenarioConfig::from_path(p).map_err(|e| e.to_string()),
        None => Ok(profile.config()),
    }
}

fn run() -> Result<(), String> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            profile,
            snr,
            budget,
            trials,
            waveform,
            seed,
            out,
            workers,
            nsb_diagnostics,
        } => {
            let mut cfg = load_config(&config, profile)?;
            if let Some(s) = seed {
                cfg.rng_seed = s;
            }
            if let Some(t) = trials {
                cfg.trials_per_point = t;
            }
            cfg.validate().map_err(|e| e.to_string())?;
            if let Some(path) = &nsb_diagnostics {
                nsb_diagnostics_csv(&cfg, path).map_err(|e| e.to_string())?;
                eprintln!("wrote beamforming diagnostics to {}", path.display());
            }
            let workers = resolve_workers(workers);
            let waveforms = waveform
                .map(WaveformArg::list)
                .unwrap_or_else(|| vec![cfg.waveform_selector]);
            let mut points: Vec<BerPoint> = Vec::new();
            for wf in waveforms {
                cfg.waveform_selector = wf;
                if budget {
                    // Aggregate link-budget trials by hand so the CSV can
                    // carry the budget-equivalent SNR column.
                    let mut errors = 0u64;
                    let mut bits = 0u64;
                    let mut flagged = 0u64;
                    for t in 0..cfg.trials_per_point {
                        let r = otfs_airlink::sim::run_trial_with_mode(
                            &cfg,
                            NoiseMode::LinkBudget,
                            t as u64,
                        );
                        if r.singular_flag {
                            flagged += 1;
                        } else {
                            errors += r.bit_errors;
                            bits += r.total_bits;
                        }
                    }
                    points.push(BerPoint {
                        waveform: wf,
                        snr_db: budget_snr_db(&cfg),
                        kappa_db: cfg.rician_kappa_db,
                        altitude_m: cfg.altitude_m,
                        velocity_mps: cfg.velocity_mps,
                        array_side: cfg.array_side,
                        trials: cfg.trials_per_point,
                        total_bits: bits,
                        bit_errors: errors,
                        flagged_trials: flagged,
                        ber: if bits > 0 {
                            errors as f64 / bits as f64
                        } else {
                            0.0
                        },
                    });
                } else {
                    points.push(run_point(&cfg, snr, cfg.trials_per_point, workers));
                }
            }
            write_results(&points, std::io::stdout().lock()).map_err(|e| e.to_string())?;
            if let Some(path) = out {
                emit_results(&points, &path).map_err(|e| e.to_string())?;
            }
            Ok(())
        }
        Command::Sweep {
            spec,
            config,
            profile,
            out,
            workers,
        } => {
            let cfg = load_config(&config, profile)?;
            let spec = SweepSpec::from_path(&spec).map_err(|e| e.to_string())?;
            let workers = resolve_workers(workers);
            let points = ber_sweep(&spec, &cfg, workers).map_err(|e| e.to_string())?;
            emit_results(&points, &out).map_err(|e| e.to_string())?;
            eprintln!("wrote {} points to {}", points.len(), out.display());
            Ok(())
        }
        Command::Figure {
            which,
            config,
            profile,
            out,
            trials,
            seed,
            workers,
        } => {
            let mut cfg = load_config(&config, profile)?;
            if let Some(s) = seed {
                cfg.rng_seed = s;
            }
            if let Some(t) = trials {
                cfg.trials_per_point = t;
            }
            cfg.validate().map_err(|e| e.to_string())?;
            let spec = figure_preset(which, &cfg).ok_or("figure must be 3..=6")?;
            let workers = resolve_workers(workers);
            let points = ber_sweep(&spec, &cfg, workers).map_err(|e| e.to_string())?;
            let out = out.unwrap_or_else(|| PathBuf::from(format!("figure{which}.csv")));
            emit_results(&points, &out).map_err(|e| e.to_string())?;
            eprintln!("wrote {} points to {}", points.len(), out.display());
            Ok(())
        }
        Command::Selftest => {
            if selftest() {
                Ok(())
            } else {
                Err("self test failed".into())
            }
        }
    }
}

/// Budget-equivalent receiver SNR at the nominal intended-user distance.
fn budget_snr_db(cfg: &ScenarioConfig) -> f64 {
    let d = otfs_airlink::sim::nominal_distance_m(cfg);
    let p_r = otfs_airlink::channel::received_power_dbm(&cfg.link_budget, d, cfg.carrier_hz);
    let noise = otfs_airlink::channel::watts_to_dbm(otfs_airlink::channel::noise_power_watts(
        cfg.link_budget.temperature_k,
        cfg.link_budget.bandwidth_hz,
        cfg.link_budget.noise_figure_db,
    ));
    p_r - noise
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
