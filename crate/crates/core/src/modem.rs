//! Delay-Doppler modem and the cyclic-prefix OFDM baseline.
//!
//! All transforms are unitary (1/√ scalings), so frame energy is identical in
//! the delay-Doppler grid, the time-frequency grid, and the time-domain
//! samples; SNR bookkeeping never needs transform-dependent factors.
//!
//! Discrete realization on the sample grid t = n·T + q/(M·Δf) with ideal
//! rectangular pulses: grid → time is an inverse M-point transform per time
//! slot plus a cyclic prefix of `cp_len` samples per slot, and time → grid
//! strips each prefix and applies the forward M-point transform per slot.
//! OFDM uses the same slot structure without the symplectic spreading step, so
//! both waveforms occupy identical bandwidth and duration.

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use std::sync::Arc;
use thiserror::Error;

pub const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

#[derive(Debug, Error)]
pub enum ModemError {
    #[error("bit count must be even for 4-QAM (got {0})")]
    InvalidLength(usize),
    #[error("expected {expected} samples, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("symbol count {got} is not a multiple of {subcarriers} subcarriers")]
    SymbolCount { got: usize, subcarriers: usize },
}

/// Frame numerology shared by the modem, the channel, and the equalizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameParams {
    /// Delay bins / subcarriers M.
    pub subcarriers: usize,
    /// Doppler bins / time slots N.
    pub time_slots: usize,
    /// Cyclic prefix samples per time slot.
    pub cp_len: usize,
    /// Subcarrier spacing Δf (Hz).
    pub subcarrier_spacing_hz: f64,
}

impl FrameParams {
    /// Complex sample rate M·Δf (Hz).
    pub fn sample_rate_hz(&self) -> f64 {
        self.subcarriers as f64 * self.subcarrier_spacing_hz
    }

    /// Samples per CP-extended slot.
    pub fn block_len(&self) -> usize {
        self.subcarriers + self.cp_len
    }

    /// Samples per frame, N·(M + cp).
    pub fn frame_len(&self) -> usize {
        self.time_slots * self.block_len()
    }

    /// Symbols per frame, N·M.
    pub fn grid_len(&self) -> usize {
        self.time_slots * self.subcarriers
    }
}

/// N×M complex grid. Rows index Doppler bins k (or time slots n), columns
/// index delay bins l (or subcarriers m). Storage is row-major, so the
/// vectorized order runs the delay index fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    rows: usize,
    cols: usize,
    data: Vec<Complex64>,
}

impl Grid {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Grid {
            rows,
            cols,
            data: vec![Complex64::ZERO; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<Complex64>) -> Self {
        assert_eq!(data.len(), rows * cols);
        Grid { rows, cols, data }
    }

    /// Unit impulse at (row, col).
    pub fn impulse(rows: usize, cols: usize, row: usize, col: usize) -> Self {
        let mut g = Grid::zeros(rows, cols);
        g.set(row, col, Complex64::new(1.0, 0.0));
        g
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: Complex64) {
        self.data[row * self.cols + col] = v;
    }

    /// Row-major (delay-fastest) view of the grid.
    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn energy(&self) -> f64 {
        self.data.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn max_abs_diff(&self, other: &Grid) -> f64 {
        assert_eq!(self.rows, other.rows);
        assert_eq!(self.cols, other.cols);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

/// Complex baseband samples of one frame at rate M·Δf, cyclic prefixes
/// included.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSignal {
    pub samples: Vec<Complex64>,
    pub params: FrameParams,
}

impl TimeSignal {
    pub fn zeros(params: FrameParams) -> Self {
        TimeSignal {
            samples: vec![Complex64::ZERO; params.frame_len()],
            params,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|c| c.norm_sqr()).sum()
    }
}

// ---------------------------------------------------------------------------
// 4-QAM mapping
// ---------------------------------------------------------------------------

/// Gray-labeled unit-energy 4-QAM constellation, indexed by the two-bit word
/// (b0 b1): b0 selects the real sign, b1 the imaginary sign, 0 ↦ +.
pub fn qam_constellation() -> [Complex64; 4] {
    let a = FRAC_1_SQRT_2;
    [
        Complex64::new(a, a),   // 00
        Complex64::new(a, -a),  // 01
        Complex64::new(-a, a),  // 10
        Complex64::new(-a, -a), // 11
    ]
}

/// Maps bit pairs to unit-energy 4-QAM symbols.
pub fn qam_map(bits: &[u8]) -> Result<Vec<Complex64>, ModemError> {
    if !bits.len().is_multiple_of(2) {
        return Err(ModemError::InvalidLength(bits.len()));
    }
    let table = qam_constellation();
    Ok(bits
        .chunks_exact(2)
        .map(|b| table[((b[0] & 1) as usize) << 1 | (b[1] & 1) as usize])
        .collect())
}

/// Nearest-neighbor hard decisions back to bits. For 4-QAM this reduces to
/// the signs of the real and imaginary parts.
pub fn qam_demap(symbols: &[Complex64]) -> Vec<u8> {
    let mut bits = Vec::with_capacity(symbols.len() * 2);
    for s in symbols {
        bits.push(if s.re >= 0.0 { 0 } else { 1 });
        bits.push(if s.im >= 0.0 { 0 } else { 1 });
    }
    bits
}

// ---------------------------------------------------------------------------
// Transforms
// ---------------------------------------------------------------------------

/// Modem for one frame geometry. Caches FFT plans; create one per worker.
pub struct DdModem {
    params: FrameParams,
    fwd_m: Arc<dyn Fft<f64>>,
    inv_m: Arc<dyn Fft<f64>>,
    fwd_n: Arc<dyn Fft<f64>>,
    inv_n: Arc<dyn Fft<f64>>,
}

impl DdModem {
    pub fn new(params: FrameParams) -> Self {
        let mut planner = FftPlanner::new();
        DdModem {
            params,
            fwd_m: planner.plan_fft_forward(params.subcarriers),
            inv_m: planner.plan_fft_inverse(params.subcarriers),
            fwd_n: planner.plan_fft_forward(params.time_slots),
            inv_n: planner.plan_fft_inverse(params.time_slots),
        }
    }

    pub fn params(&self) -> &FrameParams {
        &self.params
    }

    fn check_grid(&self, g: &Grid) {
        assert_eq!(g.rows(), self.params.time_slots, "grid rows != N");
        assert_eq!(g.cols(), self.params.subcarriers, "grid cols != M");
    }

    /// Inverse symplectic transform, delay-Doppler grid → time-frequency grid:
    /// an N-point inverse transform along Doppler and an M-point forward
    /// transform along delay, both unitary.
    pub fn isfft(&self, dd: &Grid) -> Grid {
        self.check_grid(dd);
        let (n, m) = (self.params.time_slots, self.params.subcarriers);
        let mut out = dd.clone();
        // Columns: k -> n via unitary inverse transform.
        let mut col = vec![Complex64::ZERO; n];
        let scale_n = 1.0 / (n as f64).sqrt();
        for l in 0..m {
            for (k, c) in col.iter_mut().enumerate() {
                *c = out.get(k, l);
            }
            self.inv_n.process(&mut col);
            for (k, c) in col.iter().enumerate() {
                out.set(k, l, c * scale_n);
            }
        }
        // Rows: l -> m via unitary forward transform.
        let scale_m = 1.0 / (m as f64).sqrt();
        for nn in 0..n {
            let row = &mut out.as_mut_slice()[nn * m..(nn + 1) * m];
            self.fwd_m.process(row);
            for v in row.iter_mut() {
                *v *= scale_m;
            }
        }
        out
    }

    /// Forward symplectic transform, exact inverse of [`DdModem::isfft`].
    pub fn sfft(&self, tf: &Grid) -> Grid {
        self.check_grid(tf);
        let (n, m) = (self.params.time_slots, self.params.subcarriers);
        let mut out = tf.clone();
        let scale_m = 1.0 / (m as f64).sqrt();
        for nn in 0..n {
            let row = &mut out.as_mut_slice()[nn * m..(nn + 1) * m];
            self.inv_m.process(row);
            for v in row.iter_mut() {
                *v *= scale_m;
            }
        }
        let mut col = vec![Complex64::ZERO; n];
        let scale_n = 1.0 / (n as f64).sqrt();
        for l in 0..m {
            for (k, c) in col.iter_mut().enumerate() {
                *c = out.get(k, l);
            }
            self.fwd_n.process(&mut col);
            for (k, c) in col.iter().enumerate() {
                out.set(k, l, c * scale_n);
            }
        }
        out
    }

    /// Time-frequency grid → time samples: unitary M-point inverse transform
    /// per slot, cyclic prefix prepended per slot, slots concatenated.
    pub fn heisenberg(&self, tf: &Grid) -> TimeSignal {
        self.check_grid(tf);
        let (n, m, cp) = (
            self.params.time_slots,
            self.params.subcarriers,
            self.params.cp_len,
        );
        let scale = 1.0 / (m as f64).sqrt();
        let mut samples = Vec::with_capacity(self.params.frame_len());
        let mut block = vec![Complex64::ZERO; m];
        for nn in 0..n {
            block.copy_from_slice(&tf.as_slice()[nn * m..(nn + 1) * m]);
            self.inv_m.process(&mut block);
            for v in block.iter_mut() {
                *v *= scale;
            }
            samples.extend_from_slice(&block[m - cp..]);
            samples.extend_from_slice(&block);
        }
        TimeSignal {
            samples,
            params: self.params,
        }
    }

    /// Time samples → time-frequency grid: strip each cyclic prefix, unitary
    /// M-point forward transform per slot. Exact inverse of
    /// [`DdModem::heisenberg`] over an identity channel.
    pub fn wigner(&self, signal: &TimeSignal) -> Result<Grid, ModemError> {
        let expected = self.params.frame_len();
        if signal.samples.len() != expected {
            return Err(ModemError::LengthMismatch {
                expected,
                got: signal.samples.len(),
            });
        }
        let (n, m, cp) = (
            self.params.time_slots,
            self.params.subcarriers,
            self.params.cp_len,
        );
        let block_len = self.params.block_len();
        let scale = 1.0 / (m as f64).sqrt();
        let mut out = Grid::zeros(n, m);
        let mut block = vec![Complex64::ZERO; m];
        for nn in 0..n {
            let start = nn * block_len + cp;
            block.copy_from_slice(&signal.samples[start..start + m]);
            self.fwd_m.process(&mut block);
            for (l, v) in block.iter().enumerate() {
                out.set(nn, l, v * scale);
            }
        }
        Ok(out)
    }

    /// Cyclic-prefix OFDM: rows of M symbols each become one slot via the
    /// unitary inverse transform plus prefix. Equivalent to
    /// [`DdModem::heisenberg`] applied to the symbols laid out directly on the
    /// time-frequency grid.
    pub fn ofdm_modulate(&self, symbols: &[Complex64]) -> Result<TimeSignal, ModemError> {
        let m = self.params.subcarriers;
        if symbols.len() != self.params.grid_len() {
            return Err(ModemError::SymbolCount {
                got: symbols.len(),
                subcarriers: m,
            });
        }
        let grid = Grid::from_vec(self.params.time_slots, m, symbols.to_vec());
        Ok(self.heisenberg(&grid))
    }

    /// Inverse of [`DdModem::ofdm_modulate`] over an identity channel.
    pub fn ofdm_demodulate(&self, signal: &TimeSignal) -> Result<Vec<Complex64>, ModemError> {
        Ok(self.wigner(signal)?.as_slice().to_vec())
    }
}
