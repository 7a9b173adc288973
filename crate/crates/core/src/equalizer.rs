//! Zero-forcing equalization: delay-Doppler domain for OTFS, per subcarrier
//! for OFDM.
//!
//! The effective delay-Doppler matrix is built structurally from the channel
//! taps rather than by simulation. With the vectorization order fixed as delay
//! fastest, a tap with delay d and Doppler ν contributes
//! (Doppler coupling circulant) ⊗ (delay shift with per-column phase); the
//! Doppler coupling of a pure frequency offset is unitary. When every tap
//! shares one Doppler shift — always true here, since a user's paths see the
//! same shift — the whole matrix factors as a Kronecker product of an N×N
//! unitary circulant and an M×M circulant-times-phase-diagonal, so the exact
//! inverse and the exact condition number come from two FFT passes. General
//! tap sets fall back to a dense LU below the size guard.
//!
//! [`impulse_probe_matrix`] is the brute-force oracle: it pushes every unit
//! impulse through the full modulate → beamform → channel → demodulate
//! pipeline and is, by linearity, the exact effective matrix.

use num_complex::Complex64;
use rustfft::FftPlanner;
use std::f64::consts::PI;
use thiserror::Error;

use crate::channel::{apply_channel, stream_taps, PathSet, StreamTap};
use crate::modem::{DdModem, FrameParams, Grid, TimeSignal};
use crate::precoder::{beamform_superpose, PrecodeSet};

/// Condition estimates above this flag the trial as singular.
pub const CONDITION_GUARD: f64 = 1e8;

/// Largest M·N for which dense materialization is allowed.
pub const MAX_DENSE_DIM: usize = 4096;

/// Per-bin gains below this magnitude are treated as erasures in OFDM ZF.
pub const OFDM_ERASURE_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum EqualizerError {
    #[error("channel condition estimate {cond:.3e} exceeds guard {guard:.1e}")]
    SingularChannel { cond: f64, guard: f64 },
    #[error("dimension {dim} exceeds the dense-materialization guard {max}")]
    SizeGuard { dim: usize, max: usize },
    #[error("relative delay of {delay_samples} samples exceeds cp_len {cp_len}")]
    DelayExceedsCp { delay_samples: usize, cp_len: usize },
    #[error("grid dimensions do not match the matrix ({expected} vs {got})")]
    DimensionMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Channel(#[from] crate::channel::ChannelError),
    #[error(transparent)]
    Precoder(#[from] crate::precoder::PrecoderError),
    #[error(transparent)]
    Modem(#[from] crate::modem::ModemError),
}

/// One tap of the effective delay-Doppler channel. The gain folds in the
/// Doppler phase offset −2πν·τ of the normalized delay.
#[derive(Debug, Clone, Copy)]
pub struct DdTap {
    pub gain: Complex64,
    pub delay_samples: usize,
    pub doppler_hz: f64,
}

/// Exact linear map from the intended user's transmitted delay-Doppler grid
/// to the received one, stored by its generating taps.
#[derive(Debug, Clone)]
pub struct EffectiveDdMatrix {
    params: FrameParams,
    taps: Vec<DdTap>,
}

impl EffectiveDdMatrix {
    /// Builds the matrix from explicit taps with absolute delays; delays are
    /// normalized to the earliest tap and rounded to the nearest sample.
    pub fn from_taps(
        taps: &[StreamTap],
        params: FrameParams,
    ) -> Result<Self, EqualizerError> {
        let reference = taps
            .iter()
            .map(|t| t.delay_s)
            .fold(f64::INFINITY, f64::min);
        let rate = params.sample_rate_hz();
        let mut dd = Vec::with_capacity(taps.len());
        for t in taps {
            if t.gain == Complex64::ZERO {
                continue;
            }
            let rel = t.delay_s - reference;
            let d = (rel * rate).round() as i64;
            let d = d.max(0) as usize;
            if d > params.cp_len {
                return Err(EqualizerError::DelayExceedsCp {
                    delay_samples: d,
                    cp_len: params.cp_len,
                });
            }
            dd.push(DdTap {
                gain: t.gain * Complex64::from_polar(1.0, -2.0 * PI * t.doppler_hz * rel),
                delay_samples: d,
                doppler_hz: t.doppler_hz,
            });
        }
        Ok(EffectiveDdMatrix { params, taps: dd })
    }

    pub fn params(&self) -> &FrameParams {
        &self.params
    }

    pub fn taps(&self) -> &[DdTap] {
        &self.taps
    }

    /// Matrix dimension M·N.
    pub fn dim(&self) -> usize {
        self.params.grid_len()
    }

    /// The common Doppler shift when all taps share one, which makes the
    /// matrix a Kronecker product of two circulant factors.
    pub fn shared_doppler(&self) -> Option<f64> {
        let first = self.taps.first()?.doppler_hz;
        self.taps
            .iter()
            .all(|t| t.doppler_hz == first)
            .then_some(first)
    }

    /// Frequency response of the delay taps: t̂[m] = Σ_t g_t e^{−j2πm d_t/M}.
    fn delay_response(&self) -> Vec<Complex64> {
        let m = self.params.subcarriers;
        (0..m)
            .map(|mm| {
                self.taps
                    .iter()
                    .map(|t| {
                        t.gain
                            * Complex64::from_polar(
                                1.0,
                                -2.0 * PI * (mm * t.delay_samples) as f64 / m as f64,
                            )
                    })
                    .sum()
            })
            .collect()
    }

    /// Condition number: exact (ratio of extreme singular values) in the
    /// shared-Doppler case, LU-diagonal estimate otherwise.
    pub fn condition_estimate(&self) -> f64 {
        if self.taps.is_empty() {
            return f64::INFINITY;
        }
        if self.shared_doppler().is_some() {
            // Unitary ⊗ (unitary-diag × circulant): singular values are the
            // delay-response magnitudes.
            let t_hat = self.delay_response();
            let mut lo = f64::INFINITY;
            let mut hi = 0.0f64;
            for v in &t_hat {
                let a = v.norm();
                lo = lo.min(a);
                hi = hi.max(a);
            }
            if lo == 0.0 {
                f64::INFINITY
            } else {
                hi / lo
            }
        } else {
            match self.to_dense().and_then(|d| d.lu()) {
                Ok(lu) => lu.condition_estimate(),
                Err(_) => f64::INFINITY,
            }
        }
    }

    /// Entry H[(k',l'), (k,l)] of the full matrix.
    pub fn entry(&self, row: usize, col: usize) -> Complex64 {
        let m = self.params.subcarriers;
        let n = self.params.time_slots;
        let (kp, lp) = (row / m, row % m);
        let (k, l) = (col / m, col % m);
        let mut acc = Complex64::ZERO;
        for t in &self.taps {
            if (lp + m - t.delay_samples) % m != l {
                continue;
            }
            acc += t.gain
                * self.column_phase(t, lp)
                * doppler_coupling(t.doppler_hz, (k + n - kp) % n, &self.params);
        }
        acc
    }

    fn column_phase(&self, t: &DdTap, lp: usize) -> Complex64 {
        let rate = self.params.sample_rate_hz();
        Complex64::from_polar(
            1.0,
            2.0 * PI * t.doppler_hz * (self.params.cp_len + lp) as f64 / rate,
        )
    }

    /// Dense materialization, guarded by [`MAX_DENSE_DIM`].
    pub fn to_dense(&self) -> Result<DenseMatrix, EqualizerError> {
        let dim = self.dim();
        if dim > MAX_DENSE_DIM {
            return Err(EqualizerError::SizeGuard {
                dim,
                max: MAX_DENSE_DIM,
            });
        }
        let m = self.params.subcarriers;
        let n = self.params.time_slots;
        // Doppler coupling tables, one per tap: N-periodic in (k - k').
        let tables: Vec<Vec<Complex64>> = self
            .taps
            .iter()
            .map(|t| {
                (0..n)
                    .map(|delta| doppler_coupling(t.doppler_hz, delta, &self.params))
                    .collect()
            })
            .collect();
        let mut dense = DenseMatrix::zeros(dim);
        for kp in 0..n {
            for lp in 0..m {
                let row = kp * m + lp;
                for (t, table) in self.taps.iter().zip(&tables) {
                    let l = (lp + m - t.delay_samples) % m;
                    let phase = t.gain * self.column_phase(t, lp);
                    for k in 0..n {
                        let col = k * m + l;
                        dense.add(row, col, phase * table[(k + n - kp) % n]);
                    }
                }
            }
        }
        Ok(dense)
    }

    /// Applies the inverse map. Shared-Doppler taps invert through the
    /// Kronecker factors in O(MN log MN); anything else goes through a dense
    /// LU below the size guard.
    pub fn solve(&self, received: &Grid) -> Result<Grid, EqualizerError> {
        let dim = self.dim();
        if received.rows() * received.cols() != dim {
            return Err(EqualizerError::DimensionMismatch {
                expected: dim,
                got: received.rows() * received.cols(),
            });
        }
        let cond = self.condition_estimate();
        if !cond.is_finite() || cond > CONDITION_GUARD {
            return Err(EqualizerError::SingularChannel {
                cond,
                guard: CONDITION_GUARD,
            });
        }
        if let Some(doppler) = self.shared_doppler() {
            Ok(self.solve_factored(received, doppler))
        } else {
            let lu = self.to_dense()?.lu()?;
            let x = lu.solve(received.as_slice());
            Ok(Grid::from_vec(received.rows(), received.cols(), x))
        }
    }

    fn solve_factored(&self, received: &Grid, doppler_hz: f64) -> Grid {
        let m = self.params.subcarriers;
        let n = self.params.time_slots;
        let rate = self.params.sample_rate_hz();
        let mut planner = FftPlanner::new();
        let fwd_n = planner.plan_fft_forward(n);
        let inv_n = planner.plan_fft_inverse(n);
        let fwd_m = planner.plan_fft_forward(m);
        let inv_m = planner.plan_fft_inverse(m);

        let mut out = received.clone();

        // Doppler factor: C = F diag(β) F^H with β_n = e^{j2πν n (M+cp)/rate},
        // inverted by conjugating the eigenvalues.
        let beta_conj: Vec<Complex64> = (0..n)
            .map(|nn| {
                Complex64::from_polar(
                    1.0,
                    -2.0 * PI * doppler_hz * (nn * self.params.block_len()) as f64 / rate,
                )
            })
            .collect();
        let mut col = vec![Complex64::ZERO; n];
        for l in 0..m {
            for (k, c) in col.iter_mut().enumerate() {
                *c = out.get(k, l);
            }
            inv_n.process(&mut col); // √N · F^H
            for (c, b) in col.iter_mut().zip(&beta_conj) {
                *c *= b;
            }
            fwd_n.process(&mut col); // √N · F
            let scale = 1.0 / n as f64;
            for (k, c) in col.iter().enumerate() {
                out.set(k, l, c * scale);
            }
        }

        // Per-column Doppler phase, then the delay circulant in the transform
        // domain.
        let t_hat = self.delay_response();
        let mut row = vec![Complex64::ZERO; m];
        for k in 0..n {
            for (l, r) in row.iter_mut().enumerate() {
                let theta =
                    -2.0 * PI * doppler_hz * (self.params.cp_len + l) as f64 / rate;
                *r = out.get(k, l) * Complex64::from_polar(1.0, theta);
            }
            fwd_m.process(&mut row);
            for (r, t) in row.iter_mut().zip(&t_hat) {
                *r /= t;
            }
            inv_m.process(&mut row);
            let scale = 1.0 / m as f64;
            for (l, r) in row.iter().enumerate() {
                out.set(k, l, r * scale);
            }
        }
        out
    }
}

/// Doppler coupling coefficient (1/N)·Σ_n e^{j2πn(δ + N·a)/N} with
/// a = ν·(M+cp)/rate the per-slot Doppler advance in cycles.
fn doppler_coupling(doppler_hz: f64, delta: usize, params: &FrameParams) -> Complex64 {
    let n = params.time_slots;
    let a = doppler_hz * params.block_len() as f64 / params.sample_rate_hz();
    let mut acc = Complex64::ZERO;
    for nn in 0..n {
        acc += Complex64::from_polar(1.0, 2.0 * PI * nn as f64 * (delta as f64 / n as f64 + a));
    }
    acc / n as f64
}

/// Effective matrix of the intended user's own stream under the realized
/// channel and weights, built structurally.
pub fn effective_dd_matrix(
    paths: &PathSet,
    weights: &PrecodeSet,
    params: FrameParams,
) -> Result<EffectiveDdMatrix, EqualizerError> {
    let taps = stream_taps(paths, weights, 0);
    EffectiveDdMatrix::from_taps(&taps[0], params)
}

/// Brute-force oracle: probes every unit delay-Doppler impulse through the
/// full noiseless pipeline (modulate, beamform, channel, demodulate) and
/// assembles the columns. Guarded by [`MAX_DENSE_DIM`].
pub fn impulse_probe_matrix(
    paths: &PathSet,
    weights: &PrecodeSet,
    params: FrameParams,
) -> Result<DenseMatrix, EqualizerError> {
    let dim = params.grid_len();
    if dim > MAX_DENSE_DIM {
        return Err(EqualizerError::SizeGuard {
            dim,
            max: MAX_DENSE_DIM,
        });
    }
    let modem = DdModem::new(params);
    let n = params.time_slots;
    let m = params.subcarriers;
    let users = weights.user_count();
    let mut dense = DenseMatrix::zeros(dim);
    for q in 0..dim {
        let grid = Grid::impulse(n, m, q / m, q % m);
        let s0 = modem.heisenberg(&modem.isfft(&grid));
        let mut signals = vec![TimeSignal::zeros(params); users];
        signals[0] = s0;
        let elements = beamform_superpose(weights, &signals)?;
        let rx = apply_channel(&elements, paths, 0, 1.0)?;
        let out = modem.sfft(&modem.wigner(&rx)?);
        for (p, v) in out.as_slice().iter().enumerate() {
            dense.set(p, q, *v);
        }
    }
    Ok(dense)
}

/// Inverts the effective channel: unvec(H⁻¹ · vec(received)).
pub fn zf_equalize_dd(
    received: &Grid,
    h_eff: &EffectiveDdMatrix,
) -> Result<Grid, EqualizerError> {
    h_eff.solve(received)
}

// ---------------------------------------------------------------------------
// OFDM frequency-domain equalization
// ---------------------------------------------------------------------------

/// Per-slot, per-subcarrier complex gains of the channel as seen by OFDM.
#[derive(Debug, Clone)]
pub struct FreqChannel {
    gains: Grid,
}

impl FreqChannel {
    pub fn gains(&self) -> &Grid {
        &self.gains
    }

    /// Diagonal (per-bin) response of the taps: the delay term contributes
    /// e^{−j2πmd/M} and the Doppler ramp contributes its mean over the slot,
    /// which is the exact diagonal of the per-slot channel matrix.
    /// Inter-carrier leakage stays behind as distortion.
    pub fn from_taps(taps: &[StreamTap], params: FrameParams) -> Self {
        let m = params.subcarriers;
        let n = params.time_slots;
        let rate = params.sample_rate_hz();
        let reference = taps
            .iter()
            .map(|t| t.delay_s)
            .fold(f64::INFINITY, f64::min);
        let mut gains = Grid::zeros(n, m);
        for t in taps {
            if t.gain == Complex64::ZERO {
                continue;
            }
            let rel = t.delay_s - reference;
            let d = (rel * rate).round().max(0.0) as usize;
            let folded = t.gain * Complex64::from_polar(1.0, -2.0 * PI * t.doppler_hz * rel);
            for nn in 0..n {
                let mut ramp = Complex64::ZERO;
                for q in 0..m {
                    let tq = (nn * params.block_len() + params.cp_len + q) as f64 / rate;
                    ramp += Complex64::from_polar(1.0, 2.0 * PI * t.doppler_hz * tq);
                }
                ramp /= m as f64;
                for mm in 0..m {
                    let delay_phase =
                        Complex64::from_polar(1.0, -2.0 * PI * (mm * d) as f64 / m as f64);
                    let v = gains.get(nn, mm) + folded * ramp * delay_phase;
                    gains.set(nn, mm, v);
                }
            }
        }
        FreqChannel { gains }
    }
}

/// Per-bin zero forcing Y[n,m]/H[n,m]. Bins with |H| below
/// [`OFDM_ERASURE_TOL`] are zeroed and reported as erasures; the caller
/// substitutes random bit decisions for them.
pub fn zf_equalize_ofdm(received: &Grid, channel: &FreqChannel) -> (Grid, Vec<usize>) {
    let h = &channel.gains;
    assert_eq!(received.rows(), h.rows());
    assert_eq!(received.cols(), h.cols());
    let mut out = received.clone();
    let mut erasures = Vec::new();
    for (i, (y, g)) in received
        .as_slice()
        .iter()
        .zip(h.as_slice())
        .enumerate()
    {
        if g.norm() < OFDM_ERASURE_TOL {
            out.as_mut_slice()[i] = Complex64::ZERO;
            erasures.push(i);
        } else {
            out.as_mut_slice()[i] = y / g;
        }
    }
    (out, erasures)
}

// ---------------------------------------------------------------------------
// Dense complex matrix with LU solve
// ---------------------------------------------------------------------------

/// Row-major dense complex matrix; the general-case fallback and the oracle
/// comparison target.
#[derive(Debug, Clone)]
pub struct DenseMatrix {
    dim: usize,
    data: Vec<Complex64>,
}

impl DenseMatrix {
    pub fn zeros(dim: usize) -> Self {
        DenseMatrix {
            dim,
            data: vec![Complex64::ZERO; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.set(i, i, Complex64::new(1.0, 0.0));
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[row * self.dim + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: Complex64) {
        self.data[row * self.dim + col] = v;
    }

    pub fn add(&mut self, row: usize, col: usize, v: Complex64) {
        self.data[row * self.dim + col] += v;
    }

    pub fn mul_vec(&self, x: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(x.len(), self.dim);
        (0..self.dim)
            .map(|r| {
                self.data[r * self.dim..(r + 1) * self.dim]
                    .iter()
                    .zip(x)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }

    pub fn max_abs_diff(&self, other: &DenseMatrix) -> f64 {
        assert_eq!(self.dim, other.dim);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// LU factorization with partial pivoting.
    pub fn lu(&self) -> Result<LuFactors, EqualizerError> {
        let n = self.dim;
        let mut a = self.data.clone();
        let mut pivots = vec![0usize; n];
        for k in 0..n {
            let mut p = k;
            let mut best = a[k * n + k].norm();
            for r in (k + 1)..n {
                let v = a[r * n + k].norm();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if best == 0.0 {
                return Err(EqualizerError::SingularChannel {
                    cond: f64::INFINITY,
                    guard: CONDITION_GUARD,
                });
            }
            pivots[k] = p;
            if p != k {
                for c in 0..n {
                    a.swap(k * n + c, p * n + c);
                }
            }
            let inv = Complex64::new(1.0, 0.0) / a[k * n + k];
            for r in (k + 1)..n {
                let factor = a[r * n + k] * inv;
                a[r * n + k] = factor;
                if factor != Complex64::ZERO {
                    for c in (k + 1)..n {
                        let v = a[k * n + c];
                        a[r * n + c] -= factor * v;
                    }
                }
            }
        }
        Ok(LuFactors {
            dim: n,
            data: a,
            pivots,
        })
    }
}

/// Packed LU factors with the pivot sequence.
pub struct LuFactors {
    dim: usize,
    data: Vec<Complex64>,
    pivots: Vec<usize>,
}

impl LuFactors {
    pub fn solve(&self, b: &[Complex64]) -> Vec<Complex64> {
        let n = self.dim;
        assert_eq!(b.len(), n);
        let mut x = b.to_vec();
        for k in 0..n {
            x.swap(k, self.pivots[k]);
        }
        for k in 0..n {
            for r in (k + 1)..n {
                let f = self.data[r * n + k];
                if f != Complex64::ZERO {
                    let v = x[k];
                    x[r] -= f * v;
                }
            }
        }
        for k in (0..n).rev() {
            let mut acc = x[k];
            for (v, xv) in self.data[k * n + k + 1..(k + 1) * n].iter().zip(&x[k + 1..]) {
                acc -= v * xv;
            }
            x[k] = acc / self.data[k * n + k];
        }
        x
    }

    /// Cheap condition proxy: ratio of extreme |U| diagonal magnitudes.
    pub fn condition_estimate(&self) -> f64 {
        let n = self.dim;
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        for k in 0..n {
            let v = self.data[k * n + k].norm();
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if lo == 0.0 {
            f64::INFINITY
        } else {
            hi / lo
        }
    }
}
