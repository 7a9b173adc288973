//! Null-steering beamforming weights and per-element superposition.
//!
//! Each user's weight vector is its steering vector projected onto the
//! orthogonal complement of every other user's steering direction, so the
//! array keeps gain toward the user while placing nulls on all co-channel
//! line-of-sight directions. Weights are applied raw, without renormalization;
//! the projection's gain loss is available as a diagnostic.

use num_complex::Complex64;
use thiserror::Error;

use crate::array::{hermitian_inner, SteeringVector};
use crate::modem::TimeSignal;

/// Columns whose orthogonalization residual falls below this fraction of
/// their original norm are treated as linearly dependent, which is the
/// tolerance-based pseudo-inverse behavior for the projection.
const RANK_TOL: f64 = 1e-10;

/// A user whose weight vector collapses below this fraction of its steering
/// norm shares a direction with another user.
const DEGENERATE_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum PrecoderError {
    #[error("user {user}: steering vector lies in the interferers' span; two users share a direction")]
    DegenerateLayout { user: usize },
    #[error("{users} users exceed {elements} array elements; projection is degenerate")]
    TooManyUsers { users: usize, elements: usize },
    #[error("signal lengths or counts do not match the weight set")]
    LengthMismatch,
}

/// Null-steering weight vectors, one per user, indexed like the element grid.
#[derive(Debug, Clone)]
pub struct PrecodeSet {
    weights: Vec<Vec<Complex64>>,
    basis_ranks: Vec<usize>,
}

impl PrecodeSet {
    /// Builds a set from raw per-user weight vectors (no projection applied).
    pub fn from_weights(weights: Vec<Vec<Complex64>>) -> Self {
        let dim = weights.first().map_or(0, Vec::len);
        assert!(weights.iter().all(|w| w.len() == dim));
        let ranks = vec![0; weights.len()];
        PrecodeSet {
            weights,
            basis_ranks: ranks,
        }
    }

    pub fn user_count(&self) -> usize {
        self.weights.len()
    }

    pub fn element_count(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    pub fn weight(&self, user: usize) -> &[Complex64] {
        &self.weights[user]
    }

    pub fn weights(&self) -> &[Vec<Complex64>] {
        &self.weights
    }

    /// Rank of the interference basis each user was projected against.
    pub fn basis_ranks(&self) -> &[usize] {
        &self.basis_ranks
    }

    /// Fraction of steering gain kept by the projection, ‖w‖²/‖α‖².
    pub fn gain_loss(&self, user: usize, steering: &SteeringVector) -> f64 {
        let num: f64 = self.weights[user].iter().map(|c| c.norm_sqr()).sum();
        let den: f64 = steering.entries().iter().map(|c| c.norm_sqr()).sum();
        num / den
    }
}

/// Orthonormal basis of the span of `columns` via modified Gram-Schmidt with
/// reorthogonalization; near-dependent columns are dropped.
fn orthonormal_basis(columns: &[&[Complex64]]) -> Vec<Vec<Complex64>> {
    let mut basis: Vec<Vec<Complex64>> = Vec::with_capacity(columns.len());
    for col in columns {
        let orig_norm = slice_norm(col);
        if orig_norm == 0.0 {
            continue;
        }
        let mut v = col.to_vec();
        for _ in 0..2 {
            for q in &basis {
                let c = hermitian_inner(q, &v);
                for (vi, qi) in v.iter_mut().zip(q) {
                    *vi -= c * qi;
                }
            }
        }
        let n = slice_norm(&v);
        if n > RANK_TOL * orig_norm {
            let inv = 1.0 / n;
            for vi in &mut v {
                *vi *= inv;
            }
            basis.push(v);
        }
    }
    basis
}

fn slice_norm(v: &[Complex64]) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

/// Removes the component of `vector` lying in the span of `basis`
/// (orthonormal columns). Projects twice so residual leakage stays at
/// round-off level.
pub fn project_out(vector: &[Complex64], basis: &[Vec<Complex64>]) -> Vec<Complex64> {
    let mut v = vector.to_vec();
    for _ in 0..2 {
        for q in basis {
            let c = hermitian_inner(q, &v);
            for (vi, qi) in v.iter_mut().zip(q) {
                *vi -= c * qi;
            }
        }
    }
    v
}

/// Computes the null-steering weight vector of every user: user i keeps the
/// component of its steering vector orthogonal to span{α_k : k ≠ i}.
pub fn nsb_weights(steering: &[SteeringVector]) -> Result<PrecodeSet, PrecoderError> {
    let users = steering.len();
    if users == 0 {
        return Ok(PrecodeSet {
            weights: Vec::new(),
            basis_ranks: Vec::new(),
        });
    }
    let elements = steering[0].len();
    if users > elements {
        return Err(PrecoderError::TooManyUsers { users, elements });
    }

    let mut weights = Vec::with_capacity(users);
    let mut ranks = Vec::with_capacity(users);
    for i in 0..users {
        let others: Vec<&[Complex64]> = steering
            .iter()
            .enumerate()
            .filter(|(k, _)| *k != i)
            .map(|(_, s)| s.entries())
            .collect();
        let basis = orthonormal_basis(&others);
        let w = project_out(steering[i].entries(), &basis);
        if slice_norm(&w) < DEGENERATE_TOL * slice_norm(steering[i].entries()) {
            return Err(PrecoderError::DegenerateLayout { user: i });
        }
        ranks.push(basis.len());
        weights.push(w);
    }
    Ok(PrecodeSet {
        weights,
        basis_ranks: ranks,
    })
}

/// Interference basis of user i: an orthonormal basis of the other users'
/// steering span. Exposed so the projection can be re-applied in checks.
pub fn interference_basis(steering: &[SteeringVector], user: usize) -> Vec<Vec<Complex64>> {
    let others: Vec<&[Complex64]> = steering
        .iter()
        .enumerate()
        .filter(|(k, _)| *k != user)
        .map(|(_, s)| s.entries())
        .collect();
    orthonormal_basis(&others)
}

/// Per-element transmit signals: element j carries Σ_i w_i(j)·s_i(t).
pub fn beamform_superpose(
    precode: &PrecodeSet,
    user_signals: &[TimeSignal],
) -> Result<Vec<TimeSignal>, PrecoderError> {
    if user_signals.len() != precode.user_count() || user_signals.is_empty() {
        return Err(PrecoderError::LengthMismatch);
    }
    let len = user_signals[0].len();
    let params = user_signals[0].params;
    if user_signals.iter().any(|s| s.len() != len) {
        return Err(PrecoderError::LengthMismatch);
    }
    let elements = precode.element_count();
    let mut out = vec![
        TimeSignal {
            samples: vec![Complex64::ZERO; len],
            params,
        };
        elements
    ];
    for (i, sig) in user_signals.iter().enumerate() {
        let w = precode.weight(i);
        for (j, element) in out.iter_mut().enumerate() {
            let wj = w[j];
            if wj == Complex64::ZERO {
                continue;
            }
            for (o, s) in element.samples.iter_mut().zip(&sig.samples) {
                *o += wj * s;
            }
        }
    }
    Ok(out)
}
