//! Uniform planar array geometry and steering vectors.
//!
//! Elements are spaced λ/2 on both axes and indexed row-major with the x index
//! running fastest; every per-element buffer in the crate follows this order.

use num_complex::Complex64;
use std::f64::consts::PI;

use crate::geometry::AnglePair;
use crate::SPEED_OF_LIGHT;

/// L×L planar array lying in the z = 0 plane, centered on the origin.
#[derive(Debug, Clone)]
pub struct ArrayGeometry {
    side: usize,
    wavelength_m: f64,
    element_xy: Vec<(f64, f64)>,
}

impl ArrayGeometry {
    pub fn new(side: usize, wavelength_m: f64) -> Self {
        assert!(side >= 1, "array side must be >= 1");
        assert!(wavelength_m > 0.0, "wavelength must be positive");
        let half = wavelength_m / 2.0;
        let offset = (side as f64 - 1.0) / 2.0;
        let mut element_xy = Vec::with_capacity(side * side);
        for ky in 0..side {
            for jx in 0..side {
                let x = (jx as f64 - offset) * half;
                let y = (ky as f64 - offset) * half;
                element_xy.push((x, y));
            }
        }
        ArrayGeometry {
            side,
            wavelength_m,
            element_xy,
        }
    }

    pub fn for_carrier(side: usize, carrier_hz: f64) -> Self {
        Self::new(side, SPEED_OF_LIGHT / carrier_hz)
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn element_count(&self) -> usize {
        self.element_xy.len()
    }

    pub fn wavelength_m(&self) -> f64 {
        self.wavelength_m
    }

    pub fn element_xy(&self) -> &[(f64, f64)] {
        &self.element_xy
    }
}

/// Unit-modulus per-element phase response toward one direction.
#[derive(Debug, Clone, PartialEq)]
pub struct SteeringVector(Vec<Complex64>);

impl SteeringVector {
    pub fn from_entries(entries: Vec<Complex64>) -> Self {
        SteeringVector(entries)
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Hermitian inner product self^H other.
    pub fn inner(&self, other: &SteeringVector) -> Complex64 {
        hermitian_inner(&self.0, other.entries())
    }
}

/// a^H b over equal-length slices.
pub fn hermitian_inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Steering vector toward the given angles: element (x, y) contributes
/// exp[j·(2π/λ)(x·ψx + y·ψy)] with ψx = sin θz cos θa, ψy = sin θz sin θa.
pub fn steering_vector(geometry: &ArrayGeometry, angles: &AnglePair) -> SteeringVector {
    let psi_x = angles.zenith_rad.sin() * angles.azimuth_rad.cos();
    let psi_y = angles.zenith_rad.sin() * angles.azimuth_rad.sin();
    let k = 2.0 * PI / geometry.wavelength_m;
    SteeringVector(
        geometry
            .element_xy
            .iter()
            .map(|&(x, y)| Complex64::from_polar(1.0, k * (x * psi_x + y * psi_y)))
            .collect(),
    )
}

/// Array gain 10·log10(L²) in dB.
pub fn array_gain_db(side: usize) -> f64 {
    10.0 * ((side * side) as f64).log10()
}
