//! Cell layout, platform trajectory, and per-user look angles / kinematics.
//!
//! The platform starts at the origin and flies horizontally; users live on the
//! plane z = −H. The micro-cell of interest is placed halfway to the macro-cell
//! edge along the flight heading, which gives the intended link a
//! representative nonzero Doppler aspect while staying well inside the
//! macro-cell. Interfering micro-cells surround it in concentric tiers.

use rand::Rng;
use std::f64::consts::PI;

use crate::config::ScenarioConfig;
use crate::SPEED_OF_LIGHT;

/// 3D position in the platform frame (m).
pub type Vec3 = [f64; 3];

pub(crate) fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn norm(v: Vec3) -> f64 {
    (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()
}

pub(crate) fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Zenith/azimuth look angles from the array boresight (pointing straight
/// down) toward a user.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnglePair {
    /// Zenith angle in [0, π/2].
    pub zenith_rad: f64,
    /// Azimuth angle in (−π, π].
    pub azimuth_rad: f64,
}

/// Range, delay, Doppler, and aspect angle of one platform→user link.
#[derive(Debug, Clone, Copy)]
pub struct LinkKinematics {
    pub distance_m: f64,
    pub delay_s: f64,
    pub doppler_hz: f64,
    /// Angle between the platform velocity vector and the platform→user
    /// direction.
    pub aspect_angle_rad: f64,
}

/// Ground positions of the intended user (index 0) and all interferers.
#[derive(Debug, Clone)]
pub struct UserLayout {
    /// User coordinates (x, y, −H); index 0 is the intended user.
    pub positions: Vec<Vec3>,
    /// Tier index per user; 0 for the intended user, q >= 1 for interferers.
    pub tier_of_user: Vec<usize>,
}

impl UserLayout {
    pub fn user_count(&self) -> usize {
        self.positions.len()
    }

    /// Number of interferers B_t = Σ 6q over the tiers.
    pub fn interferer_count(&self) -> usize {
        self.positions.len() - 1
    }
}

/// Center of the micro-cell of interest: R/2 from the macro center along the
/// flight heading, on the user plane.
pub fn mci_center(config: &ScenarioConfig) -> [f64; 2] {
    let [hx, hy, _] = config.heading_unit_vector;
    let d = 0.5 * config.macro_radius_m;
    [hx * d, hy * d]
}

fn uniform_disc<R: Rng>(center: [f64; 2], radius: f64, rng: &mut R) -> [f64; 2] {
    // Radius √u keeps the density uniform over the disc area.
    let rho = radius * rng.random::<f64>().sqrt();
    let phi = 2.0 * PI * rng.random::<f64>();
    [center[0] + rho * phi.cos(), center[1] + rho * phi.sin()]
}

/// Draws the intended user uniformly over the micro-cell of interest and one
/// tier population of 6q interferers per tier q, each uniform over its own
/// micro-cell. Tier-q cell centers sit at distance q·D from the cell of
/// interest at equally spaced azimuths 2πk/(6q).
pub fn place_users<R: Rng>(config: &ScenarioConfig, rng: &mut R) -> UserLayout {
    let mci = mci_center(config);
    let z = -config.altitude_m;
    let r = config.micro_radius_m;

    let mut positions = Vec::new();
    let mut tier_of_user = Vec::new();

    let [x0, y0] = uniform_disc(mci, r, rng);
    positions.push([x0, y0, z]);
    tier_of_user.push(0);

    for q in 1..=config.tier_count {
        let cells = 6 * q;
        for k in 0..cells {
            let az = 2.0 * PI * k as f64 / cells as f64;
            let center = [
                mci[0] + q as f64 * config.reuse_distance_m * az.cos(),
                mci[1] + q as f64 * config.reuse_distance_m * az.sin(),
            ];
            let [x, y] = uniform_disc(center, r, rng);
            positions.push([x, y, z]);
            tier_of_user.push(q);
        }
    }

    UserLayout {
        positions,
        tier_of_user,
    }
}

/// Platform position at time t: linear motion from the origin along the
/// configured heading, altitude held.
pub fn hap_position(t: f64, config: &ScenarioConfig) -> Vec3 {
    let [hx, hy, hz] = config.heading_unit_vector;
    let d = config.velocity_mps * t;
    [hx * d, hy * d, hz * d]
}

/// Look angles from the platform toward a user.
///
/// A user exactly at nadir gets zenith 0 and, by convention, azimuth 0.
pub fn user_angles(user_position: Vec3, hap_position: Vec3) -> AnglePair {
    let d = sub(user_position, hap_position);
    let height = -d[2];
    debug_assert!(height > 0.0, "user must be below the platform");
    let rho = (d[0] * d[0] + d[1] * d[1]).sqrt();
    if rho == 0.0 {
        return AnglePair {
            zenith_rad: 0.0,
            azimuth_rad: 0.0,
        };
    }
    let mut azimuth = d[1].atan2(d[0]);
    if azimuth <= -PI {
        azimuth = PI;
    }
    AnglePair {
        zenith_rad: (rho / height).atan(),
        azimuth_rad: azimuth,
    }
}

/// Doppler shift f_c·v·cos(θ)/c for aspect angle θ between the velocity
/// vector and the line of sight.
pub fn doppler_shift(carrier_hz: f64, velocity_mps: f64, aspect_angle_rad: f64) -> f64 {
    carrier_hz * velocity_mps * aspect_angle_rad.cos() / SPEED_OF_LIGHT
}

/// Distance, propagation delay, Doppler shift, and aspect angle of the link
/// from the platform (at time t) to a fixed user.
pub fn link_kinematics(user_position: Vec3, t: f64, config: &ScenarioConfig) -> LinkKinematics {
    let hap = hap_position(t, config);
    let los = sub(user_position, hap);
    let distance = norm(los);
    let cos_aspect = if distance > 0.0 {
        (dot(config.heading_unit_vector, los) / distance).clamp(-1.0, 1.0)
    } else {
        0.0
    };
    let aspect = cos_aspect.acos();
    LinkKinematics {
        distance_m: distance,
        delay_s: distance / SPEED_OF_LIGHT,
        doppler_hz: doppler_shift(config.carrier_hz, config.velocity_mps, aspect),
        aspect_angle_rad: aspect,
    }
}

/// Largest platform velocity the numerology supports: c·Δf/(2·f_c).
pub fn max_supported_velocity(subcarrier_spacing_hz: f64, carrier_hz: f64) -> f64 {
    SPEED_OF_LIGHT * subcarrier_spacing_hz / (2.0 * carrier_hz)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> ScenarioConfig {
        ScenarioConfig::desk()
    }

    #[test]
    fn tier_populations_sum_hexagonally() {
        // B_t = Σ 6q: enumerate generated layouts.
        for (q, expect) in [(0usize, 0usize), (1, 6), (5, 90)] {
            let mut c = cfg();
            c.tier_count = q;
            let mut rng = ChaCha8Rng::seed_from_u64(3);
            let layout = place_users(&c, &mut rng);
            assert_eq!(layout.interferer_count(), expect, "Q={q}");
            // Per-tier counts are 6q.
            for tier in 1..=q {
                let n = layout.tier_of_user.iter().filter(|&&t| t == tier).count();
                assert_eq!(n, 6 * tier);
            }
        }
    }

    #[test]
    fn users_stay_inside_their_micro_cells() {
        let c = cfg();
        let mci = mci_center(&c);
        for seed in 0..50 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let layout = place_users(&c, &mut rng);
            let p0 = layout.positions[0];
            let d0 = ((p0[0] - mci[0]).powi(2) + (p0[1] - mci[1]).powi(2)).sqrt();
            assert!(d0 <= c.micro_radius_m + 1e-9);
            for (i, p) in layout.positions.iter().enumerate().skip(1) {
                let q = layout.tier_of_user[i] as f64;
                // Distance from the tier ring: the cell center is at q*D from
                // the MCI, so the user is within r of *some* point at range q*D.
                let d = ((p[0] - mci[0]).powi(2) + (p[1] - mci[1]).powi(2)).sqrt();
                assert!(
                    (d - q * c.reuse_distance_m).abs() <= c.micro_radius_m + 1e-9,
                    "user {i} outside tier annulus"
                );
            }
        }
    }

    #[test]
    fn interferers_within_radius_of_exact_tier_center() {
        let c = cfg();
        let mci = mci_center(&c);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let layout = place_users(&c, &mut rng);
        // Tier 1: 6 centers at azimuths 2πk/6.
        for (idx, p) in layout.positions.iter().enumerate().skip(1) {
            let k = idx - 1;
            let az = 2.0 * PI * k as f64 / 6.0;
            let cx = mci[0] + c.reuse_distance_m * az.cos();
            let cy = mci[1] + c.reuse_distance_m * az.sin();
            let d = ((p[0] - cx).powi(2) + (p[1] - cy).powi(2)).sqrt();
            assert!(d <= c.micro_radius_m + 1e-9, "user {idx}: {d}");
        }
    }

    #[test]
    fn same_seed_same_layout() {
        let c = cfg();
        let a = place_users(&c, &mut ChaCha8Rng::seed_from_u64(42));
        let b = place_users(&c, &mut ChaCha8Rng::seed_from_u64(42));
        assert_eq!(a.positions, b.positions);
        assert_eq!(a.tier_of_user, b.tier_of_user);
    }

    #[test]
    fn hap_position_moves_linearly() {
        let c = cfg();
        assert_eq!(hap_position(0.0, &c), [0.0, 0.0, 0.0]);
        assert_eq!(hap_position(1.0, &c), [150.0, 0.0, 0.0]);

        let mut c2 = cfg();
        c2.velocity_mps = 100.0;
        c2.heading_unit_vector = [0.0, 1.0, 0.0];
        assert_eq!(hap_position(2.0, &c2), [0.0, 200.0, 0.0]);
    }

    #[test]
    fn angles_match_hand_values() {
        let h = 10_000.0;
        let nadir = user_angles([0.0, 0.0, -h], [0.0, 0.0, 0.0]);
        assert_eq!(nadir.zenith_rad, 0.0);
        assert_eq!(nadir.azimuth_rad, 0.0);

        let a = user_angles([h, 0.0, -h], [0.0, 0.0, 0.0]);
        assert!((a.zenith_rad - PI / 4.0).abs() < 1e-12);
        assert!(a.azimuth_rad.abs() < 1e-12);

        let b = user_angles([0.0, h, -h], [0.0, 0.0, 0.0]);
        assert!((b.azimuth_rad - PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn doppler_anchor_values() {
        // Head-on at 28 GHz / 150 m/s: 14 kHz.
        assert!((doppler_shift(28.0e9, 150.0, 0.0) - 14_000.0).abs() < 1e-6);
        // Orthogonal motion: zero.
        assert!(doppler_shift(28.0e9, 150.0, PI / 2.0).abs() < 1e-9);
        // 100 m/s head-on: 9333.3 Hz.
        assert!((doppler_shift(28.0e9, 100.0, 0.0) - 9_333.333_333).abs() < 1e-3);
    }

    #[test]
    fn velocity_bound_values() {
        assert!((max_supported_velocity(30.0e3, 28.0e9) - 160.714_285_7).abs() < 1e-3);
        assert!((max_supported_velocity(60.0e3, 28.0e9) - 321.428_571_4).abs() < 1e-3);
        assert!((max_supported_velocity(30.0e3, 60.0e9) - 75.0).abs() < 1e-9);
    }

    #[test]
    fn kinematics_respect_bounds() {
        let c = cfg();
        let bound = c.carrier_hz * c.velocity_mps / SPEED_OF_LIGHT;
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let layout = place_users(&c, &mut rng);
        for p in &layout.positions {
            let k = link_kinematics(*p, 0.0, &c);
            assert!(k.doppler_hz.abs() <= bound + 1e-9);
            assert!(k.delay_s >= c.altitude_m / SPEED_OF_LIGHT - 1e-15);
            assert!((k.delay_s - k.distance_m / SPEED_OF_LIGHT).abs() < 1e-18);
        }
    }

    #[test]
    fn doppler_maximized_head_on() {
        let c = cfg();
        // A user far ahead along the heading approaches cos θ = 1.
        let far = [1.0e9, 0.0, -c.altitude_m];
        let k = link_kinematics(far, 0.0, &c);
        let bound = c.carrier_hz * c.velocity_mps / SPEED_OF_LIGHT;
        assert!(k.doppler_hz > 0.999_99 * bound);
    }
}
