//! Atom-only dipole kick `U'(dt; t) = exp(-i dt sigma_y E(t) / 2)`, tensored
//! with the identity on the photon mode.
//!
//! In the `(e, g)` ordering this is the real rotation
//! `[[cos th, -sin th], [sin th, cos th]]` with `th = dt E / 2`, applied
//! independently to every photon number `k`.

use num_complex::Complex64;

use crate::state::StateVector;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AtomRotation {
    /// Half-angle `dt E / 2`, dimensionless.
    pub half_angle: f64,
}

impl AtomRotation {
    pub fn new(half_angle: f64) -> Self {
        Self { half_angle }
    }

    /// Rotation produced by a field value `field` (rad/s) held for `dt` seconds.
    #[inline]
    pub fn from_field(field: f64, dt: f64) -> Self {
        Self {
            half_angle: dt * field / 2.0,
        }
    }

    #[inline]
    pub fn cos_sin(self) -> (f64, f64) {
        let (s, c) = self.half_angle.sin_cos();
        (c, s)
    }
}

/// `amp'(g,k) = c amp(g,k) + s amp(e,k)`, `amp'(e,k) = -s amp(g,k) + c amp(e,k)`.
#[inline]
pub(crate) fn rotate_blocks(g: &mut [Complex64], e: &mut [Complex64], c: f64, s: f64) {
    for (a, b) in g.iter_mut().zip(e.iter_mut()) {
        let ga = *a;
        let eb = *b;
        *a = Complex64::new(c * ga.re + s * eb.re, c * ga.im + s * eb.im);
        *b = Complex64::new(c * eb.re - s * ga.re, c * eb.im - s * ga.im);
    }
}

pub fn apply_atom_rotation(s: &StateVector, rotation: AtomRotation) -> StateVector {
    let mut out = s.clone();
    apply_atom_rotation_in_place(&mut out, rotation);
    out
}

pub fn apply_atom_rotation_in_place(s: &mut StateVector, rotation: AtomRotation) {
    let (c, sn) = rotation.cos_sin();
    let (g, e) = s.blocks_mut();
    rotate_blocks(g, e, c, sn);
}

/// Cached `(cos, sin)` of the kick for integer walk levels.
///
/// The field only takes values `level * delta_e`, so the trigonometric pair
/// can be looked up instead of recomputed every step. Entries are produced by
/// exactly the same expression as [`AtomRotation::from_field`], so a lookup
/// and a direct evaluation agree bit for bit. Levels outside the table fall
/// back to direct evaluation.
#[derive(Debug, Clone)]
pub struct RotationTable {
    dt: f64,
    delta_e: f64,
    max_level: i64,
    entries: Vec<(f64, f64)>,
}

impl RotationTable {
    pub fn new(dt: f64, delta_e: f64, max_level: i64) -> Self {
        let max_level = max_level.max(0);
        let entries = (-max_level..=max_level)
            .map(|l| Self::direct_with(dt, delta_e, l))
            .collect();
        Self {
            dt,
            delta_e,
            max_level,
            entries,
        }
    }

    #[inline]
    fn direct_with(dt: f64, delta_e: f64, level: i64) -> (f64, f64) {
        AtomRotation::from_field(level as f64 * delta_e, dt).cos_sin()
    }

    #[inline]
    pub fn direct(&self, level: i64) -> (f64, f64) {
        Self::direct_with(self.dt, self.delta_e, level)
    }

    #[inline]
    pub fn get(&self, level: i64) -> (f64, f64) {
        if level.abs() <= self.max_level {
            self.entries[(level + self.max_level) as usize]
        } else {
            self.direct(level)
        }
    }

    pub fn max_level(&self) -> i64 {
        self.max_level
    }
}
