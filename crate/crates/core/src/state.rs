//! Truncated atom-photon Hilbert space.
//!
//! Amplitudes are stored in two blocks, all ground-state photon levels first
//! and then all excited-state levels:
//! `[(g,0), (g,1), ..., (g,K), (e,0), ..., (e,K)]`.
//!
//! Energies never carry a factor of hbar; every frequency is an angular rate
//! in rad/s. The atom is written in the `(e, g)` ordering with
//! `|e> = (1, 0)^T`, `|g> = (0, 1)^T`, so `sigma_z |e> = +|e>`.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Atomic level of a bare basis vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Atom {
    Ground,
    Excited,
}

/// Pure state over `{|g,k>, |e,k> : k = 0..=K}`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    k: usize,
    amps: Vec<Complex64>,
}

impl StateVector {
    pub fn zero(k: usize) -> Self {
        Self {
            k,
            amps: vec![Complex64::new(0.0, 0.0); 2 * (k + 1)],
        }
    }

    /// The bare basis vector `|atom, n>`.
    ///
    /// Panics if `n > k`.
    pub fn basis(atom: Atom, n: usize, k: usize) -> Self {
        assert!(n <= k, "photon number {n} exceeds truncation {k}");
        let mut s = Self::zero(k);
        s.amps[Self::index_for(k, atom, n)] = Complex64::new(1.0, 0.0);
        s
    }

    pub fn from_amplitudes(k: usize, amps: Vec<Complex64>) -> Result<Self> {
        let expected = 2 * (k + 1);
        if amps.len() != expected {
            return Err(Error::AmplitudeLength {
                got: amps.len(),
                expected,
            });
        }
        Ok(Self { k, amps })
    }

    #[inline]
    pub(crate) fn index_for(k: usize, atom: Atom, n: usize) -> usize {
        match atom {
            Atom::Ground => n,
            Atom::Excited => k + 1 + n,
        }
    }

    pub fn truncation(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn amplitudes_mut(&mut self) -> &mut [Complex64] {
        &mut self.amps
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amps
    }

    pub fn amp(&self, atom: Atom, n: usize) -> Complex64 {
        self.amps[Self::index_for(self.k, atom, n)]
    }

    pub fn set_amp(&mut self, atom: Atom, n: usize, value: Complex64) {
        let i = Self::index_for(self.k, atom, n);
        self.amps[i] = value;
    }

    /// Ground block `(g,0..=K)` and excited block `(e,0..=K)`.
    pub fn blocks(&self) -> (&[Complex64], &[Complex64]) {
        self.amps.split_at(self.k + 1)
    }

    pub fn blocks_mut(&mut self) -> (&mut [Complex64], &mut [Complex64]) {
        self.amps.split_at_mut(self.k + 1)
    }

    pub fn norm_sq(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn normalized(mut self) -> Result<Self> {
        let n = self.norm_sq().sqrt();
        if !(n.is_finite() && n > 0.0) {
            return Err(Error::NotNormalizable);
        }
        let inv = 1.0 / n;
        self.amps.iter_mut().for_each(|a| *a *= inv);
        Ok(self)
    }

    pub fn scaled(mut self, factor: Complex64) -> Self {
        self.amps.iter_mut().for_each(|a| *a *= factor);
        self
    }

    /// Largest componentwise distance to `other`.
    pub fn max_abs_diff(&self, other: &StateVector) -> f64 {
        assert_eq!(self.k, other.k);
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Probability weight per photon number, summed over the atom.
    pub fn photon_distribution(&self) -> Vec<f64> {
        let (g, e) = self.blocks();
        g.iter()
            .zip(e)
            .map(|(a, b)| a.norm_sqr() + b.norm_sqr())
            .collect()
    }
}

/// Conjugate-linear in `a`.
pub fn inner_product(a: &StateVector, b: &StateVector) -> Result<Complex64> {
    if a.k != b.k {
        return Err(Error::TruncationMismatch {
            left: a.k,
            right: b.k,
        });
    }
    Ok(overlap(&a.amps, &b.amps))
}

#[inline]
pub(crate) fn overlap(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    let mut re = 0.0;
    let mut im = 0.0;
    for (x, y) in a.iter().zip(b) {
        // conj(x) * y
        re += x.re * y.re + x.im * y.im;
        im += x.re * y.im - x.im * y.re;
    }
    Complex64::new(re, im)
}

/// Eigenbasis label of the interaction Hamiltonian.
///
/// `Plus(n)` and `Minus(n)` are `(|e,n> +- |g,n+1>)/sqrt(2)`, defined for
/// `n <= K - 1` so that both partners lie inside the truncation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DressedIndex {
    Ground0,
    Plus(usize),
    Minus(usize),
}

impl DressedIndex {
    /// Eigenvalue of the interaction Hamiltonian divided by hbar, in units of g.
    pub fn energy_over_g(self) -> f64 {
        match self {
            DressedIndex::Ground0 => 0.0,
            DressedIndex::Plus(n) => ((n + 1) as f64).sqrt(),
            DressedIndex::Minus(n) => -((n + 1) as f64).sqrt(),
        }
    }

    /// The dressed basis vector itself, expanded in the bare basis.
    pub fn state(self, k: usize) -> StateVector {
        let mut d = DressedCoefficients::zero(k);
        d.set(self, Complex64::new(1.0, 0.0));
        dressed_to_bare(&d)
    }
}

/// Coefficients of a state in the dressed basis.
///
/// `residual_top` holds the `|e,K>` amplitude, which has no `|g,K+1>`
/// partner inside the truncated space.
#[derive(Debug, Clone, PartialEq)]
pub struct DressedCoefficients {
    k: usize,
    pub ground0: Complex64,
    pub plus: Vec<Complex64>,
    pub minus: Vec<Complex64>,
    pub residual_top: Complex64,
}

impl DressedCoefficients {
    pub fn zero(k: usize) -> Self {
        let zero = Complex64::new(0.0, 0.0);
        Self {
            k,
            ground0: zero,
            plus: vec![zero; k],
            minus: vec![zero; k],
            residual_top: zero,
        }
    }

    pub fn truncation(&self) -> usize {
        self.k
    }

    pub fn get(&self, idx: DressedIndex) -> Option<Complex64> {
        match idx {
            DressedIndex::Ground0 => Some(self.ground0),
            DressedIndex::Plus(n) => self.plus.get(n).copied(),
            DressedIndex::Minus(n) => self.minus.get(n).copied(),
        }
    }

    /// Panics if the index lies outside the truncation.
    pub fn set(&mut self, idx: DressedIndex, value: Complex64) {
        match idx {
            DressedIndex::Ground0 => self.ground0 = value,
            DressedIndex::Plus(n) => self.plus[n] = value,
            DressedIndex::Minus(n) => self.minus[n] = value,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (DressedIndex, Complex64)> + '_ {
        std::iter::once((DressedIndex::Ground0, self.ground0))
            .chain(
                self.plus
                    .iter()
                    .enumerate()
                    .map(|(n, c)| (DressedIndex::Plus(n), *c)),
            )
            .chain(
                self.minus
                    .iter()
                    .enumerate()
                    .map(|(n, c)| (DressedIndex::Minus(n), *c)),
            )
    }
}

pub fn bare_to_dressed(s: &StateVector) -> DressedCoefficients {
    let k = s.k;
    let (g, e) = s.blocks();
    let mut d = DressedCoefficients::zero(k);
    d.ground0 = g[0];
    for n in 0..k {
        d.plus[n] = (e[n] + g[n + 1]) * FRAC_1_SQRT_2;
        d.minus[n] = (e[n] - g[n + 1]) * FRAC_1_SQRT_2;
    }
    d.residual_top = e[k];
    d
}

pub fn dressed_to_bare(d: &DressedCoefficients) -> StateVector {
    let k = d.k;
    let mut s = StateVector::zero(k);
    {
        let (g, e) = s.blocks_mut();
        g[0] = d.ground0;
        for n in 0..k {
            e[n] = (d.plus[n] + d.minus[n]) * FRAC_1_SQRT_2;
            g[n + 1] = (d.plus[n] - d.minus[n]) * FRAC_1_SQRT_2;
        }
        e[k] = d.residual_top;
    }
    s
}

/// Named initial states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialPreset {
    /// `(|g,0> + |g,1> + |g,2>)/sqrt(3)`
    #[serde(rename = "g012")]
    EqualSuperpositionG012,
    /// `|0+> = (|e,0> + |g,1>)/sqrt(2)`
    #[serde(rename = "0plus")]
    DressedZeroPlus,
    /// `|g,1>`
    #[serde(rename = "g1")]
    BareG1,
    /// Arbitrary amplitudes in storage order, normalized on construction.
    Custom(Vec<Complex64>),
}

impl InitialPreset {
    pub fn name(&self) -> &'static str {
        match self {
            InitialPreset::EqualSuperpositionG012 => "g012",
            InitialPreset::DressedZeroPlus => "0plus",
            InitialPreset::BareG1 => "g1",
            InitialPreset::Custom(_) => "custom",
        }
    }

    fn min_truncation(&self) -> usize {
        match self {
            InitialPreset::EqualSuperpositionG012 => 2,
            InitialPreset::DressedZeroPlus | InitialPreset::BareG1 => 2,
            InitialPreset::Custom(_) => 0,
        }
    }
}

impl fmt::Display for InitialPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for InitialPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "g012" => Ok(InitialPreset::EqualSuperpositionG012),
            "0plus" => Ok(InitialPreset::DressedZeroPlus),
            "g1" => Ok(InitialPreset::BareG1),
            other => Err(crate::error::invalid(
                "initial",
                format!("unknown preset {other:?} (expected g012, 0plus or g1)"),
            )),
        }
    }
}

pub fn make_initial_state(preset: &InitialPreset, k: usize) -> Result<StateVector> {
    let needed = preset.min_truncation();
    if k < needed {
        return Err(Error::TruncationTooSmall {
            preset: preset.name(),
            needed,
            got: k,
        });
    }
    let one = Complex64::new(1.0, 0.0);
    let mut s = StateVector::zero(k);
    match preset {
        InitialPreset::EqualSuperpositionG012 => {
            let a = one * (1.0 / 3.0f64.sqrt());
            for n in 0..3 {
                s.set_amp(Atom::Ground, n, a);
            }
        }
        InitialPreset::DressedZeroPlus => {
            s.set_amp(Atom::Excited, 0, one * FRAC_1_SQRT_2);
            s.set_amp(Atom::Ground, 1, one * FRAC_1_SQRT_2);
        }
        InitialPreset::BareG1 => s.set_amp(Atom::Ground, 1, one),
        InitialPreset::Custom(amps) => {
            s = StateVector::from_amplitudes(k, amps.clone())?.normalized()?;
        }
    }
    Ok(s)
}

/// Reduced density matrix of the atom in `(e, g)` ordering.
///
/// Hermitian, so only `rho_ee`, `rho_gg` and `rho_eg` are stored.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AtomDensity {
    pub ee: f64,
    pub gg: f64,
    pub eg: Complex64,
}

impl AtomDensity {
    pub fn ge(&self) -> Complex64 {
        self.eg.conj()
    }

    pub fn trace(&self) -> f64 {
        self.ee + self.gg
    }

    pub fn matrix(&self) -> [[Complex64; 2]; 2] {
        [
            [Complex64::new(self.ee, 0.0), self.eg],
            [self.ge(), Complex64::new(self.gg, 0.0)],
        ]
    }

    pub fn determinant(&self) -> f64 {
        self.ee * self.gg - self.eg.norm_sqr()
    }
}

/// Partial trace over the photon mode.
pub fn reduced_atom_density(s: &StateVector) -> AtomDensity {
    let (g, e) = s.blocks();
    atom_density_of_blocks(g, e)
}

#[inline]
pub(crate) fn atom_density_of_blocks(g: &[Complex64], e: &[Complex64]) -> AtomDensity {
    let mut ee = 0.0;
    let mut gg = 0.0;
    let mut eg_re = 0.0;
    let mut eg_im = 0.0;
    for (a, b) in g.iter().zip(e) {
        gg += a.norm_sqr();
        ee += b.norm_sqr();
        // e_k * conj(g_k)
        eg_re += b.re * a.re + b.im * a.im;
        eg_im += b.im * a.re - b.re * a.im;
    }
    AtomDensity {
        ee,
        gg,
        eg: Complex64::new(eg_re, eg_im),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BlochVector {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl BlochVector {
    pub fn norm_sq(&self) -> f64 {
        self.x * self.x + self.y * self.y + self.z * self.z
    }
}

/// `S_i = Tr(rho sigma_i)` after dividing `rho` by its trace.
///
/// Returns the vector together with the trace deficit `1 - Tr rho`.
pub fn bloch_from_density(rho: &AtomDensity) -> Result<(BlochVector, f64)> {
    let tr = rho.trace();
    if !(tr.is_finite() && tr > 0.0) {
        return Err(Error::ZeroTrace);
    }
    let v = BlochVector {
        x: 2.0 * rho.eg.re / tr,
        y: -2.0 * rho.eg.im / tr,
        z: (rho.ee - rho.gg) / tr,
    };
    Ok((v, 1.0 - tr))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    const K: usize = 5;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn presets_have_the_documented_amplitudes() {
        let s = make_initial_state(&InitialPreset::EqualSuperpositionG012, K).unwrap();
        let a = 1.0 / 3.0f64.sqrt();
        for n in 0..3 {
            assert_abs_diff_eq!(s.amp(Atom::Ground, n).re, a, epsilon = 1e-15);
            assert_abs_diff_eq!(a, 0.57735, epsilon = 1e-5);
        }
        assert_eq!(s.amplitudes().iter().filter(|z| z.norm() > 0.0).count(), 3);

        let s = make_initial_state(&InitialPreset::DressedZeroPlus, K).unwrap();
        assert_abs_diff_eq!(s.amp(Atom::Excited, 0).re, FRAC_1_SQRT_2);
        assert_abs_diff_eq!(s.amp(Atom::Ground, 1).re, FRAC_1_SQRT_2);
        assert_abs_diff_eq!(s.norm_sq(), 1.0, epsilon = 1e-15);

        let s = make_initial_state(&InitialPreset::BareG1, K).unwrap();
        assert_eq!(s, StateVector::basis(Atom::Ground, 1, K));
    }

    #[test]
    fn presets_reject_small_truncation() {
        let err = make_initial_state(&InitialPreset::EqualSuperpositionG012, 1).unwrap_err();
        assert!(matches!(err, Error::TruncationTooSmall { needed: 2, .. }));
    }

    #[test]
    fn custom_preset_is_normalized_or_rejected() {
        let mut amps = vec![c(0.0, 0.0); 2 * (K + 1)];
        let err = make_initial_state(&InitialPreset::Custom(amps.clone()), K).unwrap_err();
        assert_eq!(err, Error::NotNormalizable);
        amps[0] = c(3.0, 0.0);
        amps[7] = c(0.0, 4.0);
        let s = make_initial_state(&InitialPreset::Custom(amps), K).unwrap();
        assert_abs_diff_eq!(s.amp(Atom::Ground, 0).re, 0.6);
        assert_abs_diff_eq!(s.amp(Atom::Excited, 1).im, 0.8);
        let err = make_initial_state(&InitialPreset::Custom(vec![c(1.0, 0.0); 3]), K).unwrap_err();
        assert!(matches!(
            err,
            Error::AmplitudeLength {
                got: 3,
                expected: 12
            }
        ));
    }

    #[test]
    fn inner_product_examples() {
        let g1 = StateVector::basis(Atom::Ground, 1, K);
        let g0 = StateVector::basis(Atom::Ground, 0, K);
        assert_eq!(inner_product(&g1, &g1).unwrap(), c(1.0, 0.0));
        assert_eq!(inner_product(&g0, &g1).unwrap(), c(0.0, 0.0));
        let plus0 = DressedIndex::Plus(0).state(K);
        assert_abs_diff_eq!(inner_product(&plus0, &g1).unwrap().re, FRAC_1_SQRT_2);
        let other = StateVector::zero(K + 1);
        assert!(matches!(
            inner_product(&g1, &other),
            Err(Error::TruncationMismatch { .. })
        ));
    }

    #[test]
    fn inner_product_is_conjugate_linear_in_first_argument() {
        let a = StateVector::basis(Atom::Excited, 2, K).scaled(c(0.0, 1.0));
        let b = StateVector::basis(Atom::Excited, 2, K);
        assert_eq!(inner_product(&a, &b).unwrap(), c(0.0, -1.0));
    }

    #[test]
    fn bare_to_dressed_examples() {
        let d = bare_to_dressed(&StateVector::basis(Atom::Ground, 0, K));
        assert_eq!(d.ground0, c(1.0, 0.0));
        assert!(d.plus.iter().chain(&d.minus).all(|z| z.norm() == 0.0));

        let d = bare_to_dressed(&StateVector::basis(Atom::Ground, 1, K));
        assert_abs_diff_eq!(d.plus[0].re, FRAC_1_SQRT_2);
        assert_abs_diff_eq!(d.minus[0].re, -FRAC_1_SQRT_2);

        let d = bare_to_dressed(&StateVector::basis(Atom::Excited, 0, K));
        assert_abs_diff_eq!(d.plus[0].re, FRAC_1_SQRT_2);
        assert_abs_diff_eq!(d.minus[0].re, FRAC_1_SQRT_2);

        let d = bare_to_dressed(&StateVector::basis(Atom::Excited, K, K));
        assert_eq!(d.residual_top, c(1.0, 0.0));
        assert_eq!(d.get(DressedIndex::Plus(K)), None);
    }

    #[test]
    fn dressed_vectors_are_orthonormal() {
        let mut all: Vec<StateVector> = vec![DressedIndex::Ground0.state(K)];
        for n in 0..K {
            all.push(DressedIndex::Plus(n).state(K));
            all.push(DressedIndex::Minus(n).state(K));
        }
        for (i, a) in all.iter().enumerate() {
            for (j, b) in all.iter().enumerate() {
                let ip = inner_product(a, b).unwrap();
                let expect = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(ip.re, expect, epsilon = 1e-15);
                assert_abs_diff_eq!(ip.im, 0.0, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn reduced_density_examples() {
        let rho = reduced_atom_density(&StateVector::basis(Atom::Excited, 3, K));
        assert_eq!((rho.ee, rho.gg, rho.eg), (1.0, 0.0, c(0.0, 0.0)));

        let mut s = StateVector::zero(K);
        s.set_amp(Atom::Ground, 0, c(FRAC_1_SQRT_2, 0.0));
        s.set_amp(Atom::Excited, 0, c(FRAC_1_SQRT_2, 0.0));
        let rho = reduced_atom_density(&s);
        for row in rho.matrix() {
            for z in row {
                assert_abs_diff_eq!(z.re, 0.5, epsilon = 1e-15);
                assert_abs_diff_eq!(z.im, 0.0);
            }
        }

        let mut s = StateVector::zero(K);
        s.set_amp(Atom::Ground, 0, c(FRAC_1_SQRT_2, 0.0));
        s.set_amp(Atom::Excited, 1, c(FRAC_1_SQRT_2, 0.0));
        let rho = reduced_atom_density(&s);
        assert_abs_diff_eq!(rho.ee, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(rho.gg, 0.5, epsilon = 1e-15);
        assert_eq!(rho.eg, c(0.0, 0.0));
    }

    #[test]
    fn bloch_examples() {
        let excited = AtomDensity {
            ee: 1.0,
            gg: 0.0,
            eg: c(0.0, 0.0),
        };
        let (v, deficit) = bloch_from_density(&excited).unwrap();
        assert_eq!((v.x, v.y, v.z), (0.0, 0.0, 1.0));
        assert_eq!(deficit, 0.0);

        let mixed = AtomDensity {
            ee: 0.5,
            gg: 0.5,
            eg: c(0.0, 0.0),
        };
        let (v, _) = bloch_from_density(&mixed).unwrap();
        assert_eq!(v.norm_sq(), 0.0);

        let plus_x = AtomDensity {
            ee: 0.5,
            gg: 0.5,
            eg: c(0.5, 0.0),
        };
        let (v, _) = bloch_from_density(&plus_x).unwrap();
        assert_abs_diff_eq!(v.x, 1.0);
        assert_abs_diff_eq!(v.y, 0.0);
        assert_abs_diff_eq!(v.z, 0.0);

        assert_eq!(
            bloch_from_density(&AtomDensity::default()).unwrap_err(),
            Error::ZeroTrace
        );
    }

    #[test]
    fn sigma_y_eigenstate_has_unit_y_component() {
        // (|e> + i|g>)/sqrt(2) is the +1 eigenvector of sigma_y in (e,g) ordering.
        let mut s = StateVector::zero(K);
        s.set_amp(Atom::Excited, 0, c(FRAC_1_SQRT_2, 0.0));
        s.set_amp(Atom::Ground, 0, c(0.0, FRAC_1_SQRT_2));
        let (v, _) = bloch_from_density(&reduced_atom_density(&s)).unwrap();
        assert_abs_diff_eq!(v.y, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn ground_states_point_down() {
        for n in 0..=K {
            let rho = reduced_atom_density(&StateVector::basis(Atom::Ground, n, K));
            let (v, _) = bloch_from_density(&rho).unwrap();
            assert_eq!((v.x, v.y, v.z), (0.0, 0.0, -1.0));
        }
    }

    #[test]
    fn equal_superposition_has_zero_sx() {
        let s = make_initial_state(&InitialPreset::EqualSuperpositionG012, K).unwrap();
        let (v, _) = bloch_from_density(&reduced_atom_density(&s)).unwrap();
        assert_eq!(v.x, 0.0);
    }

    fn unit_state(k: usize) -> impl Strategy<Value = StateVector> {
        prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 2 * (k + 1)).prop_filter_map(
            "non-zero",
            move |v| {
                let amps = v.into_iter().map(|(r, i)| c(r, i)).collect();
                StateVector::from_amplitudes(k, amps)
                    .ok()?
                    .normalized()
                    .ok()
            },
        )
    }

    proptest! {
        #[test]
        fn dressed_round_trip_is_identity(s in unit_state(K)) {
            let back = dressed_to_bare(&bare_to_dressed(&s));
            prop_assert!(back.max_abs_diff(&s) <= 1e-12);
        }

        #[test]
        fn dressed_transform_preserves_norm(s in unit_state(K)) {
            let d = bare_to_dressed(&s);
            let norm: f64 = d.iter().map(|(_, z)| z.norm_sqr()).sum::<f64>()
                + d.residual_top.norm_sqr();
            prop_assert!((norm - 1.0).abs() <= 1e-12);
        }

        #[test]
        fn reduced_density_is_a_valid_state(s in unit_state(K)) {
            let rho = reduced_atom_density(&s);
            prop_assert!((rho.trace() - s.norm_sq()).abs() <= 1e-12);
            prop_assert!(rho.ee >= 0.0 && rho.gg >= 0.0);
            prop_assert!(rho.determinant() >= -1e-12);
            let (v, _) = bloch_from_density(&rho).unwrap();
            prop_assert!(v.norm_sq() <= 1.0 + 1e-9);
        }
    }
}
