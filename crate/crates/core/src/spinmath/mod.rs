//! Units, nuclear species, hyperfine couplings and the electron-conditioned
//! precession of a nuclear spin.
//!
//! Unit conventions used throughout the crate:
//!
//! | quantity    | unit                      |
//! |-------------|---------------------------|
//! | frequencies | kHz, ordinary (cycles)    |
//! | fields      | Gauss                     |
//! | times       | microseconds              |
//! | angles      | radians                   |
//!
//! An angular frequency is always formed as `2 pi f`. Since kHz times us is
//! 1e-3 cycles, phases carry an explicit `KHZ_US` factor.

mod rotation;

pub use rotation::{Rotation, Vec3};

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cycles accumulated per kHz per microsecond.
pub const KHZ_US: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuclearSpecies {
    pub name: String,
    /// Gyromagnetic ratio in kHz/G (ordinary frequency, signed).
    pub gamma: f64,
}

impl NuclearSpecies {
    pub const SI29_GAMMA: f64 = -0.8465;
    pub const C13_GAMMA: f64 = 1.0705;

    pub fn new(name: impl Into<String>, gamma: f64) -> Result<Self> {
        if gamma == 0.0 || !gamma.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "gyromagnetic ratio must be finite and non-zero, got {gamma}"
            )));
        }
        Ok(NuclearSpecies {
            name: name.into(),
            gamma,
        })
    }

    pub fn si29() -> Self {
        NuclearSpecies {
            name: "29Si".into(),
            gamma: Self::SI29_GAMMA,
        }
    }

    pub fn c13() -> Self {
        NuclearSpecies {
            name: "13C".into(),
            gamma: Self::C13_GAMMA,
        }
    }

    /// Looks up a built-in species.
    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "29Si" | "Si29" | "si29" => Ok(Self::si29()),
            "13C" | "C13" | "c13" => Ok(Self::c13()),
            other => Err(Error::UnknownSpecies(other.to_string())),
        }
    }

    pub fn registry() -> Vec<NuclearSpecies> {
        vec![Self::si29(), Self::c13()]
    }
}

/// Secular hyperfine coupling, kHz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperfineCoupling {
    pub a_par: f64,
    pub a_perp: f64,
}

impl HyperfineCoupling {
    /// `a_perp` must be non-negative; its sign only mirrors the x axis.
    pub fn new(a_par: f64, a_perp: f64) -> Result<Self> {
        if !a_par.is_finite() || !a_perp.is_finite() || a_perp < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "hyperfine coupling needs finite a_par and a_perp >= 0, got ({a_par}, {a_perp})"
            )));
        }
        Ok(HyperfineCoupling { a_par, a_perp })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuclearSpin {
    pub species: NuclearSpecies,
    pub coupling: HyperfineCoupling,
}

impl NuclearSpin {
    pub fn new(species: NuclearSpecies, coupling: HyperfineCoupling) -> Self {
        NuclearSpin { species, coupling }
    }

    /// A 29Si nucleus with the given couplings (kHz). Panics on a negative
    /// `a_perp`; meant for literals.
    pub fn si29(a_par: f64, a_perp: f64) -> Self {
        NuclearSpin {
            species: NuclearSpecies::si29(),
            coupling: HyperfineCoupling::new(a_par, a_perp).expect("valid coupling literal"),
        }
    }
}

const PROJECTIONS: [f64; 4] = [-1.5, -0.5, 0.5, 1.5];

/// The two electron spin projections alternated by the pulse sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElectronSubspace {
    pub s0: f64,
    pub s1: f64,
}

impl Default for ElectronSubspace {
    /// `(+1/2, +3/2)`.
    fn default() -> Self {
        ElectronSubspace { s0: 0.5, s1: 1.5 }
    }
}

impl ElectronSubspace {
    pub fn new(s0: f64, s1: f64) -> Result<Self> {
        let valid = |s: f64| PROJECTIONS.contains(&s);
        if !valid(s0) || !valid(s1) || s0 == s1 {
            return Err(Error::InvalidParameter(format!(
                "electron subspace needs two distinct projections from {{-3/2, -1/2, 1/2, 3/2}}, got ({s0}, {s1})"
            )));
        }
        Ok(ElectronSubspace { s0, s1 })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldConfig {
    /// Field along the electron quantization axis, Gauss.
    pub b: f64,
}

impl FieldConfig {
    pub fn new(b: f64) -> Result<Self> {
        if !(b >= 0.0) || !b.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "field must be finite and non-negative, got {b}"
            )));
        }
        Ok(FieldConfig { b })
    }
}

/// Nuclear precession while the electron sits in one projection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionalPrecession {
    /// kHz, non-negative.
    pub freq: f64,
    /// Unit vector in the x-z plane.
    pub axis: Vec3,
}

impl ConditionalPrecession {
    /// Zero frequency: any axis would do, `+z` is reported.
    pub fn is_degenerate(&self) -> bool {
        self.freq == 0.0
    }
}

/// `gamma * B` in kHz.
pub fn larmor_frequency(species: &NuclearSpecies, field: FieldConfig) -> f64 {
    species.gamma * field.b
}

/// Precession frequency and axis of a nucleus while the electron has projection `s`.
pub fn conditional_precession(s: f64, spin: &NuclearSpin, field: FieldConfig) -> ConditionalPrecession {
    let f_l = larmor_frequency(&spin.species, field);
    let x = s * spin.coupling.a_perp;
    let z = s * spin.coupling.a_par - f_l;
    let freq = x.hypot(z);
    if freq == 0.0 {
        return ConditionalPrecession {
            freq: 0.0,
            axis: Vec3::Z,
        };
    }
    ConditionalPrecession {
        freq,
        axis: Vec3::new(x / freq, 0.0, z / freq),
    }
}

/// Free precession for `tau` microseconds.
pub fn rotation_from_precession(cp: &ConditionalPrecession, tau: f64) -> Rotation {
    if cp.is_degenerate() {
        return Rotation::IDENTITY;
    }
    let half = PI * cp.freq * tau * KHZ_US;
    let (s, c) = half.sin_cos();
    Rotation {
        w: c,
        v: cp.axis.scale(s),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn n1() -> NuclearSpin {
        NuclearSpin::si29(-23.5, 12.0)
    }

    #[test]
    fn registry_values() {
        assert_eq!(NuclearSpecies::by_name("29Si").unwrap().gamma, -0.8465);
        assert_eq!(NuclearSpecies::by_name("13C").unwrap().gamma, 1.0705);
        assert!(matches!(NuclearSpecies::by_name("1H"), Err(Error::UnknownSpecies(_))));
        assert!(NuclearSpecies::new("x", 0.0).is_err());
    }

    #[test]
    fn larmor_examples() {
        let si = NuclearSpecies::si29();
        assert_eq!(larmor_frequency(&si, FieldConfig::new(0.0).unwrap()), 0.0);
        assert!((larmor_frequency(&si, FieldConfig::new(81.0).unwrap()) + 68.5665).abs() < 1e-9);
        assert!((larmor_frequency(&si, FieldConfig::new(36.0).unwrap()) + 30.474).abs() < 1e-9);
    }

    #[test]
    fn conditional_precession_examples() {
        let field = FieldConfig::new(81.0).unwrap();
        // f_L = -68.5665 kHz; s A_par - f_L = 56.8165, s A_perp = 6.
        let cp = conditional_precession(0.5, &n1(), field);
        let expected = (56.8165f64.powi(2) + 36.0).sqrt();
        assert!((cp.freq - expected).abs() < 1e-12);
        assert!((cp.freq - 57.13).abs() < 0.01);
        assert!((cp.axis.x - 0.105).abs() < 1e-3 && (cp.axis.z - 0.994).abs() < 1e-3);
        assert_eq!(cp.axis.y, 0.0);

        let cp = conditional_precession(1.5, &n1(), field);
        assert!((cp.freq - 37.87).abs() < 0.01);
        assert!((cp.axis.x - 0.475).abs() < 1e-3 && (cp.axis.z - 0.880).abs() < 1e-3);
        assert!((cp.axis.norm() - 1.0).abs() < 1e-12);

        let cp = conditional_precession(0.5, &n1(), FieldConfig::new(0.0).unwrap());
        assert!((cp.freq - 0.5 * (23.5f64.powi(2) + 144.0).sqrt()).abs() < 1e-12);
        assert!((cp.freq - 13.19).abs() < 0.01);
    }

    #[test]
    fn degenerate_precession_is_identity() {
        // s A_par = f_L and A_perp = 0: 0.5 * A_par = -0.8465 * 10
        let spin = NuclearSpin::si29(-16.93, 0.0);
        let cp = conditional_precession(0.5, &spin, FieldConfig::new(10.0).unwrap());
        assert!(cp.is_degenerate());
        assert_eq!(cp.axis, Vec3::Z);
        assert_eq!(rotation_from_precession(&cp, 123.0), Rotation::IDENTITY);
    }

    #[test]
    fn rotation_from_precession_examples() {
        let cp = conditional_precession(0.5, &n1(), FieldConfig::new(81.0).unwrap());
        assert_eq!(rotation_from_precession(&cp, 0.0), Rotation::IDENTITY);
        let r = rotation_from_precession(&cp, 5.263);
        let expected = 2.0 * PI * cp.freq * 5.263e-3;
        assert!((r.angle() - expected).abs() < 1e-12);
        assert!((expected / (2.0 * PI) - 0.3007).abs() < 1e-3);

        let full = ConditionalPrecession { freq: 1.0, axis: Vec3::X };
        let r = rotation_from_precession(&full, 1000.0);
        assert!((r.w + 1.0).abs() < 1e-12);
    }

    #[test]
    fn validation() {
        assert!(ElectronSubspace::new(0.5, 0.5).is_err());
        assert!(ElectronSubspace::new(0.5, 1.0).is_err());
        assert!(ElectronSubspace::new(-1.5, 1.5).is_ok());
        assert!(FieldConfig::new(-1.0).is_err());
        assert!(HyperfineCoupling::new(1.0, -0.1).is_err());
    }
}
