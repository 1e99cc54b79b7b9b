//! Dynamical-decoupling control of nuclear spins coupled to a single
//! electron spin: sequence simulation, resonance conditions, conditional
//! gates, data fitting and a laser-lock controller.

pub mod error;
pub mod fitting;
pub mod gates;
pub mod io;
pub mod laserlock;
pub mod resonance;
pub mod sequences;
pub mod spinmath;
pub mod trace;

pub use error::{Error, Result};
pub use sequences::{Coherence, SequenceKind, SequenceSpec, SpinSystem};
pub use spinmath::{
    ElectronSubspace, FieldConfig, HyperfineCoupling, NuclearSpecies, NuclearSpin, Rotation, Vec3,
};
pub use trace::{AbscissaUnit, SignalTrace};
