//! Hahn-echo and CPMG signals of an electron spin coupled to a set of
//! independent nuclear spins.
//!
//! For each nucleus the sequence is reduced to two nuclear rotations: `U`,
//! accumulated on the branch that starts in `s0`, and `V`, on the branch that
//! starts in `s1`. The electron coherence contributed by that nucleus is the
//! scalar part of `V^-1 U`, i.e. `cos(theta/2)` of the relative rotation,
//! which equals the nuclear-trace overlap for an unpolarized nucleus. The
//! coherences of independent nuclei multiply.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spinmath::{
    conditional_precession, larmor_frequency, rotation_from_precession, ElectronSubspace,
    FieldConfig, NuclearSpin, Rotation, KHZ_US,
};
use crate::trace::{AbscissaUnit, SignalTrace};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpinSystem {
    pub field: FieldConfig,
    pub subspace: ElectronSubspace,
    pub nuclei: Vec<NuclearSpin>,
}

impl SpinSystem {
    pub fn new(field: FieldConfig, subspace: ElectronSubspace, nuclei: Vec<NuclearSpin>) -> Self {
        SpinSystem {
            field,
            subspace,
            nuclei,
        }
    }

    /// The same field and subspace with a single nucleus.
    pub fn single(&self, index: usize) -> Result<SpinSystem> {
        let spin = self.nucleus(index)?.clone();
        Ok(SpinSystem {
            nuclei: vec![spin],
            ..self.clone()
        })
    }

    pub fn nucleus(&self, index: usize) -> Result<&NuclearSpin> {
        self.nuclei.get(index).ok_or(Error::NucleusIndex {
            index,
            count: self.nuclei.len(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SequenceKind {
    Hahn,
    Cpmg,
}

/// `(tau - pi - tau)^N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SequenceSpec {
    pub kind: SequenceKind,
    /// Half the pulse spacing, us.
    pub tau: f64,
    pub n_pulses: u32,
}

impl SequenceSpec {
    pub fn hahn(tau: f64) -> Result<Self> {
        Self::new(SequenceKind::Hahn, tau, 1)
    }

    /// Even `n_pulses`; zero is the empty sequence.
    pub fn cpmg(tau: f64, n_pulses: u32) -> Result<Self> {
        Self::new(SequenceKind::Cpmg, tau, n_pulses)
    }

    pub fn new(kind: SequenceKind, tau: f64, n_pulses: u32) -> Result<Self> {
        if !(tau >= 0.0) || !tau.is_finite() {
            return Err(Error::InvalidSequence(format!("tau must be >= 0, got {tau}")));
        }
        match kind {
            SequenceKind::Hahn if n_pulses != 1 => Err(Error::InvalidSequence(format!(
                "a Hahn echo has exactly one pulse, got {n_pulses}"
            ))),
            SequenceKind::Cpmg if n_pulses % 2 == 1 => Err(Error::InvalidSequence(format!(
                "CPMG needs an even number of pulses, got {n_pulses}"
            ))),
            _ => Ok(SequenceSpec {
                kind,
                tau,
                n_pulses,
            }),
        }
    }
}

/// Branch rotations `(U, V)` of one nucleus for the given sequence.
pub fn nuclear_operators(
    spin: &NuclearSpin,
    subspace: ElectronSubspace,
    field: FieldConfig,
    spec: &SequenceSpec,
) -> (Rotation, Rotation) {
    let u0 = rotation_from_precession(&conditional_precession(subspace.s0, spin, field), spec.tau);
    let u1 = rotation_from_precession(&conditional_precession(subspace.s1, spin, field), spec.tau);
    match spec.kind {
        SequenceKind::Hahn => (u1 * u0, u0 * u1),
        SequenceKind::Cpmg => {
            let block_u = u0 * u1 * u1 * u0;
            let block_v = u1 * u0 * u0 * u1;
            let reps = spec.n_pulses / 2;
            (block_u.powi(reps), block_v.powi(reps))
        }
    }
}

/// Electron coherence of a single nucleus, `cos(theta_{V^-1 U} / 2)`.
pub fn nucleus_coherence(
    spin: &NuclearSpin,
    subspace: ElectronSubspace,
    field: FieldConfig,
    spec: &SequenceSpec,
) -> f64 {
    let (u, v) = nuclear_operators(spin, subspace, field, spec);
    // Clamp away rounding excursions beyond the unit interval.
    (v.inverse() * u).w.clamp(-1.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coherence {
    /// Product over nuclei, in `[-1, 1]`.
    pub total: f64,
    pub per_nucleus: Vec<f64>,
}

impl Coherence {
    /// Probability of reading the electron back in `s0`.
    pub fn probability(&self) -> f64 {
        0.5 * (1.0 + self.total)
    }
}

pub fn sequence_coherence(system: &SpinSystem, spec: &SequenceSpec) -> Coherence {
    let per_nucleus: Vec<f64> = system
        .nuclei
        .iter()
        .map(|n| nucleus_coherence(n, system.subspace, system.field, spec))
        .collect();
    let total = per_nucleus.iter().product();
    Coherence { total, per_nucleus }
}

/// Hahn-echo modulation depth
/// `k = ((s1 - s0) f_L A_perp / (f0 f1))^2`.
///
/// The `(s1 - s0)` factor is 1 for neighbouring projections and makes `k`
/// the squared sine of the angle between the two precession axes for any
/// subspace.
pub fn hahn_modulation_depth(
    spin: &NuclearSpin,
    subspace: ElectronSubspace,
    field: FieldConfig,
) -> Result<f64> {
    let p0 = conditional_precession(subspace.s0, spin, field);
    let p1 = conditional_precession(subspace.s1, spin, field);
    for (p, s) in [(p0, subspace.s0), (p1, subspace.s1)] {
        if p.is_degenerate() {
            return Err(Error::DegeneratePrecession { projection: s });
        }
    }
    let f_l = larmor_frequency(&spin.species, field);
    let r = (subspace.s1 - subspace.s0) * f_l * spin.coupling.a_perp / (p0.freq * p1.freq);
    Ok(r * r)
}

/// Closed-form Hahn-echo coherence
/// `1 - k/4 (2 - 2cos w0 t - 2cos w1 t + cos w+ t + cos w- t)`.
pub fn hahn_closed_form(
    spin: &NuclearSpin,
    subspace: ElectronSubspace,
    field: FieldConfig,
    tau: f64,
) -> Result<f64> {
    let k = hahn_modulation_depth(spin, subspace, field)?;
    let two_pi_t = 2.0 * std::f64::consts::PI * tau * KHZ_US;
    let a = conditional_precession(subspace.s0, spin, field).freq * two_pi_t;
    let b = conditional_precession(subspace.s1, spin, field).freq * two_pi_t;
    Ok(1.0 - 0.25 * k * (2.0 - 2.0 * a.cos() - 2.0 * b.cos() + (a + b).cos() + (a - b).cos()))
}

fn check_grid(grid: &[f64]) -> Result<()> {
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParameter("grid must be strictly increasing".into()));
    }
    Ok(())
}

/// Coherence against `tau` at a fixed pulse count. `n_pulses == 1` gives a
/// Hahn echo.
pub fn tau_sweep(system: &SpinSystem, n_pulses: u32, tau_grid: &[f64]) -> Result<SignalTrace> {
    check_grid(tau_grid)?;
    let kind = if n_pulses == 1 {
        SequenceKind::Hahn
    } else {
        SequenceKind::Cpmg
    };
    let specs = tau_grid
        .iter()
        .map(|&t| SequenceSpec::new(kind, t, n_pulses))
        .collect::<Result<Vec<_>>>()?;
    let values = specs
        .par_iter()
        .map(|spec| sequence_coherence(system, spec).total)
        .collect();
    Ok(SignalTrace::new(tau_grid.to_vec(), values, AbscissaUnit::Microseconds)?
        .with_param("n_pulses", n_pulses as f64)
        .with_param("field_gauss", system.field.b))
}

/// Coherence against pulse number at fixed `tau`.
pub fn pulse_sweep(system: &SpinSystem, tau: f64, n_list: &[u32]) -> Result<SignalTrace> {
    let specs = n_list
        .iter()
        .map(|&n| SequenceSpec::cpmg(tau, n))
        .collect::<Result<Vec<_>>>()?;
    let abscissa: Vec<f64> = n_list.iter().map(|&n| n as f64).collect();
    check_grid(&abscissa)?;
    let values = specs
        .par_iter()
        .map(|spec| sequence_coherence(system, spec).total)
        .collect();
    Ok(SignalTrace::new(abscissa, values, AbscissaUnit::Pulses)?
        .with_param("tau_us", tau)
        .with_param("field_gauss", system.field.b))
}

/// Stretched-exponential decay `A exp(-(t/t2)^n)`, plus offset `y0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeParams {
    pub amplitude: f64,
    pub t2: f64,
    pub n_stretch: f64,
    pub y0: f64,
}

impl EnvelopeParams {
    pub fn new(amplitude: f64, t2: f64, n_stretch: f64, y0: f64) -> Result<Self> {
        if !(t2 > 0.0) || !(n_stretch > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "envelope needs t2 > 0 and n_stretch > 0, got t2 = {t2}, n = {n_stretch}"
            )));
        }
        Ok(EnvelopeParams {
            amplitude,
            t2,
            n_stretch,
            y0,
        })
    }

    pub fn decay(&self, t: f64) -> f64 {
        (-(t / self.t2).powf(self.n_stretch)).exp()
    }

    /// Envelope applied to a bare signal value at time `t`.
    pub fn apply(&self, t: f64, value: f64) -> f64 {
        self.amplitude * self.decay(t) * value + self.y0
    }
}

pub fn apply_envelope(trace: &SignalTrace, env: &EnvelopeParams) -> SignalTrace {
    let mut out = trace.clone();
    for (v, &t) in out.values.iter_mut().zip(&trace.abscissa) {
        *v = env.apply(t, *v);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spinmath::NuclearSpecies;
    use proptest::prelude::*;

    fn system(b: f64, nuclei: Vec<NuclearSpin>) -> SpinSystem {
        SpinSystem::new(FieldConfig::new(b).unwrap(), ElectronSubspace::default(), nuclei)
    }

    fn two_spin_system() -> SpinSystem {
        system(
            81.0,
            vec![NuclearSpin::si29(-23.5, 12.0), NuclearSpin::si29(0.2, 8.5)],
        )
    }

    #[test]
    fn spec_validation() {
        assert!(SequenceSpec::cpmg(1.0, 3).is_err());
        assert!(SequenceSpec::new(SequenceKind::Hahn, 1.0, 2).is_err());
        assert!(SequenceSpec::cpmg(-1.0, 2).is_err());
        assert!(SequenceSpec::cpmg(1.0, 0).is_ok());
    }

    #[test]
    fn trivial_coherences() {
        let sys = two_spin_system();
        assert_eq!(sequence_coherence(&sys, &SequenceSpec::cpmg(0.0, 8).unwrap()).total, 1.0);
        assert_eq!(sequence_coherence(&sys, &SequenceSpec::hahn(0.0).unwrap()).total, 1.0);
        assert_eq!(sequence_coherence(&sys, &SequenceSpec::cpmg(5.0, 0).unwrap()).total, 1.0);
        let bare = system(81.0, vec![]);
        for n in [0, 2, 8, 32] {
            let c = sequence_coherence(&bare, &SequenceSpec::cpmg(3.3, n).unwrap());
            assert_eq!(c.total, 1.0);
            assert!(c.per_nucleus.is_empty());
        }
    }

    #[test]
    fn modulation_depth_examples() {
        let f36 = FieldConfig::new(36.0).unwrap();
        let sub = ElectronSubspace::default();
        let k = hahn_modulation_depth(&NuclearSpin::si29(-23.5, 12.0), sub, f36).unwrap();
        assert!((k - 0.997).abs() < 1e-3, "k = {k}");
        assert_eq!(hahn_modulation_depth(&NuclearSpin::si29(-23.5, 0.0), sub, f36).unwrap(), 0.0);
        let k0 = hahn_modulation_depth(&NuclearSpin::si29(-23.5, 12.0), sub, FieldConfig::new(0.0).unwrap()).unwrap();
        assert_eq!(k0, 0.0);
        let degenerate = NuclearSpin::si29(-16.93, 0.0);
        assert!(matches!(
            hahn_modulation_depth(&degenerate, sub, FieldConfig::new(10.0).unwrap()),
            Err(Error::DegeneratePrecession { .. })
        ));
    }

    #[test]
    fn closed_form_trivial_cases() {
        let sub = ElectronSubspace::default();
        let f = FieldConfig::new(36.0).unwrap();
        assert_eq!(hahn_closed_form(&NuclearSpin::si29(-23.5, 12.0), sub, f, 0.0).unwrap(), 1.0);
        for t in [0.5, 7.0, 33.0] {
            assert_eq!(hahn_closed_form(&NuclearSpin::si29(-23.5, 0.0), sub, f, t).unwrap(), 1.0);
        }
    }

    #[test]
    fn closed_form_matches_operators_for_other_subspaces() {
        let f = FieldConfig::new(50.0).unwrap();
        let spin = NuclearSpin::si29(31.0, 17.0);
        for (s0, s1) in [(-1.5, 1.5), (-0.5, 0.5), (1.5, -1.5), (-1.5, -0.5)] {
            let sub = ElectronSubspace::new(s0, s1).unwrap();
            for t in [1.0, 4.3, 17.7] {
                let cf = hahn_closed_form(&spin, sub, f, t).unwrap();
                let op = nucleus_coherence(&spin, sub, f, &SequenceSpec::hahn(t).unwrap());
                assert!((cf - op).abs() < 1e-12, "({s0},{s1}) t={t}: {cf} vs {op}");
            }
        }
    }

    #[test]
    fn sweeps() {
        let bare = system(81.0, vec![]);
        let t = tau_sweep(&bare, 8, &[1.0, 2.0, 3.0]).unwrap();
        assert!(t.values.iter().all(|&v| v == 1.0));

        let sys = two_spin_system();
        let one = tau_sweep(&sys, 8, &[5.38]).unwrap();
        assert_eq!(one.len(), 1);
        assert_eq!(one.values[0], sequence_coherence(&sys, &SequenceSpec::cpmg(5.38, 8).unwrap()).total);
        assert!(tau_sweep(&sys, 8, &[2.0, 1.0]).is_err());

        let p = pulse_sweep(&sys, 5.38, &[0, 8, 16]).unwrap();
        assert_eq!(p.values[0], 1.0);
        assert!(p.values[1] < -0.95 && p.values[2] > 0.95, "{:?}", p.values);
        assert!(pulse_sweep(&sys, 5.38, &[0, 3]).is_err());
    }

    #[test]
    fn two_spin_minimum_at_first_resonance() {
        let sys = two_spin_system();
        let grid: Vec<f64> = (0..=2000).map(|i| 1.0 + 0.01 * i as f64).collect();
        let trace = tau_sweep(&sys, 8, &grid).unwrap();
        let (i, v) = trace.argmin().unwrap();
        assert!((grid[i] - 5.38).abs() < 0.05, "minimum at {}", grid[i]);
        assert!(v < -0.95);
    }

    #[test]
    fn envelope() {
        let t = SignalTrace::new(vec![1.0, 10.0, 840.0], vec![0.5, -0.2, 1.0], AbscissaUnit::Microseconds).unwrap();
        let same = apply_envelope(&t, &EnvelopeParams::new(1.0, f64::INFINITY, 1.3, 0.0).unwrap());
        assert_eq!(same.values, t.values);
        let env = EnvelopeParams::new(1.0, 840.0, 2.7, 0.0).unwrap();
        assert!((env.decay(840.0) - (-1.0f64).exp()).abs() < 1e-15);
        let out = apply_envelope(&t, &env);
        assert!((out.values[2] - (-1.0f64).exp()).abs() < 1e-15);
        assert!(EnvelopeParams::new(1.0, 0.0, 1.0, 0.0).is_err());
    }

    fn arb_spin() -> impl Strategy<Value = NuclearSpin> {
        (-60.0f64..60.0, 0.0f64..60.0, prop::bool::ANY).prop_map(|(a, p, si)| NuclearSpin {
            species: if si { NuclearSpecies::si29() } else { NuclearSpecies::c13() },
            coupling: crate::spinmath::HyperfineCoupling::new(a, p).unwrap(),
        })
    }

    proptest! {
        #[test]
        fn coherence_is_bounded_and_factorizes(
            a in arb_spin(), b in arb_spin(), field in 0.0f64..200.0, tau in 0.0f64..30.0, half in 0u32..10
        ) {
            let sys = system(field, vec![a.clone(), b.clone()]);
            let spec = SequenceSpec::cpmg(tau, 2 * half).unwrap();
            let c = sequence_coherence(&sys, &spec);
            prop_assert!((-1.0..=1.0).contains(&c.total));
            let ca = sequence_coherence(&system(field, vec![a]), &spec).total;
            let cb = sequence_coherence(&system(field, vec![b]), &spec).total;
            prop_assert_eq!(c.total.to_bits(), (ca * cb).to_bits());
        }

        #[test]
        fn zero_perpendicular_coupling_is_refocused(
            a_par in -60.0f64..60.0, field in 0.0f64..200.0, tau in 0.0f64..30.0, half in 0u32..10
        ) {
            let sys = system(field, vec![NuclearSpin::si29(a_par, 0.0)]);
            let c = sequence_coherence(&sys, &SequenceSpec::cpmg(tau, 2 * half).unwrap());
            prop_assert!((c.total - 1.0).abs() < 1e-12);
        }

        #[test]
        fn operator_chains_stay_in_xz_plane(a in arb_spin(), field in 0.0f64..200.0, tau in 0.0f64..30.0, half in 0u32..10) {
            let spec = SequenceSpec::cpmg(tau, 2 * half).unwrap();
            let (u, v) = nuclear_operators(&a, ElectronSubspace::default(), FieldConfig::new(field).unwrap(), &spec);
            // The palindromic block keeps the y component at zero.
            prop_assert!(u.v.y.abs() < 1e-12 && v.v.y.abs() < 1e-12);
            prop_assert!((u.norm_sqr() - 1.0).abs() < 1e-9);
        }
    }
}
