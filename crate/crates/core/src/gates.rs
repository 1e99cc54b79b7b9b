//! State-vector simulation of the electron and its nuclei, conditional
//! rotations and gate fidelities.
//!
//! Basis ordering: the index of a basis state is `e * 2^n + bits`, where `e`
//! is 0 for `|s0>` and 1 for `|s1>`, and `bits` holds the nuclear spins with
//! nucleus 0 as the most significant bit. A nuclear bit is 0 for `|up>`.
//! Electron pulses are ideal; a pi pulse swaps `|s0>` and `|s1>`.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sequences::{nuclear_operators, SequenceKind, SequenceSpec, SpinSystem};
use crate::spinmath::{
    conditional_precession, rotation_from_precession, Rotation, Vec3,
};

type C = Complex64;

const NORM_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct BipartiteState {
    n_nuclei: usize,
    amps: Vec<C>,
}

impl BipartiteState {
    pub fn new(n_nuclei: usize, amps: Vec<C>) -> Result<Self> {
        if amps.len() != 2usize << n_nuclei {
            return Err(Error::InvalidParameter(format!(
                "state with {n_nuclei} nuclei needs {} amplitudes, got {}",
                2usize << n_nuclei,
                amps.len()
            )));
        }
        let s = BipartiteState { n_nuclei, amps };
        if (s.norm_sqr() - 1.0).abs() > NORM_TOL {
            return Err(Error::InvalidParameter(format!("state is not normalized: |psi|^2 = {}", s.norm_sqr())));
        }
        Ok(s)
    }

    /// Product eigenstate; `nuclear_bits[i]` is true for `|down>`.
    pub fn basis(electron_s1: bool, nuclear_bits: &[bool]) -> Self {
        let n = nuclear_bits.len();
        let mut amps = vec![C::new(0.0, 0.0); 2 << n];
        amps[Self::index_of(electron_s1, nuclear_bits)] = C::new(1.0, 0.0);
        BipartiteState { n_nuclei: n, amps }
    }

    fn index_of(electron_s1: bool, nuclear_bits: &[bool]) -> usize {
        let n = nuclear_bits.len();
        let mut idx = (electron_s1 as usize) << n;
        for (i, &b) in nuclear_bits.iter().enumerate() {
            if b {
                idx |= 1 << (n - 1 - i);
            }
        }
        idx
    }

    pub fn n_nuclei(&self) -> usize {
        self.n_nuclei
    }

    pub fn amplitudes(&self) -> &[C] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn inner(&self, other: &BipartiteState) -> C {
        self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum()
    }

    fn half(&self) -> usize {
        1 << self.n_nuclei
    }

    /// `2 Re <s1-part | s0-part>`, the transverse electron coherence.
    pub fn electron_coherence(&self) -> f64 {
        let h = self.half();
        let (a0, a1) = self.amps.split_at(h);
        2.0 * a1.iter().zip(a0).map(|(x, y)| (x.conj() * y).re).sum::<f64>()
    }

    /// Probability of finding the electron in `|s0>`.
    pub fn probability_s0(&self) -> f64 {
        self.amps[..self.half()].iter().map(|a| a.norm_sqr()).sum()
    }

    fn flip_electron(&mut self) {
        let h = self.half();
        let (a0, a1) = self.amps.split_at_mut(h);
        a0.swap_with_slice(a1);
    }

    fn rotate_electron(&mut self, m: [[C; 2]; 2]) {
        let h = self.half();
        for i in 0..h {
            let (x, y) = (self.amps[i], self.amps[i + h]);
            self.amps[i] = m[0][0] * x + m[0][1] * y;
            self.amps[i + h] = m[1][0] * x + m[1][1] * y;
        }
    }

    /// Applies `r` to nucleus `k` within the electron block `e`.
    fn rotate_nucleus(&mut self, e: usize, k: usize, r: &Rotation) {
        let m = su2_matrix(r);
        let h = self.half();
        let stride = 1 << (self.n_nuclei - 1 - k);
        let base = e * h;
        for i in 0..h {
            if i & stride != 0 {
                continue;
            }
            let (p, q) = (base + i, base + (i | stride));
            let (x, y) = (self.amps[p], self.amps[q]);
            self.amps[p] = m[0][0] * x + m[0][1] * y;
            self.amps[q] = m[1][0] * x + m[1][1] * y;
        }
    }
}

/// `w 1 - i v.sigma`.
fn su2_matrix(r: &Rotation) -> [[C; 2]; 2] {
    let Vec3 { x, y, z } = r.v;
    [
        [C::new(r.w, -z), C::new(-y, -x)],
        [C::new(y, -x), C::new(r.w, z)],
    ]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PulseAxis {
    X,
    Y,
}

/// Ideal electron rotation within the working subspace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElectronPulse {
    pub axis: PulseAxis,
    pub angle: f64,
}

impl ElectronPulse {
    pub fn half_pi(axis: PulseAxis) -> Self {
        ElectronPulse { axis, angle: 0.5 * PI }
    }

    pub fn minus_half_pi(axis: PulseAxis) -> Self {
        ElectronPulse { axis, angle: -0.5 * PI }
    }

    fn matrix(&self) -> [[C; 2]; 2] {
        let (s, c) = (0.5 * self.angle).sin_cos();
        match self.axis {
            PulseAxis::X => [[C::new(c, 0.0), C::new(0.0, -s)], [C::new(0.0, -s), C::new(c, 0.0)]],
            PulseAxis::Y => [[C::new(c, 0.0), C::new(-s, 0.0)], [C::new(s, 0.0), C::new(c, 0.0)]],
        }
    }
}

/// Electron pulses wrapped around the decoupling blocks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseFrame {
    pub initial: Option<ElectronPulse>,
    /// Extra pi pulse after an even number of refocusing pulses.
    pub closing_pi: bool,
    pub last: Option<ElectronPulse>,
}

impl PulseFrame {
    /// Decoupling blocks and the closing pi only.
    pub const BARE: PulseFrame = PulseFrame {
        initial: None,
        closing_pi: true,
        last: None,
    };

    /// `pi/2_y`, sequence, closing pi, `-pi/2_y`: the electron ends in `|s0>`
    /// with probability `(1 + M) / 2`.
    pub fn readout() -> Self {
        PulseFrame {
            initial: Some(ElectronPulse::half_pi(PulseAxis::Y)),
            closing_pi: true,
            last: Some(ElectronPulse::minus_half_pi(PulseAxis::Y)),
        }
    }

    /// `pi/2_y` and the sequence, leaving the electron coherence in place.
    pub fn coherence() -> Self {
        PulseFrame {
            initial: Some(ElectronPulse::half_pi(PulseAxis::Y)),
            closing_pi: true,
            last: None,
        }
    }

    /// `pi/2_x` before and after the sequence; the frame that entangles.
    pub fn entangling() -> Self {
        PulseFrame {
            initial: Some(ElectronPulse::half_pi(PulseAxis::X)),
            closing_pi: true,
            last: Some(ElectronPulse::half_pi(PulseAxis::X)),
        }
    }

    /// Number of electron pi flips, closing pulse included.
    pub fn flip_count(&self, spec: &SequenceSpec) -> u32 {
        let closing = self.closing_pi && spec.kind == SequenceKind::Cpmg && spec.n_pulses % 2 == 0 && spec.n_pulses > 0;
        spec.n_pulses + closing as u32
    }
}

/// Runs the sequence on `state0`. Each nucleus evolves under the precession
/// conditioned on the current electron projection; electron pi pulses are
/// ideal flips.
pub fn simulate_sequence(
    state0: &BipartiteState,
    system: &SpinSystem,
    spec: &SequenceSpec,
    frame: &PulseFrame,
) -> Result<BipartiteState> {
    if state0.n_nuclei != system.nuclei.len() {
        return Err(Error::InvalidParameter(format!(
            "state has {} nuclei, system has {}",
            state0.n_nuclei,
            system.nuclei.len()
        )));
    }
    let spec = SequenceSpec::new(spec.kind, spec.tau, spec.n_pulses)?;
    let mut psi = state0.clone();
    if let Some(p) = frame.initial {
        psi.rotate_electron(p.matrix());
    }
    let free: Vec<[Rotation; 2]> = system
        .nuclei
        .iter()
        .map(|n| {
            [system.subspace.s0, system.subspace.s1]
                .map(|s| rotation_from_precession(&conditional_precession(s, n, system.field), spec.tau))
        })
        .collect();
    let evolve = |psi: &mut BipartiteState| {
        for (k, r) in free.iter().enumerate() {
            psi.rotate_nucleus(0, k, &r[0]);
            psi.rotate_nucleus(1, k, &r[1]);
        }
    };
    for _ in 0..spec.n_pulses {
        evolve(&mut psi);
        psi.flip_electron();
        evolve(&mut psi);
    }
    if frame.flip_count(&spec) > spec.n_pulses {
        psi.flip_electron();
    }
    if let Some(p) = frame.last {
        psi.rotate_electron(p.matrix());
    }
    Ok(psi)
}

/// Nuclear rotations for the electron starting in `|s0>` (`rot_u`) and in
/// `|s1>` (`rot_v`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionalGate {
    pub rot_u: Rotation,
    pub rot_v: Rotation,
}

impl ConditionalGate {
    pub fn axis_dot(&self) -> f64 {
        self.rot_u.axis().dot(self.rot_v.axis())
    }
}

/// Smallest rotation angle of `r` as a spatial rotation, in `[0, pi]`.
pub fn spatial_angle(r: &Rotation) -> f64 {
    let a = r.angle();
    a.min(2.0 * PI - a)
}

pub fn extract_conditional_rotations(system: &SpinSystem, index: usize, spec: &SequenceSpec) -> Result<ConditionalGate> {
    let spin = system.nucleus(index)?;
    let (rot_u, rot_v) = nuclear_operators(spin, system.subspace, system.field, spec);
    Ok(ConditionalGate { rot_u, rot_v })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GateKind {
    /// Maximal overlap with one of the four Bell states of the electron and
    /// the addressed nucleus.
    BellFamily,
    NuclearX,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateTarget {
    pub kind: GateKind,
    pub nucleus: usize,
}

impl GateKind {
    /// Frame the fidelity of this gate is evaluated in.
    pub fn frame(self) -> PulseFrame {
        match self {
            GateKind::BellFamily => PulseFrame::entangling(),
            GateKind::NuclearX | GateKind::Identity => PulseFrame::BARE,
        }
    }
}

/// Overlap of `psi` with `pair` on (electron, nucleus `k`), summed over the
/// spectator basis. `pair` is indexed by `2 e + n`.
fn pair_overlap(psi: &BipartiteState, k: usize, pair: &[C; 4]) -> f64 {
    let n = psi.n_nuclei;
    let spectators: Vec<usize> = (0..n).filter(|&i| i != k).collect();
    let mut total = 0.0;
    for sbits in 0..(1usize << spectators.len()) {
        let mut bits = vec![false; n];
        for (j, &i) in spectators.iter().enumerate() {
            bits[i] = sbits >> j & 1 == 1;
        }
        let mut amp = C::new(0.0, 0.0);
        for e in 0..2 {
            for nb in 0..2 {
                bits[k] = nb == 1;
                amp += pair[2 * e + nb].conj() * psi.amps[BipartiteState::index_of(e == 1, &bits)];
            }
        }
        total += amp.norm_sqr();
    }
    total
}

fn bell_states() -> [[C; 4]; 4] {
    let h = C::new(FRAC_1_SQRT_2, 0.0);
    let z = C::new(0.0, 0.0);
    [[h, z, z, h], [h, z, z, -h], [z, h, h, z], [z, h, -h, z]]
}

/// Average fidelity over the four eigenstates of the electron and the
/// addressed nucleus, with the other nuclei starting in `|up>`.
pub fn gate_fidelity(system: &SpinSystem, spec: &SequenceSpec, target: GateTarget) -> Result<f64> {
    let n = system.nuclei.len();
    let k = target.nucleus;
    system.nucleus(k)?;
    let frame = target.kind.frame();
    let flips_odd = frame.flip_count(spec) % 2 == 1;
    let mut sum = 0.0;
    for e in 0..2usize {
        for nb in 0..2usize {
            let mut bits = vec![false; n];
            bits[k] = nb == 1;
            let psi0 = BipartiteState::basis(e == 1, &bits);
            let psi = simulate_sequence(&psi0, system, spec, &frame)?;
            sum += match target.kind {
                GateKind::BellFamily => bell_states()
                    .iter()
                    .map(|b| pair_overlap(&psi, k, b))
                    .fold(0.0, f64::max),
                GateKind::NuclearX | GateKind::Identity => {
                    let e_t = e ^ flips_odd as usize;
                    let n_t = nb ^ (target.kind == GateKind::NuclearX) as usize;
                    let mut pair = [C::new(0.0, 0.0); 4];
                    pair[2 * e_t + n_t] = C::new(1.0, 0.0);
                    pair_overlap(&psi, k, &pair)
                }
            };
        }
    }
    Ok(sum / 4.0)
}

/// Gate fidelity with the conditional rotations of the addressed nucleus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateRecord {
    pub target: GateTarget,
    pub n_pulses: u32,
    pub tau_us: f64,
    pub fidelity: f64,
    pub axis_u: [f64; 3],
    pub axis_v: [f64; 3],
    pub angle_u: f64,
    pub angle_v: f64,
}

pub fn gate_record(system: &SpinSystem, spec: &SequenceSpec, target: GateTarget) -> Result<GateRecord> {
    let fidelity = gate_fidelity(system, spec, target)?;
    let g = extract_conditional_rotations(system, target.nucleus, spec)?;
    Ok(GateRecord {
        target,
        n_pulses: spec.n_pulses,
        tau_us: spec.tau,
        fidelity,
        axis_u: g.rot_u.axis().to_array(),
        axis_v: g.rot_v.axis().to_array(),
        angle_u: g.rot_u.angle(),
        angle_v: g.rot_v.angle(),
    })
}
