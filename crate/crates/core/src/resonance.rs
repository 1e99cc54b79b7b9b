//! CPMG resonance times.
//!
//! Resonance means the two branch rotations of a CPMG block have
//! anti-parallel axes. The zeroth-order time is `(2k-1) / (2 (f0 + f1))`; the
//! first-order correction `epsilon_tau` accounts for the tilt between the two
//! conditional precession axes. The exact time is found numerically.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spinmath::{conditional_precession, ElectronSubspace, FieldConfig, NuclearSpin, KHZ_US};
use crate::trace::{AbscissaUnit, SignalTrace};

/// Default bound on `(n0.n1)^-1 - 1` used for the critical field.
pub const EPSILON_N_DEFAULT: f64 = 0.1 * PI;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonanceQuery {
    pub spin: NuclearSpin,
    pub subspace: ElectronSubspace,
    pub field: FieldConfig,
    /// Resonance order, `k >= 1`.
    pub k: u32,
}

impl ResonanceQuery {
    pub fn new(spin: NuclearSpin, subspace: ElectronSubspace, field: FieldConfig, k: u32) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidParameter("resonance order k must be >= 1".into()));
        }
        Ok(ResonanceQuery {
            spin,
            subspace,
            field,
            k,
        })
    }

    fn odd(&self) -> f64 {
        (2 * self.k - 1) as f64
    }

    /// `(f0, f1, n0.n1)`, rejecting degenerate precession.
    fn precession(&self) -> Result<(f64, f64, f64)> {
        let p0 = conditional_precession(self.subspace.s0, &self.spin, self.field);
        let p1 = conditional_precession(self.subspace.s1, &self.spin, self.field);
        for (p, s) in [(p0, self.subspace.s0), (p1, self.subspace.s1)] {
            if p.is_degenerate() {
                return Err(Error::DegeneratePrecession { projection: s });
            }
        }
        Ok((p0.freq, p1.freq, p0.axis.dot(p1.axis)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResonanceResult {
    pub tau_zero: f64,
    pub epsilon_tau: f64,
    pub tau_approx: f64,
    pub tau_exact: f64,
    /// Signed `(tau_exact - tau_approx) / tau_exact`.
    pub rel_error: f64,
}

/// Query and result together, for JSON output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonanceRecord {
    pub query: ResonanceQuery,
    #[serde(flatten)]
    pub result: ResonanceResult,
}

/// Zeroth-order resonance time, us.
pub fn tau_zero(q: &ResonanceQuery) -> Result<f64> {
    let (f0, f1, _) = q.precession()?;
    Ok(q.odd() / (2.0 * (f0 + f1) * KHZ_US))
}

/// First-order correction `sin(w0 tau_k / 2) ((n0.n1)^-1 - 1) / ((2k-1) pi)`.
pub fn epsilon_tau(q: &ResonanceQuery) -> Result<f64> {
    let (f0, _, d) = q.precession()?;
    if d == 1.0 {
        return Ok(0.0);
    }
    let tk = tau_zero(q)?;
    let half_phase = PI * f0 * tk * KHZ_US;
    Ok(half_phase.sin() * (1.0 / d - 1.0) / (q.odd() * PI))
}

pub fn tau_approx(q: &ResonanceQuery) -> Result<f64> {
    Ok(tau_zero(q)? * (1.0 + epsilon_tau(q)?))
}

/// Resonance condition `cos a cos b - (n0.n1) sin a sin b`, with `a, b` the
/// half phases accumulated in `tau`. Its zeros are the anti-parallel points.
fn condition(f0: f64, f1: f64, d: f64, tau: f64) -> f64 {
    let a = PI * f0 * tau * KHZ_US;
    let b = PI * f1 * tau * KHZ_US;
    a.cos() * b.cos() - d * a.sin() * b.sin()
}

const SCAN_STEPS: usize = 400;

/// Exact resonance time: the zero of the resonance condition nearest
/// `tau_zero`, searched in `[0.5, 1.5] tau_zero`.
pub fn tau_exact(q: &ResonanceQuery) -> Result<f64> {
    let (f0, f1, d) = q.precession()?;
    let t0 = tau_zero(q)?;
    if d == 1.0 {
        return Ok(t0);
    }
    let (lo, hi) = (0.5 * t0, 1.5 * t0);
    let g = |t| condition(f0, f1, d, t);
    let step = (hi - lo) / SCAN_STEPS as f64;
    let mut best: Option<f64> = None;
    let mut a = lo;
    let mut ga = g(a);
    for i in 1..=SCAN_STEPS {
        let b = lo + step * i as f64;
        let gb = g(b);
        if ga == 0.0 || ga * gb < 0.0 {
            let root = if ga == 0.0 { a } else { bisect(&g, a, b, ga) };
            if best.is_none_or(|r| (root - t0).abs() < (r - t0).abs()) {
                best = Some(root);
            }
        }
        a = b;
        ga = gb;
    }
    best.ok_or(Error::SolverFailure { lo_us: lo, hi_us: hi })
}

fn bisect(g: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, mut ga: f64) -> f64 {
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let gm = g(m);
        if gm == 0.0 {
            return m;
        }
        if ga * gm < 0.0 {
            b = m;
        } else {
            a = m;
            ga = gm;
        }
    }
    0.5 * (a + b)
}

pub fn resonance(q: &ResonanceQuery) -> Result<ResonanceResult> {
    let tau_zero = tau_zero(q)?;
    let epsilon_tau = epsilon_tau(q)?;
    let tau_approx = tau_zero * (1.0 + epsilon_tau);
    let tau_exact = tau_exact(q)?;
    Ok(ResonanceResult {
        tau_zero,
        epsilon_tau,
        tau_approx,
        tau_exact,
        rel_error: (tau_exact - tau_approx) / tau_exact,
    })
}

/// `1 / sqrt((1 + eps_n)^2 - 1)`.
pub fn epsilon_n_factor(epsilon_n: f64) -> f64 {
    1.0 / ((1.0 + epsilon_n).powi(2) - 1.0).sqrt()
}

/// Smallest field above which the first-order resonance time is trusted.
///
/// At this field the axis tilt `(n0.n1)^-1 - 1` equals `epsilon_n`; above it
/// the tilt is smaller. The result may be negative, in which case every
/// non-negative field qualifies.
pub fn b_crit(spin: &NuclearSpin, subspace: ElectronSubspace, epsilon_n: f64) -> Result<f64> {
    if !(epsilon_n > 0.0) {
        return Err(Error::InvalidParameter(format!("epsilon_n must be > 0, got {epsilon_n}")));
    }
    let gamma = spin.species.gamma;
    let sg = gamma.signum();
    let (a_par, a_perp) = (spin.coupling.a_par, spin.coupling.a_perp);
    let (s0, s1) = (subspace.s0, subspace.s1);
    let a_sign = (s0 + s1) * a_par + sg * a_perp.abs() * epsilon_n_factor(epsilon_n);
    let discriminant = a_sign * a_sign - 4.0 * s0 * s1 * (a_perp * a_perp + a_par * a_par);
    if discriminant < 0.0 {
        return Err(Error::NoCriticalField { discriminant });
    }
    Ok((a_sign + sg * discriminant.sqrt()) / (2.0 * gamma))
}

/// Outcome of an error sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSweep {
    /// `|rel_error|` against field (G); failed points are NaN.
    pub trace: SignalTrace,
    /// Fields at which no resonance could be computed, with the reason.
    pub failures: Vec<(f64, Error)>,
}

impl ErrorSweep {
    pub fn max_error(&self) -> Option<f64> {
        self.trace
            .values
            .iter()
            .copied()
            .filter(|v| !v.is_nan())
            .max_by(f64::total_cmp)
    }
}

pub fn error_sweep(spin: &NuclearSpin, subspace: ElectronSubspace, b_grid: &[f64], k: u32) -> Result<ErrorSweep> {
    if b_grid.iter().any(|&b| !(b > 0.0)) {
        return Err(Error::InvalidParameter("field grid must be positive".into()));
    }
    let points: Vec<Result<f64>> = b_grid
        .par_iter()
        .map(|&b| {
            let q = ResonanceQuery::new(spin.clone(), subspace, FieldConfig::new(b)?, k)?;
            Ok(resonance(&q)?.rel_error.abs())
        })
        .collect();
    let mut values = Vec::with_capacity(points.len());
    let mut failures = Vec::new();
    for (&b, p) in b_grid.iter().zip(points) {
        match p {
            Ok(v) => values.push(v),
            Err(e) => {
                values.push(f64::NAN);
                failures.push((b, e));
            }
        }
    }
    let trace = SignalTrace::new(b_grid.to_vec(), values, AbscissaUnit::Gauss)?.with_param("k", k as f64);
    Ok(ErrorSweep { trace, failures })
}
