//! Laser refocusing on the A2 optical line.
//!
//! The controller is a pure state machine: it receives an [`Observation`]
//! answering its last request and returns the next [`Action`]s. Phases:
//!
//! 1. `Probe`: 500 ms on A2. More than 300 counts resumes the measurement.
//! 2. `Scan3`: up to two 3 GHz scans. An accepted fit locks on A2, recenters
//!    the window and resumes.
//! 3. `Reset13`: repump, then up to two 13 GHz scans. Success returns to (2).
//! 4. `Reset20`: repump, then a 20 GHz scan, repeated until it succeeds.
//!    Success returns to (2).

mod environment;

pub use environment::{run_closed_loop, Environment, EnvironmentConfig, LogRow, LoopConfig, LoopReport};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fitting::{fit_double_lorentzian, DataSet, FitResult};

pub const PROBE_MS: u32 = 500;
pub const PROBE_THRESHOLD: u64 = 300;
pub const MAX_ATTEMPTS: u8 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Probe,
    Scan3,
    Reset13,
    Reset20,
    Resume,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Probe => "probe",
            Phase::Scan3 => "scan3",
            Phase::Reset13 => "reset13",
            Phase::Reset20 => "reset20",
            Phase::Resume => "resume",
        }
    }

    /// Scan range of the phase, GHz.
    pub fn range_ghz(self) -> Option<f64> {
        match self {
            Phase::Scan3 => Some(3.0),
            Phase::Reset13 => Some(13.0),
            Phase::Reset20 => Some(20.0),
            Phase::Probe | Phase::Resume => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LineCriteria {
    pub separation_min_ghz: f64,
    pub separation_max_ghz: f64,
    pub ratio_min: f64,
    pub ratio_max: f64,
    pub width_min_mhz: f64,
    pub width_max_mhz: f64,
    /// Signal-to-background must exceed this.
    pub min_sbr: f64,
}

impl Default for LineCriteria {
    fn default() -> Self {
        LineCriteria {
            separation_min_ghz: 0.9,
            separation_max_ghz: 1.1,
            ratio_min: 1.0 / 3.0,
            ratio_max: 3.0,
            width_min_mhz: 10.0,
            width_max_mhz: 100.0,
            min_sbr: 5.0,
        }
    }
}

/// A fitted pair of optical lines; line 2 (A2) is the higher-frequency one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub center1_ghz: f64,
    pub center2_ghz: f64,
    pub fwhm1_mhz: f64,
    pub fwhm2_mhz: f64,
    pub amplitude1: f64,
    pub amplitude2: f64,
    pub background: f64,
}

impl LineFit {
    pub fn from_fit(fit: &FitResult) -> Result<Self> {
        let get = |k: &str| {
            fit.params
                .get(k)
                .copied()
                .ok_or_else(|| Error::InvalidParameter(format!("fit has no parameter `{k}`")))
        };
        Ok(LineFit {
            center1_ghz: get("c1")?,
            center2_ghz: get("c2")?,
            fwhm1_mhz: get("fwhm1_mhz")?,
            fwhm2_mhz: get("fwhm2_mhz")?,
            amplitude1: get("a1")?,
            amplitude2: get("a2")?,
            background: get("bg")?,
        })
    }

    pub fn separation_ghz(&self) -> f64 {
        self.center2_ghz - self.center1_ghz
    }

    /// `a2 / a1`.
    pub fn ratio(&self) -> f64 {
        self.amplitude2 / self.amplitude1
    }

    pub fn sbr(&self) -> f64 {
        self.amplitude1.max(self.amplitude2) / self.background
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CriteriaReport {
    pub separation: bool,
    pub ratio: bool,
    pub width: bool,
    pub sbr: bool,
}

impl CriteriaReport {
    pub fn pass(&self) -> bool {
        self.separation && self.ratio && self.width && self.sbr
    }
}

pub fn check_line_fit(fit: &LineFit, c: &LineCriteria) -> CriteriaReport {
    let within = |v: f64, lo: f64, hi: f64| v >= lo && v <= hi;
    let sep = fit.separation_ghz();
    let ratio = fit.ratio();
    // A non-positive background leaves an unbounded ratio, which passes.
    let sbr = if fit.background > 0.0 { fit.sbr() } else { f64::INFINITY };
    CriteriaReport {
        separation: within(sep, c.separation_min_ghz, c.separation_max_ghz),
        ratio: ratio.is_finite() && within(ratio, c.ratio_min, c.ratio_max),
        width: within(fit.fwhm1_mhz, c.width_min_mhz, c.width_max_mhz)
            && within(fit.fwhm2_mhz, c.width_min_mhz, c.width_max_mhz),
        sbr: fit.amplitude1.max(fit.amplitude2) > 0.0 && sbr > c.min_sbr,
    }
}

/// Criteria check on a double-Lorentzian fit result. An unconverged fit
/// fails every criterion.
pub fn check_criteria(fit: &FitResult, c: &LineCriteria) -> Result<CriteriaReport> {
    if !fit.converged {
        return Ok(CriteriaReport {
            separation: false,
            ratio: false,
            width: false,
            sbr: false,
        });
    }
    Ok(check_line_fit(&LineFit::from_fit(fit)?, c))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Observation {
    /// Photon counts over a probe window.
    Counts(u64),
    /// Raw scan, abscissa in GHz.
    Scan(DataSet),
    /// A scan already reduced to a line fit.
    ScanFit(LineFit),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Action {
    Probe { duration_ms: u32 },
    Scan { range_ghz: f64, center_ghz: f64 },
    /// Off-resonant charge reset (1 mW, 1 s, 785 nm) followed by a scan.
    RepumpThenScan { range_ghz: f64, center_ghz: f64 },
    LockTo { frequency_ghz: f64 },
    /// New scan-window center; A2 sits at 2/3 of the 3 GHz span.
    RecenterWindow { center_ghz: f64 },
    Resume,
}

impl Action {
    pub fn name(&self) -> &'static str {
        match self {
            Action::Probe { .. } => "probe",
            Action::Scan { .. } => "scan",
            Action::RepumpThenScan { .. } => "repump_scan",
            Action::LockTo { .. } => "lock",
            Action::RecenterWindow { .. } => "recenter",
            Action::Resume => "resume",
        }
    }

    /// Whether the controller waits for an observation after this action.
    pub fn expects_observation(&self) -> bool {
        matches!(self, Action::Probe { .. } | Action::Scan { .. } | Action::RepumpThenScan { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Expect {
    Counts,
    Scan,
    Nothing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolState {
    pub phase: Phase,
    /// Scans done in the current phase.
    pub attempts: u8,
    pub expect: Expect,
    pub last_fit: Option<LineFit>,
    pub window_center_ghz: f64,
    /// Frequency the laser is locked to.
    pub lock_ghz: f64,
    /// Where exhausted 3 GHz scans escalate to. After a successful 13 GHz
    /// scan it is `Reset20`, so a cycle cannot bounce between (2) and (3).
    pub escalation: Phase,
}

/// Window center putting `a2` at 2/3 of a 3 GHz span.
pub fn recentered(a2_ghz: f64) -> f64 {
    a2_ghz - 3.0 / 6.0
}

impl ProtocolState {
    /// Idle in `Resume`, locked at `lock_ghz`.
    pub fn new(lock_ghz: f64) -> Self {
        ProtocolState {
            phase: Phase::Resume,
            attempts: 0,
            expect: Expect::Nothing,
            last_fit: None,
            window_center_ghz: recentered(lock_ghz),
            lock_ghz,
            escalation: Phase::Reset13,
        }
    }

    /// Starts a refocusing cycle with a probe on the locked frequency.
    pub fn refocus(&self) -> (ProtocolState, Action) {
        let next = ProtocolState {
            phase: Phase::Probe,
            attempts: 0,
            expect: Expect::Counts,
            escalation: Phase::Reset13,
            ..self.clone()
        };
        (next, Action::Probe { duration_ms: PROBE_MS })
    }

    fn scan(&self, phase: Phase, attempts: u8, center: f64) -> (ProtocolState, Action) {
        let range = phase.range_ghz().expect("scan phase");
        let next = ProtocolState {
            phase,
            attempts,
            expect: Expect::Scan,
            window_center_ghz: center,
            ..self.clone()
        };
        let action = if phase == Phase::Scan3 {
            Action::Scan { range_ghz: range, center_ghz: center }
        } else {
            Action::RepumpThenScan { range_ghz: range, center_ghz: center }
        };
        (next, action)
    }

    /// Advances the protocol. A mismatched observation is an error and
    /// leaves the state untouched.
    pub fn step(&self, obs: &Observation, criteria: &LineCriteria) -> Result<(ProtocolState, Vec<Action>)> {
        match (self.expect, obs) {
            (Expect::Counts, Observation::Counts(n)) => Ok(self.on_counts(*n)),
            (Expect::Scan, Observation::Scan(data)) => {
                let fit = fit_double_lorentzian(data)
                    .ok()
                    .filter(|f| f.converged)
                    .and_then(|f| LineFit::from_fit(&f).ok());
                Ok(self.on_fit(fit, criteria))
            }
            (Expect::Scan, Observation::ScanFit(fit)) => Ok(self.on_fit(Some(*fit), criteria)),
            (expect, obs) => Err(Error::Protocol(format!(
                "in phase {} expecting {expect:?}, got {}",
                self.phase.as_str(),
                match obs {
                    Observation::Counts(_) => "counts",
                    Observation::Scan(_) => "a scan",
                    Observation::ScanFit(_) => "a scan fit",
                }
            ))),
        }
    }

    fn on_counts(&self, counts: u64) -> (ProtocolState, Vec<Action>) {
        if counts > PROBE_THRESHOLD {
            let next = ProtocolState {
                phase: Phase::Resume,
                attempts: 0,
                expect: Expect::Nothing,
                ..self.clone()
            };
            return (next, vec![Action::Resume]);
        }
        let (next, a) = self.scan(Phase::Scan3, 1, self.window_center_ghz);
        (next, vec![a])
    }

    fn on_fit(&self, fit: Option<LineFit>, criteria: &LineCriteria) -> (ProtocolState, Vec<Action>) {
        let accepted = fit.filter(|f| check_line_fit(f, criteria).pass());
        if let Some(f) = accepted {
            let center = recentered(f.center2_ghz);
            if self.phase == Phase::Scan3 {
                let next = ProtocolState {
                    phase: Phase::Resume,
                    attempts: 0,
                    expect: Expect::Nothing,
                    last_fit: Some(f),
                    window_center_ghz: center,
                    lock_ghz: f.center2_ghz,
                    escalation: Phase::Reset13,
                };
                let actions = vec![
                    Action::LockTo { frequency_ghz: f.center2_ghz },
                    Action::RecenterWindow { center_ghz: center },
                    Action::Resume,
                ];
                return (next, actions);
            }
            // Wide scans hand over to a fresh 3 GHz scan.
            let base = ProtocolState {
                last_fit: Some(f),
                escalation: Phase::Reset20,
                ..self.clone()
            };
            let (next, a) = base.scan(Phase::Scan3, 1, center);
            return (next, vec![Action::RecenterWindow { center_ghz: center }, a]);
        }
        let c = self.window_center_ghz;
        let (next, a) = match (self.phase, self.attempts) {
            (Phase::Scan3, n) if n < MAX_ATTEMPTS => self.scan(Phase::Scan3, n + 1, c),
            (Phase::Scan3, _) => self.scan(self.escalation, 1, c),
            (Phase::Reset13, n) if n < MAX_ATTEMPTS => self.scan(Phase::Reset13, n + 1, c),
            _ => self.scan(Phase::Reset20, 1, c),
        };
        (next, vec![a])
    }
}
