//! Seeded simulated emitter for closed-loop runs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use super::{Action, Expect, LineCriteria, Observation, Phase, ProtocolState};
use crate::error::{Error, Result};
use crate::fitting::DataSet;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnvironmentConfig {
    /// Initial A2 frequency, GHz relative to the reference.
    pub a2_ghz: f64,
    pub separation_ghz: f64,
    pub fwhm1_mhz: f64,
    pub fwhm2_mhz: f64,
    /// Peak count rate on A2, counts/s.
    pub peak_rate_hz: f64,
    /// A2 peak over A1 peak.
    pub ratio: f64,
    pub background_rate_hz: f64,
    /// RMS random-walk step of the line centers per minute.
    pub drift_mhz_per_min: f64,
    /// Chance of ionizing per refocusing cycle.
    pub ionization_probability: f64,
    pub scan_step_mhz: f64,
    pub dwell_ms: f64,
    /// Poisson counts when true, expectation values otherwise.
    pub shot_noise: bool,
}

impl Default for EnvironmentConfig {
    fn default() -> Self {
        EnvironmentConfig {
            a2_ghz: 0.0,
            separation_ghz: 1.0,
            fwhm1_mhz: 41.0,
            fwhm2_mhz: 24.0,
            peak_rate_hz: 2000.0,
            ratio: 1.2,
            background_rate_hz: 50.0,
            drift_mhz_per_min: 5.0,
            ionization_probability: 0.01,
            scan_step_mhz: 2.0,
            dwell_ms: 10.0,
            shot_noise: true,
        }
    }
}

pub struct Environment {
    cfg: EnvironmentConfig,
    rng: ChaCha8Rng,
    a2_ghz: f64,
    laser_ghz: f64,
    ionized: bool,
}

impl Environment {
    /// Starts with the laser on A2.
    pub fn new(cfg: EnvironmentConfig, seed: u64) -> Result<Self> {
        let positive = [
            cfg.separation_ghz,
            cfg.fwhm1_mhz,
            cfg.fwhm2_mhz,
            cfg.peak_rate_hz,
            cfg.ratio,
            cfg.scan_step_mhz,
            cfg.dwell_ms,
        ];
        if positive.iter().any(|v| !(*v > 0.0)) || cfg.background_rate_hz < 0.0 || cfg.drift_mhz_per_min < 0.0 {
            return Err(Error::InvalidParameter("environment rates, widths and steps must be positive".into()));
        }
        if !(0.0..=1.0).contains(&cfg.ionization_probability) {
            return Err(Error::InvalidParameter("ionization probability must lie in [0, 1]".into()));
        }
        Ok(Environment {
            cfg,
            rng: ChaCha8Rng::seed_from_u64(seed),
            a2_ghz: cfg.a2_ghz,
            laser_ghz: cfg.a2_ghz,
            ionized: false,
        })
    }

    pub fn a2_ghz(&self) -> f64 {
        self.a2_ghz
    }

    pub fn laser_ghz(&self) -> f64 {
        self.laser_ghz
    }

    pub fn ionized(&self) -> bool {
        self.ionized
    }

    pub fn set_laser(&mut self, f_ghz: f64) {
        self.laser_ghz = f_ghz;
    }

    /// Count rate at laser frequency `f`, counts/s.
    pub fn rate(&self, f_ghz: f64) -> f64 {
        let c = &self.cfg;
        if self.ionized {
            return c.background_rate_hz;
        }
        let l = |center: f64, fwhm_mhz: f64| 1.0 / (1.0 + (2e3 * (f_ghz - center) / fwhm_mhz).powi(2));
        c.peak_rate_hz * (l(self.a2_ghz, c.fwhm2_mhz) + l(self.a2_ghz - c.separation_ghz, c.fwhm1_mhz) / c.ratio)
            + c.background_rate_hz
    }

    fn counts(&mut self, mean: f64) -> u64 {
        if !self.cfg.shot_noise || mean <= 0.0 {
            return mean.max(0.0).round() as u64;
        }
        Poisson::new(mean).map(|p| p.sample(&mut self.rng) as u64).unwrap_or(0)
    }

    /// Random-walk drift over `dt_s`.
    pub fn advance(&mut self, dt_s: f64) {
        let sigma_ghz = 1e-3 * self.cfg.drift_mhz_per_min * (dt_s / 60.0).sqrt();
        if sigma_ghz > 0.0 {
            self.a2_ghz += Normal::new(0.0, sigma_ghz).expect("finite sigma").sample(&mut self.rng);
        }
    }

    /// Chance to lose the charge state.
    pub fn maybe_ionize(&mut self) {
        if self.rng.random::<f64>() < self.cfg.ionization_probability {
            self.ionized = true;
        }
    }

    pub fn probe(&mut self, duration_ms: u32) -> u64 {
        self.counts(self.rate(self.laser_ghz) * duration_ms as f64 * 1e-3)
    }

    pub fn scan(&mut self, range_ghz: f64, center_ghz: f64) -> DataSet {
        let step = 1e-3 * self.cfg.scan_step_mhz;
        let n = (range_ghz / step).round() as usize + 1;
        let lo = center_ghz - 0.5 * range_ghz;
        let x: Vec<f64> = (0..n).map(|i| lo + i as f64 * step).collect();
        let dwell = self.cfg.dwell_ms * 1e-3;
        let y: Vec<f64> = x.iter().map(|&f| self.counts(self.rate(f) * dwell) as f64).collect();
        DataSet::new(x, y, "GHz").expect("finite scan")
    }

    /// Duration of a scan, s.
    pub fn scan_duration_s(&self, range_ghz: f64) -> f64 {
        (range_ghz / (1e-3 * self.cfg.scan_step_mhz)).round() * self.cfg.dwell_ms * 1e-3
    }

    /// Executes an action and returns the observation it produces, if any.
    pub fn respond(&mut self, action: &Action) -> Option<Observation> {
        match *action {
            Action::Probe { duration_ms } => Some(Observation::Counts(self.probe(duration_ms))),
            Action::Scan { range_ghz, center_ghz } => Some(Observation::Scan(self.scan(range_ghz, center_ghz))),
            Action::RepumpThenScan { range_ghz, center_ghz } => {
                self.ionized = false;
                Some(Observation::Scan(self.scan(range_ghz, center_ghz)))
            }
            Action::LockTo { frequency_ghz } => {
                self.laser_ghz = frequency_ghz;
                None
            }
            Action::RecenterWindow { .. } | Action::Resume => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoopConfig {
    pub duration_s: f64,
    pub cadence_s: f64,
    pub seed: u64,
    pub criteria: LineCriteria,
    pub environment: EnvironmentConfig,
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig {
            duration_s: 3600.0,
            cadence_s: 60.0,
            seed: 0,
            criteria: LineCriteria::default(),
            environment: EnvironmentConfig::default(),
        }
    }
}

/// One run-log line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub t_s: f64,
    pub phase: Phase,
    pub action: String,
    /// Probe counts, or the fitted A2 center for scans (NaN if no fit).
    pub counts_or_fit_center_ghz: f64,
    /// Laser minus A2 when the action was issued, MHz.
    pub locked_error_mhz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopReport {
    pub rows: Vec<LogRow>,
    pub probes: usize,
    /// Probes with the laser within one fitted A2 linewidth of the line.
    pub probes_locked: usize,
    pub ionizations: usize,
}

impl LoopReport {
    pub fn locked_fraction(&self) -> f64 {
        if self.probes == 0 {
            return 0.0;
        }
        self.probes_locked as f64 / self.probes as f64
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t_s,phase,action,counts_or_fit_center_ghz,locked_error_mhz\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                crate::io::fmt_num(r.t_s),
                r.phase.as_str(),
                r.action,
                crate::io::fmt_num(r.counts_or_fit_center_ghz),
                crate::io::fmt_num(r.locked_error_mhz)
            ));
        }
        out
    }
}

/// Bound on protocol steps per refocusing cycle; a guard, never reached in
/// practice because `Reset20` on a live emitter always succeeds.
const MAX_CYCLE_STEPS: usize = 64;

/// Runs the refocusing protocol every `cadence_s` against a seeded drifting
/// emitter.
pub fn run_closed_loop(cfg: &LoopConfig) -> Result<LoopReport> {
    if !(cfg.cadence_s > 0.0) || !(cfg.duration_s >= 0.0) {
        return Err(Error::InvalidParameter("cadence must be positive and duration non-negative".into()));
    }
    let mut env = Environment::new(cfg.environment, cfg.seed)?;
    let mut state = ProtocolState::new(env.laser_ghz());
    let mut report = LoopReport {
        rows: Vec::new(),
        probes: 0,
        probes_locked: 0,
        ionizations: 0,
    };
    let mut t = 0.0;
    let n_probes = (cfg.duration_s / cfg.cadence_s + 1e-9).floor() as usize;
    for k in 1..=n_probes {
        let due = k as f64 * cfg.cadence_s;
        if due > t {
            env.advance(due - t);
            t = due;
        }
        let was_ionized = env.ionized();
        env.maybe_ionize();
        if env.ionized() && !was_ionized {
            report.ionizations += 1;
        }
        let linewidth = state.last_fit.map_or(cfg.environment.fwhm2_mhz, |f| f.fwhm2_mhz);
        let error_mhz = 1e3 * (env.laser_ghz() - env.a2_ghz());
        report.probes += 1;
        if error_mhz.abs() <= linewidth {
            report.probes_locked += 1;
        }
        let (next, probe) = state.refocus();
        state = next;
        let mut pending = vec![probe];
        for _ in 0..MAX_CYCLE_STEPS {
            let mut obs = None;
            for action in &pending {
                let err = 1e3 * (env.laser_ghz() - env.a2_ghz());
                let before = state.phase;
                let o = env.respond(action);
                let dt = match action {
                    Action::Probe { duration_ms } => *duration_ms as f64 * 1e-3,
                    Action::Scan { range_ghz, .. } | Action::RepumpThenScan { range_ghz, .. } => {
                        env.scan_duration_s(*range_ghz)
                    }
                    _ => 0.0,
                };
                let value = match (&o, action) {
                    (Some(Observation::Counts(n)), _) => *n as f64,
                    (_, Action::LockTo { frequency_ghz }) => *frequency_ghz,
                    _ => f64::NAN,
                };
                report.rows.push(LogRow {
                    t_s: t,
                    phase: before,
                    action: action.name().to_string(),
                    counts_or_fit_center_ghz: value,
                    locked_error_mhz: err,
                });
                env.advance(dt);
                t += dt;
                if o.is_some() {
                    obs = o;
                }
            }
            let Some(o) = obs else { break };
            let (next, actions) = state.step(&o, &cfg.criteria)?;
            if let (Observation::Scan(_), Some(row)) = (&o, report.rows.last_mut()) {
                if next.last_fit != state.last_fit {
                    row.counts_or_fit_center_ghz = next.last_fit.map_or(f64::NAN, |f| f.center2_ghz);
                }
            }
            state = next;
            pending = actions;
            if state.expect == Expect::Nothing {
                // Drain the closing actions (lock, recenter, resume).
                for action in &pending {
                    env.respond(action);
                    report.rows.push(LogRow {
                        t_s: t,
                        phase: state.phase,
                        action: action.name().to_string(),
                        counts_or_fit_center_ghz: match action {
                            Action::LockTo { frequency_ghz } => *frequency_ghz,
                            _ => f64::NAN,
                        },
                        locked_error_mhz: 1e3 * (env.laser_ghz() - env.a2_ghz()),
                    });
                }
                break;
            }
        }
    }
    Ok(report)
}
