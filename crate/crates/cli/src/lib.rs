//! `ddspin` command-line front end. Every subcommand prints one JSON
//! document on stdout; traces go to CSV files named by `--out`.
//!
//! Exit status: 0 success, 1 a failed check or a computation that could not
//! be carried out, 2 bad usage or unreadable input.

pub mod config;
pub mod reproduce;

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use ddspin::fitting::{
    analyze_yield, fit_cpmg_refine, fit_double_lorentzian, fit_envelope, fit_g2, fit_hahn_hyperfine, register_grid,
    DataSet, FitResult,
};
use ddspin::gates::{gate_record, GateKind, GateTarget};
use ddspin::io::{parse_commented_csv, round_sig};
use ddspin::laserlock::{run_closed_loop, LoopConfig};
use ddspin::resonance::{b_crit, error_sweep, resonance, ResonanceQuery, EPSILON_N_DEFAULT};
use ddspin::sequences::{apply_envelope, pulse_sweep, tau_sweep, EnvelopeParams};
use ddspin::{AbscissaUnit, ElectronSubspace, Error, NuclearSpecies, SequenceSpec, SignalTrace};
use serde_json::{json, Value};

use config::{load_system, parse_json, read_text};

#[derive(Parser, Debug)]
#[command(name = "ddspin", version, about = "Electron-nuclear spin dynamics under dynamical decoupling")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Simulate sequence signals.
    #[command(subcommand)]
    Simulate(SimulateCmd),
    /// CPMG resonance time of one nucleus.
    Resonance(ResonanceArgs),
    /// Critical field above which the first-order resonance holds.
    Bcrit(BcritArgs),
    /// Relative error of the first-order resonance time against field.
    ErrorSweep(ErrorSweepArgs),
    /// Gate fidelity and conditional rotations.
    Gates(GatesArgs),
    /// Fit measured data.
    #[command(subcommand)]
    Fit(FitCmd),
    /// Implantation statistics.
    #[command(subcommand)]
    Analyze(AnalyzeCmd),
    /// Laser refocusing protocol.
    #[command(subcommand)]
    Lock(LockCmd),
    /// Run a named reproduction check.
    Reproduce {
        /// tau538, bcrit605, fidelities, fig4b, fig4c, figS17, figS18 or yield.
        name: String,
    },
}

#[derive(Args, Debug)]
pub struct TauGrid {
    #[arg(long)]
    pub tau_min: f64,
    #[arg(long)]
    pub tau_max: f64,
    #[arg(long, default_value_t = 1000)]
    pub points: usize,
}

impl TauGrid {
    fn grid(&self) -> Result<Vec<f64>, Error> {
        if self.points < 2 || !(self.tau_max > self.tau_min) || self.tau_min < 0.0 {
            return Err(Error::InvalidParameter(
                "need --points >= 2 and 0 <= --tau-min < --tau-max".into(),
            ));
        }
        let step = (self.tau_max - self.tau_min) / (self.points - 1) as f64;
        Ok((0..self.points).map(|i| self.tau_min + step * i as f64).collect())
    }
}

#[derive(Args, Debug)]
pub struct EnvelopeArgs {
    /// Coherence time (us) of a stretched-exponential envelope.
    #[arg(long)]
    pub t2: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub stretch: f64,
}

#[derive(Subcommand, Debug)]
pub enum SimulateCmd {
    /// Hahn-echo coherence against tau (us).
    Hahn {
        #[arg(long)]
        system: PathBuf,
        #[command(flatten)]
        grid: TauGrid,
        #[command(flatten)]
        envelope: EnvelopeArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// CPMG coherence against tau (us) for a fixed pulse count.
    Cpmg {
        #[arg(long)]
        system: PathBuf,
        /// Number of pi pulses (even).
        #[arg(long)]
        n: u32,
        #[command(flatten)]
        grid: TauGrid,
        #[command(flatten)]
        envelope: EnvelopeArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// CPMG coherence at fixed tau for N = 0, 2, ..., n-max.
    PulseSweep {
        #[arg(long)]
        system: PathBuf,
        #[arg(long)]
        tau: f64,
        /// Largest pulse count; counts run 0, 2, ... up to it.
        #[arg(long)]
        n_max: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
pub struct ResonanceArgs {
    #[arg(long)]
    pub system: PathBuf,
    /// Index of the nucleus in the system file.
    #[arg(long, default_value_t = 0)]
    pub spin: usize,
    #[arg(long, default_value_t = 1)]
    pub k: u32,
}

#[derive(Args, Debug)]
pub struct BcritArgs {
    #[arg(long)]
    pub system: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub spin: usize,
    /// Tolerated tilt of the conditional axes, rad.
    #[arg(long, default_value_t = EPSILON_N_DEFAULT)]
    pub epsilon_n: f64,
}

#[derive(Args, Debug)]
pub struct ErrorSweepArgs {
    #[arg(long)]
    pub system: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub spin: usize,
    #[arg(long, default_value_t = 1)]
    pub k: u32,
    #[arg(long)]
    pub b_min: f64,
    #[arg(long)]
    pub b_max: f64,
    #[arg(long, default_value_t = 100)]
    pub points: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum GateArg {
    Bell,
    X,
    Identity,
}

#[derive(Args, Debug)]
pub struct GatesArgs {
    #[arg(long)]
    pub system: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub spin: usize,
    #[arg(long)]
    pub tau: f64,
    #[arg(long)]
    pub n: u32,
    #[arg(long, value_enum)]
    pub gate: GateArg,
}

#[derive(Subcommand, Debug)]
pub enum FitCmd {
    /// Hahn-echo trace: species and couplings of a single nucleus.
    Hyperfine {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        field: f64,
        #[arg(long, default_value = "0.5,1.5")]
        subspace: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// CPMG tau sweep: joint refinement from the couplings in `--system`.
    Cpmg {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        system: PathBuf,
        #[arg(long)]
        n: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Stretched-exponential coherence decay.
    Envelope {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Two-line PLE scan, abscissa in GHz.
    Ple {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Second-order correlation, delay in ns.
    G2 {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Subcommand, Debug)]
pub enum AnalyzeCmd {
    /// Poisson fit of ions per hole from a count histogram.
    Yield {
        /// Spots holding 0, 1, 2, ... defects, comma separated.
        #[arg(long)]
        histogram: String,
        /// Ions per cm^2.
        #[arg(long)]
        dose: f64,
        #[arg(long)]
        hole_nm: f64,
    },
    /// Registers positions (`x,y` CSV, nm) to a square grid.
    Grid {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        pitch: f64,
    },
}

#[derive(Subcommand, Debug)]
pub enum LockCmd {
    /// Seeded closed-loop run against a drifting emitter.
    Simulate {
        /// JSON with `criteria`, `environment`, `duration_s`, `cadence_s`.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        duration: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Failure of a command, mapped to an exit status.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Domain(Error),
    CheckFailed,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Parse { .. }
            | Error::Io(_)
            | Error::InvalidParameter(_)
            | Error::UnknownSpecies(_)
            | Error::InvalidSequence(_)
            | Error::NucleusIndex { .. } => Failure::Usage(e.to_string()),
            other => Failure::Domain(other),
        }
    }
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Domain(_) | Failure::CheckFailed => 1,
        }
    }
}

type CmdResult = std::result::Result<Value, Failure>;

/// Runs `argv` (program name first), writing JSON to `out` and diagnostics to
/// `err`. Returns the exit status.
pub fn run<I, S>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { out.write_all(text.as_bytes()) } else { err.write_all(text.as_bytes()) };
            return code;
        }
    };
    let reproduce = matches!(cli.command, Command::Reproduce { .. });
    let result = dispatch(cli.command);
    let (value, code) = match result {
        Ok(v) => (Some(v), 0),
        Err(Failure::CheckFailed) => (None, 1),
        Err(f) => {
            let _ = match &f {
                Failure::Usage(m) => writeln!(err, "error: {m}"),
                Failure::Domain(e) => writeln!(err, "error: {e}"),
                Failure::CheckFailed => Ok(()),
            };
            return f.exit_code();
        }
    };
    if let Some(v) = value {
        let pass = v.get("pass").and_then(Value::as_bool);
        let _ = writeln!(out, "{}", serde_json::to_string_pretty(&round_json(v)).expect("serializable"));
        if reproduce && pass == Some(false) {
            let _ = writeln!(err, "check failed");
            return 1;
        }
    }
    code
}

/// Rounds every number to 12 significant digits.
pub fn round_json(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = round_sig(n.as_f64().expect("f64"));
            serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number)
        }
        Value::Array(a) => Value::Array(a.into_iter().map(round_json).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, round_json(v))).collect()),
        other => other,
    }
}

fn to_value<T: serde::Serialize>(t: &T) -> Value {
    serde_json::to_value(t).expect("serializable")
}

fn write_file(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

/// Writes the trace when `--out` is given; otherwise inlines it.
fn emit_trace(trace: &SignalTrace, out: Option<&Path>, mut summary: Value) -> CmdResult {
    match out {
        Some(p) => {
            write_file(p, &trace.to_csv())?;
            summary["out"] = json!(p.display().to_string());
        }
        None => {
            summary["abscissa"] = to_value(&trace.abscissa);
            summary["values"] = to_value(&trace.values);
        }
    }
    summary["unit"] = json!(trace.unit.as_str());
    summary["points"] = json!(trace.len());
    Ok(summary)
}

fn load_data(path: &Path) -> Result<DataSet, Failure> {
    let name = path.display().to_string();
    let data = DataSet::from_csv(&read_text(path)?, &name)?;
    if data.is_empty() {
        return Err(Failure::Usage(format!("{name}: empty input, no data rows")));
    }
    Ok(data)
}

fn envelope(args: &EnvelopeArgs, trace: SignalTrace) -> Result<SignalTrace, Error> {
    match args.t2 {
        Some(t2) => Ok(apply_envelope(&trace, &EnvelopeParams::new(1.0, t2, args.stretch, 0.0)?)),
        None => Ok(trace),
    }
}

fn emit_fit(mut fit: FitResult, data: &DataSet, out: Option<&Path>) -> CmdResult {
    if let Some(p) = out {
        let unit = data.x_unit.parse().unwrap_or(AbscissaUnit::Microseconds);
        let trace = SignalTrace::new(data.x.clone(), fit.fitted.clone(), unit)?;
        write_file(p, &trace.to_csv())?;
    }
    fit.fitted.clear();
    Ok(to_value(&fit))
}

fn minimum_summary(trace: &SignalTrace) -> Value {
    match trace.argmin() {
        Some((i, v)) => json!({"minimum": {"abscissa": trace.abscissa[i], "value": v}}),
        None => json!({}),
    }
}

fn dispatch(cmd: Command) -> CmdResult {
    match cmd {
        Command::Simulate(s) => simulate(s),
        Command::Resonance(a) => {
            let sys = load_system(&a.system)?;
            let q = ResonanceQuery::new(sys.nucleus(a.spin)?.clone(), sys.subspace, sys.field, a.k)?;
            let r = resonance(&q)?;
            Ok(json!({
                "spin": a.spin,
                "k": a.k,
                "field_gauss": sys.field.b,
                "tau_zero_us": r.tau_zero,
                "epsilon_tau": r.epsilon_tau,
                "tau_approx_us": r.tau_approx,
                "tau_exact_us": r.tau_exact,
                "rel_error": r.rel_error,
            }))
        }
        Command::Bcrit(a) => {
            let sys = load_system(&a.system)?;
            let b = b_crit(sys.nucleus(a.spin)?, sys.subspace, a.epsilon_n)?;
            Ok(json!({"spin": a.spin, "epsilon_n": a.epsilon_n, "b_crit_gauss": b}))
        }
        Command::ErrorSweep(a) => {
            let sys = load_system(&a.system)?;
            if a.points < 2 || !(a.b_max > a.b_min) {
                return Err(Failure::Usage("need --points >= 2 and --b-min < --b-max".into()));
            }
            let grid: Vec<f64> = (0..a.points)
                .map(|i| a.b_min + (a.b_max - a.b_min) * i as f64 / (a.points - 1) as f64)
                .collect();
            let sweep = error_sweep(sys.nucleus(a.spin)?, sys.subspace, &grid, a.k)?;
            let failures: Vec<Value> = sweep
                .failures
                .iter()
                .map(|(b, e)| json!({"field_gauss": b, "error": e.to_string()}))
                .collect();
            let summary = json!({"max_error": sweep.max_error(), "failures": failures});
            emit_trace(&sweep.trace, a.out.as_deref(), summary)
        }
        Command::Gates(a) => {
            let sys = load_system(&a.system)?;
            let kind = match a.gate {
                GateArg::Bell => GateKind::BellFamily,
                GateArg::X => GateKind::NuclearX,
                GateArg::Identity => GateKind::Identity,
            };
            let rec = gate_record(&sys, &SequenceSpec::cpmg(a.tau, a.n)?, GateTarget { kind, nucleus: a.spin })?;
            Ok(to_value(&rec))
        }
        Command::Fit(f) => fit(f),
        Command::Analyze(a) => analyze(a),
        Command::Lock(LockCmd::Simulate { config, seed, duration, out }) => {
            let mut cfg: LoopConfig = match config {
                Some(p) => parse_json(&read_text(&p)?, &p.display().to_string())?,
                None => LoopConfig::default(),
            };
            cfg.seed = seed;
            if let Some(d) = duration {
                cfg.duration_s = d;
            }
            let report = run_closed_loop(&cfg)?;
            if let Some(p) = &out {
                write_file(p, &report.to_csv())?;
            }
            let mut v = json!({
                "seed": seed,
                "probes": report.probes,
                "probes_locked": report.probes_locked,
                "locked_fraction": report.locked_fraction(),
                "ionizations": report.ionizations,
                "log_rows": report.rows.len(),
            });
            if let Some(p) = out {
                v["out"] = json!(p.display().to_string());
            }
            Ok(v)
        }
        Command::Reproduce { name } => Ok(to_value(&reproduce::run(&name)?)),
    }
}

fn simulate(cmd: SimulateCmd) -> CmdResult {
    match cmd {
        SimulateCmd::Hahn { system, grid, envelope: env, out } => {
            let sys = load_system(&system)?;
            let trace = envelope(&env, tau_sweep(&sys, 1, &grid.grid()?)?)?;
            let summary = minimum_summary(&trace);
            emit_trace(&trace, out.as_deref(), summary)
        }
        SimulateCmd::Cpmg { system, n, grid, envelope: env, out } => {
            let sys = load_system(&system)?;
            SequenceSpec::cpmg(1.0, n)?;
            let trace = envelope(&env, tau_sweep(&sys, n, &grid.grid()?)?)?;
            let summary = minimum_summary(&trace);
            emit_trace(&trace, out.as_deref(), summary)
        }
        SimulateCmd::PulseSweep { system, tau, n_max, out } => {
            let sys = load_system(&system)?;
            let ns: Vec<u32> = (0..=n_max).step_by(2).collect();
            let trace = pulse_sweep(&sys, tau, &ns)?;
            emit_trace(&trace, out.as_deref(), json!({"tau_us": tau}))
        }
    }
}

fn parse_subspace(s: &str) -> Result<ElectronSubspace, Failure> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Failure::Usage(format!("--subspace expects `s0,s1`, got `{s}`")))?;
    match parts[..] {
        [s0, s1] => Ok(ElectronSubspace::new(s0, s1)?),
        _ => Err(Failure::Usage(format!("--subspace expects `s0,s1`, got `{s}`"))),
    }
}

fn fit(cmd: FitCmd) -> CmdResult {
    match cmd {
        FitCmd::Hyperfine { data, field, subspace, out } => {
            let d = load_data(&data)?;
            let sub = parse_subspace(&subspace)?;
            let r = fit_hahn_hyperfine(&d, ddspin::FieldConfig::new(field)?, sub, &NuclearSpecies::registry())?;
            let candidates: Vec<Value> =
                r.candidates.iter().map(|(s, rss)| json!({"species": s, "rss": rss})).collect();
            let mut v = json!({
                "species": r.species.name,
                "ambiguous": r.ambiguous,
                "candidates": candidates,
            });
            v["fit"] = emit_fit(r.fit, &d, out.as_deref())?;
            Ok(v)
        }
        FitCmd::Cpmg { data, system, n, out } => {
            let d = load_data(&data)?;
            let sys = load_system(&system)?;
            let fit = fit_cpmg_refine(&d, sys.field, sys.subspace, n, &sys.nuclei, sys.nuclei.len())?;
            emit_fit(fit, &d, out.as_deref())
        }
        FitCmd::Envelope { data, out } => {
            let d = load_data(&data)?;
            emit_fit(fit_envelope(&d)?, &d, out.as_deref())
        }
        FitCmd::Ple { data, out } => {
            let d = load_data(&data)?;
            emit_fit(fit_double_lorentzian(&d)?, &d, out.as_deref())
        }
        FitCmd::G2 { data, out } => {
            let d = load_data(&data)?;
            emit_fit(fit_g2(&d)?, &d, out.as_deref())
        }
    }
}

fn analyze(cmd: AnalyzeCmd) -> CmdResult {
    match cmd {
        AnalyzeCmd::Yield { histogram, dose, hole_nm } => {
            let h: Vec<u64> = histogram
                .split(',')
                .map(|p| p.trim().parse::<u64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| Failure::Usage(format!("--histogram expects comma-separated counts, got `{histogram}`")))?;
            Ok(to_value(&analyze_yield(&h, dose, hole_nm)?))
        }
        AnalyzeCmd::Grid { data, pitch } => {
            let name = data.display().to_string();
            let csv = parse_commented_csv(&read_text(&data)?, &name)?;
            if csv.header != ["x", "y"] {
                return Err(Failure::Usage(format!("{name}:1: expected header `x,y`")));
            }
            let pts: Vec<(f64, f64)> = csv.rows.iter().map(|(_, r)| (r[0], r[1])).collect();
            if pts.is_empty() {
                return Err(Failure::Usage(format!("{name}: empty input, no data rows")));
            }
            let f = register_grid(&pts, pitch)?;
            Ok(json!({
                "model": to_value(&f.model),
                "variance_nm": f.variance,
                "points": pts.len(),
            }))
        }
    }
}
