use ddspin::fitting::{fit_double_lorentzian, fit_hahn_hyperfine, DataSet};
use ddspin::laserlock::{check_criteria, Action, Environment, EnvironmentConfig, LineCriteria, Observation};
use ddspin::resonance::{resonance, ResonanceQuery};
use ddspin::sequences::{sequence_coherence, tau_sweep};
use ddspin::{ElectronSubspace, FieldConfig, NuclearSpecies, NuclearSpin, SequenceSpec, SignalTrace, SpinSystem};

#[test]
fn simulated_hahn_trace_survives_csv_and_fits() {
    let field = FieldConfig::new(36.0).unwrap();
    let sys = SpinSystem::new(field, ElectronSubspace::default(), vec![NuclearSpin::si29(-23.5, 12.0)]);
    let grid: Vec<f64> = (0..300).map(|i| 0.2 + 0.1 * i as f64).collect();
    let trace = tau_sweep(&sys, 1, &grid).unwrap();
    let text = trace.to_csv();
    let back = SignalTrace::from_csv(&text, "hahn.csv").unwrap();
    assert_eq!(back.values.len(), 300);
    for (a, b) in back.values.iter().zip(&trace.values) {
        assert!((a - b).abs() < 1e-12);
    }
    // The echo is symmetric in the two branch frequencies, so only the
    // reproduced trace is checked, not which mirror solution was found.
    let data = DataSet::from_csv(&text, "hahn.csv").unwrap();
    let fit = fit_hahn_hyperfine(&data, field, ElectronSubspace::default(), &[NuclearSpecies::si29()]).unwrap();
    assert!(fit.fit.rss < 1e-8, "{:?}", fit.fit);
    for (m, y) in fit.fit.fitted.iter().zip(&data.y) {
        assert!((m - y).abs() < 1e-4);
    }
}

#[test]
fn exact_resonance_is_the_deepest_point_nearby() {
    let spin = NuclearSpin::si29(-23.5, 12.0);
    let field = FieldConfig::new(81.0).unwrap();
    let r = resonance(&ResonanceQuery::new(spin.clone(), ElectronSubspace::default(), field, 1).unwrap()).unwrap();
    let sys = SpinSystem::new(field, ElectronSubspace::default(), vec![spin]);
    let m = |t: f64| sequence_coherence(&sys, &SequenceSpec::cpmg(t, 8).unwrap()).total;
    let at = m(r.tau_exact);
    assert!(at < -0.95);
    for d in [-0.2, -0.1, 0.1, 0.2] {
        assert!(m(r.tau_exact + d) > at);
    }
}

#[test]
fn simulated_scan_meets_the_line_criteria() {
    let cfg = EnvironmentConfig { a2_ghz: 0.4, ..EnvironmentConfig::default() };
    let mut env = Environment::new(cfg, 11).unwrap();
    let Some(Observation::Scan(data)) = env.respond(&Action::Scan { range_ghz: 3.0, center_ghz: 0.0 }) else {
        panic!("scan expected");
    };
    let fit = fit_double_lorentzian(&data).unwrap();
    assert!(check_criteria(&fit, &LineCriteria::default()).unwrap().pass(), "{:?}", fit.params);
    assert!((fit.param("c2") - 0.4).abs() < 2e-3);
}
