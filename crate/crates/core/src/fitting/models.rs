use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sequences::{hahn_modulation_depth, nucleus_coherence, SequenceSpec};
use crate::spinmath::{ElectronSubspace, FieldConfig, HyperfineCoupling, NuclearSpecies, NuclearSpin};

use super::engine::{least_squares, rss, Bounds, FitOptions};
use super::{DataSet, FitResult};

const COUPLING_LIMIT: f64 = 200.0;

/// Best `(amplitude, offset)` for `y ~ amplitude * m + offset`.
fn linear_amplitude(m: &[f64], y: &[f64]) -> (f64, f64) {
    let n = m.len() as f64;
    let (mm, my) = (m.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = m.iter().zip(y).map(|(a, b)| (a - mm) * (b - my)).sum();
    let sxx: f64 = m.iter().map(|a| (a - mm).powi(2)).sum();
    let amp = if sxx > 1e-300 { sxy / sxx } else { 0.0 };
    (amp, my - amp * mm)
}

fn spin(species: &NuclearSpecies, a_par: f64, a_perp: f64) -> NuclearSpin {
    NuclearSpin::new(
        species.clone(),
        HyperfineCoupling {
            a_par,
            a_perp: a_perp.abs(),
        },
    )
}

fn stretched(t: f64, t2: f64, n: f64) -> f64 {
    (-(t.abs() / t2).powf(n)).exp()
}

/// Hahn-echo coherence of one nucleus at each `tau`.
fn hahn_coherence(nucleus: &NuclearSpin, sub: ElectronSubspace, field: FieldConfig, taus: &[f64]) -> Vec<f64> {
    taus.iter()
        .map(|&t| {
            let spec = SequenceSpec::hahn(t.max(0.0)).expect("non-negative tau");
            nucleus_coherence(nucleus, sub, field, &spec)
        })
        .collect()
}

pub const HAHN_PARAMS: [&str; 6] = ["a_par", "a_perp", "amplitude", "t2", "n_stretch", "y0"];

/// Hahn-echo fit for one candidate species, with the identified species.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HahnFit {
    pub species: NuclearSpecies,
    pub fit: FitResult,
    /// Residual of the best fit for every candidate, by species name.
    pub candidates: Vec<(String, f64)>,
    /// The two best candidates differ by less than 1% in residual.
    pub ambiguous: bool,
}

fn fit_hahn_species(data: &DataSet, field: FieldConfig, sub: ElectronSubspace, species: &NuclearSpecies) -> Result<FitResult> {
    let xmax = data.x.iter().fold(0.0f64, |a, b| a.max(b.abs())).max(1e-9);
    // Coarse grid over the couplings with a linear amplitude and offset.
    let grid: Vec<(f64, f64)> = (0..=60)
        .flat_map(|i| (0..=30).map(move |j| (-60.0 + 2.0 * i as f64, 2.0 * j as f64)))
        .collect();
    let (a0, p0, amp0, y00) = grid
        .par_iter()
        .map(|&(a, p)| {
            let m = hahn_coherence(&spin(species, a, p), sub, field, &data.x);
            let (amp, y0) = linear_amplitude(&m, &data.y);
            let pred: Vec<f64> = m.iter().map(|v| amp * v + y0).collect();
            (rss(data, &pred), a, p, amp, y0)
        })
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, a, p, amp, y0)| (a, p, amp, y0))
        .expect("grid is non-empty");

    let predict = |p: &[f64], x: &[f64]| {
        let m = hahn_coherence(&spin(species, p[0], p[1]), sub, field, x);
        x.iter().zip(m).map(|(t, m)| p[2] * stretched(*t, p[3], p[4]) * m + p[5]).collect()
    };
    let init = [a0, p0, amp0, 20.0 * xmax, 1.0, y00];
    let bounds = Bounds::new(
        vec![-COUPLING_LIMIT, 0.0, -1e3, 1e-3 * xmax, 0.3, -1e3],
        vec![COUPLING_LIMIT, COUPLING_LIMIT, 1e3, 1e4 * xmax, 4.0, 1e3],
    )?;
    let opts = FitOptions {
        initial_step: Some(vec![1.0, 1.0, 0.1 * amp0.abs().max(1e-3), 5.0 * xmax, 0.2, 0.1 * amp0.abs().max(1e-3)]),
        ..FitOptions::default()
    };
    let mut fit = least_squares(&format!("hahn:{}", species.name), predict, &HAHN_PARAMS, data, &init, &bounds, &opts)?;
    let k = hahn_modulation_depth(&spin(species, fit.param("a_par"), fit.param("a_perp")), sub, field).unwrap_or(0.0);
    let scale = data.y.iter().fold(0.0f64, |a, b| a.max(b.abs())).max(1e-300);
    if k * fit.param("amplitude").abs() < 1e-3 * scale {
        fit.warnings.push("no resolvable modulation: couplings are not identifiable".into());
    }
    Ok(fit)
}

/// Fits a Hahn-echo trace (abscissa `tau` in us) with the single-nucleus
/// echo times a stretched exponential, for each candidate species, and
/// keeps the species with the lowest residual.
pub fn fit_hahn_hyperfine(
    data: &DataSet,
    field: FieldConfig,
    subspace: ElectronSubspace,
    candidates: &[NuclearSpecies],
) -> Result<HahnFit> {
    if candidates.is_empty() {
        return Err(Error::InvalidParameter("no candidate species".into()));
    }
    let fits: Vec<Result<FitResult>> = candidates
        .par_iter()
        .map(|s| fit_hahn_species(data, field, subspace, s))
        .collect();
    let mut scored: Vec<(usize, FitResult)> = Vec::new();
    for (i, f) in fits.into_iter().enumerate() {
        let f = f?;
        if f.converged {
            scored.push((i, f));
        }
    }
    if scored.is_empty() {
        return Err(Error::FitFailed("no candidate species fit converged".into()));
    }
    scored.sort_by(|a, b| a.1.rss.total_cmp(&b.1.rss));
    let ambiguous = scored.len() > 1 && scored[1].1.rss - scored[0].1.rss <= 0.01 * scored[0].1.rss;
    let candidates_rss = scored
        .iter()
        .map(|(i, f)| (candidates[*i].name.clone(), f.rss))
        .collect();
    let (best_i, mut fit) = scored.swap_remove(0);
    if ambiguous {
        fit.warnings.push("species ambiguous: residuals within 1%".into());
    }
    Ok(HahnFit {
        species: candidates[best_i].clone(),
        fit,
        candidates: candidates_rss,
        ambiguous,
    })
}

/// Jointly refines the couplings of the first `n_spins` nuclei of `init`
/// against an `n_pulses` CPMG tau sweep, with model
/// `amplitude * prod_i M_i(tau) + y0`.
pub fn fit_cpmg_refine(
    data: &DataSet,
    field: FieldConfig,
    subspace: ElectronSubspace,
    n_pulses: u32,
    init: &[NuclearSpin],
    n_spins: usize,
) -> Result<FitResult> {
    if n_spins > init.len() {
        return Err(Error::InvalidParameter(format!(
            "{n_spins} spins requested but only {} initial nuclei given",
            init.len()
        )));
    }
    SequenceSpec::cpmg(1.0, n_pulses)?;
    let species: Vec<NuclearSpecies> = init[..n_spins].iter().map(|s| s.species.clone()).collect();
    let product = |p: &[f64], x: &[f64]| -> Vec<f64> {
        let nuclei: Vec<NuclearSpin> = species
            .iter()
            .enumerate()
            .map(|(i, s)| spin(s, p[2 * i], p[2 * i + 1]))
            .collect();
        x.iter()
            .map(|&t| {
                let spec = SequenceSpec::cpmg(t.max(0.0), n_pulses).expect("validated pulse count");
                nuclei.iter().map(|n| nucleus_coherence(n, subspace, field, &spec)).product()
            })
            .collect()
    };
    let mut names: Vec<String> = Vec::new();
    let mut start = Vec::new();
    let mut steps = Vec::new();
    for (i, s) in init[..n_spins].iter().enumerate() {
        names.push(format!("a_par_{i}"));
        names.push(format!("a_perp_{i}"));
        start.push(s.coupling.a_par);
        start.push(s.coupling.a_perp);
        steps.push(0.5);
        steps.push(0.5);
    }
    let (amp, y0) = linear_amplitude(&product(&start, &data.x), &data.y);
    let amp = if n_spins == 0 { 0.0 } else { amp };
    let y0 = if n_spins == 0 { data.y.iter().sum::<f64>() / data.len() as f64 } else { y0 };
    names.push("amplitude".into());
    names.push("y0".into());
    start.extend([amp, y0]);
    steps.extend([0.05 * amp.abs().max(0.1), 0.05 * amp.abs().max(0.1)]);
    let mut lower = Vec::new();
    let mut upper = Vec::new();
    for _ in 0..n_spins {
        lower.extend([-COUPLING_LIMIT, 0.0]);
        upper.extend([COUPLING_LIMIT, COUPLING_LIMIT]);
    }
    lower.extend([-1e3, -1e3]);
    upper.extend([1e3, 1e3]);
    let bounds = Bounds::new(lower, upper)?;
    let predict = |p: &[f64], x: &[f64]| -> Vec<f64> {
        let (amp, y0) = (p[2 * n_spins], p[2 * n_spins + 1]);
        product(p, x).into_iter().map(|m| amp * m + y0).collect()
    };
    let name_refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let opts = FitOptions {
        initial_step: Some(steps),
        ..FitOptions::default()
    };
    least_squares(&format!("cpmg{n_pulses}x{n_spins}"), predict, &name_refs, data, &start, &bounds, &opts)
}

/// `A exp(-(t/t2)^n) + y0`.
pub fn fit_envelope(data: &DataSet) -> Result<FitResult> {
    if data.len() < 4 {
        return Err(Error::InvalidParameter("envelope fit needs at least 4 points".into()));
    }
    let mut idx: Vec<usize> = (0..data.len()).collect();
    idx.sort_by(|&a, &b| data.x[a].total_cmp(&data.x[b]));
    let xmax = data.x.iter().fold(0.0f64, |a, b| a.max(b.abs())).max(1e-12);
    let tail = (data.len() / 10).max(1);
    let y0 = idx[idx.len() - tail..].iter().map(|&i| data.y[i]).sum::<f64>() / tail as f64;
    let a = data.y[idx[0]] - y0;
    let t2 = idx
        .iter()
        .find(|&&i| (data.y[i] - y0).abs() < a.abs() / std::f64::consts::E)
        .map(|&i| data.x[i].abs())
        .filter(|&t| t > 0.0)
        .unwrap_or(0.5 * xmax);
    let predict = |p: &[f64], x: &[f64]| x.iter().map(|t| p[0] * stretched(*t, p[1], p[2]) + p[3]).collect();
    let bounds = Bounds::new(vec![-1e6, 1e-6 * xmax, 0.2, -1e6], vec![1e6, 1e3 * xmax, 5.0, 1e6])?;
    let scale = a.abs().max(y0.abs()).max(1e-12);
    let opts = FitOptions {
        initial_step: Some(vec![0.1 * scale, 0.2 * t2, 0.2, 0.05 * scale]),
        ..FitOptions::default()
    };
    least_squares("envelope", predict, &["amplitude", "t2", "n_stretch", "y0"], data, &[a, t2, 1.0, y0], &bounds, &opts)
}

/// Two Lorentzians, height form, plus a constant:
/// `a1 / (1 + (2(f-c1)/w1)^2) + a2 / (1 + (2(f-c2)/w2)^2) + bg`.
/// `p = [c1, w1, a1, c2, w2, a2, bg]`, widths are FWHM.
pub fn double_lorentzian(p: &[f64], f: f64) -> f64 {
    let l = |c: f64, w: f64, a: f64| a / (1.0 + (2.0 * (f - c) / w).powi(2));
    l(p[0], p[1], p[2]) + l(p[3], p[4], p[5]) + p[6]
}

/// Peak index and half-maximum width (in samples) above `base`.
fn peak_near(x: &[f64], y: &[f64], base: f64, mask: &dyn Fn(usize) -> bool) -> Option<(usize, f64)> {
    let i = (0..y.len()).filter(|&i| mask(i)).max_by(|&a, &b| y[a].total_cmp(&y[b]))?;
    let half = base + 0.5 * (y[i] - base);
    let mut lo = i;
    while lo > 0 && y[lo] > half {
        lo -= 1;
    }
    let mut hi = i;
    while hi + 1 < y.len() && y[hi] > half {
        hi += 1;
    }
    Some((i, (x[hi] - x[lo]).abs()))
}

/// Double-Lorentzian fit of a frequency scan (abscissa in GHz). Peak 2 is
/// the higher-frequency line. Derived values: `separation_ghz`,
/// `ratio` (`a2 / a1`), `fwhm1_mhz`, `fwhm2_mhz` and `sbr`, the larger
/// amplitude over the background.
pub fn fit_double_lorentzian(data: &DataSet) -> Result<FitResult> {
    if data.len() < 8 {
        return Err(Error::InvalidParameter("double-Lorentzian fit needs at least 8 points".into()));
    }
    let mut idx: Vec<usize> = (0..data.len()).collect();
    idx.sort_by(|&a, &b| data.x[a].total_cmp(&data.x[b]));
    let x: Vec<f64> = idx.iter().map(|&i| data.x[i]).collect();
    let y: Vec<f64> = idx.iter().map(|&i| data.y[i]).collect();
    let (xmin, xmax) = (x[0], x[x.len() - 1]);
    let span = (xmax - xmin).max(1e-12);
    let dx = span / (x.len() - 1) as f64;
    let mut sorted = y.clone();
    sorted.sort_by(f64::total_cmp);
    let bg = sorted[sorted.len() / 4];

    let (i1, w1) = peak_near(&x, &y, bg, &|_| true).expect("non-empty");
    let w1 = w1.max(2.0 * dx);
    let exclusion = (3.0 * w1).max(4.0 * dx);
    let (i2, w2) = peak_near(&x, &y, bg, &|i| (x[i] - x[i1]).abs() > exclusion).unwrap_or((i1, w1));
    let w2 = w2.max(2.0 * dx);
    let mut init = [x[i1], w1, (y[i1] - bg).max(0.0), x[i2], w2, (y[i2] - bg).max(0.0), bg];
    if init[0] > init[3] {
        init = [init[3], init[4], init[5], init[0], init[1], init[2], init[6]];
    }
    let ymax = sorted[sorted.len() - 1];
    let amp_hi = 10.0 * (ymax - sorted[0]).abs().max(1e-12);
    let bounds = Bounds::new(
        vec![xmin, 0.5 * dx, 0.0, xmin, 0.5 * dx, 0.0, sorted[0] - amp_hi],
        vec![xmax, span, amp_hi, xmax, span, amp_hi, ymax + amp_hi],
    )?;
    let predict = |p: &[f64], x: &[f64]| x.iter().map(|f| double_lorentzian(p, *f)).collect();
    let names = ["c1", "w1", "a1", "c2", "w2", "a2", "bg"];
    let astep = 0.1 * (ymax - bg).abs().max(1e-12);
    let opts = FitOptions {
        initial_step: Some(vec![0.2 * w1, 0.2 * w1, astep, 0.2 * w2, 0.2 * w2, astep, 0.1 * astep]),
        ..FitOptions::default()
    };
    let mut fit = least_squares("double_lorentzian", predict, &names, data, &init, &bounds, &opts)?;
    if fit.param("c1") > fit.param("c2") {
        for (a, b) in [("c1", "c2"), ("w1", "w2"), ("a1", "a2")] {
            let (va, vb) = (fit.param(a), fit.param(b));
            fit.params.insert(a.into(), vb);
            fit.params.insert(b.into(), va);
        }
    }
    let p = |k: &str| fit.param(k);
    let separation = p("c2") - p("c1");
    let ratio = if p("a1") > 0.0 { p("a2") / p("a1") } else { f64::INFINITY };
    let sbr = if p("bg") > 0.0 { p("a1").max(p("a2")) / p("bg") } else { f64::INFINITY };
    let (fw1, fw2) = (p("w1") * 1e3, p("w2") * 1e3);
    if separation < p("w1").max(p("w2")) {
        fit.warnings.push("overlapping centers: single-peak data".into());
    }
    fit.params.insert("separation_ghz".into(), separation);
    fit.params.insert("ratio".into(), ratio);
    fit.params.insert("fwhm1_mhz".into(), fw1);
    fit.params.insert("fwhm2_mhz".into(), fw2);
    fit.params.insert("sbr".into(), sbr);
    Ok(fit)
}

/// `(1/N)(1 - a e^{-|t|/tau1} + (1 - a) e^{-|t|/tau2}) + (N - 1)/N`.
pub fn g2_model(p: &[f64], t: f64) -> f64 {
    let (n, a, t1, t2) = (p[0], p[1], p[2], p[3]);
    (1.0 - a * (-t.abs() / t1).exp() + (1.0 - a) * (-t.abs() / t2).exp()) / n + (n - 1.0) / n
}

/// Antibunching fit; abscissa is the detection delay.
pub fn fit_g2(data: &DataSet) -> Result<FitResult> {
    if data.len() < 5 {
        return Err(Error::InvalidParameter("g2 fit needs at least 5 points".into()));
    }
    let tmax = data.x.iter().fold(0.0f64, |a, b| a.max(b.abs())).max(1e-12);
    let i0 = (0..data.len())
        .min_by(|&a, &b| data.x[a].abs().total_cmp(&data.x[b].abs()))
        .expect("non-empty");
    let a0 = (1.0 - 0.5 * data.y[i0]).clamp(0.05, 1.0);
    let init = [1.0, a0, 0.02 * tmax, 0.2 * tmax];
    let bounds = Bounds::new(vec![0.2, 0.0, 1e-6 * tmax, 1e-6 * tmax], vec![50.0, 2.0, 10.0 * tmax, 10.0 * tmax])?;
    let predict = |p: &[f64], x: &[f64]| x.iter().map(|t| g2_model(p, *t)).collect();
    let opts = FitOptions {
        initial_step: Some(vec![0.1, 0.1, 0.01 * tmax, 0.05 * tmax]),
        ..FitOptions::default()
    };
    let mut fit = least_squares("g2", predict, &["n_emitters", "a", "tau1", "tau2"], data, &init, &bounds, &opts)?;
    fit.params.insert("g2_zero".into(), g2_model(&[fit.param("n_emitters"), fit.param("a"), fit.param("tau1"), fit.param("tau2")], 0.0));
    Ok(fit)
}
