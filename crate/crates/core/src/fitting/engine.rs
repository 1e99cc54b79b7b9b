use std::collections::BTreeMap;

use crate::error::{Error, Result};

use super::{DataSet, FitResult};

/// Box constraints; use infinities for free parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.iter().zip(&upper).any(|(l, u)| !(l <= u)) {
            return Err(Error::InvalidParameter("bounds need equal lengths and lower <= upper".into()));
        }
        Ok(Bounds { lower, upper })
    }

    pub fn unbounded(n: usize) -> Self {
        Bounds {
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(x, (l, u))| *l <= *x && *x <= *u)
    }

    fn clamp(&self, p: &mut [f64]) {
        for (x, (l, u)) in p.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *x = x.clamp(*l, *u);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    /// Relative spread of the simplex values at convergence.
    pub ftol: f64,
    /// Iteration cap summed over all restarts.
    pub max_iter: usize,
    pub restarts: usize,
    /// Initial simplex edge per parameter; derived from the start point if
    /// absent.
    pub initial_step: Option<Vec<f64>>,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            ftol: 1e-10,
            max_iter: 100_000,
            restarts: 3,
            initial_step: None,
        }
    }
}

pub(crate) struct Minimum {
    pub x: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Simplex diameter, relative to `1 + |x|`, required besides the value spread.
const XTOL: f64 = 1e-10;

fn default_step(x: f64, lo: f64, hi: f64) -> f64 {
    if x != 0.0 {
        0.1 * x.abs()
    } else if (hi - lo).is_finite() {
        0.05 * (hi - lo)
    } else {
        0.1
    }
}

/// Nelder-Mead on `f` inside `bounds`, followed by restarts from the best
/// point with every coordinate moved by 10%, alternating in sign.
pub(crate) fn minimize(f: &dyn Fn(&[f64]) -> f64, init: &[f64], bounds: &Bounds, opts: &FitOptions) -> Minimum {
    let n = init.len();
    let steps: Vec<f64> = match &opts.initial_step {
        Some(s) => s.clone(),
        None => (0..n).map(|i| default_step(init[i], bounds.lower[i], bounds.upper[i])).collect(),
    };
    let mut best = simplex_run(f, init, &steps, bounds, opts.ftol, opts.max_iter);
    let mut iterations = best.iterations;
    for r in 0..opts.restarts {
        if iterations >= opts.max_iter {
            break;
        }
        let restart_steps: Vec<f64> = (0..n)
            .map(|i| {
                let sign = if (i + r) % 2 == 0 { 1.0 } else { -1.0 };
                let s = if best.x[i] != 0.0 { 0.1 * best.x[i].abs() } else { steps[i] };
                sign * s
            })
            .collect();
        let run = simplex_run(f, &best.x, &restart_steps, bounds, opts.ftol, opts.max_iter - iterations);
        iterations += run.iterations;
        // The last run starts at the best point, so its status is the
        // overall one.
        let converged = run.converged;
        if run.f <= best.f {
            best = run;
        }
        best.converged = converged;
    }
    best.iterations = iterations;
    best
}

fn simplex_run(
    f: &dyn Fn(&[f64]) -> f64,
    start: &[f64],
    steps: &[f64],
    bounds: &Bounds,
    ftol: f64,
    max_iter: usize,
) -> Minimum {
    let n = start.len();
    let eval = |p: &[f64]| {
        let v = f(p);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut pts: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    let mut x0 = start.to_vec();
    bounds.clamp(&mut x0);
    pts.push(x0.clone());
    for i in 0..n {
        let mut p = x0.clone();
        p[i] += steps[i];
        bounds.clamp(&mut p);
        if p[i] == x0[i] {
            p[i] -= steps[i];
            bounds.clamp(&mut p);
        }
        pts.push(p);
    }
    let mut vals: Vec<f64> = pts.iter().map(|p| eval(p)).collect();
    let mut iterations = 0;
    let mut converged = n == 0;
    while !converged && iterations < max_iter {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        pts = order.iter().map(|&i| pts[i].clone()).collect();
        vals = order.iter().map(|&i| vals[i]).collect();

        let spread = vals[n] - vals[0];
        let diam = pts[1..]
            .iter()
            .flat_map(|p| p.iter().zip(&pts[0]).map(|(a, b)| (a - b).abs() / (1.0 + b.abs())))
            .fold(0.0, f64::max);
        if (spread <= ftol * vals[0].abs() && diam <= XTOL) || spread == 0.0 || diam <= 1e-14 {
            converged = true;
            break;
        }
        iterations += 1;

        let mut centroid = vec![0.0; n];
        for p in &pts[..n] {
            for (c, x) in centroid.iter_mut().zip(p) {
                *c += x / n as f64;
            }
        }
        let toward = |t: f64| {
            let mut p: Vec<f64> = centroid.iter().zip(&pts[n]).map(|(c, w)| c + t * (w - c)).collect();
            bounds.clamp(&mut p);
            p
        };
        let xr = toward(-1.0);
        let fr = eval(&xr);
        if fr < vals[0] {
            let xe = toward(-2.0);
            let fe = eval(&xe);
            if fe < fr {
                pts[n] = xe;
                vals[n] = fe;
            } else {
                pts[n] = xr;
                vals[n] = fr;
            }
        } else if fr < vals[n - 1] {
            pts[n] = xr;
            vals[n] = fr;
        } else {
            let (xc, fc) = if fr < vals[n] {
                let xc = toward(-0.5);
                let fc = eval(&xc);
                (xc, fc)
            } else {
                let xc = toward(0.5);
                let fc = eval(&xc);
                (xc, fc)
            };
            if fc < vals[n].min(fr) {
                pts[n] = xc;
                vals[n] = fc;
            } else {
                for i in 1..=n {
                    let p: Vec<f64> = pts[0].iter().zip(&pts[i]).map(|(b, x)| b + 0.5 * (x - b)).collect();
                    vals[i] = eval(&p);
                    pts[i] = p;
                }
            }
        }
    }
    let (bi, _) = vals
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("simplex is non-empty");
    Minimum {
        x: pts[bi].clone(),
        f: vals[bi],
        iterations,
        converged,
    }
}

/// Weighted residual sum of squares of `predict(params, x)` against `data`.
pub(crate) fn rss(data: &DataSet, predicted: &[f64]) -> f64 {
    match &data.sigma {
        Some(s) => data
            .y
            .iter()
            .zip(predicted)
            .zip(s)
            .map(|((y, p), s)| ((y - p) / s).powi(2))
            .sum(),
        None => data.y.iter().zip(predicted).map(|(y, p)| (y - p).powi(2)).sum(),
    }
}

/// Fits `predict(params, x)` to `data` by minimizing the (weighted) residual
/// sum of squares. A run that hits the iteration cap is returned with
/// `converged = false` and the best parameters found.
pub fn least_squares<F>(
    model: &str,
    predict: F,
    names: &[&str],
    data: &DataSet,
    init: &[f64],
    bounds: &Bounds,
    opts: &FitOptions,
) -> Result<FitResult>
where
    F: Fn(&[f64], &[f64]) -> Vec<f64>,
{
    let n = names.len();
    if init.len() != n || bounds.lower.len() != n {
        return Err(Error::InvalidParameter(format!(
            "{model}: {} names, {} initial values, {} bounds",
            n,
            init.len(),
            bounds.lower.len()
        )));
    }
    if data.len() < n {
        return Err(Error::InvalidParameter(format!(
            "{model}: {} data points for {n} parameters",
            data.len()
        )));
    }
    if !bounds.contains(init) {
        return Err(Error::InvalidParameter(format!("{model}: initial parameters outside bounds")));
    }
    let objective = |p: &[f64]| rss(data, &predict(p, &data.x));
    let m = minimize(&objective, init, bounds, opts);
    let fitted = predict(&m.x, &data.x);
    let params: BTreeMap<String, f64> = names.iter().map(|s| s.to_string()).zip(m.x.iter().copied()).collect();
    Ok(FitResult {
        model: model.to_string(),
        params,
        rss: m.f,
        iterations: m.iterations,
        converged: m.converged && m.f.is_finite(),
        fitted,
        warnings: Vec::new(),
    })
}
