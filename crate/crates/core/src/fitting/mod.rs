//! Least-squares fitting: a bounded Nelder-Mead engine and the models built
//! on it.

mod engine;
mod grid;
mod models;

pub use engine::{least_squares, Bounds, FitOptions};
pub use grid::{analyze_yield, register_grid, GridFit, GridModel, YieldResult};
pub use models::{
    double_lorentzian, fit_cpmg_refine, fit_double_lorentzian, fit_envelope, fit_g2, fit_hahn_hyperfine, g2_model,
    HahnFit, HAHN_PARAMS,
};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{parse_commented_csv, write_commented_csv};
use crate::trace::SignalTrace;

/// Measured or synthetic `(x, y)` data with optional per-point uncertainty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSet {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub sigma: Option<Vec<f64>>,
    pub x_unit: String,
    pub y_unit: String,
}

impl DataSet {
    pub fn new(x: Vec<f64>, y: Vec<f64>, x_unit: &str) -> Result<Self> {
        if x.len() != y.len() {
            return Err(Error::InvalidParameter(format!(
                "data set has {} x values but {} y values",
                x.len(),
                y.len()
            )));
        }
        if x.iter().chain(&y).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("data set contains non-finite values".into()));
        }
        Ok(DataSet {
            x,
            y,
            sigma: None,
            x_unit: x_unit.to_string(),
            y_unit: String::new(),
        })
    }

    pub fn with_sigma(mut self, sigma: Vec<f64>) -> Result<Self> {
        if sigma.len() != self.x.len() || sigma.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::InvalidParameter("sigma must be positive with one entry per point".into()));
        }
        self.sigma = Some(sigma);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn from_trace(trace: &SignalTrace) -> Self {
        DataSet {
            x: trace.abscissa.clone(),
            y: trace.values.clone(),
            sigma: None,
            x_unit: trace.unit.to_string(),
            y_unit: String::new(),
        }
    }

    /// Reads `x,y[,sigma]` (or `abscissa,value`) with a `# unit=` line.
    pub fn from_csv(text: &str, source_name: &str) -> Result<Self> {
        let csv = parse_commented_csv(text, source_name)?;
        let err = |line, message: String| Error::Parse {
            source_name: source_name.to_string(),
            line,
            message,
        };
        let x_unit = csv
            .meta_value("unit")
            .ok_or_else(|| err(1, "missing `# unit=` comment line".into()))?
            .to_string();
        let header: Vec<&str> = csv.header.iter().map(String::as_str).collect();
        let has_sigma = match header.as_slice() {
            ["x", "y"] | ["abscissa", "value"] => false,
            ["x", "y", "sigma"] => true,
            _ => {
                return Err(err(
                    1,
                    format!("expected header `x,y[,sigma]`, got `{}`", csv.header.join(",")),
                ))
            }
        };
        let mut ds = DataSet {
            x: csv.rows.iter().map(|(_, r)| r[0]).collect(),
            y: csv.rows.iter().map(|(_, r)| r[1]).collect(),
            sigma: None,
            x_unit,
            y_unit: csv.meta_value("y_unit").unwrap_or_default().to_string(),
        };
        if has_sigma {
            if let Some((line, _)) = csv.rows.iter().find(|(_, r)| !(r[2] > 0.0)) {
                return Err(err(*line, "sigma must be positive".into()));
            }
            ds.sigma = Some(csv.rows.iter().map(|(_, r)| r[2]).collect());
        }
        Ok(ds)
    }

    pub fn to_csv(&self) -> String {
        let mut meta = vec![("unit".to_string(), self.x_unit.clone())];
        if !self.y_unit.is_empty() {
            meta.push(("y_unit".to_string(), self.y_unit.clone()));
        }
        match &self.sigma {
            Some(s) => write_commented_csv(&meta, &["x", "y", "sigma"], &[&self.x, &self.y, s]),
            None => write_commented_csv(&meta, &["x", "y"], &[&self.x, &self.y]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: String,
    pub params: BTreeMap<String, f64>,
    /// Weighted residual sum of squares.
    pub rss: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Model evaluated at the data abscissa.
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub fitted: Vec<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub warnings: Vec<String>,
}

impl FitResult {
    pub fn param(&self, name: &str) -> f64 {
        self.params.get(name).copied().unwrap_or(f64::NAN)
    }

    /// `y - fitted`.
    pub fn residuals(&self, data: &DataSet) -> Vec<f64> {
        data.y.iter().zip(&self.fitted).map(|(y, f)| y - f).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_with_sigma() {
        let ds = DataSet::new(vec![1.0, 2.0], vec![0.5, 0.25], "us")
            .unwrap()
            .with_sigma(vec![0.1, 0.2])
            .unwrap();
        let back = DataSet::from_csv(&ds.to_csv(), "d").unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn csv_errors() {
        assert!(DataSet::from_csv("x,y\n1,2\n", "d").unwrap_err().to_string().contains("unit"));
        let e = DataSet::from_csv("# unit=us\nx,y,sigma\n1,2,0.1\n2,3,0\n", "d.csv").unwrap_err();
        assert_eq!(e.to_string(), "d.csv:4: sigma must be positive");
        assert!(DataSet::from_csv("# unit=us\nt,v\n", "d").is_err());
        let ds = DataSet::from_csv("# unit=us\nabscissa,value\n1,0.5\n", "d").unwrap();
        assert_eq!(ds.y, vec![0.5]);
    }

    #[test]
    fn shape_validation() {
        assert!(DataSet::new(vec![1.0], vec![], "us").is_err());
        assert!(DataSet::new(vec![f64::NAN], vec![1.0], "us").is_err());
        assert!(DataSet::new(vec![1.0], vec![1.0], "us").unwrap().with_sigma(vec![-1.0]).is_err());
    }
}
