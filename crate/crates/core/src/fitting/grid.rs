//! Implantation statistics: defect yield per spot and registration of
//! measured defect positions to the ideal implantation grid.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::engine::{minimize, Bounds, FitOptions};

/// 1 nm^2 in cm^2.
const NM2_TO_CM2: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct YieldResult {
    /// Poisson mean number of defects per spot.
    pub mean: f64,
    pub spots: u64,
    /// Ions through one hole.
    pub expected_ions: f64,
    /// Defects per implanted ion.
    pub yield_fraction: f64,
}

/// `histogram[k]` is the number of spots holding `k` defects. The Poisson
/// maximum-likelihood mean is the sample mean.
pub fn analyze_yield(histogram: &[u64], dose_per_cm2: f64, hole_diameter_nm: f64) -> Result<YieldResult> {
    let spots: u64 = histogram.iter().sum();
    if spots == 0 {
        return Err(Error::InvalidParameter("histogram is empty".into()));
    }
    if !(dose_per_cm2 > 0.0) || !(hole_diameter_nm > 0.0) {
        return Err(Error::InvalidParameter("dose and hole diameter must be positive".into()));
    }
    let defects: u64 = histogram.iter().enumerate().map(|(k, &c)| k as u64 * c).sum();
    let mean = defects as f64 / spots as f64;
    let expected_ions = dose_per_cm2 * PI * (0.5 * hole_diameter_nm).powi(2) * NM2_TO_CM2;
    Ok(YieldResult {
        mean,
        spots,
        expected_ions,
        yield_fraction: mean / expected_ions,
    })
}

/// `position = R(rotation) diag(scale_x, scale_y) (i, j) pitch + offset`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridModel {
    pub pitch: f64,
    pub rotation: f64,
    pub scale_x: f64,
    pub scale_y: f64,
    pub offset: (f64, f64),
}

impl GridModel {
    pub fn node_position(&self, node: (i64, i64)) -> (f64, f64) {
        let (u, v) = (node.0 as f64 * self.pitch * self.scale_x, node.1 as f64 * self.pitch * self.scale_y);
        let (s, c) = self.rotation.sin_cos();
        (c * u - s * v + self.offset.0, s * u + c * v + self.offset.1)
    }

    /// Nearest grid node to a position.
    pub fn nearest_node(&self, p: (f64, f64)) -> (i64, i64) {
        let (dx, dy) = (p.0 - self.offset.0, p.1 - self.offset.1);
        let (s, c) = self.rotation.sin_cos();
        let (u, v) = (c * dx + s * dy, -s * dx + c * dy);
        (
            (u / (self.pitch * self.scale_x)).round() as i64,
            (v / (self.pitch * self.scale_y)).round() as i64,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridFit {
    pub model: GridModel,
    pub nodes: Vec<(i64, i64)>,
    pub residuals: Vec<(f64, f64)>,
    /// Per-axis root-mean-square residual, `sqrt(sum |r|^2 / (2 n))`; the
    /// standard deviation of isotropic scatter.
    pub variance: f64,
}

const MAX_REASSIGN: usize = 20;

/// Aligns measured positions (nm) to a square grid of the given pitch,
/// fitting rotation, per-axis scale (within `[0.9, 1.1]`) and offset.
pub fn register_grid(positions: &[(f64, f64)], pitch: f64) -> Result<GridFit> {
    if positions.len() < 4 {
        return Err(Error::InvalidParameter("grid registration needs at least 4 points".into()));
    }
    if !(pitch > 0.0) {
        return Err(Error::InvalidParameter("pitch must be positive".into()));
    }
    let origin = positions
        .iter()
        .copied()
        .min_by(|a, b| (a.0 + a.1).total_cmp(&(b.0 + b.1)))
        .expect("non-empty");
    let mut model = GridModel {
        pitch,
        rotation: 0.0,
        scale_x: 1.0,
        scale_y: 1.0,
        offset: origin,
    };
    let bounds = Bounds::new(
        vec![-PI / 4.0, 0.9, 0.9, f64::NEG_INFINITY, f64::NEG_INFINITY],
        vec![PI / 4.0, 1.1, 1.1, f64::INFINITY, f64::INFINITY],
    )?;
    let opts = FitOptions {
        initial_step: Some(vec![0.01, 0.01, 0.01, 0.05 * pitch, 0.05 * pitch]),
        ..FitOptions::default()
    };
    let mut nodes: Vec<(i64, i64)> = positions.iter().map(|&p| model.nearest_node(p)).collect();
    for _ in 0..MAX_REASSIGN {
        let to_model = |p: &[f64]| GridModel {
            pitch,
            rotation: p[0],
            scale_x: p[1],
            scale_y: p[2],
            offset: (p[3], p[4]),
        };
        let cost = |p: &[f64]| {
            let m = to_model(p);
            positions
                .iter()
                .zip(&nodes)
                .map(|(q, &n)| {
                    let r = m.node_position(n);
                    (q.0 - r.0).powi(2) + (q.1 - r.1).powi(2)
                })
                .sum::<f64>()
        };
        let start = [model.rotation, model.scale_x, model.scale_y, model.offset.0, model.offset.1];
        model = to_model(&minimize(&cost, &start, &bounds, &opts).x);
        let next: Vec<(i64, i64)> = positions.iter().map(|&p| model.nearest_node(p)).collect();
        if next == nodes {
            break;
        }
        nodes = next;
    }
    let residuals: Vec<(f64, f64)> = positions
        .iter()
        .zip(&nodes)
        .map(|(q, &n)| {
            let r = model.node_position(n);
            (q.0 - r.0, q.1 - r.1)
        })
        .collect();
    let sum_sq: f64 = residuals.iter().map(|r| r.0 * r.0 + r.1 * r.1).sum();
    let variance = (sum_sq / (2.0 * residuals.len() as f64)).sqrt();
    Ok(GridFit {
        model,
        nodes,
        residuals,
        variance,
    })
}
