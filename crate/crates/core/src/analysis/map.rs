use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, Result};
use crate::model::{xi_max, InitialState, PhysicalParams, XiMax};

use super::contour::iso_lines;

/// Default contour levels, m.
pub const DEFAULT_LEVELS: [f64; 4] = [1e-12, 1e-11, 1e-10, 1e-9];

/// `xi_max` over a `heating_rate × sigma_disp` grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct XiMaxMap {
    /// Column coordinates, m.
    pub sigma_disp: Vec<f64>,
    /// Row coordinates, rad/s.
    pub heating_rate: Vec<f64>,
    /// `cells[row][col]`.
    pub cells: Vec<Vec<XiMax>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contour {
    /// m.
    pub level: f64,
    /// Polylines of `(sigma_disp, heating_rate)` vertices.
    pub lines: Vec<Vec<(f64, f64)>>,
}

/// Log-spaced grid of `n` points from `lo` to `hi`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    ensure_positive("grid lower bound", lo)?;
    ensure_positive("grid upper bound", hi)?;
    if n == 1 {
        return Ok(vec![lo]);
    }
    let (a, b) = (lo.ln(), hi.ln());
    Ok((0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect())
}

/// Evaluates `xi_max` for every grid cell. `params.heating_rate` is replaced per row.
pub fn ximax_map(
    sigma_disp: &[f64],
    heating_rate: &[f64],
    params: &PhysicalParams,
    init: &InitialState,
) -> Result<XiMaxMap> {
    params.validate()?;
    init.validate(params)?;
    for &s in sigma_disp {
        ensure_positive("sigma_disp", s)?;
    }
    for &g in heating_rate {
        ensure_positive("heating_rate", g)?;
    }
    let cols = sigma_disp.len();
    let flat: Vec<XiMax> = (0..heating_rate.len() * cols)
        .into_par_iter()
        .map(|k| {
            let p = params.with_heating_rate(heating_rate[k / cols])?;
            xi_max(&p, init, sigma_disp[k % cols])
        })
        .collect::<Result<_>>()?;
    let cells = if cols == 0 {
        vec![Vec::new(); heating_rate.len()]
    } else {
        flat.chunks(cols).map(|c| c.to_vec()).collect()
    };
    Ok(XiMaxMap {
        sigma_disp: sigma_disp.to_vec(),
        heating_rate: heating_rate.to_vec(),
        cells,
    })
}

impl XiMaxMap {
    /// Contours of `xi_max`, traced in log coordinates.
    pub fn contours(&self, levels: &[f64]) -> Vec<Contour> {
        let lx: Vec<f64> = self.sigma_disp.iter().map(|v| v.ln()).collect();
        let ly: Vec<f64> = self.heating_rate.iter().map(|v| v.ln()).collect();
        let field: Vec<Vec<f64>> = self
            .cells
            .iter()
            .map(|row| row.iter().map(|c| c.xi_max.ln()).collect())
            .collect();
        levels
            .iter()
            .map(|&level| Contour {
                level,
                lines: iso_lines(&lx, &ly, &field, level.ln())
                    .into_iter()
                    .map(|l| l.into_iter().map(|(a, b)| (a.exp(), b.exp())).collect())
                    .collect(),
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub base: XiMax,
    pub improved: XiMax,
    pub ratio: f64,
    /// Whether the ratio lies in `[5, 20]`.
    pub within_band: bool,
}

/// Gain in `xi_max` from dividing `sigma_disp` by `disp_factor` and the heating rate by
/// `heating_factor`.
pub fn scaling_check(
    params: &PhysicalParams,
    init: &InitialState,
    sigma_disp: f64,
    disp_factor: f64,
    heating_factor: f64,
) -> Result<ScalingReport> {
    ensure_positive("disp_factor", disp_factor)?;
    ensure_positive("heating_factor", heating_factor)?;
    let base = xi_max(params, init, sigma_disp)?;
    let p = params.with_heating_rate(params.heating_rate / heating_factor)?;
    let improved = xi_max(&p, init, sigma_disp / disp_factor)?;
    let ratio = improved.xi_max / base.xi_max;
    Ok(ScalingReport {
        base,
        improved,
        ratio,
        within_band: (5.0..=20.0).contains(&ratio),
    })
}
