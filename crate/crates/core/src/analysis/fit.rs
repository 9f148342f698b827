use nalgebra::{DMatrix, DVector, Matrix2};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_positive, invalid, Error, Result};
use crate::model::{coherent_variance, shot_covariance, whitenoise_covariance, PhysicalParams};

use super::lm::{minimize, LmOptions};

/// Number of multistart points.
pub const MULTISTARTS: usize = 8;

/// Weighting scheme recorded with every fit.
pub const WEIGHTING: &str = "chi-square on variances with err(s^2) = 2 s err(s); \
parameter covariance (J^T J)^-1 in variance space without reduced-chi-square scaling, \
mapped to standard deviations by the delta method";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveKind {
    SigmaZ,
    Xi,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    /// s.
    pub tau: f64,
    /// m.
    pub value: f64,
    /// m.
    pub err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionCurve {
    pub kind: CurveKind,
    pub points: Vec<CurvePoint>,
}

impl ExpansionCurve {
    pub fn new(kind: CurveKind, points: Vec<CurvePoint>) -> Result<Self> {
        let c = Self { kind, points };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        for w in self.points.windows(2) {
            if !(w[1].tau > w[0].tau) {
                return Err(Error::InvalidData("curve tau values must be strictly increasing".into()));
            }
        }
        for p in &self.points {
            if !(p.tau.is_finite() && p.tau >= 0.0 && p.value.is_finite() && p.value >= 0.0) {
                return Err(Error::InvalidData(format!("invalid curve point {p:?}")));
            }
            if !(p.err.is_finite() && p.err > 0.0) {
                return Err(Error::InvalidData(format!("curve errors must be > 0, got {}", p.err)));
            }
        }
        Ok(())
    }
}

/// Standard-deviation point of the displacement-noise regression.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BudgetPoint {
    /// rad/s.
    pub omega_inv: f64,
    /// m.
    pub sigma_disp: f64,
    /// m.
    pub err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub names: Vec<String>,
    /// Fitted standard deviations.
    pub parameters: Vec<f64>,
    pub errors: Vec<f64>,
    /// Covariance of `parameters`.
    pub covariance: [[f64; 2]; 2],
    /// Covariance of the squared parameters.
    pub variance_covariance: [[f64; 2]; 2],
    pub chi2: f64,
    pub dof: usize,
    pub residual_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    pub gradient_norm: f64,
    pub starts_converged: usize,
    pub cost_history: Vec<f64>,
    pub weighting: String,
}

impl FitResult {
    pub fn param(&self, name: &str) -> Option<(f64, f64)> {
        let i = self.names.iter().position(|n| n == name)?;
        Some((self.parameters[i], self.errors[i]))
    }
}

/// `v_i = θ1² a_i + θ2² b_i + c_i` observed as variances with errors.
struct ScaleModel {
    a: Vec<[f64; 2]>,
    c: Vec<f64>,
    v: Vec<f64>,
    err: Vec<f64>,
}

impl ScaleModel {
    fn residuals(&self, u: &DVector<f64>) -> Option<(DVector<f64>, DMatrix<f64>)> {
        let (s1, s2) = ((2.0 * u[0]).exp(), (2.0 * u[1]).exp());
        if !(s1.is_finite() && s2.is_finite()) {
            return None;
        }
        let n = self.v.len();
        let mut r = DVector::zeros(n);
        let mut j = DMatrix::zeros(n, 2);
        for i in 0..n {
            let [a, b] = self.a[i];
            let e = self.err[i];
            r[i] = (s1 * a + s2 * b + self.c[i] - self.v[i]) / e;
            j[(i, 0)] = 2.0 * s1 * a / e;
            j[(i, 1)] = 2.0 * s2 * b / e;
        }
        Some((r, j))
    }

    /// Largest single-parameter value consistent with every point.
    fn scale(&self, k: usize) -> Option<f64> {
        self.a
            .iter()
            .zip(&self.v)
            .filter(|(a, _)| a[k] > 0.0)
            .map(|(a, v)| (v / a[k]).sqrt())
            .filter(|s| *s > 0.0)
            .min_by(f64::total_cmp)
    }

    fn fit(&self, names: [&str; 2]) -> Result<FitResult> {
        let scales = [0, 1].map(|k| self.scale(k));
        let (s1, s2) = match scales {
            [Some(a), Some(b)] => (a, b),
            _ => {
                return Err(Error::DegenerateDesign(
                    "data do not constrain both parameters".into(),
                ))
            }
        };
        // Log-spaced grids over [1e-3, 10] times the scale, paired by a fixed permutation
        // so that the starts cover the plane rather than its diagonal.
        let grid = |s: f64, i: usize| {
            let f = i as f64 / (MULTISTARTS - 1) as f64;
            (s * 1e-3).ln() + f * (1e4f64).ln()
        };
        let problem = |u: &DVector<f64>| self.residuals(u);
        let options = LmOptions::default();
        let mut best: Option<super::lm::LmOutcome> = None;
        let mut converged = 0;
        for i in 0..MULTISTARTS {
            let start = DVector::from_vec(vec![grid(s1, i), grid(s2, (5 * i + 3) % MULTISTARTS)]);
            let Some(out) = minimize(&problem, start, &options) else {
                continue;
            };
            if !out.converged {
                continue;
            }
            converged += 1;
            if best.as_ref().is_none_or(|b| out.cost < b.cost) {
                best = Some(out);
            }
        }
        let Some(best) = best else {
            return Err(Error::NotConverged(format!(
                "none of {MULTISTARTS} Levenberg-Marquardt starts reached the gradient tolerance"
            )));
        };

        let theta = [best.params[0].exp(), best.params[1].exp()];
        let jv = DMatrix::from_fn(self.v.len(), 2, |i, k| self.a[i][k] / self.err[i]);
        let info = jv.transpose() * jv;
        let info = Matrix2::new(info[(0, 0)], info[(0, 1)], info[(1, 0)], info[(1, 1)]);
        let cov_var = info.try_inverse().ok_or_else(|| {
            Error::DegenerateDesign("information matrix is singular".into())
        })?;
        let sd_var = [cov_var[(0, 0)].max(0.0).sqrt(), cov_var[(1, 1)].max(0.0).sqrt()];
        // Delta method, switching to sqrt(sd(s²)) once s is within its own uncertainty.
        let dscale = [0, 1].map(|k| (1.0 / (2.0 * theta[k])).min(1.0 / sd_var[k].sqrt()));
        let cov = Matrix2::new(
            cov_var[(0, 0)] * dscale[0] * dscale[0],
            cov_var[(0, 1)] * dscale[0] * dscale[1],
            cov_var[(1, 0)] * dscale[1] * dscale[0],
            cov_var[(1, 1)] * dscale[1] * dscale[1],
        );
        let n = self.v.len();
        Ok(FitResult {
            names: names.iter().map(|s| s.to_string()).collect(),
            parameters: theta.to_vec(),
            errors: vec![cov[(0, 0)].sqrt(), cov[(1, 1)].sqrt()],
            covariance: [[cov[(0, 0)], cov[(0, 1)]], [cov[(1, 0)], cov[(1, 1)]]],
            variance_covariance: [
                [cov_var[(0, 0)], cov_var[(0, 1)]],
                [cov_var[(1, 0)], cov_var[(1, 1)]],
            ],
            chi2: best.cost,
            dof: n.saturating_sub(2),
            residual_norm: best.cost.sqrt(),
            iterations: best.iterations,
            converged: best.converged,
            gradient_norm: best.gradient_norm,
            starts_converged: converged,
            cost_history: best.cost_history,
            weighting: WEIGHTING.into(),
        })
    }
}

/// Fits `(sigma_0, sigma_disp)` of the full variance model to a measured `sigma_z(tau)`
/// curve with the heating rate held fixed.
pub fn fit_expansion(curve: &ExpansionCurve, params: &PhysicalParams) -> Result<FitResult> {
    params.validate()?;
    curve.validate()?;
    if curve.kind != CurveKind::SigmaZ {
        return Err(Error::InvalidData("expansion fits need a sigma_z curve".into()));
    }
    if curve.points.len() < 3 {
        return Err(Error::InvalidData("expansion fits need at least 3 points".into()));
    }
    let mut model = ScaleModel {
        a: Vec::new(),
        c: Vec::new(),
        v: Vec::new(),
        err: Vec::new(),
    };
    for p in &curve.points {
        model.a.push([
            coherent_variance(params, 1.0, p.tau)?,
            shot_covariance(params, 1.0, p.tau)?.zz,
        ]);
        model.c.push(whitenoise_covariance(params, p.tau)?.zz);
        model.v.push(p.value * p.value);
        model.err.push(2.0 * p.value.max(p.err) * p.err);
    }
    model.fit(["sigma_0", "sigma_disp"])
}

/// Fits `(sigma_sf, sigma_zeta)` of `sigma_disp² = sigma_sf²/(m² omega_inv⁴) + sigma_zeta²`.
pub fn fit_noise_budget(points: &[BudgetPoint], mass: f64) -> Result<FitResult> {
    ensure_positive("mass", mass)?;
    if points.len() < 2 {
        return Err(Error::InvalidData("budget fits need at least 2 points".into()));
    }
    for p in points {
        ensure_positive("omega_inv", p.omega_inv)?;
        if !(p.sigma_disp.is_finite() && p.sigma_disp >= 0.0 && p.err.is_finite() && p.err > 0.0) {
            return Err(Error::InvalidData(format!("invalid budget point {p:?}")));
        }
    }
    let mut omegas: Vec<f64> = points.iter().map(|p| p.omega_inv).collect();
    omegas.sort_by(f64::total_cmp);
    omegas.dedup();
    if omegas.len() < 2 {
        return Err(Error::DegenerateDesign(
            "budget fits need at least 2 distinct inverted-potential frequencies".into(),
        ));
    }
    let model = ScaleModel {
        a: points
            .iter()
            .map(|p| [1.0 / (mass * mass * p.omega_inv.powi(4)), 1.0])
            .collect(),
        c: vec![0.0; points.len()],
        v: points.iter().map(|p| p.sigma_disp * p.sigma_disp).collect(),
        err: points.iter().map(|p| 2.0 * p.sigma_disp.max(p.err) * p.err).collect(),
    };
    model.fit(["sigma_sf", "sigma_zeta"])
}

/// Stray-force and chip-position contributions to `sigma_disp` at `omega_inv`, m.
pub fn budget_contributions(sigma_sf: f64, sigma_zeta: f64, mass: f64, omega_inv: f64) -> Result<(f64, f64)> {
    ensure_positive("mass", mass)?;
    ensure_positive("omega_inv", omega_inv)?;
    if !(sigma_sf >= 0.0 && sigma_zeta >= 0.0) {
        return Err(invalid("budget", "standard deviations must be >= 0"));
    }
    Ok((sigma_sf / (mass * omega_inv * omega_inv), sigma_zeta))
}
