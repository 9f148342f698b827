use nalgebra::Matrix2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Symmetric 2×2 phase-space covariance in (z, p) ordering.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Cov2 {
    pub zz: f64,
    pub zp: f64,
    pub pp: f64,
}

impl Cov2 {
    pub const ZERO: Cov2 = Cov2 {
        zz: 0.0,
        zp: 0.0,
        pp: 0.0,
    };

    pub const fn new(zz: f64, zp: f64, pp: f64) -> Self {
        Self { zz, zp, pp }
    }

    /// Naive determinant. Loses all precision for strongly squeezed states; see
    /// [`GaussianState::det`] for the tracked value.
    pub fn det(&self) -> f64 {
        self.zz * self.pp - self.zp * self.zp
    }

    pub fn trace(&self) -> f64 {
        self.zz + self.pp
    }

    /// PSD test with a relative tolerance on the determinant.
    pub fn is_psd(&self, rel_tol: f64) -> bool {
        if self.zz < 0.0 || self.pp < 0.0 {
            return false;
        }
        self.det() >= -rel_tol * (self.zz * self.pp).abs()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self::new(self.zz * factor, self.zp * factor, self.pp * factor)
    }

    pub fn to_matrix(&self) -> Matrix2<f64> {
        Matrix2::new(self.zz, self.zp, self.zp, self.pp)
    }

    /// Symmetrizes a general matrix.
    pub fn from_matrix(m: &Matrix2<f64>) -> Self {
        Self::new(m[(0, 0)], 0.5 * (m[(0, 1)] + m[(1, 0)]), m[(1, 1)])
    }

    /// `M Σ Mᵀ`.
    pub fn congruence(&self, m: &Matrix2<f64>) -> Self {
        Self::from_matrix(&(m * self.to_matrix() * m.transpose()))
    }
}

impl std::ops::Add for Cov2 {
    type Output = Cov2;
    fn add(self, rhs: Cov2) -> Cov2 {
        Cov2::new(self.zz + rhs.zz, self.zp + rhs.zp, self.pp + rhs.pp)
    }
}

impl std::ops::Sub for Cov2 {
    type Output = Cov2;
    fn sub(self, rhs: Cov2) -> Cov2 {
        Cov2::new(self.zz - rhs.zz, self.zp - rhs.zp, self.pp - rhs.pp)
    }
}

/// A phase-space point (z, p) in SI units.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PhasePoint {
    pub z: f64,
    pub p: f64,
}

impl PhasePoint {
    pub const fn new(z: f64, p: f64) -> Self {
        Self { z, p }
    }
}

/// Gaussian state of the z mode: mean and covariance.
///
/// The covariance determinant is carried alongside the entries. For states produced by
/// the analytic propagation it is computed by a cancellation-free route, since at large
/// expansion the naive `var_z·var_p − cov_zp²` cancels to zero or below in f64.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianState {
    mean_z: f64,
    mean_p: f64,
    var_z: f64,
    var_p: f64,
    cov_zp: f64,
    det_cov: f64,
}

impl GaussianState {
    /// Builds a state from its moments. The covariance must be PSD.
    pub fn new(mean_z: f64, mean_p: f64, cov: Cov2) -> Result<Self> {
        Self::with_determinant(mean_z, mean_p, cov, cov.det())
    }

    /// Builds a state with an externally computed covariance determinant.
    pub fn with_determinant(mean_z: f64, mean_p: f64, cov: Cov2, det: f64) -> Result<Self> {
        let finite = [mean_z, mean_p, cov.zz, cov.zp, cov.pp]
            .iter()
            .all(|v| v.is_finite());
        if !finite || det.is_nan() {
            return Err(Error::Domain("state moments must be finite".into()));
        }
        if cov.zz < 0.0 || cov.pp < 0.0 {
            return Err(Error::Domain(format!(
                "negative variance in covariance {cov:?}"
            )));
        }
        // Allow rounding-level negativity of the determinant relative to its scale.
        if det < -1e-9 * (cov.zz * cov.pp) {
            return Err(Error::Domain(format!(
                "covariance is not positive semidefinite (det = {det:e})"
            )));
        }
        Ok(Self {
            mean_z,
            mean_p,
            var_z: cov.zz,
            var_p: cov.pp,
            cov_zp: cov.zp,
            det_cov: det,
        })
    }

    pub fn mean_z(&self) -> f64 {
        self.mean_z
    }

    pub fn mean_p(&self) -> f64 {
        self.mean_p
    }

    pub fn mean(&self) -> PhasePoint {
        PhasePoint::new(self.mean_z, self.mean_p)
    }

    pub fn var_z(&self) -> f64 {
        self.var_z
    }

    pub fn var_p(&self) -> f64 {
        self.var_p
    }

    pub fn cov_zp(&self) -> f64 {
        self.cov_zp
    }

    pub fn sigma_z(&self) -> f64 {
        self.var_z.sqrt()
    }

    pub fn sigma_p(&self) -> f64 {
        self.var_p.sqrt()
    }

    pub fn covariance(&self) -> Cov2 {
        Cov2::new(self.var_z, self.cov_zp, self.var_p)
    }

    /// Covariance determinant `var_z·var_p − cov_zp²`.
    pub fn det(&self) -> f64 {
        self.det_cov
    }
}
