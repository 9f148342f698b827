//! Exact discretization of two-dimensional linear SDEs `dx = A x dt + dW`, `E[dW dWᵀ] = Q dt`.
//!
//! The transition matrix and the process-noise covariance over a step come from one
//! matrix exponential of the Van Loan block matrix. Nothing here knows about hyperbolic
//! closed forms, which keeps the simulator independent of the analytic model it checks.

use nalgebra::{Matrix2, Matrix4, Vector2};
use rand::Rng;
use rand_distr::StandardNormal;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearSde2 {
    pub drift: Matrix2<f64>,
    pub diffusion: Matrix2<f64>,
}

/// One exact step: `x' = Φ x + L ξ` with `L Lᵀ = Q_d` and `ξ` standard normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Discretization {
    pub transition: Matrix2<f64>,
    pub noise: Matrix2<f64>,
    factor: Matrix2<f64>,
}

impl LinearSde2 {
    pub fn new(drift: Matrix2<f64>, diffusion: Matrix2<f64>) -> Self {
        Self { drift, diffusion }
    }

    /// Mechanical mode `z' = p/m`, `p' = stiffness·z − damping·p + f` with white force
    /// noise of intensity `force_intensity`. Inverted potentials have `stiffness = m omega²`,
    /// harmonic ones `−m omega²`.
    pub fn oscillator(mass: f64, stiffness: f64, damping: f64, force_intensity: f64) -> Self {
        Self::new(
            Matrix2::new(0.0, 1.0 / mass, stiffness, -damping),
            Matrix2::new(0.0, 0.0, 0.0, force_intensity),
        )
    }

    pub fn discretize(&self, dt: f64) -> Discretization {
        // Balance the state so that position and momentum entries are commensurate;
        // SI drift entries span ~25 orders of magnitude.
        let (a01, a10) = (self.drift[(0, 1)], self.drift[(1, 0)]);
        let c = if a01 != 0.0 && a10 != 0.0 {
            (a10 / a01).abs().sqrt()
        } else {
            1.0
        };
        let t = Matrix2::new(1.0, 0.0, 0.0, c);
        let t_inv = Matrix2::new(1.0, 0.0, 0.0, 1.0 / c);
        let a = t_inv * self.drift * t;
        let q = t_inv * self.diffusion * t_inv;

        // The noise block enters linearly; normalize it to keep the exponential well scaled.
        let q_scale = q.amax();
        let q_unit = if q_scale > 0.0 { q / q_scale } else { q };

        let mut block = Matrix4::zeros();
        block.fixed_view_mut::<2, 2>(0, 0).copy_from(&(-a * dt));
        block.fixed_view_mut::<2, 2>(0, 2).copy_from(&(q_unit * dt));
        block.fixed_view_mut::<2, 2>(2, 2).copy_from(&(a.transpose() * dt));
        let e = block.exp();

        let phi = e.fixed_view::<2, 2>(2, 2).transpose();
        let qd_unit = phi * e.fixed_view::<2, 2>(0, 2);
        let qd = if q_scale > 0.0 { qd_unit * q_scale } else { Matrix2::zeros() };

        let transition = t * phi * t_inv;
        let noise = t * symmetrize(&qd) * t;
        Discretization {
            transition,
            noise,
            factor: psd_factor(&noise),
        }
    }
}

impl Discretization {
    pub fn step<R: Rng + ?Sized>(&self, x: Vector2<f64>, rng: &mut R) -> Vector2<f64> {
        let mean = self.transition * x;
        if self.factor == Matrix2::zeros() {
            return mean;
        }
        let xi = Vector2::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
        mean + self.factor * xi
    }
}

fn symmetrize(m: &Matrix2<f64>) -> Matrix2<f64> {
    let off = 0.5 * (m[(0, 1)] + m[(1, 0)]);
    Matrix2::new(m[(0, 0)], off, off, m[(1, 1)])
}

/// Lower-triangular `L` with `L Lᵀ = Σ` for a PSD 2×2 matrix, tolerating singular input.
pub(crate) fn psd_factor(s: &Matrix2<f64>) -> Matrix2<f64> {
    let (a, b, c) = (s[(0, 0)].max(0.0), s[(0, 1)], s[(1, 1)].max(0.0));
    if a > 0.0 {
        let l00 = a.sqrt();
        let l10 = b / l00;
        let l11 = (c - l10 * l10).max(0.0).sqrt();
        Matrix2::new(l00, 0.0, l10, l11)
    } else {
        Matrix2::new(0.0, 0.0, 0.0, c.sqrt())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn inverted_oscillator_transition_is_hyperbolic() {
        let (m, w) = (4.4e-18, 2.0 * std::f64::consts::PI * 9.3e3);
        let sde = LinearSde2::oscillator(m, m * w * w, 0.0, 0.0);
        let tau = 50e-6;
        let d = sde.discretize(tau);
        let x = w * tau;
        assert_relative_eq!(d.transition[(0, 0)], x.cosh(), max_relative = 1e-13);
        assert_relative_eq!(d.transition[(0, 1)], x.sinh() / (m * w), max_relative = 1e-13);
        assert_relative_eq!(d.transition[(1, 0)], m * w * x.sinh(), max_relative = 1e-13);
        assert_eq!(d.noise, Matrix2::zeros());
    }

    #[test]
    fn brownian_momentum_noise_matches_integrals() {
        // Free particle: Q_d = D [[dt³/(3m²), dt²/(2m)], [dt²/(2m), dt]].
        let (m, dcoef, dt) = (2.0, 0.5, 0.3);
        let sde = LinearSde2::new(
            Matrix2::new(0.0, 1.0 / m, 0.0, 0.0),
            Matrix2::new(0.0, 0.0, 0.0, dcoef),
        );
        let q = sde.discretize(dt).noise;
        assert_relative_eq!(q[(0, 0)], dcoef * dt.powi(3) / (3.0 * m * m), max_relative = 1e-12);
        assert_relative_eq!(q[(0, 1)], dcoef * dt * dt / (2.0 * m), max_relative = 1e-12);
        assert_relative_eq!(q[(1, 1)], dcoef * dt, max_relative = 1e-12);
    }

    #[test]
    fn factor_reproduces_covariance() {
        let s = Matrix2::new(4.0, 1.0, 1.0, 3.0);
        let l = psd_factor(&s);
        assert_relative_eq!(l * l.transpose(), s, max_relative = 1e-14);
        let singular = Matrix2::new(0.0, 0.0, 0.0, 2.0);
        let l = psd_factor(&singular);
        assert_relative_eq!(l * l.transpose(), singular, max_relative = 1e-14);
    }
}
