//! Levenberg–Marquardt for small, smooth least-squares problems.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmOptions {
    pub max_iterations: usize,
    /// Converged when `‖Jᵀr‖∞ ≤ gradient_tol·(1 + cost)`.
    pub gradient_tol: f64,
    pub initial_damping: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            gradient_tol: 1e-9,
            initial_damping: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmOutcome {
    pub params: DVector<f64>,
    /// `Σ r²` at `params`.
    pub cost: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Cost after each accepted step, starting with the initial cost.
    pub cost_history: Vec<f64>,
}

/// Residuals and Jacobian at a parameter vector, or `None` outside the model domain.
pub trait Problem {
    fn evaluate(&self, params: &DVector<f64>) -> Option<(DVector<f64>, DMatrix<f64>)>;
}

impl<F> Problem for F
where
    F: Fn(&DVector<f64>) -> Option<(DVector<f64>, DMatrix<f64>)>,
{
    fn evaluate(&self, params: &DVector<f64>) -> Option<(DVector<f64>, DMatrix<f64>)> {
        self(params)
    }
}

pub fn minimize<P: Problem>(problem: &P, start: DVector<f64>, options: &LmOptions) -> Option<LmOutcome> {
    let (mut r, mut j) = problem.evaluate(&start)?;
    let mut x = start;
    let mut cost = r.norm_squared();
    let mut lambda = options.initial_damping;
    let mut history = vec![cost];
    let mut iterations = 0;

    let grad_inf = |j: &DMatrix<f64>, r: &DVector<f64>| (j.transpose() * r).amax();
    let mut g = grad_inf(&j, &r);

    while iterations < options.max_iterations {
        if g <= options.gradient_tol * (1.0 + cost) {
            break;
        }
        iterations += 1;
        let jtj = j.transpose() * &j;
        let jtr = j.transpose() * &r;
        let mut accepted = false;
        while lambda < 1e16 {
            let mut a = jtj.clone();
            for i in 0..a.nrows() {
                a[(i, i)] += lambda * jtj[(i, i)].max(1e-300);
            }
            let step = match a.cholesky() {
                Some(ch) => -ch.solve(&jtr),
                None => {
                    lambda *= 10.0;
                    continue;
                }
            };
            let trial = &x + &step;
            if let Some((r2, j2)) = problem.evaluate(&trial) {
                let c2 = r2.norm_squared();
                if c2 < cost {
                    x = trial;
                    r = r2;
                    j = j2;
                    cost = c2;
                    lambda = (lambda / 10.0).max(1e-12);
                    history.push(cost);
                    accepted = true;
                    break;
                }
            }
            lambda *= 10.0;
        }
        g = grad_inf(&j, &r);
        if !accepted {
            // No descent direction left at floating-point resolution.
            break;
        }
    }
    Some(LmOutcome {
        params: x,
        cost,
        gradient_norm: g,
        iterations,
        converged: g <= options.gradient_tol * (1.0 + cost),
        cost_history: history,
    })
}
