use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::model::{Cov2, GaussianState};

use super::model::{Discrete, OscillatorModel};

/// Prior on the state at the first sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Prior {
    /// Zero mean with a spread far beyond anything the trace supports.
    Diffuse,
    Gaussian(GaussianState),
}

/// Width of the diffuse prior relative to the trace scale.
const DIFFUSE_SCALE: f64 = 1e3;

impl Prior {
    pub fn resolve(&self, trace: &[f64], model: &OscillatorModel) -> Result<GaussianState> {
        match self {
            Prior::Gaussian(s) => Ok(*s),
            Prior::Diffuse => {
                let rms = (trace.iter().map(|y| y * y).sum::<f64>() / trace.len().max(1) as f64).sqrt();
                let scale = rms.max(model.measurement_variance().sqrt());
                let sz = DIFFUSE_SCALE * if scale > 0.0 { scale } else { 1.0 };
                let sp = model.mass * model.omega * sz;
                GaussianState::new(0.0, 0.0, Cov2::new(sz * sz, 0.0, sp * sp))
            }
        }
    }
}

/// Mean and covariance in scaled coordinates, with the covariance determinant tracked
/// separately from the entries.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Est {
    x: [f64; 2],
    p: [f64; 3],
    det: f64,
}

impl Est {
    fn from_state(s: &GaussianState, scale: f64) -> Self {
        Self {
            x: [s.mean_z(), s.mean_p() / scale],
            p: [s.var_z(), s.cov_zp() / scale, s.var_p() / (scale * scale)],
            det: s.det() / (scale * scale),
        }
    }

    fn to_state(self, scale: f64) -> Result<GaussianState> {
        let [a, b, c] = self.p;
        let (a, c) = (a.max(0.0), c.max(0.0));
        let det = self.det.clamp(0.0, a * c);
        GaussianState::with_determinant(
            self.x[0],
            self.x[1] * scale,
            Cov2::new(a, b * scale, c * scale * scale),
            det * scale * scale,
        )
    }
}

fn det_of_sum(a: [f64; 3], det_a: f64, b: [f64; 3]) -> f64 {
    let det_b = b[0] * b[2] - b[1] * b[1];
    det_a + det_b + a[0] * b[2] + a[2] * b[0] - 2.0 * a[1] * b[1]
}

fn predict(e: &Est, d: &Discrete) -> Est {
    let (c, s) = (d.cos, d.sin);
    let x = [c * e.x[0] + s * e.x[1], -s * e.x[0] + c * e.x[1]];
    let [a, b, cc] = e.p;
    // Rotation congruence.
    let a2 = c * c * a + 2.0 * c * s * b + s * s * cc;
    let b2 = -c * s * a + (c * c - s * s) * b + c * s * cc;
    let c2 = s * s * a - 2.0 * c * s * b + c * c * cc;
    let rotated = [a2, b2, c2];
    let q = [d.q.0, d.q.1, d.q.2];
    Est {
        x,
        p: [a2 + q[0], b2 + q[1], c2 + q[2]],
        det: det_of_sum(rotated, e.det, q),
    }
}

/// Scalar position update. Returns the innovation and its variance.
fn update(e: &mut Est, y: f64, r: f64) -> (f64, f64) {
    let [a, b, c] = e.p;
    let innov = y - e.x[0];
    let s = a + r;
    if !(s > 0.0) {
        return (innov, 0.0);
    }
    e.x[0] += a / s * innov;
    e.x[1] += b / s * innov;
    if r > 0.0 {
        let f = r / s;
        let (a2, b2, det2) = (a * f, b * f, e.det * f);
        let c2 = if a2 > 0.0 { (det2 + b2 * b2) / a2 } else { c };
        e.p = [a2, b2, c2];
        e.det = det2;
    } else {
        e.p = [0.0, 0.0, (c - b * b / a).max(0.0)];
        e.det = 0.0;
    }
    (innov, s)
}

/// Forward pass: predicted and filtered states for every sample, plus innovations.
#[derive(Debug, Clone)]
pub struct KalmanOutput {
    pub filtered: Vec<GaussianState>,
    pub predicted: Vec<GaussianState>,
    pub innovations: Vec<f64>,
    pub innovation_variances: Vec<f64>,
    est_filtered: Vec<Est>,
    est_predicted: Vec<Est>,
}

impl KalmanOutput {
    /// Innovations divided by their predicted standard deviation.
    pub fn normalized_innovations(&self) -> Vec<f64> {
        self.innovations
            .iter()
            .zip(&self.innovation_variances)
            .filter(|(_, &v)| v > 0.0)
            .map(|(i, v)| i / v.sqrt())
            .collect()
    }
}

fn check_trace(trace: &[f64]) -> Result<()> {
    if trace.is_empty() {
        return Err(invalid("trace", "must contain at least one sample"));
    }
    if trace.iter().any(|y| !y.is_finite()) {
        return Err(invalid("trace", "contains non-finite samples"));
    }
    Ok(())
}

pub fn kalman_forward(trace: &[f64], model: &OscillatorModel, prior: &GaussianState) -> Result<KalmanOutput> {
    model.validate()?;
    check_trace(trace)?;
    if !prior.covariance().is_psd(1e-9) {
        return Err(invalid("prior", "covariance is not positive semidefinite"));
    }
    let d = model.discrete();
    let scale = d.momentum_scale;
    let n = trace.len();
    let mut out = KalmanOutput {
        filtered: Vec::with_capacity(n),
        predicted: Vec::with_capacity(n),
        innovations: Vec::with_capacity(n),
        innovation_variances: Vec::with_capacity(n),
        est_filtered: Vec::with_capacity(n),
        est_predicted: Vec::with_capacity(n),
    };
    let mut e = Est::from_state(prior, scale);
    for (k, &y) in trace.iter().enumerate() {
        if k > 0 {
            e = predict(&e, &d);
        }
        out.est_predicted.push(e);
        out.predicted.push(e.to_state(scale)?);
        let (innov, var) = update(&mut e, y, d.r);
        out.innovations.push(innov);
        out.innovation_variances.push(var);
        out.est_filtered.push(e);
        out.filtered.push(e.to_state(scale)?);
    }
    Ok(out)
}

fn mat(p: [f64; 3]) -> Matrix2<f64> {
    Matrix2::new(p[0], p[1], p[1], p[2])
}

/// Rauch–Tung–Striebel backward pass over a forward run.
///
/// With `P_pred = Φ P_f Φᵀ + Q` the gain is `G = Φ⁻¹(I − Q P_pred⁻¹)` and
/// `I − GΦ = Φ⁻¹ Q P_pred⁻¹ Φ`, so the smoothed covariance
/// `(I − GΦ) P_f (I − GΦ)ᵀ + G (Q + P_s') Gᵀ` is a sum of PSD terms. This avoids the
/// cancellation of the textbook form when the prior is diffuse.
pub fn rts_smooth(forward: &KalmanOutput, model: &OscillatorModel) -> Result<Vec<GaussianState>> {
    let d = model.discrete();
    let scale = d.momentum_scale;
    let n = forward.est_filtered.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let (c, s) = (d.cos, d.sin);
    let phi = Matrix2::new(c, s, -s, c);
    let phi_inv = phi.transpose();
    let q = mat([d.q.0, d.q.1, d.q.2]);
    let noiseless = q == Matrix2::zeros();

    let mut smoothed = vec![forward.est_filtered[n - 1]; n];
    for k in (0..n - 1).rev() {
        let f = forward.est_filtered[k];
        let pr = forward.est_predicted[k + 1];
        let next = smoothed[k + 1];
        let q_pinv = if noiseless {
            Matrix2::zeros()
        } else {
            // Q > 0 implies P_pred ≥ Q is invertible; use the tracked determinant.
            let [a, b, cc] = pr.p;
            q * Matrix2::new(cc, -b, -b, a) / pr.det
        };
        let g = phi_inv * (Matrix2::identity() - q_pinv);
        let e = phi_inv * q_pinv * phi;
        let x = e * Vector2::from(f.x) + g * Vector2::from(next.x);
        let p = e * mat(f.p) * e.transpose() + g * (q + mat(next.p)) * g.transpose();
        let (p00, p11) = (p[(0, 0)].max(0.0), p[(1, 1)].max(0.0));
        let p01 = 0.5 * (p[(0, 1)] + p[(1, 0)]);
        smoothed[k] = Est {
            x: [x[0], x[1]],
            p: [p00, p01, p11],
            det: (p00 * p11 - p01 * p01).max(0.0),
        };
    }
    smoothed.into_iter().map(|e| e.to_state(scale)).collect()
}

/// Smoothed state at the first sample, with its error covariance.
pub fn estimate_recapture_state(trace: &[f64], model: &OscillatorModel, prior: &Prior) -> Result<GaussianState> {
    check_trace(trace)?;
    let prior = prior.resolve(trace, model)?;
    let fwd = kalman_forward(trace, model, &prior)?;
    Ok(rts_smooth(&fwd, model)?[0])
}

/// Ljung–Box portmanteau statistic over lags `1..=lags`. Under whiteness it follows a
/// chi-squared law with `lags` degrees of freedom.
pub fn ljung_box(series: &[f64], lags: usize) -> Result<f64> {
    let n = series.len();
    if lags == 0 || lags >= n {
        return Err(invalid("lags", format!("need 0 < lags < {n}")));
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let c0 = series.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
    if !(c0 > 0.0) {
        return Err(invalid("series", "has zero variance"));
    }
    let q = (1..=lags)
        .map(|k| {
            let ck = series
                .windows(k + 1)
                .map(|w| (w[0] - mean) * (w[k] - mean))
                .sum::<f64>();
            (ck / c0).powi(2) / (n - k) as f64
        })
        .sum::<f64>();
    Ok(n as f64 * (n as f64 + 2.0) * q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{InitialState, PhysicalParams};
    use crate::montecarlo::{Displacement, ProtocolTimeline, ShotConfig, ShotSimulator};
    use approx::assert_relative_eq;
    use nalgebra::RowVector2;
    use std::f64::consts::TAU;

    fn shot_config(psd: f64, recapture: f64, gamma: f64) -> ShotConfig {
        let params = PhysicalParams::new(4.4e-18, TAU * 44e3, TAU * 9.3e3, gamma).unwrap();
        let mut c = ShotConfig::new(
            params,
            InitialState::thermal(170e-12),
            Displacement::Direct { sigma_disp: 1.14e-9 },
            ProtocolTimeline {
                t_fb_off: 1e-6,
                tau: 40e-6,
                recapture_duration: recapture,
                sample_rate: 2e6,
            },
            5,
        );
        c.detector_noise_psd = psd;
        c
    }

    fn model_for(c: &ShotConfig) -> OscillatorModel {
        OscillatorModel::from_params(&c.params, c.detector_noise_psd, c.timeline.sample_rate).unwrap()
    }

    fn si_matrices(m: &OscillatorModel) -> (Matrix2<f64>, Matrix2<f64>) {
        let d = m.discrete();
        let s = d.momentum_scale;
        let phi = Matrix2::new(d.cos, d.sin / s, -d.sin * s, d.cos);
        let q = Matrix2::new(d.q.0, d.q.1 * s, d.q.1 * s, d.q.2 * s * s);
        (phi, q)
    }

    /// Joseph-form Riccati recursion iterated to its fixed point.
    fn riccati_fixed_point(m: &OscillatorModel) -> Matrix2<f64> {
        let (phi, q) = si_matrices(m);
        let h = RowVector2::new(1.0, 0.0);
        let r = m.measurement_variance();
        let mut p = Matrix2::new(1e-16, 0.0, 0.0, 1e-36);
        for _ in 0..200_000 {
            let pp = phi * p * phi.transpose() + q;
            let s = (h * pp * h.transpose())[(0, 0)] + r;
            let k = pp * h.transpose() / s;
            let i_kh = Matrix2::identity() - k * h;
            let next = i_kh * pp * i_kh.transpose() + k * k.transpose() * r;
            let done = ((next - p).abs().component_div(&next.abs().add_scalar(1e-300))).max() < 1e-12;
            p = next;
            if done {
                break;
            }
        }
        p
    }

    #[test]
    fn zero_measurement_noise_reproduces_samples() {
        let c = shot_config(0.0, 100e-6, TAU * 554e3);
        let sim = ShotSimulator::new(&c).unwrap();
        let rec = sim.draw(0, true);
        let trace = rec.trace.unwrap();
        let m = model_for(&c);
        let prior = Prior::Diffuse.resolve(&trace, &m).unwrap();
        let out = kalman_forward(&trace, &m, &prior).unwrap();
        for (f, y) in out.filtered.iter().zip(&trace) {
            assert_eq!(f.mean_z(), *y);
        }
    }

    #[test]
    fn filter_converges_to_riccati_fixed_point() {
        let c = shot_config(1e-24, 2e-3, TAU * 554e3);
        let m = model_for(&c);
        let trace = vec![0.0; 4000];
        let prior = Prior::Diffuse.resolve(&[1e-9], &m).unwrap();
        let out = kalman_forward(&trace, &m, &prior).unwrap();
        let last = out.filtered.last().unwrap();
        let p = riccati_fixed_point(&m);
        assert_relative_eq!(last.var_z(), p[(0, 0)], max_relative = 1e-6);
        assert_relative_eq!(last.cov_zp(), p[(0, 1)], max_relative = 1e-6);
        assert_relative_eq!(last.var_p(), p[(1, 1)], max_relative = 1e-6);
    }

    #[test]
    fn filtering_error_matches_steady_state_variance() {
        // A long record from the simulator with the true state tracked alongside.
        let c = shot_config(1e-24, 0.0, TAU * 554e3);
        let m = model_for(&c);
        let (phi, q) = si_matrices(&m);
        let l = q.cholesky().unwrap().l();
        let mut rng = crate::montecarlo::stream(9, crate::montecarlo::Purpose::Synthetic, 0);
        use rand::Rng;
        use rand_distr::StandardNormal;
        let n = 40_000;
        let mut x = Vector2::new(2e-9, 0.0);
        let r = m.measurement_variance().sqrt();
        let mut truth = Vec::with_capacity(n);
        let mut trace = Vec::with_capacity(n);
        for k in 0..n {
            if k > 0 {
                let w = Vector2::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
                x = phi * x + l * w;
            }
            truth.push(x[0]);
            trace.push(x[0] + r * rng.sample::<f64, _>(StandardNormal));
        }
        let prior = Prior::Diffuse.resolve(&trace, &m).unwrap();
        let out = kalman_forward(&trace, &m, &prior).unwrap();
        let burn = 1000;
        let mse = out.filtered[burn..]
            .iter()
            .zip(&truth[burn..])
            .map(|(f, t)| (f.mean_z() - t).powi(2))
            .sum::<f64>()
            / (n - burn) as f64;
        let p = riccati_fixed_point(&m)[(0, 0)];
        assert!(mse <= 1.05 * p, "mse / P = {}", mse / p);

        // Innovation whiteness.
        let innov = &out.normalized_innovations()[burn..];
        let lags = 20;
        let q = ljung_box(innov, lags).unwrap();
        let crit = statrs::distribution::ContinuousCDF::inverse_cdf(
            &statrs::distribution::ChiSquared::new(lags as f64).unwrap(),
            0.999,
        );
        assert!(q < crit, "Ljung-Box {q} > {crit}");
    }

    #[test]
    fn single_sample_smoothing_is_filtering() {
        let c = shot_config(1e-24, 0.0, TAU * 554e3);
        let m = model_for(&c);
        let prior = Prior::Diffuse.resolve(&[3e-9], &m).unwrap();
        let fwd = kalman_forward(&[3e-9], &m, &prior).unwrap();
        assert_eq!(rts_smooth(&fwd, &m).unwrap(), fwd.filtered);
    }

    #[test]
    fn smoothing_shrinks_covariance() {
        let c = shot_config(1e-24, 200e-6, TAU * 554e3);
        let rec = ShotSimulator::new(&c).unwrap().draw(1, true);
        let trace = rec.trace.unwrap();
        let m = model_for(&c);
        let prior = Prior::Diffuse.resolve(&trace, &m).unwrap();
        let fwd = kalman_forward(&trace, &m, &prior).unwrap();
        let sm = rts_smooth(&fwd, &m).unwrap();
        for (s, f) in sm.iter().zip(&fwd.filtered) {
            let diff = f.covariance() - s.covariance();
            assert!(diff.is_psd(1e-6), "smoothed exceeds filtered: {diff:?}");
            assert!(s.covariance().is_psd(1e-9) && f.covariance().is_psd(1e-9));
        }
        let mid = trace.len() / 2;
        assert!(sm[mid].var_z() < fwd.filtered[mid].var_z());
    }

    #[test]
    fn noiseless_sinusoid_is_recovered_exactly() {
        let m = OscillatorModel {
            omega: TAU * 44e3,
            mass: 4.4e-18,
            process_noise_psd: 0.0,
            measurement_noise_psd: 0.0,
            sample_interval: 5e-7,
        };
        let (z0, p0) = (7e-9, -3.1e-21);
        let v0 = p0 / (m.mass * m.omega);
        let trace: Vec<f64> = (0..400)
            .map(|k| {
                let t = m.omega * k as f64 * m.sample_interval;
                z0 * t.cos() + v0 * t.sin()
            })
            .collect();
        let est = estimate_recapture_state(&trace, &m, &Prior::Diffuse).unwrap();
        assert_relative_eq!(est.mean_z(), z0, max_relative = 1e-9);
        assert_relative_eq!(est.mean_p(), p0, max_relative = 1e-9);
    }

    #[test]
    fn diffuse_prior_forgets_its_mean() {
        let c = shot_config(1e-24, 200e-6, TAU * 554e3);
        let rec = ShotSimulator::new(&c).unwrap().draw(2, true);
        let trace = rec.trace.unwrap();
        let m = model_for(&c);
        let base = Prior::Diffuse.resolve(&trace, &m).unwrap();
        let shifted = GaussianState::new(
            50.0 * base.sigma_z() / DIFFUSE_SCALE,
            -30.0 * base.sigma_p() / DIFFUSE_SCALE,
            base.covariance(),
        )
        .unwrap();
        let a = estimate_recapture_state(&trace, &m, &Prior::Gaussian(base)).unwrap();
        let b = estimate_recapture_state(&trace, &m, &Prior::Gaussian(shifted)).unwrap();
        assert!((a.mean_z() - b.mean_z()).abs() < 1e-3 * a.sigma_z());
        assert!((a.mean_p() - b.mean_p()).abs() < 1e-3 * a.sigma_p());
    }

    #[test]
    fn rejects_empty_trace_and_bad_prior() {
        let c = shot_config(1e-24, 0.0, TAU * 554e3);
        let m = model_for(&c);
        assert!(estimate_recapture_state(&[], &m, &Prior::Diffuse).is_err());
        assert!(ljung_box(&[1.0, 2.0], 2).is_err());
    }

    proptest::proptest! {
        #[test]
        fn covariances_stay_psd(
            f_hz in 1e4..1e5f64,
            oversample in 4.0..40.0f64,
            force_psd in 0.0..1e-38f64,
            meas_psd in 1e-28..1e-21f64,
            samples in proptest::collection::vec(-1e-8..1e-8f64, 2..120),
        ) {
            let omega = TAU * f_hz;
            let model = OscillatorModel {
                omega,
                mass: 4.4e-18,
                process_noise_psd: force_psd,
                measurement_noise_psd: meas_psd,
                sample_interval: 1.0 / (oversample * f_hz),
            };
            let prior = Prior::Diffuse.resolve(&samples, &model).unwrap();
            let fwd = kalman_forward(&samples, &model, &prior).unwrap();
            let smoothed = rts_smooth(&fwd, &model).unwrap();
            for s in fwd.filtered.iter().chain(&fwd.predicted).chain(&smoothed) {
                proptest::prop_assert!(s.covariance().is_psd(1e-9), "{:?}", s.covariance());
                proptest::prop_assert!(s.det() >= 0.0);
            }
            proptest::prop_assert!(fwd.innovation_variances.iter().all(|v| *v > 0.0));
        }
    }
}
