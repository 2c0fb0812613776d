//! Least-squares fit of `A e^{λ't} cos(λ''t + φ) + c` to a sampled series.

use nalgebra::{DMatrix, DVector, Matrix3, SMatrix, SVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DampingFit {
    /// `λ'`; negative for a decaying signal.
    pub decay_rate: f64,
    /// `λ'' ≥ 0`.
    pub frequency: f64,
    pub amplitude: f64,
    pub phase: f64,
    pub offset: f64,
    /// Root-mean-square misfit relative to the RMS of the data about its mean.
    pub residual: f64,
    pub iterations: usize,
}

impl DampingFit {
    pub fn eval(&self, t: f64) -> f64 {
        self.amplitude * (self.decay_rate * t).exp() * (self.frequency * t + self.phase).cos() + self.offset
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Fits with a larger relative residual are reported as failures.
    pub max_residual: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iterations: 500,
            max_residual: 0.05,
        }
    }
}

pub fn fit_damping(times: &[f64], values: &[f64]) -> Result<DampingFit> {
    fit_damping_with(times, values, &FitOptions::default())
}

/// Fit on a uniform time grid. A linear-prediction (Prony) estimate of the
/// dominant damped pair seeds a Levenberg–Marquardt refinement.
pub fn fit_damping_with(times: &[f64], values: &[f64], opts: &FitOptions) -> Result<DampingFit> {
    if times.len() != values.len() || times.len() < 8 {
        return Err(Error::InvalidParameter("need at least 8 samples of equal length".into()));
    }
    let dt = times[1] - times[0];
    if !(dt > 0.0) || times.windows(2).any(|w| ((w[1] - w[0]) - dt).abs() > 1e-9 * dt.max(w[1].abs())) {
        return Err(Error::InvalidParameter("fit requires a uniform, increasing time grid".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("series contains non-finite values".into()));
    }
    let t0 = times[0];
    let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return Err(Error::FitFailed { residual: f64::NAN });
    }
    let y: Vec<f64> = values.iter().map(|v| v / scale).collect();
    let t: Vec<f64> = times.iter().map(|x| x - t0).collect();

    let lambda = prony_pair(&y, dt)?;
    let mut p = linear_amplitudes(&t, &y, lambda);
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let spread = (y.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / y.len() as f64).sqrt().max(f64::MIN_POSITIVE);

    let mut cost = cost_of(&t, &y, &p);
    let mut mu = 1e-3;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iterations {
        iterations += 1;
        let (jtj, jtr) = normal_equations(&t, &y, &p);
        let mut improved = false;
        for _ in 0..30 {
            let mut a = jtj;
            for k in 0..5 {
                a[(k, k)] += mu * jtj[(k, k)].max(1e-30);
            }
            let Some(step) = a.lu().solve(&(-jtr)) else {
                mu *= 10.0;
                continue;
            };
            let trial = p + step;
            let c = cost_of(&t, &y, &trial);
            if c.is_finite() && c <= cost {
                let rel = (cost - c) / cost.max(f64::MIN_POSITIVE);
                let small_step = step.norm() <= 1e-14 * (p.norm() + 1e-14);
                p = trial;
                cost = c;
                mu = (mu / 3.0).max(1e-12);
                improved = true;
                if rel < 1e-14 || small_step {
                    converged = true;
                }
                break;
            }
            mu *= 4.0;
        }
        if !improved || converged {
            converged = true;
            break;
        }
    }
    let residual = (2.0 * cost / y.len() as f64).sqrt() / spread;
    if !converged || !residual.is_finite() || residual > opts.max_residual {
        return Err(Error::FitFailed { residual });
    }

    let (mut amp, decay, mut freq, mut phase, offset) = (p[0], p[1], p[2], p[3], p[4]);
    if amp < 0.0 {
        amp = -amp;
        phase += std::f64::consts::PI;
    }
    if freq < 0.0 {
        freq = -freq;
        phase = -phase;
    }
    // Shift back to the original time origin.
    let amp = amp * (-decay * t0).exp() * scale;
    phase = (phase - freq * t0).rem_euclid(2.0 * std::f64::consts::PI);
    Ok(DampingFit {
        decay_rate: decay,
        frequency: freq,
        amplitude: amp,
        phase,
        offset: offset * scale,
        residual,
        iterations,
    })
}

/// Dominant complex pair `λ' + iλ''` from order-3 linear prediction
/// (a damped pair plus a constant offset).
fn prony_pair(y: &[f64], dt: f64) -> Result<Complex64> {
    let rows = y.len() - 3;
    let a = DMatrix::from_fn(rows, 3, |r, c| y[r + 2 - c]);
    let b = DVector::from_fn(rows, |r, _| y[r + 3]);
    let coef = a
        .svd(true, true)
        .solve(&b, 1e-13)
        .map_err(|_| Error::FitFailed { residual: f64::NAN })?;
    let companion = Matrix3::new(coef[0], coef[1], coef[2], 1.0, 0.0, 0.0, 0.0, 1.0, 0.0);
    let roots = companion.complex_eigenvalues();
    let best = roots
        .iter()
        .copied()
        .filter(|z| z.norm() > 0.0)
        .max_by(|a, b| a.im.abs().total_cmp(&b.im.abs()))
        .ok_or(Error::FitFailed { residual: f64::NAN })?;
    if best.im.abs() > 0.0 {
        Ok(best.ln() / dt)
    } else {
        // No oscillating pair: start from the root farthest from a constant.
        let z = roots
            .iter()
            .copied()
            .filter(|z| z.re > 0.0)
            .max_by(|a, b| (a - 1.0).norm().total_cmp(&(b - 1.0).norm()))
            .unwrap_or(Complex64::new(0.5, 0.0));
        Ok(Complex64::new(z.re.ln() / dt, 1e-3 / dt))
    }
}

type Params = SVector<f64, 5>;

/// Amplitude, phase and offset by linear least squares for fixed `λ`.
fn linear_amplitudes(t: &[f64], y: &[f64], lambda: Complex64) -> Params {
    let a = DMatrix::from_fn(t.len(), 3, |r, c| {
        let e = (lambda.re * t[r]).exp();
        match c {
            0 => e * (lambda.im * t[r]).cos(),
            1 => e * (lambda.im * t[r]).sin(),
            _ => 1.0,
        }
    });
    let b = DVector::from_column_slice(y);
    let sol = a.svd(true, true).solve(&b, 1e-14).unwrap_or_else(|_| DVector::zeros(3));
    let (cc, ss) = (sol[0], sol[1]);
    Params::new(cc.hypot(ss), lambda.re, lambda.im, (-ss).atan2(cc), sol[2])
}

fn model(t: f64, p: &Params) -> (f64, f64, f64) {
    let e = (p[1] * t).exp();
    let (s, c) = (p[2] * t + p[3]).sin_cos();
    (p[0] * e * c + p[4], e * c, e * s)
}

fn cost_of(t: &[f64], y: &[f64], p: &Params) -> f64 {
    0.5 * t.iter().zip(y).map(|(&ti, &yi)| (model(ti, p).0 - yi).powi(2)).sum::<f64>()
}

fn normal_equations(t: &[f64], y: &[f64], p: &Params) -> (SMatrix<f64, 5, 5>, Params) {
    let mut jtj = SMatrix::<f64, 5, 5>::zeros();
    let mut jtr = Params::zeros();
    for (&ti, &yi) in t.iter().zip(y) {
        let (m, ec, es) = model(ti, p);
        let a = p[0];
        let row = Params::new(ec, ti * a * ec, -ti * a * es, -a * es, 1.0);
        jtj += row * row.transpose();
        jtr += row * (m - yi);
    }
    (jtj, jtr)
}
