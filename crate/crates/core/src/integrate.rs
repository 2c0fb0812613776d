//! Dormand–Prince 5(4) integrator with step-size control and fourth-order
//! dense output, for real or complex state vectors.

use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Scalar type of an integrated state.
pub trait Scalar: Copy + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> + Send + Sync {
    fn zero() -> Self;
    fn magnitude(self) -> f64;
    fn is_finite(self) -> bool;
}

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn magnitude(self) -> f64 {
        self.abs()
    }
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
}

impl Scalar for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn magnitude(self) -> f64 {
        self.norm()
    }
    fn is_finite(self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dp5Options {
    pub rtol: f64,
    pub atol: f64,
    /// Initial step; chosen automatically when `None`.
    pub h_init: Option<f64>,
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for Dp5Options {
    fn default() -> Self {
        Dp5Options {
            rtol: 1e-9,
            atol: 1e-12,
            h_init: None,
            h_max: f64::INFINITY,
            max_steps: 5_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Dp5Stats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evaluations: usize,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

/// Integrate `y' = f(t, y)` from `t0` to the last of `samples`.
///
/// `samples` must be non-decreasing and start at or after `t0`; `observe`
/// is called once per sample with the dense-output state. `post_step` may
/// modify the accepted state and returns whether it did, in which case the
/// derivative is re-evaluated.
pub fn integrate<T, F, O, P>(
    mut f: F,
    t0: f64,
    y0: &[T],
    samples: &[f64],
    opts: &Dp5Options,
    mut observe: O,
    mut post_step: P,
) -> Result<Dp5Stats>
where
    T: Scalar,
    F: FnMut(f64, &[T], &mut [T]),
    O: FnMut(f64, &[T]) -> Result<()>,
    P: FnMut(f64, &mut [T]) -> bool,
{
    let n = y0.len();
    let mut stats = Dp5Stats::default();
    let Some(&t_end) = samples.last() else {
        return Ok(stats);
    };
    if samples.windows(2).any(|w| w[1] < w[0]) || samples[0] < t0 {
        return Err(Error::InvalidParameter("sample times must be sorted and start at t0 or later".into()));
    }

    let mut y = y0.to_vec();
    let mut next = 0;
    while next < samples.len() && samples[next] == t0 {
        observe(t0, &y)?;
        next += 1;
    }
    if next == samples.len() {
        return Ok(stats);
    }

    let zero = T::zero();
    let mut k1 = vec![zero; n];
    let mut k2 = vec![zero; n];
    let mut k3 = vec![zero; n];
    let mut k4 = vec![zero; n];
    let mut k5 = vec![zero; n];
    let mut k6 = vec![zero; n];
    let mut k7 = vec![zero; n];
    let mut y_new = vec![zero; n];
    let mut tmp = vec![zero; n];
    let mut dense = vec![zero; n];

    f(t0, &y, &mut k1);
    stats.rhs_evaluations += 1;

    let span = t_end - t0;
    let mut h = match opts.h_init {
        Some(h) => h,
        None => initial_step(&mut f, t0, &y, &k1, opts, &mut stats),
    }
    .min(opts.h_max)
    .min(span);
    let mut t = t0;
    let mut last_rejected = false;

    while next < samples.len() {
        if stats.accepted + stats.rejected >= opts.max_steps {
            return Err(Error::TooManySteps { steps: opts.max_steps, t });
        }
        let h_floor = 16.0 * f64::EPSILON * t.abs().max(span.abs()).max(1e-300);
        if h < h_floor {
            return Err(Error::StepSizeUnderflow { t, h });
        }
        let last = t + h >= t_end || t_end - (t + h) < h_floor;
        if last {
            h = t_end - t;
        }

        for i in 0..n {
            tmp[i] = y[i] + k1[i] * (h * A21);
        }
        f(t + C2 * h, &tmp, &mut k2);
        for i in 0..n {
            tmp[i] = y[i] + (k1[i] * A31 + k2[i] * A32) * h;
        }
        f(t + C3 * h, &tmp, &mut k3);
        for i in 0..n {
            tmp[i] = y[i] + (k1[i] * A41 + k2[i] * A42 + k3[i] * A43) * h;
        }
        f(t + C4 * h, &tmp, &mut k4);
        for i in 0..n {
            tmp[i] = y[i] + (k1[i] * A51 + k2[i] * A52 + k3[i] * A53 + k4[i] * A54) * h;
        }
        f(t + C5 * h, &tmp, &mut k5);
        for i in 0..n {
            tmp[i] = y[i] + (k1[i] * A61 + k2[i] * A62 + k3[i] * A63 + k4[i] * A64 + k5[i] * A65) * h;
        }
        f(t + h, &tmp, &mut k6);
        for i in 0..n {
            y_new[i] = y[i] + (k1[i] * A71 + k3[i] * A73 + k4[i] * A74 + k5[i] * A75 + k6[i] * A76) * h;
        }
        f(t + h, &y_new, &mut k7);
        stats.rhs_evaluations += 6;

        let mut err_sq = 0.0;
        for i in 0..n {
            let e = (k1[i] * E1 + k3[i] * E3 + k4[i] * E4 + k5[i] * E5 + k6[i] * E6 + k7[i] * E7) * h;
            let sc = opts.atol + opts.rtol * y[i].magnitude().max(y_new[i].magnitude());
            let r = e.magnitude() / sc;
            err_sq += r * r;
        }
        let err = if n == 0 { 0.0 } else { (err_sq / n as f64).sqrt() };

        if !err.is_finite() || err > 1.0 {
            stats.rejected += 1;
            let factor = if err.is_finite() { (0.9 * err.powf(-0.2)).max(0.2) } else { 0.2 };
            h *= factor;
            last_rejected = true;
            continue;
        }
        stats.accepted += 1;
        let t_new = if last { t_end } else { t + h };

        // Dense output on (t, t_new].
        while next < samples.len() && samples[next] <= t_new {
            let theta = (samples[next] - t) / h;
            let theta1 = 1.0 - theta;
            for i in 0..n {
                let ydiff = y_new[i] - y[i];
                let bspl = k1[i] * h - ydiff;
                let r4 = ydiff - k7[i] * h - bspl;
                let r5 = (k1[i] * D1 + k3[i] * D3 + k4[i] * D4 + k5[i] * D5 + k6[i] * D6 + k7[i] * D7) * h;
                dense[i] = y[i] + (ydiff + (bspl + (r4 + r5 * theta1) * theta) * theta1) * theta;
            }
            if samples[next] == t_new {
                dense.copy_from_slice(&y_new);
            }
            observe(samples[next], &dense)?;
            next += 1;
        }

        std::mem::swap(&mut y, &mut y_new);
        t = t_new;
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { t });
        }
        if post_step(t, &mut y) {
            f(t, &y, &mut k1);
            stats.rhs_evaluations += 1;
        } else {
            std::mem::swap(&mut k1, &mut k7);
        }

        let mut factor = (0.9 * err.max(1e-10).powf(-0.2)).clamp(0.2, 5.0);
        if last_rejected {
            factor = factor.min(1.0);
        }
        last_rejected = false;
        h = (h * factor).min(opts.h_max);
    }
    Ok(stats)
}

fn initial_step<T: Scalar, F: FnMut(f64, &[T], &mut [T])>(
    f: &mut F,
    t0: f64,
    y0: &[T],
    f0: &[T],
    opts: &Dp5Options,
    stats: &mut Dp5Stats,
) -> f64 {
    let n = y0.len().max(1) as f64;
    let scale = |v: T| opts.atol + opts.rtol * v.magnitude();
    let d0 = (y0.iter().map(|&v| (v.magnitude() / scale(v)).powi(2)).sum::<f64>() / n).sqrt();
    let d1 = (y0.iter().zip(f0).map(|(&v, &d)| (d.magnitude() / scale(v)).powi(2)).sum::<f64>() / n).sqrt();
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let y1: Vec<T> = y0.iter().zip(f0).map(|(&v, &d)| v + d * h0).collect();
    let mut f1 = vec![T::zero(); y0.len()];
    f(t0 + h0, &y1, &mut f1);
    stats.rhs_evaluations += 1;
    let d2 = (y0
        .iter()
        .zip(f0.iter().zip(&f1))
        .map(|(&v, (&a, &b))| ((b - a).magnitude() / scale(v)).powi(2))
        .sum::<f64>()
        / n)
        .sqrt()
        / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn no_hook<T>(_: f64, _: &mut [T]) -> bool {
        false
    }

    #[test]
    fn harmonic_oscillator_dense_output() {
        let samples: Vec<f64> = (0..=200).map(|k| 0.137 * k as f64).collect();
        let mut seen = Vec::new();
        integrate(
            |_, y: &[f64], dy: &mut [f64]| {
                dy[0] = y[1];
                dy[1] = -y[0];
            },
            0.0,
            &[1.0, 0.0],
            &samples,
            &Dp5Options { rtol: 1e-11, atol: 1e-13, ..Default::default() },
            |t, y| {
                seen.push((t, y[0], y[1]));
                Ok(())
            },
            no_hook,
        )
        .unwrap();
        assert_eq!(seen.len(), samples.len());
        for (t, x, v) in seen {
            assert!((x - t.cos()).abs() < 1e-9, "t={t}");
            assert!((v + t.sin()).abs() < 1e-9);
        }
    }

    #[test]
    fn complex_rotation() {
        let w = Complex64::new(-0.05, 1.3);
        let mut end = Complex64::new(0.0, 0.0);
        integrate(
            |_, y: &[Complex64], dy: &mut [Complex64]| dy[0] = w * y[0],
            0.0,
            &[Complex64::new(1.0, 0.0)],
            &[5.0],
            &Dp5Options::default(),
            |_, y| {
                end = y[0];
                Ok(())
            },
            no_hook,
        )
        .unwrap();
        assert!((end - (w * 5.0).exp()).norm() < 1e-8);
    }

    #[test]
    fn stiff_blowup_reports_failure() {
        let r = integrate(
            |_, y: &[f64], dy: &mut [f64]| dy[0] = y[0] * y[0],
            0.0,
            &[1.0],
            &[2.0],
            &Dp5Options::default(),
            |_, _| Ok(()),
            no_hook,
        );
        assert!(matches!(r, Err(Error::StepSizeUnderflow { .. }) | Err(Error::NonFinite { .. }) | Err(Error::TooManySteps { .. })));
    }

    #[test]
    fn rejects_unsorted_samples() {
        let r = integrate(
            |_, _: &[f64], _: &mut [f64]| {},
            0.0,
            &[0.0],
            &[1.0, 0.5],
            &Dp5Options::default(),
            |_, _| Ok(()),
            no_hook,
        );
        assert!(matches!(r, Err(Error::InvalidParameter(_))));
    }
}
