//! Mean-field spin dynamics: the full atom+cavity equations, the atom-only
//! flows derived from the master equation, fixed points and linear stability.

use nalgebra::{DMatrix, Matrix2, Matrix3};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::params::{compute_rates, critical_coupling, ModelParams};

/// Semiclassical expectation values `(⟨Sx⟩, ⟨Sy⟩, ⟨Sz⟩)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SpinVector {
    pub sx: f64,
    pub sy: f64,
    pub sz: f64,
}

impl SpinVector {
    pub fn new(sx: f64, sy: f64, sz: f64) -> Self {
        SpinVector { sx, sy, sz }
    }

    pub fn length(&self) -> f64 {
        (self.sx * self.sx + self.sy * self.sy + self.sz * self.sz).sqrt()
    }

    /// Whether the length equals `N/2` to relative `tol`. Shorter vectors are
    /// accepted by the flows but do not correspond to a Dicke-manifold state.
    pub fn has_full_length(&self, n_atoms: usize, tol: f64) -> bool {
        let s = n_atoms as f64 / 2.0;
        (self.length() - s).abs() <= tol * s
    }

    /// Whether `|S| ≤ N/2 (1 + 1e-9)`.
    pub fn is_admissible(&self, n_atoms: usize) -> bool {
        self.length() <= n_atoms as f64 / 2.0 * (1.0 + 1e-9)
    }

    /// `⟨S-⟩ = ⟨Sx⟩ - i⟨Sy⟩`.
    pub fn s_minus(&self) -> Complex64 {
        Complex64::new(self.sx, -self.sy)
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.sx, self.sy, self.sz]
    }

    pub fn from_array(v: [f64; 3]) -> Self {
        SpinVector::new(v[0], v[1], v[2])
    }

    /// Spin of length `N/2` tilted from `-z` towards `+x` by `angle`.
    pub fn tilted_down(n_atoms: usize, angle: f64) -> Self {
        let s = n_atoms as f64 / 2.0;
        SpinVector::new(s * angle.sin(), 0.0, -s * angle.cos())
    }
}

/// Spin plus coherent cavity amplitude `⟨a⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FullState {
    pub spin: SpinVector,
    pub a: Complex64,
}

impl FullState {
    pub fn to_array(self) -> [f64; 5] {
        [self.spin.sx, self.spin.sy, self.spin.sz, self.a.re, self.a.im]
    }

    pub fn from_array(v: [f64; 5]) -> Self {
        FullState {
            spin: SpinVector::new(v[0], v[1], v[2]),
            a: Complex64::new(v[3], v[4]),
        }
    }
}

/// Mean-field equations of the atom+cavity model:
/// `∂t⟨S-⟩ = -iω0⟨S-⟩ + 2ig(a + a*)⟨Sz⟩`, `∂t⟨Sz⟩ = 2g(a + a*)⟨Sy⟩`,
/// `∂t a = -(κ + iω)a - 2ig⟨Sx⟩`.
pub fn flow_full_model(state: &FullState, params: &ModelParams) -> FullState {
    let SpinVector { sx, sy, sz } = state.spin;
    let g = params.g;
    let field = 2.0 * state.a.re;
    let dsx = -params.omega0 * sy;
    let dsy = params.omega0 * sx - 2.0 * g * field * sz;
    let dsz = 2.0 * g * field * sy;
    let da = -Complex64::new(params.kappa, params.omega) * state.a - Complex64::new(0.0, 2.0 * g * sx);
    FullState {
        spin: SpinVector::new(dsx, dsy, dsz),
        a: da,
    }
}

/// Cavity amplitude slaved to the spin, `a = -2ig⟨Sx⟩/(κ + iω)`.
pub fn adiabatic_amplitude(params: &ModelParams, sx: f64) -> Complex64 {
    Complex64::new(0.0, -2.0 * params.g * sx) / Complex64::new(params.kappa, params.omega)
}

/// Source of the two rate combinations entering the atom-only flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RateChoice {
    /// `Q0''` and `Q1'` from the exact rates.
    #[default]
    Exact,
    /// Leading order in `ω0 / (ω, κ)`.
    LargeDetuningApprox,
}

/// The two coefficients of the atom-only mean-field flow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowRates {
    pub q0_im: f64,
    pub q1_re: f64,
}

/// `Q0'' ≈ -g²ω/(ω²+κ²)` and `Q1' ≈ -2g²κωω0/(ω²+κ²)²`.
pub fn rates_large_detuning_approx(params: &ModelParams) -> FlowRates {
    let (w, k, g2) = (params.omega, params.kappa, params.g * params.g);
    let den = w * w + k * k;
    FlowRates {
        q0_im: -(g2 * w / den),
        q1_re: -2.0 * g2 * k * w * params.omega0 / (den * den),
    }
}

pub fn flow_rates(params: &ModelParams, choice: RateChoice) -> Result<FlowRates> {
    match choice {
        RateChoice::Exact => {
            let r = compute_rates(params)?;
            Ok(FlowRates {
                q0_im: r.q0_im(),
                q1_re: r.q1_re(),
            })
        }
        RateChoice::LargeDetuningApprox => Ok(rates_large_detuning_approx(params)),
    }
}

/// Coupling `χ` of the naive-elimination Hamiltonian `ω0 Sz - χ Sx²`.
pub fn naive_elimination_coupling(params: &ModelParams) -> f64 {
    let (w, k, g2) = (params.omega, params.kappa, params.g * params.g);
    4.0 * (g2 * w / (w * w + k * k))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AtomOnlyFlow {
    /// Mean-field limit of the full Redfield equation.
    Full(FlowRates),
    /// Mean-field limit of the secular equation; `subleading` keeps the
    /// terms linear in a single spin operator.
    Secular {
        q_plus: Complex64,
        q_minus: Complex64,
        subleading: bool,
    },
    /// Conservative flow of `ω0 Sz - χ Sx²`.
    NaiveElimination { chi: f64 },
}

impl AtomOnlyFlow {
    pub fn full(params: &ModelParams, choice: RateChoice) -> Result<Self> {
        Ok(AtomOnlyFlow::Full(flow_rates(params, choice)?))
    }

    pub fn secular(params: &ModelParams, subleading: bool) -> Result<Self> {
        let r = compute_rates(params)?;
        Ok(AtomOnlyFlow::Secular {
            q_plus: r.q_plus,
            q_minus: r.q_minus,
            subleading,
        })
    }

    pub fn naive(params: &ModelParams) -> Self {
        AtomOnlyFlow::NaiveElimination {
            chi: naive_elimination_coupling(params),
        }
    }
}

/// Time derivative of the atom-only mean-field spin.
///
/// Full: `ṡx = -ω0 sy`, `ṡy = ω0 sx - 8Q0'' sz sx - 8Q1' sz sy`,
/// `ṡz = 8Q0'' sx sy + 8Q1' sy²`.
///
/// Secular: `∂t s- = -iω0 s- + 2(Q- - Q+*) sz s-` and
/// `ṡz = 2(Q+' - Q-')(S² - sz²)`; with `subleading` the terms
/// `-(Q- + Q+*) s-` and `-2(Q+' + Q-') sz` are added and `S²` becomes `S(S+1)`.
pub fn flow_atom_only(state: &SpinVector, omega0: f64, n_atoms: usize, flow: &AtomOnlyFlow) -> SpinVector {
    let SpinVector { sx, sy, sz } = *state;
    match *flow {
        AtomOnlyFlow::Full(FlowRates { q0_im, q1_re }) => SpinVector::new(
            -omega0 * sy,
            omega0 * sx - 8.0 * q0_im * sz * sx - 8.0 * q1_re * sz * sy,
            8.0 * q0_im * sx * sy + 8.0 * q1_re * sy * sy,
        ),
        AtomOnlyFlow::Secular {
            q_plus,
            q_minus,
            subleading,
        } => {
            let s = n_atoms as f64 / 2.0;
            let s_minus = state.s_minus();
            let mut rate = Complex64::new(0.0, -omega0) + (q_minus - q_plus.conj()) * (2.0 * sz);
            let mut dsz;
            if subleading {
                rate -= q_minus + q_plus.conj();
                dsz = 2.0 * (q_plus.re - q_minus.re) * (s * (s + 1.0) - sz * sz);
                dsz -= 2.0 * (q_plus.re + q_minus.re) * sz;
            } else {
                dsz = 2.0 * (q_plus.re - q_minus.re) * (s * s - sz * sz);
            }
            let d_minus = rate * s_minus;
            SpinVector::new(d_minus.re, -d_minus.im, dsz)
        }
        AtomOnlyFlow::NaiveElimination { chi } => SpinVector::new(
            -omega0 * sy,
            omega0 * sx + 2.0 * chi * sx * sz,
            -2.0 * chi * sx * sy,
        ),
    }
}

/// Analytic Jacobian of the full atom-only flow.
pub fn jacobian_atom_only(state: &SpinVector, omega0: f64, rates: &FlowRates) -> Matrix3<f64> {
    let SpinVector { sx, sy, sz } = *state;
    let (a, b) = (8.0 * rates.q0_im, 8.0 * rates.q1_re);
    Matrix3::new(
        0.0,
        -omega0,
        0.0,
        omega0 - a * sz,
        -b * sz,
        -a * sx - b * sy,
        a * sy,
        a * sx + 2.0 * b * sy,
        0.0,
    )
}

/// Central-difference Jacobian of `flow` with step `h`.
pub fn numerical_jacobian<const D: usize>(x: [f64; D], h: f64, flow: impl Fn([f64; D]) -> [f64; D]) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(D, D);
    for c in 0..D {
        let mut up = x;
        let mut down = x;
        up[c] += h;
        down[c] -= h;
        let (fu, fd) = (flow(up), flow(down));
        for r in 0..D {
            j[(r, c)] = (fu[r] - fd[r]) / (2.0 * h);
        }
    }
    j
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FixedPointKind {
    /// All spins down, `sz = -ℓ`.
    NormalDown,
    /// All spins up, `sz = +ℓ`.
    NormalUp,
    /// Ordered state with `sx > 0`.
    SuperradiantPlus,
    /// Ordered state with `sx < 0`.
    SuperradiantMinus,
}

impl FixedPointKind {
    pub fn is_normal(self) -> bool {
        matches!(self, FixedPointKind::NormalDown | FixedPointKind::NormalUp)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedPoint {
    pub spin: SpinVector,
    pub kind: FixedPointKind,
}

/// Fixed points of the full atom-only flow with spin length `N/2`.
///
/// Besides the poles, `sy = 0` and `ω0 = 8Q0'' sz` admit the ordered pair
/// `sz = ω0/(8Q0'')`, `sx = ±sqrt(ℓ² - sz²)` whenever `|sz| ≤ ℓ`. With
/// [`RateChoice::LargeDetuningApprox`] this reproduces
/// `sz = -(N/2) g_c²/g²` exactly.
pub fn fixed_points(params: &ModelParams, choice: RateChoice) -> Result<Vec<FixedPoint>> {
    critical_coupling(params)?;
    let rates = flow_rates(params, choice)?;
    let l = params.n_atoms as f64 / 2.0;
    let mut out = vec![
        FixedPoint {
            spin: SpinVector::new(0.0, 0.0, -l),
            kind: FixedPointKind::NormalDown,
        },
        FixedPoint {
            spin: SpinVector::new(0.0, 0.0, l),
            kind: FixedPointKind::NormalUp,
        },
    ];
    if rates.q0_im != 0.0 {
        let sz = params.omega0 / (8.0 * rates.q0_im);
        if sz.abs() <= l {
            let sx = (l * l - sz * sz).max(0.0).sqrt();
            out.push(FixedPoint {
                spin: SpinVector::new(sx, 0.0, sz),
                kind: FixedPointKind::SuperradiantPlus,
            });
            out.push(FixedPoint {
                spin: SpinVector::new(-sx, 0.0, sz),
                kind: FixedPointKind::SuperradiantMinus,
            });
        }
    }
    Ok(out)
}

/// Whether the ordered pair exists at these parameters.
pub fn has_superradiant_branch(params: &ModelParams, choice: RateChoice) -> Result<bool> {
    Ok(fixed_points(params, choice)?.iter().any(|p| !p.kind.is_normal()))
}

/// `g√N` at which the ordered branch appears, by bisection on
/// [`has_superradiant_branch`].
pub fn semiclassical_threshold(params: &ModelParams, choice: RateChoice) -> Result<f64> {
    let gc = critical_coupling(params)?;
    let (mut lo, mut hi) = (0.0, 4.0 * gc);
    while !has_superradiant_branch(&params.with_g_sqrt_n(hi), choice)? {
        hi *= 2.0;
        if hi > 1e6 * gc.max(1.0) {
            return Err(Error::NoTransition("ordered branch not found".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if has_superradiant_branch(&params.with_g_sqrt_n(mid), choice)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stability {
    Stable,
    Unstable,
    /// A non-conserved mode has zero real part (e.g. exactly at threshold).
    Marginal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub kind: FixedPointKind,
    /// Eigenvalues of the central-difference Jacobian.
    pub eigenvalues: Vec<Complex64>,
    /// Eigenvalues of the analytic Jacobian.
    pub analytic_eigenvalues: Vec<Complex64>,
    /// Closed-form eigenvalues; the last entry is the zero mode of the
    /// conserved spin length.
    pub closed_form: Vec<Complex64>,
    /// Largest distance between matched numerical and closed-form
    /// eigenvalues, relative to the largest closed-form magnitude.
    pub max_relative_deviation: f64,
    pub classification: Stability,
}

impl StabilityReport {
    /// Eigenvalue with the largest real part, excluding the spin-length zero mode.
    pub fn leading(&self) -> Complex64 {
        dynamical_modes(&self.eigenvalues)
            .into_iter()
            .max_by(|a, b| a.re.total_cmp(&b.re))
            .unwrap_or_default()
    }
}

fn dynamical_modes(eig: &[Complex64]) -> Vec<Complex64> {
    let mut v = eig.to_vec();
    if let Some(k) = (0..v.len()).min_by(|&i, &j| v[i].norm().total_cmp(&v[j].norm())) {
        v.remove(k);
    }
    v
}

/// Closed-form eigenvalues of the linearized full atom-only flow:
///
/// * poles `(0, 0, s0)`: `-4Q1' s0 ± sqrt((4Q1' s0)² - ω0(ω0 - 8Q0'' s0))`,
///   which at `s0 = -N/2` is `2Q1'N ± i sqrt(ω0(ω0 + 4Q0''N) - (2Q1'N)²)`;
/// * ordered states: `-4Q1' sz ± sqrt((4Q1' sz)² - (8Q0'' sx)²)`;
///
/// each with an extra zero mode along the conserved length.
pub fn closed_form_eigenvalues(fp: &FixedPoint, omega0: f64, rates: &FlowRates) -> [Complex64; 3] {
    let SpinVector { sx, sz, .. } = fp.spin;
    let damp = -4.0 * rates.q1_re * sz;
    let disc = if fp.kind.is_normal() {
        damp * damp - omega0 * (omega0 - 8.0 * rates.q0_im * sz)
    } else {
        let w = 8.0 * rates.q0_im * sx;
        damp * damp - w * w
    };
    let root = Complex64::new(disc, 0.0).sqrt();
    let damp = Complex64::new(damp, 0.0);
    [damp + root, damp - root, Complex64::new(0.0, 0.0)]
}

fn eigenvalues3(m: &Matrix3<f64>) -> Vec<Complex64> {
    m.complex_eigenvalues().iter().copied().collect()
}

fn match_deviation(numeric: &[Complex64], reference: &[Complex64]) -> f64 {
    let scale = reference.iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let mut pool = numeric.to_vec();
    let mut worst: f64 = 0.0;
    for r in reference {
        let (k, d) = pool
            .iter()
            .enumerate()
            .map(|(k, z)| (k, (z - r).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("equal lengths");
        pool.remove(k);
        worst = worst.max(d / scale);
    }
    worst
}

/// Linear stability of a fixed point of the full atom-only flow.
pub fn stability(params: &ModelParams, fp: &FixedPoint, choice: RateChoice) -> Result<StabilityReport> {
    let rates = flow_rates(params, choice)?;
    let flow = AtomOnlyFlow::Full(rates);
    let n = params.n_atoms;
    let omega0 = params.omega0;
    let residual = flow_atom_only(&fp.spin, omega0, n, &flow);
    let res_norm = residual.length();
    if res_norm > 1e-10 * (n as f64).max(1.0) {
        return Err(Error::NotFixedPoint(res_norm));
    }
    let h = 1e-6 * fp.spin.length().max(1.0);
    let jn = numerical_jacobian(fp.spin.to_array(), h, |x| {
        flow_atom_only(&SpinVector::from_array(x), omega0, n, &flow).to_array()
    });
    let jn = Matrix3::from_iterator(jn.iter().copied());
    let eigenvalues = eigenvalues3(&jn);
    let analytic_eigenvalues = eigenvalues3(&jacobian_atom_only(&fp.spin, omega0, &rates));
    let closed_form = closed_form_eigenvalues(fp, omega0, &rates).to_vec();
    let max_relative_deviation = match_deviation(&eigenvalues, &closed_form);
    let scale = closed_form.iter().map(|z| z.norm()).fold(omega0.abs(), f64::max);
    let classification = classify(&dynamical_modes(&closed_form), 1e-12 * scale);
    Ok(StabilityReport {
        kind: fp.kind,
        eigenvalues,
        analytic_eigenvalues,
        closed_form,
        max_relative_deviation,
        classification,
    })
}

fn classify(modes: &[Complex64], tol: f64) -> Stability {
    if modes.iter().any(|z| z.re > tol) {
        Stability::Unstable
    } else if modes.iter().any(|z| z.re.abs() <= tol) {
        Stability::Marginal
    } else {
        Stability::Stable
    }
}

/// Fixed points of the five-variable atom+cavity flow (spin length `N/2`):
/// the poles with `a = 0` and, above `g_c`, the ordered pair with
/// `sz = -(N/2) g_c²/g²` and the slaved cavity amplitude.
pub fn full_model_fixed_points(params: &ModelParams) -> Result<Vec<(FullState, FixedPointKind)>> {
    let gc = critical_coupling(params)?;
    let l = params.n_atoms as f64 / 2.0;
    let mut out = vec![
        (
            FullState {
                spin: SpinVector::new(0.0, 0.0, -l),
                a: Complex64::default(),
            },
            FixedPointKind::NormalDown,
        ),
        (
            FullState {
                spin: SpinVector::new(0.0, 0.0, l),
                a: Complex64::default(),
            },
            FixedPointKind::NormalUp,
        ),
    ];
    let g_sqrt_n = params.g_sqrt_n();
    if g_sqrt_n >= gc {
        let ratio = (gc / g_sqrt_n).powi(2);
        let sz = -l * ratio;
        let sx = (l * l - sz * sz).max(0.0).sqrt();
        for (sign, kind) in [(1.0, FixedPointKind::SuperradiantPlus), (-1.0, FixedPointKind::SuperradiantMinus)] {
            let spin = SpinVector::new(sign * sx, 0.0, sz);
            out.push((
                FullState {
                    spin,
                    a: adiabatic_amplitude(params, spin.sx),
                },
                kind,
            ));
        }
    }
    Ok(out)
}

/// Eigenvalues of the central-difference Jacobian of the atom+cavity flow.
pub fn full_model_stability(params: &ModelParams, state: &FullState) -> Result<Vec<Complex64>> {
    let res = flow_full_model(state, params).to_array();
    let res_norm = res.iter().map(|v| v * v).sum::<f64>().sqrt();
    if res_norm > 1e-10 * (params.n_atoms as f64).max(1.0) {
        return Err(Error::NotFixedPoint(res_norm));
    }
    let h = 1e-6 * state.spin.length().max(1.0);
    let j = numerical_jacobian(state.to_array(), h, |x| flow_full_model(&FullState::from_array(x), params).to_array());
    Ok(j.complex_eigenvalues().iter().copied().collect())
}

/// Brillouin function
/// `B_S(x) = (2S+1)/(2S) coth((2S+1)x/(2S)) - 1/(2S) coth(x/(2S))`.
///
/// The two `1/x` poles cancel analytically, so it is evaluated as
/// `(2S+1)/(2S) L((2S+1)x/(2S)) - 1/(2S) L(x/(2S))` with the Langevin
/// function `L(y) = coth y - 1/y`; near zero this is `(S+1)x/(3S) + O(x³)`.
pub fn brillouin(s: f64, x: f64) -> f64 {
    assert!(s > 0.0, "spin must be positive");
    let two_s = 2.0 * s;
    (two_s + 1.0) / two_s * langevin((two_s + 1.0) * x / two_s) - langevin(x / two_s) / two_s
}

/// `L(y) = coth y - 1/y`, by its Taylor series for `|y| < 0.1`.
pub fn langevin(y: f64) -> f64 {
    if y.abs() < 0.1 {
        let y2 = y * y;
        y * (1.0 / 3.0 + y2 * (-1.0 / 45.0 + y2 * (2.0 / 945.0 + y2 * (-1.0 / 4725.0 + y2 * (2.0 / 93555.0)))))
    } else {
        1.0 / y.tanh() - 1.0 / y
    }
}

/// Large-`S` secular steady state `⟨Sz⟩/S`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecularPole {
    /// `+1`, `-1`, or `0` when `Q+' = Q-'`.
    pub sign: f64,
    /// `|Q+'/Q-' - 1| ≤ 1/S`: the finite-`S` Brillouin curve is not yet saturated.
    pub in_crossover: bool,
}

pub fn secular_sz_thermodynamic(params: &ModelParams) -> Result<SecularPole> {
    let r = compute_rates(params)?;
    let ratio = r.q_plus.re / r.q_minus.re;
    let sign = if ratio > 1.0 {
        1.0
    } else if ratio < 1.0 {
        -1.0
    } else {
        0.0
    };
    Ok(SecularPole {
        sign,
        in_crossover: (ratio - 1.0).abs() <= 1.0 / params.spin(),
    })
}

/// Eigenvalues of the 2×2 normal-state block at `sz = -N/2` (used by the
/// threshold bisection on the leading eigenvalue).
pub fn normal_state_eigenvalues(params: &ModelParams, choice: RateChoice) -> Result<[Complex64; 2]> {
    let rates = flow_rates(params, choice)?;
    let n = params.n_atoms as f64;
    let m = Matrix2::new(0.0, -params.omega0, params.omega0 + 4.0 * rates.q0_im * n, 4.0 * rates.q1_re * n);
    let e = m.complex_eigenvalues();
    Ok([e[0], e[1]])
}

/// Spin vector integrated along an atom-only flow, sampled at `times`.
pub fn integrate_atom_only(
    start: SpinVector,
    omega0: f64,
    n_atoms: usize,
    flow: &AtomOnlyFlow,
    times: &[f64],
    rtol: f64,
) -> Result<Vec<SpinVector>> {
    let mut out = Vec::with_capacity(times.len());
    crate::integrate::integrate(
        |_, y: &[f64], dy: &mut [f64]| {
            let d = flow_atom_only(&SpinVector::new(y[0], y[1], y[2]), omega0, n_atoms, flow);
            dy.copy_from_slice(&d.to_array());
        },
        0.0,
        &start.to_array(),
        times,
        &crate::integrate::Dp5Options {
            rtol,
            atol: rtol * 1e-3,
            ..Default::default()
        },
        |_, y| {
            out.push(SpinVector::new(y[0], y[1], y[2]));
            Ok(())
        },
        |_, _| false,
    )?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig2(n: usize, g_over_gc: f64) -> ModelParams {
        let p = ModelParams::new(0.1, 1.0, 1.0, 0.0, n).unwrap();
        let gc = critical_coupling(&p).unwrap();
        p.with_g_sqrt_n(g_over_gc * gc)
    }

    #[test]
    fn brillouin_limits() {
        assert_eq!(brillouin(3.0, 0.0), 0.0);
        assert!((brillouin(2.5, 400.0) - 1.0).abs() < 1e-12);
        for x in [0.1, 1.0, 3.0, 5e-5] {
            assert!((brillouin(0.5, x) - x.tanh()).abs() < 1e-12, "x={x}");
        }
        // Small-argument behaviour and continuity across the series cutoff.
        for s in [0.5f64, 1.0, 4.0, 16.0] {
            let x = 1e-6;
            assert!((brillouin(s, x) - (s + 1.0) * x / (3.0 * s)).abs() < 1e-11 * x);
            let two_s = 2.0 * s;
            for y in [0.0999999999, 0.1000000001] {
                let direct = 1.0 / (y as f64).tanh() - 1.0 / y;
                assert!((langevin(y) - direct).abs() < 1e-13);
            }
            assert!(brillouin(s, -0.7) == -brillouin(s, 0.7));
            let x = 2.0;
            let closed = (two_s + 1.0) / two_s / ((two_s + 1.0) * x / two_s).tanh() - 1.0 / two_s / (x / two_s).tanh();
            assert!((brillouin(s, x) - closed).abs() < 1e-14);
        }
    }

    #[test]
    fn approximate_rates() {
        let p = ModelParams::new(0.1, 1.0, 1.0, 0.2, 1).unwrap();
        let r = rates_large_detuning_approx(&p);
        assert!((r.q0_im + 0.02).abs() < 1e-15);
        assert!((r.q1_re + 0.002).abs() < 1e-15);
        let p0 = ModelParams::new(0.0, 1.0, 1.0, 0.2, 1).unwrap();
        assert_eq!(rates_large_detuning_approx(&p0).q1_re, 0.0);
    }

    #[test]
    fn full_model_basics() {
        let p = ModelParams::new(0.3, 1.0, 0.5, 0.0, 4).unwrap();
        let s = FullState {
            spin: SpinVector::new(1.0, 0.5, -1.0),
            a: Complex64::default(),
        };
        let d = flow_full_model(&s, &p);
        assert_eq!(d.spin, SpinVector::new(-0.15, 0.3, 0.0));
        assert_eq!(d.a, Complex64::default());

        let p = p.with_g(0.4);
        let a = adiabatic_amplitude(&p, 1.3);
        let st = FullState {
            spin: SpinVector::new(1.3, 0.0, -1.0),
            a,
        };
        assert!(flow_full_model(&st, &p).a.norm() < 1e-15);
        let normal = FullState {
            spin: SpinVector::new(0.0, 0.0, -2.0),
            a: Complex64::default(),
        };
        let d = flow_full_model(&normal, &p);
        assert_eq!(d.to_array(), [0.0; 5]);
    }

    #[test]
    fn fixed_points_at_root_two() {
        let p = fig2(10, 2f64.sqrt());
        let fps = fixed_points(&p, RateChoice::LargeDetuningApprox).unwrap();
        assert_eq!(fps.len(), 4);
        let sr = fps.iter().find(|f| f.kind == FixedPointKind::SuperradiantPlus).unwrap();
        assert!((sr.spin.sz / 5.0 + 0.5).abs() < 1e-12);
        assert!((sr.spin.sx / 5.0 - 0.75f64.sqrt()).abs() < 1e-12);

        let below = fixed_points(&fig2(10, 0.5), RateChoice::LargeDetuningApprox).unwrap();
        assert!(below.iter().all(|f| f.kind.is_normal()));

        let at = fixed_points(&fig2(10, 1.0), RateChoice::LargeDetuningApprox).unwrap();
        let sr: Vec<_> = at.iter().filter(|f| !f.kind.is_normal()).collect();
        if !sr.is_empty() {
            assert!(sr[0].spin.sx.abs() < 1e-6);
        }
    }

    #[test]
    fn fixed_point_residuals() {
        for ratio in [0.3, 1.2, 2.0, 5.0] {
            for choice in [RateChoice::Exact, RateChoice::LargeDetuningApprox] {
                let p = fig2(20, ratio);
                let flow = AtomOnlyFlow::full(&p, choice).unwrap();
                for fp in fixed_points(&p, choice).unwrap() {
                    let r = flow_atom_only(&fp.spin, p.omega0, 20, &flow).length();
                    assert!(r < 1e-12 * 20.0, "{ratio} {choice:?} {:?}: {r}", fp.kind);
                }
            }
        }
    }

    #[test]
    fn stability_below_and_above() {
        let p = ModelParams::new(0.1, 1.0, 1.0, 0.0, 8).unwrap();
        let fp = fixed_points(&p, RateChoice::Exact).unwrap()[0];
        let rep = stability(&p, &fp, RateChoice::Exact).unwrap();
        let mut ims: Vec<f64> = rep.eigenvalues.iter().map(|z| z.im).collect();
        ims.sort_by(f64::total_cmp);
        assert!((ims[0] + 0.1).abs() < 1e-9 && ims[1].abs() < 1e-12 && (ims[2] - 0.1).abs() < 1e-9);
        assert_eq!(rep.classification, Stability::Marginal);

        let p = fig2(8, 1.05);
        let fp = fixed_points(&p, RateChoice::Exact).unwrap()[0];
        let rep = stability(&p, &fp, RateChoice::Exact).unwrap();
        assert_eq!(rep.classification, Stability::Unstable);
        assert!(rep.leading().re > 0.0);
        assert!(rep.max_relative_deviation < 1e-6);

        let p = fig2(8, 0.5);
        let fp = fixed_points(&p, RateChoice::Exact).unwrap()[0];
        assert_eq!(stability(&p, &fp, RateChoice::Exact).unwrap().classification, Stability::Stable);
    }

    #[test]
    fn stability_rejects_non_fixed_point() {
        let p = fig2(8, 0.5);
        let fp = FixedPoint {
            spin: SpinVector::new(1.0, 1.0, -3.0),
            kind: FixedPointKind::NormalDown,
        };
        assert!(matches!(stability(&p, &fp, RateChoice::Exact), Err(Error::NotFixedPoint(_))));
    }

    #[test]
    fn secular_pole_sign() {
        let p = ModelParams::new(0.1, 1.0, 1.0, 0.2, 100).unwrap();
        assert_eq!(secular_sz_thermodynamic(&p).unwrap().sign, -1.0);
        let p = ModelParams::new(0.1, -1.0, 1.0, 0.2, 100).unwrap();
        assert_eq!(secular_sz_thermodynamic(&p).unwrap().sign, 1.0);
        let p = ModelParams::new(0.0, 1.0, 1.0, 0.2, 100).unwrap();
        let pole = secular_sz_thermodynamic(&p).unwrap();
        assert_eq!(pole.sign, 0.0);
        assert!(pole.in_crossover);
    }

    #[test]
    fn secular_flow_relaxes_transverse_spin() {
        let p = fig2(40, 2.0);
        let flow = AtomOnlyFlow::secular(&p, false).unwrap();
        let start = SpinVector::new(10.0, 5.0, 5.0);
        let traj = integrate_atom_only(start, p.omega0, 40, &flow, &[0.0, 4000.0], 1e-10).unwrap();
        let end = traj[1];
        assert!(end.sx.abs() < 1e-6 && end.sy.abs() < 1e-6);
        assert!((end.sz + 20.0).abs() < 1e-6);
    }

    #[test]
    fn full_model_superradiant_ring_down() {
        let p = fig2(10, 1.5);
        let fps = full_model_fixed_points(&p).unwrap();
        let (state, _) = fps.iter().find(|(_, k)| *k == FixedPointKind::SuperradiantPlus).unwrap();
        let eig = full_model_stability(&p, state).unwrap();
        // Slowest oscillating pair of the five-variable model.
        let slow = eig
            .iter()
            .filter(|z| z.im > 0.0)
            .min_by(|a, b| a.norm().total_cmp(&b.norm()))
            .unwrap();
        let expected_re = -1.0 * 0.01 / 2.0;
        assert!((slow.re - expected_re).abs() < 0.1 * expected_re.abs(), "{slow}");
    }
}
