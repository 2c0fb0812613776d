//! Time evolution, steady states and observables of the atom-only model.

use log::{debug, info, warn};
use nalgebra::SymmetricEigen;
use num_complex::Complex64;

use crate::dicke::{hermiticity_defect, trace, CMatrix, DickeDensityMatrix, LadderCoefficients};
use crate::error::{Error, Result};
use crate::integrate::{integrate, Dp5Options, Dp5Stats};
use crate::liouvillian::{parity_sectors, unvectorize, vectorized_generator, GeneratorSpec, Parity};
use crate::sparse::{BandedLu, CsrMatrix};

/// Largest `N` for which eigenvalue diagnostics are computed.
pub const EIGEN_MAX_ATOMS: usize = 256;

/// Trace error above which a trajectory is flagged.
pub const TRACE_FLAG_TOLERANCE: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observables {
    pub sx: f64,
    pub sy: f64,
    pub sz: f64,
    pub sz2: f64,
    pub purity: f64,
    /// `None` above [`EIGEN_MAX_ATOMS`].
    pub min_eigenvalue: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Observable {
    Sx,
    Sy,
    Sz,
}

impl Observables {
    pub fn get(&self, which: Observable) -> f64 {
        match which {
            Observable::Sx => self.sx,
            Observable::Sy => self.sy,
            Observable::Sz => self.sz,
        }
    }
}

/// Observables of a bare matrix; `⟨S+⟩ = Σ_m f[m] ρ_{m,m+1}` gives
/// `⟨Sx⟩ = Re⟨S+⟩` and `⟨Sy⟩ = Im⟨S+⟩`.
fn matrix_observables(n_atoms: usize, rho: &CMatrix, with_eigen: bool) -> Observables {
    let f = LadderCoefficients::new(n_atoms);
    let s = n_atoms as f64 / 2.0;
    let mut s_plus = Complex64::new(0.0, 0.0);
    let mut sz = 0.0;
    let mut sz2 = 0.0;
    for m in 0..=n_atoms {
        let big_m = m as f64 - s;
        let p = rho[(m, m)].re;
        sz += big_m * p;
        sz2 += big_m * big_m * p;
        if m < n_atoms {
            s_plus += rho[(m, m + 1)] * f.at(m as isize);
        }
    }
    let purity = rho.iter().map(|z| z.norm_sqr()).sum();
    let min_eigenvalue = (with_eigen && n_atoms <= EIGEN_MAX_ATOMS).then(|| {
        SymmetricEigen::new(rho.clone())
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    });
    Observables {
        sx: s_plus.re,
        sy: s_plus.im,
        sz,
        sz2,
        purity,
        min_eigenvalue,
    }
}

pub fn observables(rho: &DickeDensityMatrix) -> Observables {
    matrix_observables(rho.n_atoms(), rho.matrix(), true)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PositivityReport {
    pub min_eigenvalue: f64,
    /// Negative eigenvalues, most negative first.
    pub negative: Vec<f64>,
}

/// Full Hermitian eigendecomposition of `rho`. Eigenvalues above
/// `-tolerance` are not reported as negative.
pub fn positivity_report(rho: &DickeDensityMatrix, tolerance: f64) -> Result<PositivityReport> {
    if rho.n_atoms() > EIGEN_MAX_ATOMS {
        return Err(Error::ResourceCap(format!(
            "eigenvalue diagnostics limited to N <= {EIGEN_MAX_ATOMS}"
        )));
    }
    let mut eig: Vec<f64> = SymmetricEigen::new(rho.matrix().clone()).eigenvalues.iter().copied().collect();
    eig.sort_by(f64::total_cmp);
    let negative = eig.iter().copied().take_while(|&e| e < -tolerance).collect();
    Ok(PositivityReport {
        min_eigenvalue: eig[0],
        negative,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolutionControls {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    /// Hermiticity drift that triggers `ρ ← (ρ + ρ†)/2`.
    pub resymmetrize_above: f64,
    /// Compute the minimum eigenvalue at every sample.
    pub track_eigenvalues: bool,
}

impl Default for EvolutionControls {
    fn default() -> Self {
        EvolutionControls {
            rtol: 1e-9,
            atol: 1e-12,
            max_steps: 5_000_000,
            resymmetrize_above: 1e-12,
            track_eigenvalues: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EvolutionResult {
    pub times: Vec<f64>,
    pub observables: Vec<Observables>,
    /// `|tr ρ - 1|` at each sample.
    pub trace_error: Vec<f64>,
    pub final_state: DickeDensityMatrix,
    /// Set when the trace error exceeded [`TRACE_FLAG_TOLERANCE`].
    pub flagged: bool,
    pub resymmetrizations: usize,
    pub stats: Dp5Stats,
}

impl EvolutionResult {
    pub fn series(&self, which: Observable) -> Vec<f64> {
        self.observables.iter().map(|o| o.get(which)).collect()
    }

    /// Most negative eigenvalue seen along the trajectory.
    pub fn min_eigenvalue(&self) -> Option<f64> {
        self.observables
            .iter()
            .map(|o| o.min_eigenvalue)
            .try_fold(f64::INFINITY, |acc, e| e.map(|e| acc.min(e)))
    }
}

/// `n + 1` evenly spaced times on `[0, t_final]`.
pub fn uniform_grid(t_final: f64, n: usize) -> Vec<f64> {
    (0..=n).map(|k| t_final * k as f64 / n as f64).collect()
}

/// Integrate `ρ̇ = L(ρ)` from `t = 0`, sampling observables at `times`.
pub fn evolve(
    spec: &GeneratorSpec,
    rho0: &DickeDensityMatrix,
    times: &[f64],
    controls: &EvolutionControls,
) -> Result<EvolutionResult> {
    if rho0.n_atoms() != spec.n_atoms {
        return Err(Error::DimensionMismatch {
            expected: spec.dim(),
            found: rho0.dim(),
        });
    }
    if times.is_empty() || times[0] < 0.0 || times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("time grid must be non-negative and strictly increasing".into()));
    }
    if *times.last().unwrap() <= 0.0 {
        return Err(Error::InvalidParameter("t_final must be positive".into()));
    }
    let n = spec.n_atoms;
    let d = spec.dim();
    let stencil = spec.stencil();
    let opts = Dp5Options {
        rtol: controls.rtol,
        atol: controls.atol,
        max_steps: controls.max_steps,
        ..Default::default()
    };

    let mut observed = Vec::with_capacity(times.len());
    let mut trace_error = Vec::with_capacity(times.len());
    let mut resymmetrizations = 0;
    let mut final_matrix = rho0.matrix().clone();
    let t_last = *times.last().unwrap();
    let stats = integrate(
        |_, y: &[Complex64], dy: &mut [Complex64]| stencil.apply(y, dy),
        0.0,
        rho0.matrix().as_slice(),
        times,
        &opts,
        |t, y| {
            if y.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::NonFinite { t });
            }
            let m = CMatrix::from_column_slice(d, d, y);
            let tr = trace(&m);
            trace_error.push((tr - Complex64::new(1.0, 0.0)).norm());
            observed.push(matrix_observables(n, &m, controls.track_eigenvalues));
            if t == t_last {
                final_matrix = m;
            }
            Ok(())
        },
        |t, y| {
            let m = CMatrix::from_column_slice(d, d, y);
            let defect = hermiticity_defect(&m);
            if defect <= controls.resymmetrize_above {
                return false;
            }
            info!("re-symmetrizing density matrix at t = {t:.6e} (drift {defect:.3e})");
            resymmetrizations += 1;
            let sym = (&m + m.adjoint()) * Complex64::new(0.5, 0.0);
            y.copy_from_slice(sym.as_slice());
            true
        },
    )?;
    let flagged = trace_error.iter().any(|&e| e > TRACE_FLAG_TOLERANCE);
    if flagged {
        warn!("trace drift exceeded {TRACE_FLAG_TOLERANCE:e} during evolution");
    }
    Ok(EvolutionResult {
        times: times.to_vec(),
        observables: observed,
        trace_error,
        final_state: DickeDensityMatrix::from_matrix_unchecked(n, final_matrix),
        flagged,
        resymmetrizations,
        stats,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyStateOptions {
    /// Required `‖L ρ‖∞ / (‖L‖∞ ‖ρ‖∞)`.
    pub residual_tolerance: f64,
    /// Pivot ratio below which the null space is treated as degenerate.
    pub degeneracy_threshold: f64,
    /// Integration time used by the fallback.
    pub fallback_time: f64,
}

impl Default for SteadyStateOptions {
    fn default() -> Self {
        SteadyStateOptions {
            residual_tolerance: 1e-10,
            degeneracy_threshold: 1e-13,
            fallback_time: 1e6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SteadyStateResult {
    pub state: DickeDensityMatrix,
    pub residual: f64,
    pub observables: Observables,
    /// Null space of dimension above one; `state` is one representative.
    pub degenerate: bool,
    /// The direct solve missed the tolerance and long-time integration was used.
    pub used_fallback: bool,
}

pub fn steady_state(spec: &GeneratorSpec) -> Result<SteadyStateResult> {
    steady_state_with(spec, &SteadyStateOptions::default())
}

/// Null vector of the generator on the sector containing the populations.
///
/// One population equation is redundant (trace preservation), so it is
/// replaced by the condition `ρ_kk = 1`; the solution is then rescaled to
/// unit trace. This is equivalent to the trace-row augmentation but keeps
/// the system banded. `k` is first the bottom state, then the most
/// populated state of the first solution.
pub fn steady_state_with(spec: &GeneratorSpec, opts: &SteadyStateOptions) -> Result<SteadyStateResult> {
    let a = vectorized_generator(spec, Parity::Even)?;
    let sectors = parity_sectors(spec.n_atoms);
    let pop_index: Vec<usize> = (0..spec.dim()).map(|m| sectors.locate(m, m).1).collect();
    let norm_a = a.norm_inf().max(f64::MIN_POSITIVE);

    let (mut v, mut degenerate) = pinned_solve(&a, pop_index[0], opts)?;
    normalize(&mut v, &pop_index)?;
    if !degenerate {
        let k = (0..spec.dim())
            .max_by(|&i, &j| v[pop_index[i]].re.total_cmp(&v[pop_index[j]].re))
            .unwrap();
        if k != 0 {
            let (w, deg) = pinned_solve(&a, pop_index[k], opts)?;
            v = w;
            degenerate = deg;
            normalize(&mut v, &pop_index)?;
        }
    }
    let mut residual = relative_residual(&a, &v, norm_a);
    let mut rho = unvectorize(&v, &sectors, Parity::Even);
    rho = (&rho + rho.adjoint()) * Complex64::new(0.5, 0.0);
    let mut used_fallback = false;

    if residual > opts.residual_tolerance && !degenerate {
        warn!("direct steady-state residual {residual:.3e}; falling back to long-time integration");
        let start = DickeDensityMatrix::from_matrix_unchecked(spec.n_atoms, rho.clone());
        let run = evolve(
            spec,
            &start,
            &[opts.fallback_time],
            &EvolutionControls {
                track_eigenvalues: false,
                ..Default::default()
            },
        )?;
        let m = run.final_state.into_matrix();
        let w: Vec<Complex64> = sectors.even.iter().map(|&(i, j)| m[(i, j)]).collect();
        let r = relative_residual(&a, &w, norm_a);
        if r < residual {
            residual = r;
            rho = m;
        }
        used_fallback = true;
        if residual > opts.residual_tolerance {
            return Err(Error::SteadyState(format!("residual {residual:.3e} above tolerance")));
        }
    }
    if degenerate {
        debug!("steady state is degenerate; returning a pinned representative");
    }
    let state = DickeDensityMatrix::from_matrix_unchecked(spec.n_atoms, rho);
    Ok(SteadyStateResult {
        observables: observables(&state),
        state,
        residual,
        degenerate,
        used_fallback,
    })
}

pub(crate) fn pinned_solve(a: &CsrMatrix, pin: usize, opts: &SteadyStateOptions) -> Result<(Vec<Complex64>, bool)> {
    let n = a.n_rows();
    let rows = (0..n)
        .map(|r| {
            if r == pin {
                vec![(pin, Complex64::new(1.0, 0.0))]
            } else {
                a.row(r).collect()
            }
        })
        .collect();
    let pinned = CsrMatrix::from_rows(n, rows);
    let lu = BandedLu::factor(&pinned);
    let degenerate = lu.is_singular() || lu.pivot_ratio() < opts.degeneracy_threshold;
    let mut b = vec![Complex64::new(0.0, 0.0); n];
    b[pin] = Complex64::new(1.0, 0.0);
    let mut x = lu.solve(&b);
    if !degenerate {
        // One step of iterative refinement.
        let r: Vec<Complex64> = pinned.matvec(&x).iter().zip(&b).map(|(ax, b)| b - ax).collect();
        let dx = lu.solve(&r);
        for (xi, di) in x.iter_mut().zip(dx) {
            *xi += di;
        }
    }
    if x.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::SteadyState("non-finite solution of the pinned system".into()));
    }
    Ok((x, degenerate))
}

pub(crate) fn normalize(v: &mut [Complex64], pop_index: &[usize]) -> Result<()> {
    let tr: Complex64 = pop_index.iter().map(|&k| v[k]).sum();
    if tr.norm() == 0.0 || !tr.re.is_finite() {
        return Err(Error::SteadyState("steady-state candidate has zero trace".into()));
    }
    let inv = tr.inv();
    for z in v.iter_mut() {
        *z *= inv;
    }
    Ok(())
}

/// Largest `N` for which the dense generator spectrum is computed.
pub const SPECTRUM_MAX_ATOMS: usize = 32;

/// All eigenvalues of the generator, both parity sectors, by a dense solve.
pub fn relaxation_spectrum(spec: &GeneratorSpec) -> Result<Vec<Complex64>> {
    if spec.n_atoms > SPECTRUM_MAX_ATOMS {
        return Err(Error::ResourceCap(format!(
            "dense spectrum limited to N <= {SPECTRUM_MAX_ATOMS} (got {})",
            spec.n_atoms
        )));
    }
    let mut out = Vec::with_capacity(spec.dim() * spec.dim());
    for parity in [Parity::Even, Parity::Odd] {
        let a = vectorized_generator(spec, parity)?.to_dense();
        let n = a.nrows();
        if n == 0 {
            continue;
        }
        // [[Re, -Im], [Im, Re]] carries the spectrum of A and of conj(A).
        let big = nalgebra::DMatrix::from_fn(2 * n, 2 * n, |r, c| {
            let z = a[(r % n, c % n)];
            match (r < n, c < n) {
                (true, true) | (false, false) => z.re,
                (true, false) => -z.im,
                (false, true) => z.im,
            }
        });
        // Hermiticity preservation makes each sector's spectrum closed under
        // conjugation, so the embedding lists every eigenvalue twice.
        let scale = a.iter().fold(0.0f64, |m, z| m.max(z.norm())).max(f64::MIN_POSITIVE);
        let mut upper: Vec<Complex64> = big
            .complex_eigenvalues()
            .iter()
            .copied()
            .filter(|z| z.im >= -1e-12 * scale)
            .map(|z| if z.im < 0.0 { z.conj() } else { z })
            .collect();
        while let Some(z) = upper.pop() {
            let Some(k) = (0..upper.len()).min_by(|&i, &j| (upper[i] - z).norm().total_cmp(&(upper[j] - z).norm())) else {
                break;
            };
            let twin = upper.swap_remove(k);
            let z = 0.5 * (z + twin);
            if z.im > 1e-12 * scale {
                out.push(z);
                out.push(z.conj());
            } else {
                out.push(Complex64::new(z.re, 0.0));
            }
        }
    }
    Ok(out)
}

/// Non-zero eigenvalue with the smallest decay rate `|Re λ|`.
pub fn slowest_relaxation(spec: &GeneratorSpec) -> Result<Complex64> {
    let spectrum = relaxation_spectrum(spec)?;
    let scale = vectorized_generator(spec, Parity::Even)?.norm_inf().max(f64::MIN_POSITIVE);
    spectrum
        .into_iter()
        .filter(|z| z.norm() > 1e-9 * scale)
        .min_by(|x, y| x.re.abs().total_cmp(&y.re.abs()))
        .ok_or_else(|| Error::SteadyState("generator has no relaxing mode".into()))
}

pub(crate) fn relative_residual(a: &CsrMatrix, v: &[Complex64], norm_a: f64) -> f64 {
    let av = a.matvec(v);
    let num = av.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let den = v.iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    num / (norm_a * den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{compute_rates, ApproximationMode, ModelParams};
    use crate::semiclassics::brillouin;

    fn fig2(n: usize, g_sqrt_n: f64) -> ModelParams {
        ModelParams::new(0.1, 1.0, 1.0, 1.0, n).unwrap().with_g_sqrt_n(g_sqrt_n)
    }

    #[test]
    fn observables_of_simple_states() {
        for n in [1usize, 4, 7] {
            let s = n as f64 / 2.0;
            let o = observables(&DickeDensityMatrix::all_down(n));
            assert_eq!((o.sx, o.sy, o.sz, o.sz2, o.purity), (0.0, 0.0, -s, s * s, 1.0));
            assert!(o.min_eigenvalue.unwrap().abs() < 1e-14);
            let o = observables(&DickeDensityMatrix::maximally_mixed(n));
            assert!(o.sz.abs() < 1e-15);
        }
        let along_x = DickeDensityMatrix::spin_coherent(2, std::f64::consts::FRAC_PI_2, 0.0);
        let o = observables(&along_x);
        assert!((o.sx - 1.0).abs() < 1e-12 && o.sy.abs() < 1e-12 && o.sz.abs() < 1e-12);
        let along_y = DickeDensityMatrix::spin_coherent(2, std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2);
        assert!((observables(&along_y).sy - 1.0).abs() < 1e-12);
    }

    #[test]
    fn positivity_of_mixed_state() {
        let r = positivity_report(&DickeDensityMatrix::maximally_mixed(5), 0.0).unwrap();
        assert!((r.min_eigenvalue - 1.0 / 6.0).abs() < 1e-14);
        assert!(r.negative.is_empty());
    }

    #[test]
    fn free_precession_at_zero_coupling() {
        let n = 3;
        let p = ModelParams::new(0.7, 1.0, 1.0, 0.0, n).unwrap();
        let rho0 = DickeDensityMatrix::spin_coherent(n, 1.0, 0.3);
        let t = 4.0;
        for mode in ApproximationMode::ALL {
            let spec = GeneratorSpec::new(&p, mode).unwrap();
            let run = evolve(&spec, &rho0, &[0.0, t], &EvolutionControls::default()).unwrap();
            let end = run.final_state.matrix();
            for m in 0..=n {
                for mp in 0..=n {
                    let expected = rho0.get(m, mp) * Complex64::from_polar(1.0, -0.7 * (m as f64 - mp as f64) * t);
                    assert!((end[(m, mp)] - expected).norm() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn identity_is_constant_under_large_detuning() {
        let spec = GeneratorSpec::new(&fig2(6, 0.4), ApproximationMode::LargeDetuning).unwrap();
        let rho0 = DickeDensityMatrix::maximally_mixed(6);
        let run = evolve(&spec, &rho0, &uniform_grid(50.0, 10), &EvolutionControls::default()).unwrap();
        let diff = (run.final_state.matrix() - rho0.matrix()).norm();
        assert!(diff < 1e-10, "{diff}");
    }

    #[test]
    fn secular_steady_state_is_brillouin() {
        for n in [1usize, 2, 4, 8, 16, 32] {
            let p = fig2(n, 0.3);
            let r = compute_rates(&p).unwrap();
            let spec = GeneratorSpec::new(&p, ApproximationMode::Secular).unwrap();
            let ss = steady_state(&spec).unwrap();
            assert!(!ss.degenerate);
            assert!(ss.residual < 1e-10);
            let s = n as f64 / 2.0;
            let expected = s * brillouin(s, s * (r.q_plus.re / r.q_minus.re).ln());
            assert!((ss.observables.sz - expected).abs() < 1e-10, "N={n}: {} vs {expected}", ss.observables.sz);
            let m = ss.state.matrix();
            for i in 0..=n {
                for j in 0..=n {
                    if i != j {
                        assert!(m[(i, j)].norm() < 1e-12);
                    }
                }
            }
            assert!(ss.observables.min_eigenvalue.unwrap() >= 0.0);
        }
    }

    #[test]
    fn secular_large_detuning_is_uniform() {
        let spec = GeneratorSpec::new(&fig2(9, 0.5), ApproximationMode::SecularLargeDetuning).unwrap();
        let ss = steady_state(&spec).unwrap();
        for m in 0..10 {
            assert!((ss.state.get(m, m).re - 0.1).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_coupling_is_degenerate() {
        let spec = GeneratorSpec::new(&fig2(4, 0.0), ApproximationMode::Full).unwrap();
        let ss = steady_state(&spec).unwrap();
        assert!(ss.degenerate);
        assert!((ss.state.trace().re - 1.0).abs() < 1e-14);
        assert!(ss.residual < 1e-14);
    }

    #[test]
    fn full_steady_state_has_no_transverse_spin() {
        for g in [0.1, 0.3, 0.5] {
            let spec = GeneratorSpec::new(&fig2(10, g), ApproximationMode::Full).unwrap();
            let ss = steady_state(&spec).unwrap();
            assert_eq!((ss.observables.sx, ss.observables.sy), (0.0, 0.0));
            assert!(ss.residual < 1e-10);
        }
    }

    #[test]
    fn rejects_bad_grids() {
        let spec = GeneratorSpec::new(&fig2(2, 0.1), ApproximationMode::Full).unwrap();
        let rho = DickeDensityMatrix::all_down(2);
        let c = EvolutionControls::default();
        assert!(evolve(&spec, &rho, &[0.0], &c).is_err());
        assert!(evolve(&spec, &rho, &[0.0, 2.0, 1.0], &c).is_err());
        assert!(matches!(
            evolve(&spec, &DickeDensityMatrix::all_down(3), &[1.0], &c),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
