//! Atom + cavity master equation on the Dicke sector ⊗ a truncated Fock
//! space, used as ground truth for the atom-only description:
//!
//! `ρ̇ = -i[H, ρ] + κ(2aρa† - {a†a, ρ})`, `H = ω0 Sz + ω a†a + 2g(a + a†)Sx`.
//!
//! Everything here is built from the operators directly and shares no code
//! with the atom-only generator.

use log::debug;
use nalgebra::SymmetricEigen;
use num_complex::Complex64;

use crate::dicke::{hermiticity_defect, CMatrix, DickeDensityMatrix, LadderCoefficients, STATE_TOLERANCE};
use crate::error::{Error, Result};
use crate::fit::{fit_damping_with, DampingFit, FitOptions};
use crate::integrate::{integrate, Dp5Options};
use crate::liouvillian::GeneratorSpec;
use crate::params::{critical_coupling, ApproximationMode, ModelParams};
use crate::semiclassics::{rates_large_detuning_approx, SpinVector};
use crate::solvers::{evolve, normalize, pinned_solve, relative_residual, EvolutionControls, Observable, SteadyStateOptions};
use crate::sparse::CsrMatrix;

pub const ORACLE_MAX_ATOMS: usize = 6;

/// Storage limit (complex entries) for the banded steady-state factorization.
const MAX_BAND_ENTRIES: usize = 60_000_000;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Joint basis `|m, n⟩`, Dicke index `m ∈ 0..=N`, Fock index `n < n_max`.
/// Matrix index `n·(N+1) + m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct JointLayout {
    pub n_atoms: usize,
    pub n_max: usize,
}

impl JointLayout {
    pub fn new(n_atoms: usize, n_max: usize) -> Result<Self> {
        if n_atoms == 0 {
            return Err(Error::InvalidParameter("n_atoms must be at least 1".into()));
        }
        if n_max < 2 {
            return Err(Error::InvalidParameter(format!("n_max must be at least 2, got {n_max}")));
        }
        Ok(JointLayout { n_atoms, n_max })
    }

    pub fn spin_dim(&self) -> usize {
        self.n_atoms + 1
    }

    pub fn dim(&self) -> usize {
        self.spin_dim() * self.n_max
    }

    pub fn index(&self, m: usize, n: usize) -> usize {
        n * self.spin_dim() + m
    }

    pub fn split(&self, j: usize) -> (usize, usize) {
        (j % self.spin_dim(), j / self.spin_dim())
    }

    /// Position of `ρ_{r,c}` in the vectorized state, ordered by
    /// `(n, n', m, m')` so that the generator is banded.
    fn slot(&self, r: usize, c: usize) -> usize {
        let d = self.spin_dim();
        let (m, n) = self.split(r);
        let (mp, np) = self.split(c);
        ((n * self.n_max + np) * d + m) * d + mp
    }

    fn unslot(&self, v: usize) -> (usize, usize) {
        let d = self.spin_dim();
        let mp = v % d;
        let m = (v / d) % d;
        let np = (v / (d * d)) % self.n_max;
        let n = v / (d * d * self.n_max);
        (self.index(m, n), self.index(mp, np))
    }

    fn vectorize(&self, rho: &CMatrix) -> Vec<Complex64> {
        let dim = self.dim();
        (0..dim * dim)
            .map(|v| {
                let (r, c) = self.unslot(v);
                rho[(r, c)]
            })
            .collect()
    }

    fn unvectorize(&self, v: &[Complex64]) -> CMatrix {
        let mut rho = CMatrix::zeros(self.dim(), self.dim());
        for (k, &z) in v.iter().enumerate() {
            let (r, c) = self.unslot(k);
            rho[(r, c)] = z;
        }
        rho
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct JointDensityMatrix {
    layout: JointLayout,
    data: CMatrix,
}

impl JointDensityMatrix {
    pub fn from_matrix(layout: JointLayout, data: CMatrix) -> Result<Self> {
        let dim = layout.dim();
        if data.nrows() != dim || data.ncols() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: data.nrows(),
            });
        }
        if hermiticity_defect(&data) > STATE_TOLERANCE {
            return Err(Error::NotHermitian(hermiticity_defect(&data)));
        }
        let tr: Complex64 = (0..dim).map(|k| data[(k, k)]).sum();
        if (tr - 1.0).norm() > STATE_TOLERANCE {
            return Err(Error::TraceNotUnity(tr.re));
        }
        Ok(JointDensityMatrix { layout, data })
    }

    /// `ρ_spin ⊗ |0⟩⟨0|`.
    pub fn with_vacuum(spin: &DickeDensityMatrix, n_max: usize) -> Result<Self> {
        let layout = JointLayout::new(spin.n_atoms(), n_max)?;
        let mut data = CMatrix::zeros(layout.dim(), layout.dim());
        for m in 0..layout.spin_dim() {
            for mp in 0..layout.spin_dim() {
                data[(layout.index(m, 0), layout.index(mp, 0))] = spin.get(m, mp);
            }
        }
        Ok(JointDensityMatrix { layout, data })
    }

    pub fn layout(&self) -> JointLayout {
        self.layout
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.data
    }

    /// Partial trace over the cavity.
    pub fn reduced_spin(&self) -> Result<DickeDensityMatrix> {
        let l = self.layout;
        let d = l.spin_dim();
        let m = CMatrix::from_fn(d, d, |a, b| (0..l.n_max).map(|n| self.data[(l.index(a, n), l.index(b, n))]).sum());
        DickeDensityMatrix::from_matrix(l.n_atoms, m)
    }

    pub fn observables(&self) -> OracleObservables {
        joint_observables(self.layout, &self.data)
    }

    /// Smallest eigenvalue of the joint state.
    pub fn min_eigenvalue(&self) -> f64 {
        SymmetricEigen::new(self.data.clone())
            .eigenvalues
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleObservables {
    pub sz: f64,
    pub sx: f64,
    pub sy: f64,
    /// `⟨a⟩`.
    pub a: Complex64,
    /// `⟨a + a†⟩ = 2 Re⟨a⟩`.
    pub quadrature: f64,
    /// `⟨a†a⟩`.
    pub photons: f64,
}

impl OracleObservables {
    fn max_shift(&self, other: &OracleObservables) -> f64 {
        [
            self.sz - other.sz,
            self.sx - other.sx,
            self.quadrature - other.quadrature,
            self.photons - other.photons,
        ]
        .iter()
        .fold(0.0, |m, d| m.max(d.abs()))
    }
}

fn joint_observables(l: JointLayout, rho: &CMatrix) -> OracleObservables {
    let f = LadderCoefficients::new(l.n_atoms);
    let s = l.n_atoms as f64 / 2.0;
    let (mut sz, mut photons) = (0.0, 0.0);
    let (mut s_plus, mut a) = (ZERO, ZERO);
    for n in 0..l.n_max {
        for m in 0..l.spin_dim() {
            let j = l.index(m, n);
            let p = rho[(j, j)].re;
            sz += (m as f64 - s) * p;
            photons += n as f64 * p;
            if m < l.n_atoms {
                s_plus += rho[(j, l.index(m + 1, n))] * f.at(m as isize);
            }
            if n + 1 < l.n_max {
                a += rho[(l.index(m, n + 1), j)] * ((n + 1) as f64).sqrt();
            }
        }
    }
    OracleObservables {
        sz,
        sx: s_plus.re,
        sy: s_plus.im,
        a,
        quadrature: 2.0 * a.re,
        photons,
    }
}

/// The joint generator as a sparse matrix on the vectorized state.
#[derive(Debug, Clone)]
pub struct JointGenerator {
    layout: JointLayout,
    hamiltonian: Vec<Vec<(usize, f64)>>,
    kappa: f64,
}

impl JointGenerator {
    pub fn new(params: &ModelParams, n_max: usize) -> Result<Self> {
        params.validate()?;
        if params.n_atoms > ORACLE_MAX_ATOMS {
            return Err(Error::ResourceCap(format!(
                "joint atom-cavity model limited to N <= {ORACLE_MAX_ATOMS} (got {})",
                params.n_atoms
            )));
        }
        let layout = JointLayout::new(params.n_atoms, n_max)?;
        let f = LadderCoefficients::new(params.n_atoms);
        let s = params.spin();
        let mut hamiltonian = vec![Vec::new(); layout.dim()];
        for (r, row) in hamiltonian.iter_mut().enumerate() {
            let (m, n) = layout.split(r);
            row.push((r, params.omega0 * (m as f64 - s) + params.omega * n as f64));
            // 2g (a + a†) Sx, with Sx_{m,m-1} = f(m-1)/2 and Sx_{m,m+1} = f(m)/2
            let mut spin_moves = Vec::new();
            if m > 0 {
                spin_moves.push((m - 1, 0.5 * f.at(m as isize - 1)));
            }
            if m < params.n_atoms {
                spin_moves.push((m + 1, 0.5 * f.at(m as isize)));
            }
            let mut photon_moves = Vec::new();
            if n + 1 < n_max {
                photon_moves.push((n + 1, ((n + 1) as f64).sqrt()));
            }
            if n > 0 {
                photon_moves.push((n - 1, (n as f64).sqrt()));
            }
            for &(k, sx) in &spin_moves {
                for &(l, x) in &photon_moves {
                    row.push((layout.index(k, l), 2.0 * params.g * sx * x));
                }
            }
        }
        Ok(JointGenerator {
            layout,
            hamiltonian,
            kappa: params.kappa,
        })
    }

    pub fn layout(&self) -> JointLayout {
        self.layout
    }

    /// Coefficients of `(Lρ)_{r,c}` as `(slot, weight)` pairs.
    fn row(&self, r: usize, c: usize) -> Vec<(usize, Complex64)> {
        let l = self.layout;
        let i = Complex64::i();
        let mut out = Vec::with_capacity(12);
        for &(k, h) in &self.hamiltonian[r] {
            out.push((l.slot(k, c), -i * h));
        }
        // H is real symmetric: H_{kc} = H_{ck}
        for &(k, h) in &self.hamiltonian[c] {
            out.push((l.slot(r, k), i * h));
        }
        let (mr, nr) = l.split(r);
        let (mc, nc) = l.split(c);
        out.push((l.slot(r, c), Complex64::new(-self.kappa * (nr + nc) as f64, 0.0)));
        if nr + 1 < l.n_max && nc + 1 < l.n_max {
            let w = 2.0 * self.kappa * (((nr + 1) * (nc + 1)) as f64).sqrt();
            out.push((l.slot(l.index(mr, nr + 1), l.index(mc, nc + 1)), Complex64::new(w, 0.0)));
        }
        out
    }

    /// Generator on the full vectorized state.
    pub fn matrix(&self) -> CsrMatrix {
        let dim = self.layout.dim();
        let rows = (0..dim * dim)
            .map(|v| {
                let (r, c) = self.layout.unslot(v);
                self.row(r, c)
            })
            .collect();
        CsrMatrix::from_rows(dim * dim, rows)
    }

    /// `L(ρ)` for a joint matrix.
    pub fn apply(&self, rho: &CMatrix) -> Result<CMatrix> {
        let dim = self.layout.dim();
        if rho.nrows() != dim || rho.ncols() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: rho.nrows(),
            });
        }
        let v = self.layout.vectorize(rho);
        let mut out = vec![ZERO; v.len()];
        for (k, o) in out.iter_mut().enumerate() {
            let (r, c) = self.layout.unslot(k);
            *o = self.row(r, c).into_iter().map(|(s, w)| w * v[s]).sum();
        }
        Ok(self.layout.unvectorize(&out))
    }

    /// Elements with even `(m + n) - (m' + n')`: the sector holding the
    /// populations, closed under the generator. Listed in slot order.
    fn population_sector(&self) -> (Vec<usize>, Vec<usize>) {
        let l = self.layout;
        let dim = l.dim();
        let mut slots = Vec::new();
        let mut position = vec![usize::MAX; dim * dim];
        for v in 0..dim * dim {
            let (r, c) = l.unslot(v);
            let (m, n) = l.split(r);
            let (mp, np) = l.split(c);
            if (m + n + mp + np) % 2 == 0 {
                position[v] = slots.len();
                slots.push(v);
            }
        }
        (slots, position)
    }
}

/// Cutoff doubling: start at `initial` (or 8 photons below threshold, 16
/// above), double until every observable moves by less than `tolerance`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CutoffPolicy {
    pub initial: Option<usize>,
    pub tolerance: f64,
    pub max_n: usize,
}

impl Default for CutoffPolicy {
    fn default() -> Self {
        CutoffPolicy {
            initial: None,
            tolerance: 1e-8,
            max_n: 256,
        }
    }
}

impl CutoffPolicy {
    pub fn initial_for(&self, params: &ModelParams) -> usize {
        if let Some(n) = self.initial {
            return n.max(2);
        }
        match critical_coupling(params) {
            Ok(gc) if params.g_sqrt_n() > gc => 16,
            _ => 8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct OracleSteadyState {
    pub state: JointDensityMatrix,
    pub observables: OracleObservables,
    pub residual: f64,
    pub degenerate: bool,
    /// Cutoff of the returned state.
    pub n_max: usize,
    /// Largest observable change in the last doubling; `None` when no
    /// doubling was done (degenerate case).
    pub shift: Option<f64>,
}

/// Cutoff-converged steady state of the joint model.
pub fn oracle_steady_state(params: &ModelParams, policy: &CutoffPolicy) -> Result<OracleSteadyState> {
    let mut n = policy.initial_for(params);
    let mut current = steady_at(params, n)?;
    if current.degenerate {
        return Ok(current);
    }
    loop {
        let next_n = 2 * n;
        if next_n > policy.max_n {
            return Err(Error::CutoffNotConverged {
                n_max: n,
                shift: current.shift.unwrap_or(f64::NAN),
            });
        }
        let next = match steady_at(params, next_n) {
            Err(Error::ResourceCap(msg)) => {
                debug!("cutoff doubling stopped: {msg}");
                return Err(Error::CutoffNotConverged {
                    n_max: n,
                    shift: current.shift.unwrap_or(f64::NAN),
                });
            }
            other => other?,
        };
        let shift = current.observables.max_shift(&next.observables);
        debug!("oracle cutoff {n} -> {next_n}: shift {shift:.3e}");
        current = OracleSteadyState {
            shift: Some(shift),
            ..next
        };
        if shift < policy.tolerance {
            return Ok(current);
        }
        n = next_n;
    }
}

/// Steady state at a fixed cutoff, by the same pinned banded solve as the
/// atom-only model but on the joint population sector.
pub fn steady_at(params: &ModelParams, n_max: usize) -> Result<OracleSteadyState> {
    let gen = JointGenerator::new(params, n_max)?;
    let l = gen.layout;
    let (slots, position) = gen.population_sector();
    let rows = slots
        .iter()
        .map(|&v| {
            let (r, c) = l.unslot(v);
            gen.row(r, c).into_iter().map(|(s, w)| (position[s], w)).collect()
        })
        .collect();
    let a = CsrMatrix::from_rows(slots.len(), rows);
    let (kl, ku) = a.bandwidths();
    if slots.len().saturating_mul(2 * kl + ku + 1) > MAX_BAND_ENTRIES {
        return Err(Error::ResourceCap(format!(
            "joint steady state at n_max = {n_max} needs a band of {} x {}",
            slots.len(),
            2 * kl + ku + 1
        )));
    }
    let pops: Vec<usize> = (0..l.dim()).map(|j| position[l.slot(j, j)]).collect();
    let opts = SteadyStateOptions::default();
    let (mut v, mut degenerate) = pinned_solve(&a, pops[0], &opts)?;
    normalize(&mut v, &pops)?;
    if !degenerate {
        let k = (0..l.dim()).max_by(|&i, &j| v[pops[i]].re.total_cmp(&v[pops[j]].re)).unwrap();
        if k != 0 {
            let (w, deg) = pinned_solve(&a, pops[k], &opts)?;
            v = w;
            degenerate = deg;
            normalize(&mut v, &pops)?;
        }
    }
    let residual = relative_residual(&a, &v, a.norm_inf().max(f64::MIN_POSITIVE));
    let mut full = vec![ZERO; l.dim() * l.dim()];
    for (&s, z) in slots.iter().zip(v) {
        full[s] = z;
    }
    let rho = l.unvectorize(&full);
    let rho = (&rho + rho.adjoint()) * Complex64::new(0.5, 0.0);
    let state = JointDensityMatrix { layout: l, data: rho };
    Ok(OracleSteadyState {
        observables: state.observables(),
        state,
        residual,
        degenerate,
        n_max,
        shift: None,
    })
}

/// Observables of the joint model sampled along a trajectory.
pub fn evolve_joint(
    params: &ModelParams,
    rho0: &JointDensityMatrix,
    times: &[f64],
    opts: &Dp5Options,
) -> Result<(Vec<OracleObservables>, JointDensityMatrix)> {
    let gen = JointGenerator::new(params, rho0.layout.n_max)?;
    if gen.layout != rho0.layout {
        return Err(Error::DimensionMismatch {
            expected: gen.layout.dim(),
            found: rho0.layout.dim(),
        });
    }
    let l = gen.layout;
    let a = gen.matrix();
    let mut out = Vec::with_capacity(times.len());
    let mut last = rho0.data.clone();
    integrate(
        |_, y: &[Complex64], dy: &mut [Complex64]| {
            let ay = a.matvec(y);
            dy.copy_from_slice(&ay);
        },
        0.0,
        &l.vectorize(&rho0.data),
        times,
        opts,
        |t, y| {
            if y.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::NonFinite { t });
            }
            last = l.unvectorize(y);
            out.push(joint_observables(l, &last));
            Ok(())
        },
        |_, _| false,
    )?;
    Ok((out, JointDensityMatrix { layout: l, data: last }))
}

/// Bare-cavity correlator `Tr[X e^{Lτ}(X ρ_B)]` with `X = a + a†` and
/// `ρ_B` the vacuum, by the quantum regression theorem. Requires `g = 0`.
/// Negative `τ` uses `C(-τ) = C(τ)*`.
pub fn cavity_correlation(params: &ModelParams, taus: &[f64], n_max: usize) -> Result<Vec<Complex64>> {
    if params.g != 0.0 {
        return Err(Error::InvalidParameter("cavity correlation needs the bare cavity (g = 0)".into()));
    }
    let gen = JointGenerator::new(params, n_max)?;
    let l = gen.layout;
    let a = gen.matrix();
    let x = CMatrix::from_fn(l.dim(), l.dim(), |r, c| {
        let ((mr, nr), (mc, nc)) = (l.split(r), l.split(c));
        if mr != mc {
            ZERO
        } else if nr + 1 == nc {
            Complex64::new((nc as f64).sqrt(), 0.0)
        } else if nc + 1 == nr {
            Complex64::new((nr as f64).sqrt(), 0.0)
        } else {
            ZERO
        }
    });
    let mut rho_b = CMatrix::zeros(l.dim(), l.dim());
    rho_b[(0, 0)] = Complex64::new(1.0, 0.0);
    let start = &x * &rho_b;

    let mut order: Vec<usize> = (0..taus.len()).collect();
    order.sort_by(|&i, &j| taus[i].abs().total_cmp(&taus[j].abs()));
    let mut grid: Vec<f64> = order.iter().map(|&k| taus[k].abs()).collect();
    grid.dedup();
    if grid.iter().any(|t| !t.is_finite()) {
        return Err(Error::InvalidParameter("lags must be finite".into()));
    }
    let mut values = Vec::with_capacity(grid.len());
    if !grid.is_empty() && *grid.last().unwrap() > 0.0 {
        integrate(
            |_, y: &[Complex64], dy: &mut [Complex64]| dy.copy_from_slice(&a.matvec(y)),
            0.0,
            &l.vectorize(&start),
            &grid,
            &Dp5Options {
                rtol: 1e-12,
                atol: 1e-15,
                ..Default::default()
            },
            |_, y| {
                let sigma = l.unvectorize(y);
                values.push((&x * sigma).trace());
                Ok(())
            },
            |_, _| false,
        )?;
    } else {
        values = grid.iter().map(|_| (&x * &start).trace()).collect();
    }
    Ok(taus
        .iter()
        .map(|&t| {
            let k = grid.iter().position(|&g| g == t.abs()).expect("lag on grid");
            if t < 0.0 {
                values[k].conj()
            } else {
                values[k]
            }
        })
        .collect())
}

/// Normal-state ring-down in the joint and atom-only models.
#[derive(Debug, Clone, PartialEq)]
pub struct DecayComparison {
    pub oracle: DampingFit,
    pub atom_only: DampingFit,
    /// `-4g²Nκωω0/(ω²+κ²)² + i ω0 sqrt(1 - g²/g_c²)`.
    pub formula: Complex64,
    pub n_max: usize,
    /// Largest `⟨Sx⟩` change upon doubling the cutoff.
    pub cutoff_shift: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RingDownProtocol {
    /// Rotation of the all-down state about y.
    pub tilt: f64,
    pub t_final: f64,
    pub samples: usize,
    /// At small `N` several modes beat in `⟨Sx⟩`, so the default accepts
    /// a larger misfit than [`FitOptions::default`].
    pub fit: FitOptions,
}

impl Default for RingDownProtocol {
    fn default() -> Self {
        RingDownProtocol {
            tilt: 1e-3,
            t_final: 1500.0,
            samples: 3000,
            fit: FitOptions {
                max_residual: 0.25,
                ..Default::default()
            },
        }
    }
}

/// Fit `⟨Sx⟩(t)` after a small tilt of the all-down state, with the cavity
/// starting in vacuum, and the same protocol in the atom-only Full model.
pub fn oracle_decay_rates(params: &ModelParams, policy: &CutoffPolicy, protocol: &RingDownProtocol) -> Result<DecayComparison> {
    let gc = critical_coupling(params)?;
    if params.g_sqrt_n() >= gc {
        return Err(Error::InvalidParameter(format!(
            "ring-down protocol needs the normal phase (g√N = {} >= {gc})",
            params.g_sqrt_n()
        )));
    }
    let grid = crate::solvers::uniform_grid(protocol.t_final, protocol.samples);
    let spin0 = DickeDensityMatrix::tilted_down(params.n_atoms, protocol.tilt);
    let opts = Dp5Options::default();
    let run = |n_max: usize| -> Result<Vec<f64>> {
        let rho0 = JointDensityMatrix::with_vacuum(&spin0, n_max)?;
        Ok(evolve_joint(params, &rho0, &grid, &opts)?.0.iter().map(|o| o.sx).collect())
    };
    let mut n = policy.initial_for(params);
    let mut sx = run(n)?;
    let scale = SpinVector::tilted_down(params.n_atoms, protocol.tilt).sx.abs().max(f64::MIN_POSITIVE);
    let cutoff_shift = loop {
        if 2 * n > policy.max_n {
            return Err(Error::CutoffNotConverged { n_max: n, shift: f64::NAN });
        }
        let finer = run(2 * n)?;
        let shift = sx.iter().zip(&finer).fold(0.0f64, |m, (a, b)| m.max((a - b).abs())) / scale;
        n *= 2;
        sx = finer;
        if shift < policy.tolerance {
            break shift;
        }
    };
    let oracle = fit_damping_with(&grid, &sx, &protocol.fit)?;

    let spec = GeneratorSpec::new(params, ApproximationMode::Full)?;
    let atom = evolve(
        &spec,
        &spin0,
        &grid,
        &EvolutionControls {
            track_eigenvalues: false,
            ..Default::default()
        },
    )?;
    let atom_only = fit_damping_with(&grid, &atom.series(Observable::Sx), &protocol.fit)?;

    let approx = rates_large_detuning_approx(params);
    let ratio = params.g_sqrt_n() / gc;
    let formula = Complex64::new(
        2.0 * approx.q1_re * params.n_atoms as f64,
        params.omega0 * (1.0 - ratio * ratio).sqrt(),
    );
    Ok(DecayComparison {
        oracle,
        atom_only,
        formula,
        n_max: n,
        cutoff_shift,
    })
}
