//! Atom-only generator on Dicke-basis density matrices.
//!
//! The generator is applied as a fused nine-point stencil over `(m, m')`:
//! one diagonal term plus couplings to `(m±1, m'±1)`, `(m±1, m'∓1)`,
//! `(m±2, m')` and `(m, m'±2)`. Every coupling shifts `m - m'` by an even
//! amount, so the two parity sectors of `m - m'` evolve independently.

use num_complex::Complex64;

use crate::dicke::{hermiticity_defect, CMatrix, DickeDensityMatrix, LadderCoefficients, SpinOperators, STATE_TOLERANCE};
use crate::error::{Error, Result};
use crate::params::{compute_rates, operator_form, ApproximationMode, ModelParams, OperatorForm, RateSet};
use crate::sparse::CsrMatrix;

/// Largest `N` accepted by [`vectorized_generator`].
pub const VECTORIZED_MAX_ATOMS: usize = 512;

/// Everything needed to apply the generator for one approximation mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeneratorSpec {
    pub mode: ApproximationMode,
    /// Rates after the mode's substitution (`Q± → Q0` for large detuning).
    pub rates: RateSet,
    pub n_atoms: usize,
    pub omega0: f64,
}

impl GeneratorSpec {
    pub fn new(params: &ModelParams, mode: ApproximationMode) -> Result<Self> {
        let rates = compute_rates(params)?.for_mode(mode);
        Ok(GeneratorSpec {
            mode,
            rates,
            n_atoms: params.n_atoms,
            omega0: params.omega0,
        })
    }

    pub fn xi(&self) -> f64 {
        self.mode.xi()
    }

    pub fn dim(&self) -> usize {
        self.n_atoms + 1
    }

    pub fn operator_form(&self) -> OperatorForm {
        operator_form(&self.rates, self.xi()).expect("xi is 0 or 1 by construction")
    }

    pub(crate) fn stencil(&self) -> Stencil {
        Stencil::new(self)
    }
}

/// Precomputed coefficients of the fused stencil.
#[derive(Debug, Clone)]
pub(crate) struct Stencil {
    dim: usize,
    ladder: LadderCoefficients,
    omega0: f64,
    q_plus: Complex64,
    q_minus: Complex64,
    xi: f64,
}

type StencilEntry = (isize, isize, Complex64);

impl Stencil {
    fn new(spec: &GeneratorSpec) -> Self {
        Stencil {
            dim: spec.dim(),
            ladder: LadderCoefficients::new(spec.n_atoms),
            omega0: spec.omega0,
            q_plus: spec.rates.q_plus,
            q_minus: spec.rates.q_minus,
            xi: spec.xi(),
        }
    }

    /// Coefficients feeding `ρ̇_{m,m'}`, as `(row shift, column shift, weight)`.
    #[inline]
    fn entries(&self, m: usize, mp: usize) -> [StencilEntry; 9] {
        let f = |k: isize| self.ladder.at(k);
        let (mi, mpi) = (m as isize, mp as isize);
        let (qp, qm) = (self.q_plus, self.q_minus);
        let (qpc, qmc) = (qp.conj(), qm.conj());
        let xi = self.xi;
        let diag = Complex64::new(0.0, -self.omega0 * (mi - mpi) as f64)
            - (qm * f(mi - 1).powi(2) + qp * f(mi).powi(2) + qmc * f(mpi - 1).powi(2) + qpc * f(mpi).powi(2));
        [
            (0, 0, diag),
            (1, 1, (qm + qmc) * (f(mi) * f(mpi))),
            (-1, -1, (qp + qpc) * (f(mi - 1) * f(mpi - 1))),
            (-1, 1, (qp + qmc) * (xi * f(mi - 1) * f(mpi))),
            (1, -1, (qm + qpc) * (xi * f(mi) * f(mpi - 1))),
            (-2, 0, -qp * (xi * f(mi - 1) * f(mi - 2))),
            (2, 0, -qm * (xi * f(mi) * f(mi + 1))),
            (0, 2, -qmc * (xi * f(mpi + 1) * f(mpi))),
            (0, -2, -qpc * (xi * f(mpi - 2) * f(mpi - 1))),
        ]
    }

    /// `out = L(rho)` on column-major `(N+1)×(N+1)` slices.
    pub(crate) fn apply(&self, rho: &[Complex64], out: &mut [Complex64]) {
        let d = self.dim as isize;
        for mp in 0..self.dim {
            for m in 0..self.dim {
                let mut acc = Complex64::new(0.0, 0.0);
                for (dm, dmp, w) in self.entries(m, mp) {
                    let (r, c) = (m as isize + dm, mp as isize + dmp);
                    if r < 0 || r >= d || c < 0 || c >= d {
                        continue;
                    }
                    acc += w * rho[(r + c * d) as usize];
                }
                out[m + mp * self.dim] = acc;
            }
        }
    }
}

fn check_state(spec: &GeneratorSpec, rho: &CMatrix) -> Result<()> {
    let d = spec.dim();
    if rho.nrows() != d || rho.ncols() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: rho.nrows().max(rho.ncols()),
        });
    }
    let defect = hermiticity_defect(rho);
    let scale = rho.iter().map(|z| z.norm()).fold(1.0, f64::max);
    if defect > STATE_TOLERANCE * scale {
        return Err(Error::NotHermitian(defect));
    }
    Ok(())
}

/// Time derivative `ρ̇ = L(ρ)` of a Dicke-basis density matrix.
pub fn apply_generator(spec: &GeneratorSpec, rho: &DickeDensityMatrix) -> Result<CMatrix> {
    apply_generator_matrix(spec, rho.matrix())
}

/// [`apply_generator`] on a bare Hermitian matrix (it need not have unit
/// trace, so linear combinations of states are accepted).
pub fn apply_generator_matrix(spec: &GeneratorSpec, rho: &CMatrix) -> Result<CMatrix> {
    check_state(spec, rho)?;
    let d = spec.dim();
    let mut out = CMatrix::zeros(d, d);
    spec.stencil().apply(rho.as_slice(), out.as_mut_slice());
    Ok(out)
}

/// Parity of `m - m'`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Parity {
    Even,
    Odd,
}

/// Partition of the `(N+1)²` index pairs by parity of `m - m'`, each
/// sector listed in row-major `(m, m')` order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParitySectors {
    n_atoms: usize,
    pub even: Vec<(usize, usize)>,
    pub odd: Vec<(usize, usize)>,
    position: Vec<usize>,
}

impl ParitySectors {
    pub fn sector(&self, parity: Parity) -> &[(usize, usize)] {
        match parity {
            Parity::Even => &self.even,
            Parity::Odd => &self.odd,
        }
    }

    /// Parity and position of `(m, m')` inside its sector.
    pub fn locate(&self, m: usize, mp: usize) -> (Parity, usize) {
        let d = self.n_atoms + 1;
        let parity = if (m + mp) % 2 == 0 { Parity::Even } else { Parity::Odd };
        (parity, self.position[m * d + mp])
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }
}

pub fn parity_sectors(n_atoms: usize) -> ParitySectors {
    let d = n_atoms + 1;
    let mut even = Vec::with_capacity((d * d).div_ceil(2));
    let mut odd = Vec::with_capacity(d * d / 2);
    let mut position = vec![0; d * d];
    for m in 0..d {
        for mp in 0..d {
            let slot = if (m + mp) % 2 == 0 { &mut even } else { &mut odd };
            position[m * d + mp] = slot.len();
            slot.push((m, mp));
        }
    }
    ParitySectors {
        n_atoms,
        even,
        odd,
        position,
    }
}

/// Sparse generator restricted to one parity sector; row/column `k` is the
/// `k`-th pair of [`ParitySectors::sector`]. The even sector holds the
/// populations and has `⌈(N+1)²/2⌉` rows.
pub fn vectorized_generator(spec: &GeneratorSpec, parity: Parity) -> Result<CsrMatrix> {
    if spec.n_atoms > VECTORIZED_MAX_ATOMS {
        return Err(Error::ResourceCap(format!(
            "vectorized generator limited to N <= {VECTORIZED_MAX_ATOMS} (got {})",
            spec.n_atoms
        )));
    }
    let sectors = parity_sectors(spec.n_atoms);
    let stencil = spec.stencil();
    let d = spec.dim() as isize;
    let pairs = sectors.sector(parity);
    let rows = pairs
        .iter()
        .map(|&(m, mp)| {
            stencil
                .entries(m, mp)
                .into_iter()
                .filter_map(|(dm, dmp, w)| {
                    let (r, c) = (m as isize + dm, mp as isize + dmp);
                    if r < 0 || r >= d || c < 0 || c >= d {
                        return None;
                    }
                    let (p, k) = sectors.locate(r as usize, c as usize);
                    debug_assert_eq!(p, parity);
                    Some((k, w))
                })
                .collect()
        })
        .collect();
    Ok(CsrMatrix::from_rows(pairs.len(), rows))
}

/// Gather the entries of one parity sector of `rho` into a vector.
pub fn vectorize(rho: &CMatrix, sectors: &ParitySectors, parity: Parity) -> Vec<Complex64> {
    sectors.sector(parity).iter().map(|&(m, mp)| rho[(m, mp)]).collect()
}

/// Inverse of [`vectorize`]; entries of the other sector are zero.
pub fn unvectorize(v: &[Complex64], sectors: &ParitySectors, parity: Parity) -> CMatrix {
    let d = sectors.n_atoms() + 1;
    let mut rho = CMatrix::zeros(d, d);
    for (&(m, mp), &z) in sectors.sector(parity).iter().zip(v) {
        rho[(m, mp)] = z;
    }
    rho
}

/// Coherent part of the secular and large-detuning generators in closed form:
///
/// * secular: `(omega0 - 2 Q1'') Sz + 2 Q0'' (Sx² + Sy²)`,
/// * large detuning: `omega0 Sz + 4 Q0'' Sx²`.
///
/// The full generator's coherent part does not separate from its
/// dissipator, so [`ApproximationMode::Full`] is rejected.
pub fn effective_hamiltonian(spec: &GeneratorSpec) -> Result<CMatrix> {
    let n = spec.n_atoms;
    let d = spec.dim();
    let s = n as f64 / 2.0;
    let q0 = spec.rates.q0();
    let q1 = spec.rates.q1();
    match spec.mode {
        ApproximationMode::Full => Err(Error::UnsupportedMode(spec.mode)),
        ApproximationMode::Secular | ApproximationMode::SecularLargeDetuning => {
            Ok(CMatrix::from_fn(d, d, |r, c| {
                if r != c {
                    return Complex64::new(0.0, 0.0);
                }
                let m = r as f64 - s;
                Complex64::new((spec.omega0 - 2.0 * q1.im) * m + 2.0 * q0.im * (s * (s + 1.0) - m * m), 0.0)
            }))
        }
        ApproximationMode::LargeDetuning => {
            let ops = SpinOperators::new(n);
            Ok(&ops.sz * Complex64::new(spec.omega0, 0.0)
                + (&ops.sx * &ops.sx) * Complex64::new(4.0 * q0.im, 0.0))
        }
    }
}

/// Reference evaluation of the generator from its operator form,
/// `-i[H_eff, ρ] + Σ L_ij (2 C_j ρ C_i† - {C_i† C_j, ρ})` with `C = (S+, S-)`,
/// using dense matrix products. Independent of the stencil; O(N³).
pub fn apply_operator_form(form: &OperatorForm, omega0: f64, n_atoms: usize, rho: &CMatrix) -> CMatrix {
    let ops = SpinOperators::new(n_atoms);
    let c = [&ops.s_plus, &ops.s_minus];
    let cd = [ops.s_plus.adjoint(), ops.s_minus.adjoint()];
    let mut h_eff = &ops.sz * Complex64::new(omega0, 0.0);
    let mut out = CMatrix::zeros(n_atoms + 1, n_atoms + 1);
    for i in 0..2 {
        for j in 0..2 {
            let cdc = &cd[i] * c[j];
            h_eff += &cdc * form.h_matrix[(i, j)];
            let l = form.l_matrix[(i, j)];
            if l == Complex64::new(0.0, 0.0) {
                continue;
            }
            let jump = c[j] * rho * &cd[i] * Complex64::new(2.0, 0.0);
            let anti = &cdc * rho + rho * &cdc;
            out += (jump - anti) * l;
        }
    }
    out - (&h_eff * rho - rho * &h_eff) * Complex64::i()
}
