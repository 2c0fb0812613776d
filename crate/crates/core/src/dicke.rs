//! Density matrices and collective spin operators in the Dicke basis.
//!
//! Magnetic quantum numbers `M ∈ {-S, …, S}` are stored as offsets
//! `m = M + S ∈ {0, …, N}`; row/column `m` of every matrix in this crate
//! refers to `|S, m - S⟩`.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;

/// Tolerance on Hermiticity and unit trace accepted at construction.
pub const STATE_TOLERANCE: f64 = 1e-9;

/// Raising-operator matrix elements `f[m] = sqrt((S - M)(S + M + 1))`, so that
/// `S+ |m⟩ = f[m] |m+1⟩` and `S- |m+1⟩ = f[m] |m⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct LadderCoefficients {
    n_atoms: usize,
    values: Vec<f64>,
}

impl LadderCoefficients {
    pub fn new(n_atoms: usize) -> Self {
        let values = (0..=n_atoms)
            .map(|m| (((n_atoms - m) * (m + 1)) as f64).sqrt())
            .collect();
        LadderCoefficients { n_atoms, values }
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    /// `f` at offset `m`; zero outside `0..N` (including `m = N`, the top state).
    #[inline]
    pub fn at(&self, m: isize) -> f64 {
        if m < 0 || m as usize >= self.n_atoms {
            0.0
        } else {
            self.values[m as usize]
        }
    }

    /// Lowering coefficient `f_-` at offset `m`: `S- |m⟩ = f_-[m] |m-1⟩`.
    #[inline]
    pub fn lowering_at(&self, m: isize) -> f64 {
        self.at(m - 1)
    }
}

/// Collective spin operators as dense matrices in the Dicke basis.
#[derive(Debug, Clone)]
pub struct SpinOperators {
    pub sz: CMatrix,
    pub s_plus: CMatrix,
    pub s_minus: CMatrix,
    pub sx: CMatrix,
    pub sy: CMatrix,
}

impl SpinOperators {
    pub fn new(n_atoms: usize) -> Self {
        let d = n_atoms + 1;
        let s = n_atoms as f64 / 2.0;
        let f = LadderCoefficients::new(n_atoms);
        let sz = CMatrix::from_fn(d, d, |r, c| {
            if r == c {
                Complex64::new(r as f64 - s, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        let s_plus = CMatrix::from_fn(d, d, |r, c| {
            if r == c + 1 {
                Complex64::new(f.at(c as isize), 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        let s_minus = s_plus.adjoint();
        let sx = (&s_plus + &s_minus) * Complex64::new(0.5, 0.0);
        let sy = (&s_plus - &s_minus) * Complex64::new(0.0, -0.5);
        SpinOperators {
            sz,
            s_plus,
            s_minus,
            sx,
            sy,
        }
    }
}

/// Largest entrywise deviation `|A_ij - conj(A_ji)|`.
pub fn hermiticity_defect(a: &CMatrix) -> f64 {
    let n = a.nrows();
    let mut worst: f64 = 0.0;
    for c in 0..n {
        for r in c..n {
            worst = worst.max((a[(r, c)] - a[(c, r)].conj()).norm());
        }
    }
    worst
}

pub fn trace(a: &CMatrix) -> Complex64 {
    a.diagonal().iter().sum()
}

/// Collective-spin density matrix `ρ_{M,M'}` of `N` atoms.
#[derive(Debug, Clone, PartialEq)]
pub struct DickeDensityMatrix {
    n_atoms: usize,
    data: CMatrix,
}

impl DickeDensityMatrix {
    /// Wrap a matrix, checking dimension, Hermiticity and unit trace to
    /// [`STATE_TOLERANCE`]. Positivity is not checked.
    pub fn from_matrix(n_atoms: usize, data: CMatrix) -> Result<Self> {
        let d = n_atoms + 1;
        if data.nrows() != d || data.ncols() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: data.nrows().max(data.ncols()),
            });
        }
        let defect = hermiticity_defect(&data);
        if defect > STATE_TOLERANCE {
            return Err(Error::NotHermitian(defect));
        }
        let tr = trace(&data);
        if (tr - Complex64::new(1.0, 0.0)).norm() > STATE_TOLERANCE {
            return Err(Error::TraceNotUnity(tr.re));
        }
        Ok(DickeDensityMatrix { n_atoms, data })
    }

    /// Construct without validation; for states produced by trusted code paths.
    pub(crate) fn from_matrix_unchecked(n_atoms: usize, data: CMatrix) -> Self {
        DickeDensityMatrix { n_atoms, data }
    }

    /// `|ψ⟩⟨ψ|` for a normalized amplitude vector.
    pub fn pure(n_atoms: usize, amplitudes: &[Complex64]) -> Result<Self> {
        let d = n_atoms + 1;
        if amplitudes.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                found: amplitudes.len(),
            });
        }
        let norm: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::InvalidParameter("zero state vector".into()));
        }
        let data = CMatrix::from_fn(d, d, |r, c| amplitudes[r] * amplitudes[c].conj() / (norm * norm));
        Ok(DickeDensityMatrix { n_atoms, data })
    }

    /// `I / (N + 1)`.
    pub fn maximally_mixed(n_atoms: usize) -> Self {
        let d = n_atoms + 1;
        let data = CMatrix::identity(d, d) * Complex64::new(1.0 / d as f64, 0.0);
        DickeDensityMatrix { n_atoms, data }
    }

    /// Dicke state `|S, M⟩⟨S, M|` given the offset `m = M + S`.
    pub fn dicke_state(n_atoms: usize, m: usize) -> Result<Self> {
        if m > n_atoms {
            return Err(Error::InvalidParameter(format!("offset {m} exceeds N = {n_atoms}")));
        }
        let d = n_atoms + 1;
        let mut data = CMatrix::zeros(d, d);
        data[(m, m)] = Complex64::new(1.0, 0.0);
        Ok(DickeDensityMatrix { n_atoms, data })
    }

    /// All spins down, `|S, -S⟩`.
    pub fn all_down(n_atoms: usize) -> Self {
        Self::dicke_state(n_atoms, 0).expect("offset 0 is always valid")
    }

    /// Spin-coherent state pointing along polar angle `theta` (from +z) and
    /// azimuth `phi`: `⟨S⟩ = S (sinθ cosφ, sinθ sinφ, cosθ)`.
    pub fn spin_coherent(n_atoms: usize, theta: f64, phi: f64) -> Self {
        let amps = coherent_amplitudes(n_atoms, theta, phi);
        Self::pure(n_atoms, &amps).expect("coherent amplitudes are normalized")
    }

    /// All-down state rotated about `y` by `angle`, so that `⟨Sx⟩ = S sin(angle)`.
    pub fn tilted_down(n_atoms: usize, angle: f64) -> Self {
        Self::spin_coherent(n_atoms, std::f64::consts::PI - angle, 0.0)
    }

    pub fn n_atoms(&self) -> usize {
        self.n_atoms
    }

    pub fn dim(&self) -> usize {
        self.n_atoms + 1
    }

    pub fn spin(&self) -> f64 {
        self.n_atoms as f64 / 2.0
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.data
    }

    pub fn into_matrix(self) -> CMatrix {
        self.data
    }

    /// Element `ρ_{M,M'}` addressed by offsets.
    pub fn get(&self, m: usize, mp: usize) -> Complex64 {
        self.data[(m, mp)]
    }

    pub fn trace(&self) -> Complex64 {
        trace(&self.data)
    }

    pub fn hermiticity_defect(&self) -> f64 {
        hermiticity_defect(&self.data)
    }

    /// `ρ ← (ρ + ρ†)/2`.
    pub fn symmetrize(&mut self) {
        let adj = self.data.adjoint();
        self.data = (&self.data + adj) * Complex64::new(0.5, 0.0);
    }
}

/// Amplitudes `c_m` of the spin-coherent state, with
/// `c_m = sqrt(C(N, m)) cos(θ/2)^m sin(θ/2)^(N-m) e^{i(N-m)φ}`.
pub fn coherent_amplitudes(n_atoms: usize, theta: f64, phi: f64) -> Vec<Complex64> {
    let (s_half, c_half) = (0.5 * theta).sin_cos();
    let mut ln_binom = 0.0f64;
    (0..=n_atoms)
        .map(|m| {
            if m > 0 {
                ln_binom += ((n_atoms - m + 1) as f64).ln() - (m as f64).ln();
            }
            let mag = (0.5 * ln_binom).exp()
                * c_half.powi(m as i32)
                * s_half.powi((n_atoms - m) as i32);
            Complex64::from_polar(mag, (n_atoms - m) as f64 * phi)
        })
        .collect()
}
