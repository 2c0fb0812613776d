//! Physical parameters, cavity-induced rate coefficients and the
//! Hamiltonian/Kossakowski decomposition of the atom-only generator.
//!
//! Frequencies are measured in units of the cavity-pump detuning scale,
//! conventionally `omega = 1`.

use nalgebra::Matrix2;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Which atom-only master equation to use.
///
/// `xi` multiplies the terms that oscillate at `±2 omega0` in the
/// interaction picture; the large-detuning variants drop the rate
/// difference `Q1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ApproximationMode {
    /// Unsecularized Redfield equation (`xi = 1`, `Q1 != 0`).
    Full,
    /// Secular approximation (`xi = 0`).
    Secular,
    /// Large-detuning limit without secularization (`xi = 1`, `Q1 = 0`).
    LargeDetuning,
    /// Both approximations (`xi = 0`, `Q1 = 0`).
    SecularLargeDetuning,
}

impl ApproximationMode {
    pub const ALL: [ApproximationMode; 4] = [
        ApproximationMode::Full,
        ApproximationMode::Secular,
        ApproximationMode::LargeDetuning,
        ApproximationMode::SecularLargeDetuning,
    ];

    pub fn xi(self) -> f64 {
        match self {
            ApproximationMode::Full | ApproximationMode::LargeDetuning => 1.0,
            ApproximationMode::Secular | ApproximationMode::SecularLargeDetuning => 0.0,
        }
    }

    pub fn drops_q1(self) -> bool {
        matches!(
            self,
            ApproximationMode::LargeDetuning | ApproximationMode::SecularLargeDetuning
        )
    }

    pub fn is_secular(self) -> bool {
        self.xi() == 0.0
    }

    pub fn name(self) -> &'static str {
        match self {
            ApproximationMode::Full => "full",
            ApproximationMode::Secular => "secular",
            ApproximationMode::LargeDetuning => "large-detuning",
            ApproximationMode::SecularLargeDetuning => "secular-large-detuning",
        }
    }
}

impl std::str::FromStr for ApproximationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "full" => Ok(ApproximationMode::Full),
            "secular" => Ok(ApproximationMode::Secular),
            "large-detuning" => Ok(ApproximationMode::LargeDetuning),
            "secular-large-detuning" => Ok(ApproximationMode::SecularLargeDetuning),
            other => Err(Error::InvalidParameter(format!(
                "unknown approximation mode '{other}'"
            ))),
        }
    }
}

impl std::fmt::Display for ApproximationMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// The five numbers that define a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    /// Atomic level splitting.
    pub omega0: f64,
    /// Cavity detuning from the pump.
    pub omega: f64,
    /// Cavity field decay rate.
    pub kappa: f64,
    /// Matter-light coupling per atom.
    pub g: f64,
    /// Number of atoms `N`; the collective spin is `S = N/2`.
    pub n_atoms: usize,
}

impl ModelParams {
    /// Validated constructor.
    ///
    /// `kappa = 0` is accepted here so that the closed-cavity threshold can
    /// be evaluated; anything that needs a decaying bath correlator
    /// ([`compute_rates`]) rejects it.
    pub fn new(omega0: f64, omega: f64, kappa: f64, g: f64, n_atoms: usize) -> Result<Self> {
        let p = ModelParams {
            omega0,
            omega,
            kappa,
            g,
            n_atoms,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("omega0", self.omega0),
            ("omega", self.omega),
            ("kappa", self.kappa),
            ("g", self.g),
        ] {
            if !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be finite")));
            }
        }
        if self.kappa < 0.0 {
            return Err(Error::InvalidParameter("kappa must be non-negative".into()));
        }
        if self.g < 0.0 {
            return Err(Error::InvalidParameter("g must be non-negative".into()));
        }
        if self.n_atoms == 0 {
            return Err(Error::InvalidParameter("n_atoms must be at least 1".into()));
        }
        Ok(())
    }

    /// Collective spin length `S = N/2`.
    pub fn spin(&self) -> f64 {
        self.n_atoms as f64 / 2.0
    }

    /// Dicke-sector dimension `N + 1`.
    pub fn dim(&self) -> usize {
        self.n_atoms + 1
    }

    pub fn with_g(self, g: f64) -> Self {
        ModelParams { g, ..self }
    }

    /// Copy with the coupling set from the collective value `g * sqrt(N)`.
    pub fn with_g_sqrt_n(self, g_sqrt_n: f64) -> Self {
        self.with_g(g_sqrt_n / (self.n_atoms as f64).sqrt())
    }

    pub fn with_n_atoms(self, n_atoms: usize) -> Self {
        ModelParams { n_atoms, ..self }
    }

    pub fn g_sqrt_n(&self) -> f64 {
        self.g * (self.n_atoms as f64).sqrt()
    }

    /// Per-atom critical coupling `g_c`.
    pub fn critical_g(&self) -> Result<f64> {
        Ok(critical_coupling(self)? / (self.n_atoms as f64).sqrt())
    }
}

/// Cavity-induced rate coefficients `Q+`, `Q-` and their mean/difference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateSet {
    pub q_plus: Complex64,
    pub q_minus: Complex64,
}

impl RateSet {
    pub fn new(q_plus: Complex64, q_minus: Complex64) -> Self {
        RateSet { q_plus, q_minus }
    }

    /// `Q0 = (Q+ + Q-)/2`.
    pub fn q0(&self) -> Complex64 {
        (self.q_plus + self.q_minus) * 0.5
    }

    /// `Q1 = (Q+ - Q-)/2`.
    pub fn q1(&self) -> Complex64 {
        (self.q_plus - self.q_minus) * 0.5
    }

    pub fn q_plus_re(&self) -> f64 {
        self.q_plus.re
    }
    pub fn q_plus_im(&self) -> f64 {
        self.q_plus.im
    }
    pub fn q_minus_re(&self) -> f64 {
        self.q_minus.re
    }
    pub fn q_minus_im(&self) -> f64 {
        self.q_minus.im
    }
    pub fn q0_re(&self) -> f64 {
        self.q0().re
    }
    pub fn q0_im(&self) -> f64 {
        self.q0().im
    }
    pub fn q1_re(&self) -> f64 {
        self.q1().re
    }
    pub fn q1_im(&self) -> f64 {
        self.q1().im
    }

    /// Rates seen by a given approximation: the large-detuning variants
    /// replace both `Q+` and `Q-` by `Q0`.
    pub fn for_mode(&self, mode: ApproximationMode) -> RateSet {
        if mode.drops_q1() {
            let q0 = self.q0();
            RateSet::new(q0, q0)
        } else {
            *self
        }
    }
}

/// `Q± = g² / (kappa + i(omega ± omega0))`.
pub fn compute_rates(params: &ModelParams) -> Result<RateSet> {
    params.validate()?;
    if params.kappa <= 0.0 {
        return Err(Error::InvalidParameter(
            "kappa must be strictly positive for a decaying bath correlator".into(),
        ));
    }
    let g2 = params.g * params.g;
    let q_plus = Complex64::new(g2, 0.0) / Complex64::new(params.kappa, params.omega + params.omega0);
    let q_minus =
        Complex64::new(g2, 0.0) / Complex64::new(params.kappa, params.omega - params.omega0);
    Ok(RateSet::new(q_plus, q_minus))
}

/// Collective critical coupling `g_c sqrt(N) = sqrt(omega0 (omega² + kappa²) / (4 omega))`.
pub fn critical_coupling(params: &ModelParams) -> Result<f64> {
    if !(params.omega > 0.0) {
        return Err(Error::NoTransition(format!(
            "threshold requires omega > 0 (got {})",
            params.omega
        )));
    }
    if !(params.omega0 > 0.0) {
        return Err(Error::NoTransition(format!(
            "threshold requires omega0 > 0 (got {})",
            params.omega0
        )));
    }
    let w = params.omega;
    let k = params.kappa;
    Ok((params.omega0 * (w * w + k * k) / (4.0 * w)).sqrt())
}

/// Coefficient matrices of the generator written on the operator pair
/// `C = (S+, S-)`:
///
/// `H_eff = omega0 Sz + Σ H_ij C_i† C_j`,
/// `D(ρ) = Σ L_ij (2 C_j ρ C_i† - {C_i† C_j, ρ})`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatorForm {
    pub h_matrix: Matrix2<Complex64>,
    pub l_matrix: Matrix2<Complex64>,
    pub xi: f64,
}

/// Assemble the Hamiltonian and Kossakowski matrices. `xi` must be 0 or 1.
///
/// The off-diagonal Kossakowski entry is `L_12 = xi (Q0' - i Q1'')`, the
/// orientation that reproduces the Dicke-basis generator under the index
/// convention written on [`OperatorForm`].
pub fn operator_form(rates: &RateSet, xi: f64) -> Result<OperatorForm> {
    if xi != 0.0 && xi != 1.0 {
        return Err(Error::InvalidParameter(format!("xi must be 0 or 1, got {xi}")));
    }
    let q0 = rates.q0();
    let q1 = rates.q1();
    let i = Complex64::i();
    let c = |x: f64| Complex64::new(x, 0.0);

    let h_matrix = Matrix2::new(c(q0.im), c(xi * q0.im), c(xi * q0.im), c(q0.im))
        + Matrix2::new(c(q1.im), i * xi * q1.re, -i * xi * q1.re, c(-q1.im));
    let l_matrix = Matrix2::new(c(q0.re), c(xi * q0.re), c(xi * q0.re), c(q0.re))
        + Matrix2::new(c(q1.re), -i * xi * q1.im, i * xi * q1.im, c(-q1.re));

    Ok(OperatorForm {
        h_matrix,
        l_matrix,
        xi,
    })
}

/// Eigenvalues of the (Hermitian) Kossakowski matrix, largest first.
pub fn kossakowski_spectrum(form: &OperatorForm) -> (f64, f64) {
    let l = &form.l_matrix;
    let a = l[(0, 0)].re;
    let d = l[(1, 1)].re;
    let b = l[(0, 1)];
    let mean = 0.5 * (a + d);
    let half_gap = (0.5 * (a - d)).hypot(b.norm());
    (mean + half_gap, mean - half_gap)
}

/// Max entrywise deviation from Hermiticity of a 2×2 matrix.
pub fn hermitian_defect(m: &Matrix2<Complex64>) -> f64 {
    let mut worst: f64 = 0.0;
    for r in 0..2 {
        for c in 0..2 {
            worst = worst.max((m[(r, c)] - m[(c, r)].conj()).norm());
        }
    }
    worst
}
