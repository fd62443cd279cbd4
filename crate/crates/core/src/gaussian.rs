//! Phase-space algebra for N-mode Gaussian states.
//!
//! Quadratures are interleaved, `(x₁, p₁, x₂, p₂, …, x_N, p_N)`, and covariance
//! matrices use the convention in which the vacuum is the identity. A quadratic
//! Hamiltonian `Ĥ = ½ r̂ᵀ H r̂` generates the symplectic propagator
//! `S(Δt) = exp(Ω H Δt)`, with `Ω = ⊕ [[0, 1], [-1, 0]]`.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};

/// Tolerance on `max |SᵀΩS − Ω|` for a matrix to count as symplectic.
pub const SYMPLECTIC_TOL: f64 = 1e-10;
/// Tolerance on `max |σ − σᵀ|` for covariance matrices.
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Minimum eigenvalue accepted for a covariance matrix.
pub const PSD_TOL: f64 = 1e-10;
/// Minimum eigenvalue of a conditioned covariance before the update is rejected.
pub const CONDITIONING_PSD_TOL: f64 = 1e-8;

/// Interleaved quadrature ordering for `n_modes` modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuadratureLayout {
    n_modes: usize,
}

impl QuadratureLayout {
    pub fn new(n_modes: usize) -> Result<Self> {
        if n_modes == 0 {
            return Err(Error::Input("a layout needs at least one mode".into()));
        }
        Ok(Self { n_modes })
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    /// Phase-space dimension `2N`.
    pub fn dim(&self) -> usize {
        2 * self.n_modes
    }

    pub fn x_index(&self, mode: usize) -> usize {
        2 * mode
    }

    pub fn p_index(&self, mode: usize) -> usize {
        2 * mode + 1
    }

    /// The symplectic form `Ω`.
    pub fn symplectic_form(&self) -> Mat {
        symplectic_form(self.n_modes)
    }

    /// Projector `Π` onto the x-quadratures.
    pub fn x_projector(&self) -> Mat {
        let mut pi = Mat::zeros(self.dim(), self.dim());
        for i in 0..self.n_modes {
            pi[(2 * i, 2 * i)] = 1.0;
        }
        pi
    }
}

pub fn symplectic_form(n_modes: usize) -> Mat {
    let mut omega = Mat::zeros(2 * n_modes, 2 * n_modes);
    for i in 0..n_modes {
        omega[(2 * i, 2 * i + 1)] = 1.0;
        omega[(2 * i + 1, 2 * i)] = -1.0;
    }
    omega
}

/// N×N block of x-quadrature entries of a 2N×2N matrix (p rows and columns dropped).
pub fn x_block(m: &Mat) -> Mat {
    let n = m.nrows() / 2;
    Mat::from_fn(n, n, |i, j| m[(2 * i, 2 * j)])
}

/// Displacement vector and covariance matrix of an N-mode Gaussian state.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianState {
    layout: QuadratureLayout,
    displacement: DVector<f64>,
    covariance: Mat,
}

impl GaussianState {
    pub fn vacuum(n_modes: usize) -> Result<Self> {
        let layout = QuadratureLayout::new(n_modes)?;
        Ok(Self {
            layout,
            displacement: DVector::zeros(layout.dim()),
            covariance: Mat::identity(layout.dim(), layout.dim()),
        })
    }

    /// Builds a state after checking dimensions, symmetry and positivity.
    pub fn new(displacement: DVector<f64>, covariance: Mat) -> Result<Self> {
        let dim = displacement.len();
        if dim == 0 || !dim.is_multiple_of(2) {
            return Err(Error::dim("GaussianState", "non-zero even length", dim));
        }
        if covariance.shape() != (dim, dim) {
            return Err(Error::dim(
                "GaussianState covariance",
                format!("{dim}x{dim}"),
                format!("{}x{}", covariance.nrows(), covariance.ncols()),
            ));
        }
        let asym = linalg::asymmetry(&covariance);
        if asym > SYMMETRY_TOL {
            return Err(Error::Numerical(format!("covariance asymmetric by {asym:e}")));
        }
        let min_eig = linalg::min_eigenvalue(&covariance);
        if min_eig < -PSD_TOL {
            return Err(Error::Numerical(format!(
                "covariance not positive semidefinite (min eigenvalue {min_eig:e})"
            )));
        }
        Ok(Self {
            layout: QuadratureLayout::new(dim / 2)?,
            displacement,
            covariance,
        })
    }

    pub fn layout(&self) -> QuadratureLayout {
        self.layout
    }

    pub fn displacement(&self) -> &DVector<f64> {
        &self.displacement
    }

    pub fn covariance(&self) -> &Mat {
        &self.covariance
    }

    /// Evolves the state under a symplectic matrix.
    pub fn evolve(&self, s: &SymplecticMatrix) -> Result<Self> {
        let (r, cov) = apply_symplectic(&self.displacement, &self.covariance, s)?;
        Ok(Self {
            layout: self.layout,
            displacement: r,
            covariance: cov,
        })
    }
}

/// Frequencies and pairwise couplings of one χ⁽²⁾ crystal.
///
/// `g` holds the beam-splitter couplings (`g a†ᵢ aⱼ + h.c.`) and `h` the
/// two-mode squeezing couplings (`i h a†ᵢ a†ⱼ + h.c.`); both are symmetric
/// with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct CrystalSpec {
    pub omegas: DVector<f64>,
    pub g: Mat,
    pub h: Mat,
    pub dt: f64,
}

impl CrystalSpec {
    pub fn n_modes(&self) -> usize {
        self.omegas.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.omegas.len();
        if n == 0 {
            return Err(Error::config("crystal.omegas", "at least one mode is required"));
        }
        for (name, m) in [("crystal.g", &self.g), ("crystal.h", &self.h)] {
            if m.shape() != (n, n) {
                return Err(Error::config(
                    name,
                    format!("expected {n}x{n} to match omegas, got {}x{}", m.nrows(), m.ncols()),
                ));
            }
            for i in 0..n {
                if m[(i, i)] != 0.0 {
                    return Err(Error::config(name, "diagonal must be zero"));
                }
                for j in (i + 1)..n {
                    if m[(i, j)] != m[(j, i)] {
                        return Err(Error::config(name, "matrix must be symmetric"));
                    }
                }
            }
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::config("crystal.dt", "interaction time must be finite and > 0"));
        }
        Ok(())
    }

    /// The propagator `exp(Ω H Δt)` of this crystal.
    pub fn propagator(&self) -> Result<SymplecticMatrix> {
        let h = build_hamiltonian_matrix(self)?;
        symplectic_from_hamiltonian(&h, self.dt)
    }
}

/// A 2N×2N matrix preserving the symplectic form.
#[derive(Debug, Clone, PartialEq)]
pub struct SymplecticMatrix(Mat);

impl SymplecticMatrix {
    /// Wraps `m` after checking `SᵀΩS = Ω` to [`SYMPLECTIC_TOL`].
    pub fn new(m: Mat) -> Result<Self> {
        let res = symplectic_residual(&m)?;
        if res > SYMPLECTIC_TOL {
            return Err(Error::Numerical(format!("matrix is not symplectic (residual {res:e})")));
        }
        Ok(Self(m))
    }

    pub(crate) fn new_unchecked(m: Mat) -> Self {
        Self(m)
    }

    pub fn identity(n_modes: usize) -> Self {
        Self(Mat::identity(2 * n_modes, 2 * n_modes))
    }

    pub fn matrix(&self) -> &Mat {
        &self.0
    }

    pub fn into_inner(self) -> Mat {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn residual(&self) -> f64 {
        symplectic_residual(&self.0).unwrap_or(f64::INFINITY)
    }

    pub fn compose(&self, other: &SymplecticMatrix) -> SymplecticMatrix {
        SymplecticMatrix(&self.0 * &other.0)
    }
}

/// `max |SᵀΩS − Ω|`.
pub fn symplectic_residual(m: &Mat) -> Result<f64> {
    if !m.is_square() || !m.nrows().is_multiple_of(2) {
        return Err(Error::dim(
            "symplectic_residual",
            "even square matrix",
            format!("{}x{}", m.nrows(), m.ncols()),
        ));
    }
    let omega = symplectic_form(m.nrows() / 2);
    Ok((m.transpose() * &omega * m - &omega).abs().max())
}

/// Quadratic-form matrix of the crystal Hamiltonian, `Ĥ = ½ r̂ᵀ H r̂` up to a constant.
///
/// Mode `i` contributes `ωᵢ I₂` on the diagonal; the `(i, j)` off-diagonal block is
/// `[[gᵢⱼ, hᵢⱼ], [hᵢⱼ, gᵢⱼ]]`.
pub fn build_hamiltonian_matrix(spec: &CrystalSpec) -> Result<Mat> {
    spec.validate()?;
    let n = spec.n_modes();
    let mut h = Mat::zeros(2 * n, 2 * n);
    for i in 0..n {
        h[(2 * i, 2 * i)] = spec.omegas[i];
        h[(2 * i + 1, 2 * i + 1)] = spec.omegas[i];
        for j in 0..n {
            if i == j {
                continue;
            }
            let (g, sq) = (spec.g[(i, j)], spec.h[(i, j)]);
            h[(2 * i, 2 * j)] = g;
            h[(2 * i + 1, 2 * j + 1)] = g;
            h[(2 * i, 2 * j + 1)] = sq;
            h[(2 * i + 1, 2 * j)] = sq;
        }
    }
    Ok(h)
}

/// `exp(Ω H dt)` for a symmetric Hamiltonian matrix.
pub fn symplectic_from_hamiltonian(h: &Mat, dt: f64) -> Result<SymplecticMatrix> {
    if !h.is_square() || !h.nrows().is_multiple_of(2) {
        return Err(Error::dim(
            "symplectic_from_hamiltonian",
            "even square matrix",
            format!("{}x{}", h.nrows(), h.ncols()),
        ));
    }
    let asym = linalg::asymmetry(h);
    if asym > SYMMETRY_TOL * h.abs().max().max(1.0) {
        return Err(Error::Input(format!("Hamiltonian matrix is not symmetric (by {asym:e})")));
    }
    let omega = symplectic_form(h.nrows() / 2);
    let gen = omega * h * dt;
    Ok(SymplecticMatrix(linalg::expm(&gen)?))
}

/// Beam splitter of reflectivity `r` acting on two N-mode pulses (4N×4N):
/// `[[√R I, √T I], [-√T I, √R I]]` with `T = 1 - R`.
pub fn beamsplitter_symplectic(reflectivity: f64, n_modes: usize) -> Result<SymplecticMatrix> {
    if !(reflectivity > 0.0 && reflectivity < 1.0) {
        return Err(Error::config(
            "reservoir.reflectivity",
            format!("must lie in the open interval (0, 1), got {reflectivity}"),
        ));
    }
    let d = 2 * n_modes;
    let sr = reflectivity.sqrt();
    let st = (1.0 - reflectivity).sqrt();
    let mut b = Mat::zeros(2 * d, 2 * d);
    for i in 0..d {
        b[(i, i)] = sr;
        b[(d + i, d + i)] = sr;
        b[(i, d + i)] = st;
        b[(d + i, i)] = -st;
    }
    Ok(SymplecticMatrix(b))
}

/// `(S r, S Γ Sᵀ)`.
pub fn apply_symplectic(
    r: &DVector<f64>,
    gamma: &Mat,
    s: &SymplecticMatrix,
) -> Result<(DVector<f64>, Mat)> {
    let d = s.dim();
    if r.len() != d || gamma.shape() != (d, d) {
        return Err(Error::dim(
            "apply_symplectic",
            format!("vector {d} and {d}x{d} covariance"),
            format!("vector {} and {}x{}", r.len(), gamma.nrows(), gamma.ncols()),
        ));
    }
    let sm = s.matrix();
    let cov = linalg::symmetrize(&(sm * gamma * sm.transpose()));
    Ok((sm * r, cov))
}

/// Homodyne gain kernel `K = (Π σ Π)^MP` for x-quadrature detection.
///
/// Computed from the pseudo-inverse of the N×N x-block and embedded back at
/// the x positions, which equals the pseudo-inverse of `Π σ Π`.
pub fn homodyne_kernel(sigma_b: &Mat) -> Result<Mat> {
    if !sigma_b.is_square() || !sigma_b.nrows().is_multiple_of(2) {
        return Err(Error::dim(
            "homodyne_kernel",
            "even square matrix",
            format!("{}x{}", sigma_b.nrows(), sigma_b.ncols()),
        ));
    }
    let n = sigma_b.nrows() / 2;
    let kx = linalg::moore_penrose(&x_block(sigma_b));
    let mut k = Mat::zeros(2 * n, 2 * n);
    for i in 0..n {
        for j in 0..n {
            k[(2 * i, 2 * j)] = kx[(i, j)];
        }
    }
    Ok(linalg::symmetrize(&k))
}

/// Conditional state of subsystem A after x-homodyne detection of subsystem B.
///
/// `innovation` is the measured outcome minus the prior mean of B, embedded in a
/// 2N vector with zeros at the p positions.
pub fn conditional_update(
    r_a: &DVector<f64>,
    sigma_a: &Mat,
    sigma_ab: &Mat,
    sigma_b: &Mat,
    innovation: &DVector<f64>,
) -> Result<(DVector<f64>, Mat)> {
    let da = r_a.len();
    let db = innovation.len();
    if sigma_a.shape() != (da, da) || sigma_ab.shape() != (da, db) || sigma_b.shape() != (db, db) {
        return Err(Error::dim(
            "conditional_update",
            format!("A:{da}x{da}, AB:{da}x{db}, B:{db}x{db}"),
            format!(
                "A:{}x{}, AB:{}x{}, B:{}x{}",
                sigma_a.nrows(),
                sigma_a.ncols(),
                sigma_ab.nrows(),
                sigma_ab.ncols(),
                sigma_b.nrows(),
                sigma_b.ncols()
            ),
        ));
    }
    for i in 0..db / 2 {
        if innovation[2 * i + 1] != 0.0 {
            return Err(Error::Input(
                "homodyne innovation must be zero at every p position".into(),
            ));
        }
    }
    let k = homodyne_kernel(sigma_b)?;
    let gain = sigma_ab * &k;
    let r_new = r_a + &gain * innovation;
    let sigma_new = linalg::symmetrize(&(sigma_a - &gain * sigma_ab.transpose()));
    let min_eig = linalg::min_eigenvalue(&sigma_new);
    if min_eig < -CONDITIONING_PSD_TOL {
        return Err(Error::Numerical(format!(
            "conditioned covariance lost positivity (min eigenvalue {min_eig:e})"
        )));
    }
    Ok((r_new, sigma_new))
}

/// Largest squeezing produced by `s`, in dB: `20 log₁₀ s_max` over its singular values.
pub fn max_squeezing_db(s: &SymplecticMatrix) -> f64 {
    let s_max = s
        .matrix()
        .singular_values()
        .iter()
        .cloned()
        .fold(0.0, f64::max);
    20.0 * s_max.log10()
}
