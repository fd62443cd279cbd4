//! Ensemble simulation through pulse-summed second moments.
//!
//! Every pulse evolves by the same affine-Gaussian map, so the homodyne
//! estimator only ever sees the Gram matrix `Σ_m w_m w_mᵀ` of `w = (1, r)`.
//! Given that matrix, the cross terms with fresh noise `u` are Gaussian and the
//! part of `Σ u uᵀ` orthogonal to the pulses is Wishart. Sampling those two
//! pieces reproduces the joint law of the per-pulse simulation's estimates at a
//! cost independent of M.

use nalgebra::SymmetricEigen;
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::gaussian::{homodyne_kernel, x_block, CONDITIONING_PSD_TOL};
use crate::linalg::{self, Mat};

use super::{FeatureVector, LoopModel};

/// Relative eigenvalue cutoff when factorizing the pulse Gram matrix.
const GRAM_RANK_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct GramEnsemble {
    shared_cov: Mat,
    /// `(1 + 2N)²` Gram matrix of `(1, r)` summed over pulses.
    gram: Mat,
    m_pulses: usize,
    step_index: usize,
}

/// Summary of one round trip's outcomes.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeMoments {
    pub means: Vec<f64>,
    /// Population covariance (divisor M).
    pub covariance: Mat,
    pub step_index: usize,
}

impl OutcomeMoments {
    pub fn features(&self) -> FeatureVector {
        FeatureVector::from_x_block(&self.covariance)
    }
}

/// Wishart(I_n, dof) sample.
fn wishart<R: Rng + ?Sized>(n: usize, dof: usize, rng: &mut R) -> Result<Mat> {
    if dof < n {
        let y = Mat::from_fn(dof, n, |_, _| rng.sample(StandardNormal));
        return Ok(y.transpose() * y);
    }
    // Bartlett decomposition
    let mut a = Mat::zeros(n, n);
    for i in 0..n {
        let chi = ChiSquared::new((dof - i) as f64)
            .map_err(|e| Error::Numerical(format!("chi-square sampler: {e}")))?;
        a[(i, i)] = chi.sample(rng).sqrt();
        for j in 0..i {
            a[(i, j)] = rng.sample(StandardNormal);
        }
    }
    Ok(&a * a.transpose())
}

impl GramEnsemble {
    /// M pulses, all in vacuum.
    pub fn vacuum(n_modes: usize, m_pulses: usize) -> Result<Self> {
        if n_modes == 0 || m_pulses < 2 {
            return Err(Error::Input(format!(
                "ensemble needs N >= 1 and M >= 2, got N={n_modes}, M={m_pulses}"
            )));
        }
        let mut gram = Mat::zeros(1 + 2 * n_modes, 1 + 2 * n_modes);
        gram[(0, 0)] = m_pulses as f64;
        Ok(Self {
            shared_cov: Mat::identity(2 * n_modes, 2 * n_modes),
            gram,
            m_pulses,
            step_index: 0,
        })
    }

    /// M pulses with zero displacement and covariance `sigma`.
    pub fn with_covariance(sigma: Mat, m_pulses: usize) -> Result<Self> {
        if !sigma.nrows().is_multiple_of(2) || !sigma.is_square() {
            return Err(Error::dim("GramEnsemble::with_covariance", "even square matrix", sigma.nrows()));
        }
        let mut st = Self::vacuum(sigma.nrows() / 2, m_pulses)?;
        st.shared_cov = sigma;
        Ok(st)
    }

    pub fn shared_cov(&self) -> &Mat {
        &self.shared_cov
    }

    pub fn gram(&self) -> &Mat {
        &self.gram
    }

    pub fn m_pulses(&self) -> usize {
        self.m_pulses
    }

    pub fn step_index(&self) -> usize {
        self.step_index
    }

    pub fn round_trip<R: Rng + ?Sized>(
        &mut self,
        model: &LoopModel,
        s: f64,
        rng: &mut R,
    ) -> Result<OutcomeMoments> {
        let n = model.n_modes();
        let d = 2 * n;
        if self.shared_cov.nrows() != d {
            return Err(Error::dim("GramEnsemble::round_trip", format!("{d} quadratures"), self.shared_cov.nrows()));
        }
        let sp = model.s_prime().matrix();
        let anc = model.ancilla(s)?;
        let g = sp * linalg::block_diag(&self.shared_cov, &anc) * sp.transpose();
        let sigma_fiber = g.view((0, 0), (d, d)).into_owned();
        let sigma_corr = g.view((0, d), (d, d)).into_owned();
        let sigma_hd = g.view((d, d), (d, d)).into_owned();
        let chol = linalg::matrix_sqrt_psd(&x_block(&sigma_hd))?;
        let kernel = homodyne_kernel(&sigma_hd)?;
        let gain_full = &sigma_corr * kernel;
        let gain = Mat::from_fn(d, n, |i, j| gain_full[(i, 2 * j)]);
        let corr_x = Mat::from_fn(d, n, |i, j| sigma_corr[(i, 2 * j)]);

        // z = (1, r, u): Gram of z from the Gram of (1, r) and fresh noise
        let p = 1 + d;
        let eig = SymmetricEigen::new(self.gram.clone());
        let top = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
        let keep: Vec<usize> = (0..p)
            .filter(|&i| eig.eigenvalues[i] > GRAM_RANK_TOL * top)
            .collect();
        let rank = keep.len();
        let t = Mat::from_fn(rank, p, |a, b| {
            let i = keep[a];
            eig.eigenvalues[i].sqrt() * eig.eigenvectors[(b, i)]
        });
        let z = Mat::from_fn(rank, n, |_, _| rng.sample(StandardNormal));
        let cross = t.transpose() * &z;
        let dof = self.m_pulses.checked_sub(rank).ok_or_else(|| {
            Error::Numerical(format!("pulse Gram rank {rank} exceeds M = {}", self.m_pulses))
        })?;
        let uu = z.transpose() * &z + wishart(n, dof, rng)?;

        let q = p + n;
        let mut gz = Mat::zeros(q, q);
        gz.view_mut((0, 0), (p, p)).copy_from(&self.gram);
        gz.view_mut((0, p), (p, n)).copy_from(&cross);
        gz.view_mut((p, 0), (n, p)).copy_from(&cross.transpose());
        gz.view_mut((p, p), (n, n)).copy_from(&uu);

        // outcomes y = (1, Q_x r + L u), next pulses w' = (1, F r + gain L u)
        let mut py = Mat::zeros(1 + n, q);
        py[(0, 0)] = 1.0;
        for i in 0..n {
            for j in 0..d {
                py[(1 + i, 1 + j)] = sp[(d + 2 * i, j)];
            }
        }
        py.view_mut((1, p), (n, n)).copy_from(&chol);
        let mut pw = Mat::zeros(p, q);
        pw[(0, 0)] = 1.0;
        pw.view_mut((1, 1), (d, d)).copy_from(&sp.view((0, 0), (d, d)));
        pw.view_mut((1, p), (d, n)).copy_from(&(&gain * &chol));

        let gy = &py * &gz * py.transpose();
        let m = self.m_pulses as f64;
        let means: Vec<f64> = (0..n).map(|i| gy[(1 + i, 0)] / m).collect();
        let covariance = Mat::from_fn(n, n, |i, j| gy[(1 + i, 1 + j)] / m - means[i] * means[j]);

        let conditioned = linalg::symmetrize(&(sigma_fiber - &gain * corr_x.transpose()));
        let min_eig = linalg::min_eigenvalue(&conditioned);
        if min_eig < -CONDITIONING_PSD_TOL {
            return Err(Error::Numerical(format!(
                "reservoir covariance lost positivity at step {} (min eigenvalue {min_eig:e})",
                self.step_index
            )));
        }
        self.shared_cov = conditioned;
        self.gram = linalg::symmetrize(&(&pw * gz * pw.transpose()));
        let out = OutcomeMoments {
            means,
            covariance: linalg::symmetrize(&covariance),
            step_index: self.step_index,
        };
        self.step_index += 1;
        Ok(out)
    }
}
