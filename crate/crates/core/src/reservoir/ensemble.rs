use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::gaussian::{homodyne_kernel, x_block, CONDITIONING_PSD_TOL};
use crate::linalg::{self, Mat};

use super::{FeatureVector, LoopModel};

/// M reservoir pulses circulating the loop.
///
/// Conditioning on homodyne outcomes changes each pulse's displacement but
/// not its covariance, so the covariance is stored once.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleState {
    shared_cov: Mat,
    /// 2N × M, one column per pulse.
    displacements: Mat,
    step_index: usize,
}

/// x-quadrature homodyne outcomes of one round trip, one row per pulse.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeBatch {
    pub outcomes: Mat,
    pub step_index: usize,
}

impl OutcomeBatch {
    pub fn m_pulses(&self) -> usize {
        self.outcomes.nrows()
    }

    pub fn n_modes(&self) -> usize {
        self.outcomes.ncols()
    }

    /// Per-mode sample mean.
    pub fn means(&self) -> Vec<f64> {
        let m = self.outcomes.nrows() as f64;
        self.outcomes.column_iter().map(|c| c.sum() / m).collect()
    }
}

impl EnsembleState {
    /// All pulses in vacuum.
    pub fn vacuum(n_modes: usize, m_pulses: usize) -> Result<Self> {
        if n_modes == 0 || m_pulses == 0 {
            return Err(Error::Input(format!(
                "ensemble needs N >= 1 and M >= 1, got N={n_modes}, M={m_pulses}"
            )));
        }
        Ok(Self {
            shared_cov: Mat::identity(2 * n_modes, 2 * n_modes),
            displacements: Mat::zeros(2 * n_modes, m_pulses),
            step_index: 0,
        })
    }

    /// All pulses with zero displacement and covariance `sigma`.
    pub fn with_covariance(sigma: Mat, m_pulses: usize) -> Result<Self> {
        if !sigma.nrows().is_multiple_of(2) || !sigma.is_square() {
            return Err(Error::dim("EnsembleState::with_covariance", "even square matrix", sigma.nrows()));
        }
        let mut st = Self::vacuum(sigma.nrows() / 2, m_pulses)?;
        st.shared_cov = sigma;
        Ok(st)
    }

    pub fn shared_cov(&self) -> &Mat {
        &self.shared_cov
    }

    pub fn displacements(&self) -> &Mat {
        &self.displacements
    }

    pub fn m_pulses(&self) -> usize {
        self.displacements.ncols()
    }

    pub fn step_index(&self) -> usize {
        self.step_index
    }

    /// One round trip for every pulse: interfere with a fresh ancilla carrying `s`,
    /// pass the crystals, measure x on the detected arm and condition the
    /// reservoir pulse on the outcome.
    pub fn mc_round_trip<R: Rng + ?Sized>(
        &mut self,
        model: &LoopModel,
        s: f64,
        rng: &mut R,
    ) -> Result<OutcomeBatch> {
        let n = model.n_modes();
        let d = 2 * n;
        if self.shared_cov.nrows() != d {
            return Err(Error::dim("mc_round_trip", format!("{d} quadratures"), self.shared_cov.nrows()));
        }
        let m = self.m_pulses();
        let sp = model.s_prime().matrix();

        // unconditional covariances after the beam splitter and crystals
        let anc = model.ancilla(s)?;
        let gamma0 = linalg::block_diag(&self.shared_cov, &anc);
        let g = sp * gamma0 * sp.transpose();
        let sigma_fiber = g.view((0, 0), (d, d)).into_owned();
        let sigma_corr = g.view((0, d), (d, d)).into_owned();
        let sigma_hd = g.view((d, d), (d, d)).into_owned();

        // displacements: the ancilla enters undisplaced, so only the reservoir columns act
        let r_fiber = sp.view((0, 0), (d, d)) * &self.displacements;
        let q_x = Mat::from_fn(n, d, |i, j| sp[(d + 2 * i, j)]);
        let r_hd_x = q_x * &self.displacements;

        let sigma_hd_x = x_block(&sigma_hd);
        let chol = linalg::matrix_sqrt_psd(&sigma_hd_x)?;
        let noise: Vec<f64> = (0..n * m).map(|_| rng.sample(StandardNormal)).collect();
        let innovation = chol * Mat::from_vec(n, m, noise);
        let outcomes = &r_hd_x + &innovation;

        let kernel = homodyne_kernel(&sigma_hd)?;
        let gain_full = &sigma_corr * kernel;
        let gain = Mat::from_fn(d, n, |i, j| gain_full[(i, 2 * j)]);
        let corr_x = Mat::from_fn(d, n, |i, j| sigma_corr[(i, 2 * j)]);

        self.displacements = r_fiber + &gain * innovation;
        let conditioned = linalg::symmetrize(&(sigma_fiber - &gain * corr_x.transpose()));
        let min_eig = linalg::min_eigenvalue(&conditioned);
        if min_eig < -CONDITIONING_PSD_TOL {
            return Err(Error::Numerical(format!(
                "reservoir covariance lost positivity at step {} (min eigenvalue {min_eig:e})",
                self.step_index
            )));
        }
        self.shared_cov = conditioned;
        let batch = OutcomeBatch {
            outcomes: outcomes.transpose(),
            step_index: self.step_index,
        };
        self.step_index += 1;
        Ok(batch)
    }
}

/// Sample covariance of the outcomes (divisor M), upper triangle row-major.
pub fn estimate_covariance(batch: &OutcomeBatch) -> Result<FeatureVector> {
    let m = batch.m_pulses();
    if m < 2 {
        return Err(Error::Input(format!("covariance estimate needs M >= 2, got {m}")));
    }
    let means = batch.means();
    let mut centered = batch.outcomes.clone();
    for (j, mut col) in centered.column_iter_mut().enumerate() {
        col.add_scalar_mut(-means[j]);
    }
    let cov = centered.transpose() * &centered / m as f64;
    Ok(FeatureVector::from_x_block(&cov))
}
