use crate::error::{Error, Result};
use crate::gaussian::x_block;
use crate::linalg::{self, Mat};

use super::{FeatureVector, LoopModel};

/// Infinite-ensemble state of the loop.
///
/// `accum` is `A⁽ᵏ⁾ = Σ_{d≥1} R^{d−1} S₁ᵈ σ_anc⁽ᵏ⁻ᵈ⁾ (S₁ᵈ)ᵀ`, so that the output
/// covariance at step k is `R S₂ σ_anc⁽ᵏ⁾ S₂ᵀ + T² S₂ A⁽ᵏ⁾ S₂ᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct IdealState {
    accum: Mat,
    step_index: usize,
}

impl IdealState {
    /// Fresh loop with no input history.
    pub fn new(n_modes: usize) -> Self {
        Self {
            accum: Mat::zeros(2 * n_modes, 2 * n_modes),
            step_index: 0,
        }
    }

    /// Loop whose reservoir pulse starts with covariance `sigma0`.
    ///
    /// The unconditional output is then exactly what the conditional ensemble
    /// converges to when started from `sigma0`.
    pub fn with_initial_reservoir(model: &LoopModel, sigma0: &Mat) -> Result<Self> {
        let d = 2 * model.n_modes();
        if sigma0.shape() != (d, d) {
            return Err(Error::dim(
                "IdealState::with_initial_reservoir",
                format!("{d}x{d}"),
                format!("{}x{}", sigma0.nrows(), sigma0.ncols()),
            ));
        }
        Ok(Self {
            accum: sigma0 / model.params().transmissivity(),
            step_index: 0,
        })
    }

    pub fn accum(&self) -> &Mat {
        &self.accum
    }

    pub fn step_index(&self) -> usize {
        self.step_index
    }

    /// Full 2N×2N output covariance for input `s` at the current step.
    pub fn output_covariance(&self, model: &LoopModel, sigma_anc: &Mat) -> Mat {
        let r = model.reflectivity();
        let t = 1.0 - r;
        let s2 = model.s2().matrix();
        let inner = sigma_anc * r + &self.accum * (t * t);
        linalg::symmetrize(&(s2 * inner * s2.transpose()))
    }

    /// Emits the features for input `s` and advances to the next step.
    pub fn step(&mut self, model: &LoopModel, s: f64) -> Result<FeatureVector> {
        Ok(FeatureVector::from_x_block(&self.step_x_block(model, s)?))
    }

    /// The x-block of the output covariance, advancing the state.
    pub fn step_x_block(&mut self, model: &LoopModel, s: f64) -> Result<Mat> {
        let sigma_anc = model.ancilla(s)?;
        let out = self.output_covariance(model, &sigma_anc);
        let s1 = model.s1().matrix();
        let next = &sigma_anc + &self.accum * model.reflectivity();
        self.accum = linalg::symmetrize(&(s1 * next * s1.transpose()));
        self.step_index += 1;
        Ok(x_block(&out))
    }
}

/// Scalar weight of the delay-`d` term: `R` at `d = 0`, else `T² R^{d−1}`.
pub fn gamma_prefactor(reflectivity: f64, d: usize) -> f64 {
    if d == 0 {
        reflectivity
    } else {
        let t = 1.0 - reflectivity;
        t * t * reflectivity.powi(d as i32 - 1)
    }
}

/// x-rows of `S₂ S₁ᵈ` for `d = 0..=d_max`, so each `γ_d` costs two small products.
#[derive(Debug, Clone)]
pub struct DelayPropagators {
    rows: Vec<Mat>,
    reflectivity: f64,
}

impl DelayPropagators {
    pub fn new(model: &LoopModel, d_max: usize) -> Self {
        let n = model.n_modes();
        let s1 = model.s1().matrix();
        let mut p = model.s2().matrix().clone();
        let mut rows = Vec::with_capacity(d_max + 1);
        for d in 0..=d_max {
            if d > 0 {
                p = &p * s1;
            }
            rows.push(Mat::from_fn(n, 2 * n, |i, j| p[(2 * i, j)]));
        }
        Self {
            rows,
            reflectivity: model.reflectivity(),
        }
    }

    pub fn d_max(&self) -> usize {
        self.rows.len() - 1
    }

    /// `γ_d` for the ancilla covariance injected `d` steps ago.
    pub fn gamma(&self, d: usize, sigma_anc: &Mat) -> Result<Mat> {
        let q = self.rows.get(d).ok_or_else(|| {
            Error::Input(format!("delay {d} beyond precomputed maximum {}", self.d_max()))
        })?;
        Ok(q * sigma_anc * q.transpose() * gamma_prefactor(self.reflectivity, d))
    }
}

/// Contribution `γ_d` of the input injected `d` steps before the last entry of `history`.
pub fn gamma_term(model: &LoopModel, d: usize, history: &[f64]) -> Result<Mat> {
    if d >= history.len() {
        return Err(Error::Input(format!(
            "delay {d} needs at least {} inputs, history has {}",
            d + 1,
            history.len()
        )));
    }
    let s = history[history.len() - 1 - d];
    let sigma = model.ancilla(s)?;
    let s1 = model.s1().matrix();
    let mut p = model.s2().matrix().clone();
    for _ in 0..d {
        p = &p * s1;
    }
    let full = &p * sigma * p.transpose();
    Ok(x_block(&full) * gamma_prefactor(model.reflectivity(), d))
}

#[cfg(test)]
mod tests {
    use super::super::tests::test_params;
    use super::super::{InputEncoding, ReservoirParams};
    use super::*;
    use approx::assert_relative_eq;

    fn model(n: usize, r: f64, seed: u64, enc: InputEncoding) -> LoopModel {
        LoopModel::new(test_params(n, r, seed), enc).unwrap()
    }

    fn vacuum_enc() -> InputEncoding {
        InputEncoding {
            squeeze_strength: 0.0,
            ..Default::default()
        }
    }

    #[test]
    fn first_step_is_single_term() {
        let m = model(3, 0.9, 1, vacuum_enc());
        let mut st = IdealState::new(3);
        let f = st.step(&m, 0.3).unwrap();
        let s2 = m.s2().matrix();
        let expect = FeatureVector::from_x_block(&x_block(&(s2 * s2.transpose() * 0.9)));
        assert!((f.0 - expect.0).abs().max() < 1e-12);
    }

    #[test]
    fn second_step_unrolled_by_hand() {
        let m = model(2, 0.8, 3, vacuum_enc());
        let mut st = IdealState::new(2);
        st.step(&m, 0.1).unwrap();
        let f = st.step(&m, 0.7).unwrap();
        let (s1, s2) = (m.s1().matrix(), m.s2().matrix());
        let expect = s2 * s2.transpose() * 0.8 + s2 * s1 * s1.transpose() * s2.transpose() * 0.04;
        let expect = FeatureVector::from_x_block(&x_block(&expect));
        assert!((f.0 - expect.0).abs().max() < 1e-12);
    }

    #[test]
    fn recursion_matches_truncated_gamma_sum() {
        let m = model(3, 0.75, 5, InputEncoding::default());
        let inputs = [0.1, 0.9, 0.35, 0.6, 0.0, 1.0, 0.42, 0.77, 0.2, 0.55, 0.8];
        let mut st = IdealState::new(3);
        for k in 0..inputs.len() {
            let out = st.step_x_block(&m, inputs[k]).unwrap();
            let mut sum = Mat::zeros(3, 3);
            for d in 0..=k {
                sum += gamma_term(&m, d, &inputs[..=k]).unwrap();
            }
            let scale = out.abs().max();
            assert!((out - sum).abs().max() <= 1e-10 * scale.max(1.0), "k={k}");
        }
    }

    #[test]
    fn recursion_matches_sum_through_washout() {
        let m = model(2, 0.25, 7, InputEncoding::default());
        let wash = super::super::washout_length(0.25).unwrap();
        let inputs: Vec<f64> = (0..=wash).map(|k| ((k * 37) % 101) as f64 / 100.0).collect();
        let props = DelayPropagators::new(&m, wash);
        let mut st = IdealState::new(2);
        let mut out = Mat::zeros(2, 2);
        for &s in &inputs {
            out = st.step_x_block(&m, s).unwrap();
        }
        let mut sum = Mat::zeros(2, 2);
        for d in 0..=wash {
            let s = inputs[inputs.len() - 1 - d];
            sum += props.gamma(d, &m.ancilla(s).unwrap()).unwrap();
        }
        let scale = sum.abs().max();
        assert!((out - sum).abs().max() <= 1e-10 * scale);
    }

    #[test]
    fn prefactor_arithmetic() {
        assert_relative_eq!(gamma_prefactor(0.9, 3), 0.0081, epsilon = 1e-15);
        assert_eq!(gamma_prefactor(0.9, 0), 0.9);
        assert_relative_eq!(gamma_prefactor(0.9, 1), 0.01, epsilon = 1e-15);
    }

    #[test]
    fn gamma_zero_free_detector() {
        let mut p: ReservoirParams = test_params(2, 0.6, 0);
        p.crystal_detector.g.fill(0.0);
        p.crystal_detector.h.fill(0.0);
        p.crystal_detector.omegas.fill(0.0);
        let m = LoopModel::new(p, vacuum_enc()).unwrap();
        let g0 = gamma_term(&m, 0, &[0.5]).unwrap();
        assert!((g0 - Mat::identity(2, 2) * 0.6).abs().max() < 1e-15);
        assert!(gamma_term(&m, 1, &[0.5]).is_err());
    }

    #[test]
    fn propagators_match_gamma_term() {
        let m = model(3, 0.9, 11, InputEncoding::default());
        let props = DelayPropagators::new(&m, 6);
        let hist = [0.2, 0.4, 0.6, 0.8, 1.0, 0.0, 0.5];
        for d in 0..=6 {
            let s = hist[hist.len() - 1 - d];
            let a = props.gamma(d, &m.ancilla(s).unwrap()).unwrap();
            let b = gamma_term(&m, d, &hist).unwrap();
            assert!((a - &b).abs().max() <= 1e-12 * b.abs().max());
        }
        assert!(props.gamma(7, &m.ancilla(0.0).unwrap()).is_err());
    }

    #[test]
    fn initial_reservoir_reproduces_unconditional_output() {
        // Vacuum reservoir pulse, first round trip: the detected arm carries
        // S₂(T σ_R + R σ_anc)S₂ᵀ.
        let m = model(2, 0.7, 2, InputEncoding::default());
        let st = IdealState::with_initial_reservoir(&m, &Mat::identity(4, 4)).unwrap();
        let anc = m.ancilla(0.3).unwrap();
        let s2 = m.s2().matrix();
        let expect = s2 * (Mat::identity(4, 4) * 0.3 + &anc * 0.7) * s2.transpose();
        assert!((st.output_covariance(&m, &anc) - expect).abs().max() < 1e-12);
    }
}
