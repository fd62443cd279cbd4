//! One realization of the loop: crystals and inputs from a seed, then a
//! stepper that produces the x-block output covariance at every step.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::readout::FeatureSeries;
use crate::reservoir::{
    draw_admissible_crystal, estimate_covariance, random_squeezed_covariance, CouplingDistribution,
    EnsembleState, FeatureVector, GramEnsemble, IdealState, InputEncoding, LoopModel,
    ReservoirParams,
};
use crate::seed::{self, Stream};

/// How the finite ensemble is simulated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    /// Every pulse tracked individually.
    #[default]
    Pulses,
    /// Pulse-summed second moments; cost independent of M.
    Gram,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InitialState {
    #[default]
    Vacuum,
    /// Random pure squeezed vacuum, strength below 1.
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimMode {
    Ideal,
    Ensemble { m_pulses: usize, engine: Engine },
}

impl SimMode {
    pub fn m_pulses(&self) -> Option<usize> {
        match self {
            SimMode::Ideal => None,
            SimMode::Ensemble { m_pulses, .. } => Some(*m_pulses),
        }
    }
}

/// Everything needed to draw one reservoir besides the seed.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub n_modes: usize,
    pub reflectivity: f64,
    pub dt: f64,
    pub coupling: CouplingDistribution,
    pub squeeze_db_limit: f64,
    pub enforce_squeeze_limit: bool,
    pub encoding: InputEncoding,
    pub initial: InitialState,
}

impl ModelSpec {
    pub fn new(n_modes: usize, reflectivity: f64) -> Self {
        Self {
            n_modes,
            reflectivity,
            dt: 1.0,
            coupling: CouplingDistribution::default(),
            squeeze_db_limit: crate::reservoir::DEFAULT_SQUEEZE_DB_LIMIT,
            enforce_squeeze_limit: true,
            encoding: InputEncoding::default(),
            initial: InitialState::Vacuum,
        }
    }

    fn limit(&self) -> Option<f64> {
        self.enforce_squeeze_limit.then_some(self.squeeze_db_limit)
    }

    /// Draws both crystals from the crystal stream of `seed`.
    pub fn draw(&self, seed: u64) -> Result<LoopModel> {
        let mut rng = seed::rng(seed, Stream::Crystals);
        let (c1, _) = draw_admissible_crystal(&mut rng, self.n_modes, &self.coupling, self.dt, self.limit())?;
        let (c2, _) = draw_admissible_crystal(&mut rng, self.n_modes, &self.coupling, self.dt, self.limit())?;
        let params = ReservoirParams {
            n_modes: self.n_modes,
            reflectivity: self.reflectivity,
            m_pulses: 0,
            crystal_fiber: c1,
            crystal_detector: c2,
            squeeze_db_limit: self.squeeze_db_limit,
            enforce_squeeze_limit: self.enforce_squeeze_limit,
        };
        LoopModel::new(params, self.encoding)
    }

    /// `len` i.i.d. uniform inputs from the input stream of `seed`.
    pub fn draw_inputs(&self, seed: u64, len: usize) -> Vec<f64> {
        let mut rng = seed::rng(seed, Stream::Inputs);
        (0..len).map(|_| self.encoding.sample(&mut rng)).collect()
    }

    pub fn initial_covariance(&self, seed: u64) -> Result<Mat> {
        match self.initial {
            InitialState::Vacuum => Ok(Mat::identity(2 * self.n_modes, 2 * self.n_modes)),
            InitialState::Random => {
                let mut rng = seed::rng(seed, Stream::Initial);
                random_squeezed_covariance(self.n_modes, 1.0, &mut rng)
            }
        }
    }
}

/// A running loop of any kind.
#[derive(Debug, Clone)]
pub enum Stepper {
    Ideal(IdealState),
    Pulses(EnsembleState, ChaCha8Rng),
    Gram(GramEnsemble, ChaCha8Rng),
}

impl Stepper {
    /// Starts the loop from the reservoir covariance `sigma0`; ensemble noise
    /// comes from the noise stream of `seed`.
    pub fn new(model: &LoopModel, mode: SimMode, sigma0: &Mat, seed: u64) -> Result<Self> {
        let rng = seed::rng(seed, Stream::Noise);
        Ok(match mode {
            SimMode::Ideal => Stepper::Ideal(IdealState::with_initial_reservoir(model, sigma0)?),
            SimMode::Ensemble { m_pulses, engine: Engine::Pulses } => {
                Stepper::Pulses(EnsembleState::with_covariance(sigma0.clone(), m_pulses)?, rng)
            }
            SimMode::Ensemble { m_pulses, engine: Engine::Gram } => {
                Stepper::Gram(GramEnsemble::with_covariance(sigma0.clone(), m_pulses)?, rng)
            }
        })
    }

    /// N×N x-block output covariance (exact or estimated) for input `s`.
    pub fn step(&mut self, model: &LoopModel, s: f64) -> Result<Mat> {
        match self {
            Stepper::Ideal(st) => st.step_x_block(model, s),
            Stepper::Pulses(st, rng) => {
                let batch = st.mc_round_trip(model, s, rng)?;
                Ok(x_block_from_features(&estimate_covariance(&batch)?, model.n_modes()))
            }
            Stepper::Gram(st, rng) => Ok(st.round_trip(model, s, rng)?.covariance),
        }
    }
}

fn x_block_from_features(f: &FeatureVector, n: usize) -> Mat {
    let mut m = Mat::zeros(n, n);
    let mut k = 0;
    for i in 0..n {
        for j in i..n {
            m[(i, j)] = f.0[k];
            m[(j, i)] = f.0[k];
            k += 1;
        }
    }
    m
}

/// Drives the loop through `inputs` and collects one feature row per step.
pub fn simulate_features(
    model: &LoopModel,
    inputs: &[f64],
    mode: SimMode,
    sigma0: &Mat,
    seed: u64,
) -> Result<FeatureSeries> {
    if inputs.is_empty() {
        return Err(Error::Input("no inputs to simulate".into()));
    }
    let mut stepper = Stepper::new(model, mode, sigma0, seed)?;
    let n = model.n_modes();
    let nf = n * (n + 1) / 2;
    let mut out = Mat::zeros(inputs.len(), nf);
    for (k, &s) in inputs.iter().enumerate() {
        let x = stepper.step(model, s)?;
        let f = FeatureVector::from_x_block(&x);
        out.row_mut(k).copy_from(&f.0.transpose());
    }
    Ok(FeatureSeries::from_matrix(out))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn features_roundtrip_through_x_block() {
        let x = Mat::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 5.0, 3.0, 5.0, 6.0]);
        assert_eq!(x_block_from_features(&FeatureVector::from_x_block(&x), 3), x);
    }

    #[test]
    fn draws_are_seed_deterministic_and_stream_separated() {
        let spec = ModelSpec::new(3, 0.9);
        let a = spec.draw(11).unwrap();
        let b = spec.draw(11).unwrap();
        assert_eq!(a.s1(), b.s1());
        assert_ne!(spec.draw(12).unwrap().s1(), a.s1());
        // changing R does not change the crystals
        let c = ModelSpec::new(3, 0.5).draw(11).unwrap();
        assert_eq!(c.s1(), a.s1());
        assert_eq!(spec.draw_inputs(11, 5), ModelSpec::new(3, 0.5).draw_inputs(11, 5));
    }

    #[test]
    fn ideal_and_ensembles_agree_on_average() {
        let spec = ModelSpec::new(2, 0.8);
        let model = spec.draw(1).unwrap();
        let inputs = spec.draw_inputs(1, 40);
        let sigma0 = spec.initial_covariance(1).unwrap();
        let ideal = simulate_features(&model, &inputs, SimMode::Ideal, &sigma0, 1).unwrap();
        for engine in [Engine::Pulses, Engine::Gram] {
            let mode = SimMode::Ensemble { m_pulses: 40_000, engine };
            let est = simulate_features(&model, &inputs, mode, &sigma0, 1).unwrap();
            let scale = ideal.matrix().abs().max();
            let dev = (est.matrix() - ideal.matrix()).abs().max() / scale;
            assert!(dev < 0.05, "{engine:?}: {dev}");
        }
    }

    #[test]
    fn random_initial_state_differs_from_vacuum() {
        let mut spec = ModelSpec::new(2, 0.8);
        spec.initial = InitialState::Random;
        let sigma = spec.initial_covariance(4).unwrap();
        assert_ne!(sigma, Mat::identity(4, 4));
        assert_eq!(sigma, spec.initial_covariance(4).unwrap());
    }
}
