//! The pulse-loop reservoir: squeezed-vacuum input encoding, random crystals,
//! the beam-splitter round trip and the two ways of stepping it (exact ideal
//! covariance recursion and the finite-M conditional ensemble).

mod ensemble;
mod gram;
mod ideal;

pub use ensemble::{estimate_covariance, EnsembleState, OutcomeBatch};
pub use gram::{GramEnsemble, OutcomeMoments};
pub use ideal::{gamma_prefactor, gamma_term, DelayPropagators, IdealState};

use nalgebra::DVector;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{
    self, beamsplitter_symplectic, build_hamiltonian_matrix, max_squeezing_db, CrystalSpec,
    SymplecticMatrix,
};
use crate::linalg::{self, Mat};

/// Default bound on the squeezing any element of the loop may produce.
pub const DEFAULT_SQUEEZE_DB_LIMIT: f64 = 15.0;

/// Physical parameters of one reservoir instance.
#[derive(Debug, Clone, PartialEq)]
pub struct ReservoirParams {
    pub n_modes: usize,
    pub reflectivity: f64,
    /// Ensemble size; only read by the finite-M path.
    pub m_pulses: usize,
    /// Crystal inside the loop (S₁).
    pub crystal_fiber: CrystalSpec,
    /// Crystal in front of the detector (S₂).
    pub crystal_detector: CrystalSpec,
    pub squeeze_db_limit: f64,
    pub enforce_squeeze_limit: bool,
}

impl ReservoirParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_modes == 0 {
            return Err(Error::config("reservoir.n_modes", "must be >= 1"));
        }
        check_reflectivity(self.reflectivity)?;
        self.crystal_fiber.validate()?;
        self.crystal_detector.validate()?;
        for (key, c) in [
            ("reservoir.crystal_fiber", &self.crystal_fiber),
            ("reservoir.crystal_detector", &self.crystal_detector),
        ] {
            if c.n_modes() != self.n_modes {
                return Err(Error::config(
                    key,
                    format!("crystal has {} modes, reservoir has {}", c.n_modes(), self.n_modes),
                ));
            }
        }
        Ok(())
    }

    pub fn transmissivity(&self) -> f64 {
        1.0 - self.reflectivity
    }
}

fn check_reflectivity(r: f64) -> Result<()> {
    if r > 0.0 && r < 1.0 {
        Ok(())
    } else {
        Err(Error::config(
            "reservoir.reflectivity",
            format!("must lie in the open interval (0, 1), got {r}"),
        ))
    }
}

/// How a scalar input is written into the squeezing angle of the ancilla pulse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InputEncoding {
    pub squeeze_strength: f64,
    pub angle_scale: f64,
    pub domain: (f64, f64),
}

impl Default for InputEncoding {
    fn default() -> Self {
        Self {
            squeeze_strength: 1.0,
            angle_scale: 3.0 * std::f64::consts::FRAC_PI_4,
            domain: (0.0, 1.0),
        }
    }
}

impl InputEncoding {
    pub fn validate(&self, squeeze_db_limit: Option<f64>) -> Result<()> {
        if !(self.squeeze_strength >= 0.0 && self.squeeze_strength.is_finite()) {
            return Err(Error::config("encoding.squeeze_strength", "must be finite and >= 0"));
        }
        if !self.angle_scale.is_finite() {
            return Err(Error::config("encoding.angle_scale", "must be finite"));
        }
        let (lo, hi) = self.domain;
        if !(lo < hi && lo.is_finite() && hi.is_finite()) {
            return Err(Error::config("encoding.domain", "needs finite lo < hi"));
        }
        if let Some(limit) = squeeze_db_limit {
            let db = 20.0 * self.squeeze_strength.exp().log10();
            if db > limit {
                return Err(Error::config(
                    "encoding.squeeze_strength",
                    format!("{db:.3} dB exceeds the {limit} dB limit"),
                ));
            }
        }
        Ok(())
    }

    pub fn contains(&self, s: f64) -> bool {
        s >= self.domain.0 && s <= self.domain.1
    }

    /// Draws an input uniformly from the domain.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        self.domain.0 + (self.domain.1 - self.domain.0) * u
    }
}

/// Covariance `⊕ᵢ σ_sq(s)` of the N-mode ancilla pulse carrying input `s`.
pub fn encode_input(s: f64, enc: &InputEncoding, n_modes: usize) -> Result<Mat> {
    if !enc.contains(s) {
        return Err(Error::Input(format!(
            "input {s} outside domain [{}, {}]",
            enc.domain.0, enc.domain.1
        )));
    }
    let [cp, cm, z] = squeezed_block(s, enc);
    let mut m = Mat::zeros(2 * n_modes, 2 * n_modes);
    for i in 0..n_modes {
        m[(2 * i, 2 * i)] = cp;
        m[(2 * i + 1, 2 * i + 1)] = cm;
        m[(2 * i, 2 * i + 1)] = z;
        m[(2 * i + 1, 2 * i)] = z;
    }
    Ok(m)
}

/// `[c₊, c₋, z]` of the single-mode squeezed block.
fn squeezed_block(s: f64, enc: &InputEncoding) -> [f64; 3] {
    let phi = enc.angle_scale * s;
    let (ch, sh) = ((2.0 * enc.squeeze_strength).cosh(), (2.0 * enc.squeeze_strength).sinh());
    [ch + phi.cos() * sh, ch - phi.cos() * sh, phi.sin() * sh]
}

/// Pure squeezed vacuum with an independent random angle and a strength in
/// `[0, max_strength)` on every mode.
pub fn random_squeezed_covariance<R: Rng + ?Sized>(
    n_modes: usize,
    max_strength: f64,
    rng: &mut R,
) -> Result<Mat> {
    let mut sigma = Mat::identity(2 * n_modes, 2 * n_modes);
    for i in 0..n_modes {
        let enc = InputEncoding {
            squeeze_strength: max_strength * rng.random::<f64>(),
            angle_scale: std::f64::consts::PI,
            domain: (0.0, 2.0),
        };
        let block = encode_input(2.0 * rng.random::<f64>(), &enc, 1)?;
        sigma.view_mut((2 * i, 2 * i), (2, 2)).copy_from(&block);
    }
    Ok(sigma)
}

/// Uniform coupling distribution for random crystals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CouplingDistribution {
    pub mean_g: f64,
    pub spread_g: f64,
    pub mean_h: f64,
    pub spread_h: f64,
}

impl Default for CouplingDistribution {
    fn default() -> Self {
        Self {
            mean_g: 0.2,
            spread_g: 0.1,
            mean_h: 0.3,
            spread_h: 0.1,
        }
    }
}

fn uniform_around<R: Rng + ?Sized>(rng: &mut R, mean: f64, spread: f64) -> f64 {
    if spread == 0.0 {
        return mean;
    }
    let u: f64 = rng.random();
    mean + spread * (2.0 * u - 1.0)
}

/// Random crystal with unit frequencies and uniformly drawn couplings.
///
/// For every pair `i < j` (row-major) `g_ij` is drawn first, then `h_ij`.
pub fn draw_crystal<R: Rng + ?Sized>(
    rng: &mut R,
    n_modes: usize,
    dist: &CouplingDistribution,
    dt: f64,
) -> Result<CrystalSpec> {
    if dist.spread_g < 0.0 || dist.spread_h < 0.0 {
        return Err(Error::config("crystal.spread", "spreads must be >= 0"));
    }
    let mut g = Mat::zeros(n_modes, n_modes);
    let mut h = Mat::zeros(n_modes, n_modes);
    for i in 0..n_modes {
        for j in (i + 1)..n_modes {
            let gij = uniform_around(rng, dist.mean_g, dist.spread_g);
            let hij = uniform_around(rng, dist.mean_h, dist.spread_h);
            g[(i, j)] = gij;
            g[(j, i)] = gij;
            h[(i, j)] = hij;
            h[(j, i)] = hij;
        }
    }
    let spec = CrystalSpec {
        omegas: DVector::from_element(n_modes, 1.0),
        g,
        h,
        dt,
    };
    spec.validate()?;
    Ok(spec)
}

/// Why a drawn crystal was turned down.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CrystalRejection {
    /// The Hamiltonian is not bounded below, so `exp(ΩHΔt)` can have eigenvalues off the unit circle.
    NotPositive,
    /// The propagator squeezes beyond the configured limit (dB).
    TooMuchSqueezing(f64),
}

/// Checks one crystal. Returns its propagator when accepted.
pub fn check_crystal(
    spec: &CrystalSpec,
    squeeze_db_limit: Option<f64>,
) -> Result<std::result::Result<SymplecticMatrix, CrystalRejection>> {
    let h = build_hamiltonian_matrix(spec)?;
    if linalg::min_eigenvalue(&h) <= 0.0 {
        return Ok(Err(CrystalRejection::NotPositive));
    }
    let s = gaussian::symplectic_from_hamiltonian(&h, spec.dt)?;
    if let Some(limit) = squeeze_db_limit {
        let db = max_squeezing_db(&s);
        if db > limit {
            return Ok(Err(CrystalRejection::TooMuchSqueezing(db)));
        }
    }
    Ok(Ok(s))
}

pub const MAX_CRYSTAL_ATTEMPTS: usize = 10_000;

/// Draws crystals until one has a positive-definite Hamiltonian and, if a limit
/// is given, squeezes no more than `squeeze_db_limit`. Returns the spec and the
/// number of rejected draws.
pub fn draw_admissible_crystal<R: Rng + ?Sized>(
    rng: &mut R,
    n_modes: usize,
    dist: &CouplingDistribution,
    dt: f64,
    squeeze_db_limit: Option<f64>,
) -> Result<(CrystalSpec, usize)> {
    for attempt in 0..MAX_CRYSTAL_ATTEMPTS {
        let spec = draw_crystal(rng, n_modes, dist, dt)?;
        if check_crystal(&spec, squeeze_db_limit)?.is_ok() {
            return Ok((spec, attempt));
        }
    }
    Err(Error::Numerical(format!(
        "no admissible {n_modes}-mode crystal in {MAX_CRYSTAL_ATTEMPTS} draws"
    )))
}

/// `S′ = blockdiag(S₁, S₂) · B_R`, the 4N×4N map of one round trip acting on
/// (reservoir pulse, ancilla pulse) and producing (fiber pulse, detected pulse).
pub fn round_trip_symplectic(params: &ReservoirParams) -> Result<SymplecticMatrix> {
    params.validate()?;
    let s1 = params.crystal_fiber.propagator()?;
    let s2 = params.crystal_detector.propagator()?;
    round_trip_from(&s1, &s2, params.reflectivity)
}

fn round_trip_from(s1: &SymplecticMatrix, s2: &SymplecticMatrix, r: f64) -> Result<SymplecticMatrix> {
    let n = s1.dim() / 2;
    let b = beamsplitter_symplectic(r, n)?;
    let crystals = linalg::block_diag(s1.matrix(), s2.matrix());
    Ok(SymplecticMatrix::new_unchecked(crystals * b.matrix()))
}

/// Smallest `L` with `R^L < 1e-16`.
pub fn washout_length(reflectivity: f64) -> Result<usize> {
    if !(reflectivity > 0.0 && reflectivity < 1.0) {
        return Err(Error::Input(format!(
            "washout needs reflectivity in (0, 1), got {reflectivity}"
        )));
    }
    let mut l = (16.0 / -reflectivity.log10()).floor() as usize + 1;
    while l > 1 && (l as f64 - 1.0) * reflectivity.log10() < -16.0 {
        l -= 1;
    }
    while l as f64 * reflectivity.log10() >= -16.0 {
        l += 1;
    }
    Ok(l)
}

/// Spectral radius of `√R · S₁`, the linear map that carries reservoir
/// displacements from one round trip to the next.
pub fn verify_echo_state(params: &ReservoirParams) -> Result<f64> {
    params.validate()?;
    let s1 = params.crystal_fiber.propagator()?;
    Ok(linalg::spectral_radius(&(s1.matrix() * params.reflectivity.sqrt())))
}

/// Upper triangle (row-major, diagonal included) of an N×N x-block covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(pub DVector<f64>);

impl FeatureVector {
    pub fn from_x_block(x: &Mat) -> Self {
        let n = x.nrows();
        let mut v = Vec::with_capacity(n * (n + 1) / 2);
        for i in 0..n {
            for j in i..n {
                v.push(x[(i, j)]);
            }
        }
        Self(DVector::from_vec(v))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }
}

/// Number of readout features for N modes.
pub fn n_features(n_modes: usize) -> usize {
    n_modes * (n_modes + 1) / 2
}

/// A validated reservoir with its propagators cached.
#[derive(Debug, Clone)]
pub struct LoopModel {
    params: ReservoirParams,
    encoding: InputEncoding,
    s1: SymplecticMatrix,
    s2: SymplecticMatrix,
    s_prime: SymplecticMatrix,
}

impl LoopModel {
    pub fn new(params: ReservoirParams, encoding: InputEncoding) -> Result<Self> {
        params.validate()?;
        let limit = params.enforce_squeeze_limit.then_some(params.squeeze_db_limit);
        encoding.validate(limit)?;
        let s1 = params.crystal_fiber.propagator()?;
        let s2 = params.crystal_detector.propagator()?;
        if let Some(limit) = limit {
            for (key, s) in [("crystal_fiber", &s1), ("crystal_detector", &s2)] {
                let db = max_squeezing_db(s);
                if db > limit {
                    return Err(Error::config(
                        format!("reservoir.{key}"),
                        format!("squeezes {db:.3} dB, above the {limit} dB limit"),
                    ));
                }
            }
        }
        let s_prime = round_trip_from(&s1, &s2, params.reflectivity)?;
        Ok(Self {
            params,
            encoding,
            s1,
            s2,
            s_prime,
        })
    }

    pub fn params(&self) -> &ReservoirParams {
        &self.params
    }

    pub fn encoding(&self) -> &InputEncoding {
        &self.encoding
    }

    pub fn n_modes(&self) -> usize {
        self.params.n_modes
    }

    pub fn reflectivity(&self) -> f64 {
        self.params.reflectivity
    }

    pub fn s1(&self) -> &SymplecticMatrix {
        &self.s1
    }

    pub fn s2(&self) -> &SymplecticMatrix {
        &self.s2
    }

    pub fn s_prime(&self) -> &SymplecticMatrix {
        &self.s_prime
    }

    pub fn ancilla(&self, s: f64) -> Result<Mat> {
        encode_input(s, &self.encoding, self.params.n_modes)
    }
}
