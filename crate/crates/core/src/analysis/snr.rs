//! Signal-to-noise of the delayed input contributions against the finite-M
//! estimation noise, plus the two diagnostics that feed the line laws: the
//! decay of the noiseless contributions with delay and the M-scaling of the
//! noise itself.

use serde::{Deserialize, Serialize};

use super::laws::{fit_line, mean_stderr, LineFit};
use super::runner::{run_realizations, Resample};
use super::sim::{Engine, ModelSpec, SimMode, Stepper};
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::reservoir::{washout_length, DelayPropagators};

/// Order in which |γ/ξ| ratios are averaged before conversion to dB.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SnrAveraging {
    /// Mean of `|γ/ξ|` over entries, steps and realizations, then dB.
    ///
    /// The ratio has a 1/|ξ| tail near ξ = 0, so this mean is dominated by a
    /// few entries and converges poorly.
    #[default]
    Arithmetic,
    /// Mean of `log10 |γ/ξ|` over entries, steps and realizations.
    LogDomain,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnrSettings {
    pub max_delay: usize,
    pub window: usize,
    pub floor_db: f64,
    pub averaging: SnrAveraging,
}

impl Default for SnrSettings {
    fn default() -> Self {
        Self {
            max_delay: 20,
            window: 100,
            floor_db: -20.0,
            averaging: SnrAveraging::Arithmetic,
        }
    }
}

impl SnrSettings {
    pub fn validate(&self) -> Result<()> {
        if self.max_delay == 0 {
            return Err(Error::config("experiment.snr_max_delay", "must be >= 1"));
        }
        if self.window == 0 {
            return Err(Error::config("experiment.snr_window", "must be >= 1"));
        }
        if !self.floor_db.is_finite() {
            return Err(Error::config("experiment.snr_floor_db", "must be finite"));
        }
        Ok(())
    }
}

/// Per-realization statistics for delays `1..=max_delay`.
#[derive(Debug, Clone, PartialEq)]
pub struct RealizationSnr {
    /// Mean `log10 |γ_d/ξ|` (log domain) or mean `|γ_d/ξ|` (arithmetic), per delay.
    pub values: Vec<f64>,
    pub averaging: SnrAveraging,
    /// Entries with ξ exactly zero, skipped from every ratio.
    pub zero_noise_entries: usize,
    /// Root mean square of the ξ entries over the window.
    pub noise_rms: f64,
}

/// Steps run before the statistics window opens.
pub fn snr_washout(reflectivity: f64, max_delay: usize) -> Result<usize> {
    Ok(washout_length(reflectivity)?.max(max_delay))
}

/// Runs the finite ensemble and the ideal loop side by side on one drawn
/// reservoir and input string and collects `|γ_d/ξ|` over the window.
pub fn realization_snr(
    spec: &ModelSpec,
    seed: u64,
    m_pulses: usize,
    engine: Engine,
    settings: &SnrSettings,
) -> Result<RealizationSnr> {
    settings.validate()?;
    let model = spec.draw(seed)?;
    let wash = snr_washout(spec.reflectivity, settings.max_delay)?;
    let total = wash + settings.window;
    let inputs = spec.draw_inputs(seed, total);
    let sigma0 = spec.initial_covariance(seed)?;
    let mut ideal = Stepper::new(&model, SimMode::Ideal, &sigma0, seed)?;
    let mut noisy = Stepper::new(&model, SimMode::Ensemble { m_pulses, engine }, &sigma0, seed)?;
    let props = DelayPropagators::new(&model, settings.max_delay);
    let ancillas: Vec<Mat> = inputs.iter().map(|&s| model.ancilla(s)).collect::<Result<_>>()?;

    let n = model.n_modes();
    let mut sums = vec![0.0; settings.max_delay];
    let mut counts = vec![0usize; settings.max_delay];
    let mut zero = 0usize;
    let mut noise_sq = 0.0;
    for (k, &s) in inputs.iter().enumerate() {
        let est = noisy.step(&model, s)?;
        let exact = ideal.step(&model, s)?;
        if k < wash {
            continue;
        }
        let xi = est - exact;
        noise_sq += xi.iter().map(|v| v * v).sum::<f64>();
        let zero_here = xi.iter().filter(|v| **v == 0.0).count();
        zero += zero_here * settings.max_delay;
        for d in 1..=settings.max_delay {
            let gamma = props.gamma(d, &ancillas[k - d])?;
            for (g, x) in gamma.iter().zip(xi.iter()) {
                if *x == 0.0 {
                    continue;
                }
                let ratio = (g / x).abs();
                sums[d - 1] += match settings.averaging {
                    SnrAveraging::LogDomain => ratio.log10(),
                    SnrAveraging::Arithmetic => ratio,
                };
                counts[d - 1] += 1;
            }
        }
    }
    let values = sums
        .iter()
        .zip(&counts)
        .map(|(s, &c)| if c == 0 { f64::NAN } else { s / c as f64 })
        .collect();
    Ok(RealizationSnr {
        values,
        averaging: settings.averaging,
        zero_noise_entries: zero,
        noise_rms: (noise_sq / (settings.window * n * n) as f64).sqrt(),
    })
}

/// SNR in dB per delay, averaged over realizations, with its fitted line.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SnrCurve {
    pub delays: Vec<usize>,
    pub snr_db: Vec<f64>,
    pub stderr: Vec<f64>,
    /// dB per delay; NaN when fewer than two delays clear the floor.
    pub slope: f64,
    /// Fitted value at d = 1.
    pub height: f64,
    pub r_squared: f64,
    pub n_realizations: usize,
    pub zero_noise_entries: usize,
    pub mean_noise_rms: f64,
    pub resampled: Vec<Resample>,
}

pub fn aggregate(results: &[RealizationSnr], settings: &SnrSettings) -> Result<SnrCurve> {
    if results.is_empty() {
        return Err(Error::Input("no realizations to aggregate".into()));
    }
    let averaging = results[0].averaging;
    let n_delays = results[0].values.len();
    if results.iter().any(|r| r.averaging != averaging || r.values.len() != n_delays) {
        return Err(Error::Input("realizations disagree on averaging or delay range".into()));
    }
    let mut snr_db = Vec::with_capacity(n_delays);
    let mut stderr = Vec::with_capacity(n_delays);
    for d in 0..n_delays {
        let vals: Vec<f64> = results.iter().map(|r| r.values[d]).collect();
        let (m, se) = mean_stderr(&vals);
        match averaging {
            SnrAveraging::LogDomain => {
                snr_db.push(10.0 * m);
                stderr.push(10.0 * se);
            }
            SnrAveraging::Arithmetic => {
                snr_db.push(10.0 * m.log10());
                stderr.push(10.0 / std::f64::consts::LN_10 * se / m);
            }
        }
    }
    let delays: Vec<usize> = (1..=n_delays).collect();
    let (x, y): (Vec<f64>, Vec<f64>) = delays
        .iter()
        .zip(&snr_db)
        .filter(|(_, v)| v.is_finite() && **v >= settings.floor_db)
        .map(|(d, v)| (*d as f64, *v))
        .unzip();
    let fit = if x.len() >= 2 { Some(fit_line(&x, &y)?) } else { None };
    Ok(SnrCurve {
        delays,
        snr_db,
        stderr,
        slope: fit.map_or(f64::NAN, |f| f.slope),
        height: fit.map_or(f64::NAN, |f| f.at(1.0)),
        r_squared: fit.map_or(f64::NAN, |f| f.r_squared),
        n_realizations: results.len(),
        zero_noise_entries: results.iter().map(|r| r.zero_noise_entries).sum(),
        mean_noise_rms: results.iter().map(|r| r.noise_rms).sum::<f64>() / results.len() as f64,
        resampled: Vec::new(),
    })
}

/// SNR curve over `n_realizations` reservoirs derived from `master`.
pub fn snr_curve(
    spec: &ModelSpec,
    master: u64,
    n_realizations: usize,
    m_pulses: usize,
    engine: Engine,
    settings: &SnrSettings,
) -> Result<SnrCurve> {
    let run = run_realizations(master, n_realizations, |_, seed| {
        realization_snr(spec, seed, m_pulses, engine, settings)
    })?;
    let mut curve = aggregate(&run.results, settings)?;
    curve.resampled = run.resampled;
    Ok(curve)
}

/// Mean entry magnitude of the noiseless delay contributions.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GammaDecay {
    pub delays: Vec<usize>,
    pub mean_abs: Vec<f64>,
    /// Fit of `log10 mean_abs` against delay.
    pub slope: f64,
    pub r_squared: f64,
}

/// `⟨|[γ_d]_ij|⟩` over entries, `window` input draws and realizations, for
/// `d = 1..=d_max`, with a line fitted to its base-10 logarithm.
pub fn gamma_decay(
    spec: &ModelSpec,
    master: u64,
    n_realizations: usize,
    d_max: usize,
    window: usize,
) -> Result<GammaDecay> {
    if d_max < 2 || window == 0 {
        return Err(Error::Input(format!(
            "gamma decay needs d_max >= 2 and window >= 1, got {d_max} and {window}"
        )));
    }
    let run = run_realizations(master, n_realizations, |_, seed| {
        let model = spec.draw(seed)?;
        let props = DelayPropagators::new(&model, d_max);
        let inputs = spec.draw_inputs(seed, window + d_max);
        let n = model.n_modes();
        let mut acc = vec![0.0; d_max];
        for k in d_max..window + d_max {
            for d in 1..=d_max {
                let g = props.gamma(d, &model.ancilla(inputs[k - d])?)?;
                acc[d - 1] += g.iter().map(|v| v.abs()).sum::<f64>() / (n * n) as f64;
            }
        }
        Ok(acc.into_iter().map(|v| v / window as f64).collect::<Vec<_>>())
    })?;
    let delays: Vec<usize> = (1..=d_max).collect();
    let mean_abs: Vec<f64> = (0..d_max)
        .map(|i| run.results.iter().map(|r| r[i]).sum::<f64>() / n_realizations as f64)
        .collect();
    let x: Vec<f64> = delays.iter().map(|&d| d as f64).collect();
    let y: Vec<f64> = mean_abs.iter().map(|v| v.log10()).collect();
    let fit = fit_line(&x, &y)?;
    Ok(GammaDecay {
        delays,
        mean_abs,
        slope: fit.slope,
        r_squared: fit.r_squared,
    })
}

/// RMS of the estimation noise for each ensemble size and the fitted power law.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoiseScaling {
    pub m_values: Vec<usize>,
    pub rms: Vec<f64>,
    /// Fit of `log10 rms` against `log10 M`; the slope is the exponent.
    pub fit: LineFitSummary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LineFitSummary {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

impl From<LineFit> for LineFitSummary {
    fn from(f: LineFit) -> Self {
        Self {
            slope: f.slope,
            intercept: f.intercept,
            r_squared: f.r_squared,
        }
    }
}

pub fn noise_scaling(
    spec: &ModelSpec,
    master: u64,
    n_realizations: usize,
    m_values: &[usize],
    engine: Engine,
    settings: &SnrSettings,
) -> Result<NoiseScaling> {
    let mut rms = Vec::with_capacity(m_values.len());
    for &m in m_values {
        let curve = snr_curve(spec, master, n_realizations, m, engine, settings)?;
        rms.push(curve.mean_noise_rms);
    }
    let x: Vec<f64> = m_values.iter().map(|&m| (m as f64).log10()).collect();
    let y: Vec<f64> = rms.iter().map(|v| v.log10()).collect();
    Ok(NoiseScaling {
        m_values: m_values.to_vec(),
        rms,
        fit: fit_line(&x, &y)?.into(),
    })
}
