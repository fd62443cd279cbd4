//! Closed-form signal-to-noise laws, the resource schedules R(N), M(N), and
//! the small least-squares fits used to compare measurements against them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Height shift (dB) of the SNR line when the ensemble grows from `m` to `m_prime`.
pub fn predicted_shift_m(m: f64, m_prime: f64) -> Result<f64> {
    if !(m > 0.0 && m_prime > 0.0) {
        return Err(Error::Input(format!("ensemble sizes must be > 0, got {m} and {m_prime}")));
    }
    Ok(5.0 * (m_prime / m).log10())
}

/// Change (dB) of the d = 1 SNR when the reflectivity moves from `r` to `r_prime`.
pub fn predicted_shift_r(r: f64, r_prime: f64) -> Result<f64> {
    for v in [r, r_prime] {
        if !(v > 0.0 && v < 1.0) {
            return Err(Error::Input(format!("reflectivity must lie in (0, 1), got {v}")));
        }
    }
    Ok(20.0 * ((1.0 - r_prime) / (1.0 - r)).log10())
}

/// Predicted slope (dB per delay) of the SNR line.
pub fn predicted_slope_db(r: f64) -> f64 {
    10.0 * r.log10()
}

/// Extra delays resolvable above noise when the ensemble grows from `m` to `m_prime`:
/// `Δd = log_R √(M / M′)`.
pub fn resolution_gain(m: f64, m_prime: f64, r: f64) -> Result<f64> {
    if !(r > 0.0 && r < 1.0) {
        return Err(Error::Input(format!("reflectivity must lie in (0, 1), got {r}")));
    }
    if !(m > 0.0 && m_prime > 0.0) {
        return Err(Error::Input(format!("ensemble sizes must be > 0, got {m} and {m_prime}")));
    }
    Ok((m / m_prime).sqrt().ln() / r.ln())
}

/// `R(N) = 1 − c / N²`, `M(N) = round(m_coeff · N^m_exponent)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScalingSchedule {
    pub c_const: f64,
    pub m_coeff: f64,
    pub m_exponent: f64,
    pub modes: Vec<usize>,
}

impl Default for ScalingSchedule {
    fn default() -> Self {
        Self {
            c_const: 10.0,
            m_coeff: 3.0,
            m_exponent: 6.0,
            modes: vec![6, 8, 10],
        }
    }
}

impl ScalingSchedule {
    pub fn reflectivity(&self, n: usize) -> Result<f64> {
        let r = 1.0 - self.c_const / (n * n) as f64;
        if !(r > 0.0 && r < 1.0) {
            return Err(Error::Input(format!(
                "R(N) = 1 - {}/N^2 = {r:.4} at N = {n} is outside (0, 1)",
                self.c_const
            )));
        }
        Ok(r)
    }

    pub fn m_pulses(&self, n: usize) -> usize {
        (self.m_coeff * (n as f64).powf(self.m_exponent)).round() as usize
    }

    /// Validates every listed N.
    pub fn validate(&self) -> Result<()> {
        if self.modes.is_empty() {
            return Err(Error::config("scaling.modes", "needs at least one N"));
        }
        if self.m_coeff.is_nan() || self.m_coeff <= 0.0 {
            return Err(Error::config("scaling.m_coeff", "must be > 0"));
        }
        for &n in &self.modes {
            self.reflectivity(n)
                .map_err(|e| Error::config("scaling.c_const", e.to_string()))?;
        }
        Ok(())
    }
}

pub fn scaling_schedule(sched: &ScalingSchedule, n: usize) -> Result<(f64, usize)> {
    Ok((sched.reflectivity(n)?, sched.m_pulses(n)))
}

/// Least-squares line `y = intercept + slope · x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

impl LineFit {
    pub fn at(&self, x: f64) -> f64 {
        self.intercept + self.slope * x
    }
}

pub fn fit_line(x: &[f64], y: &[f64]) -> Result<LineFit> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Input(format!(
            "line fit needs >= 2 paired points, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|v| (v - my) * (v - my)).sum();
    if sxx == 0.0 {
        return Err(Error::Input("line fit needs at least two distinct x values".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let r_squared = if syy == 0.0 { 1.0 } else { 1.0 - ss_res / syy };
    Ok(LineFit {
        slope,
        intercept,
        r_squared,
    })
}

/// Fit of `y = a + b N²`; the returned line has `x = N²`.
pub fn fit_quadratic_in_n(n: &[f64], y: &[f64]) -> Result<LineFit> {
    let x: Vec<f64> = n.iter().map(|v| v * v).collect();
    fit_line(&x, y)
}

/// Mean and standard error of the mean.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}
