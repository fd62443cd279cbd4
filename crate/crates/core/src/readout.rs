//! Linear readout training and capacity evaluation.

use std::collections::BTreeMap;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::reservoir::FeatureVector;

/// Time series of feature vectors, one row per step.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSeries(Mat);

impl FeatureSeries {
    pub fn from_matrix(m: Mat) -> Self {
        Self(m)
    }

    pub fn from_rows(rows: &[FeatureVector]) -> Result<Self> {
        let first = rows
            .first()
            .ok_or_else(|| Error::Input("feature series is empty".into()))?;
        let n = first.len();
        let mut m = Mat::zeros(rows.len(), n);
        for (k, r) in rows.iter().enumerate() {
            if r.len() != n {
                return Err(Error::dim("FeatureSeries row", n, r.len()));
            }
            m.row_mut(k).copy_from(&r.0.transpose());
        }
        Ok(Self(m))
    }

    pub fn len(&self) -> usize {
        self.0.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.0.nrows() == 0
    }

    pub fn n_features(&self) -> usize {
        self.0.ncols()
    }

    pub fn matrix(&self) -> &Mat {
        &self.0
    }

    /// Rows `start..start + len`.
    pub fn window(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.len() {
            return Err(Error::Input(format!(
                "window {start}..{} exceeds series length {}",
                start + len,
                self.len()
            )));
        }
        Ok(Self(self.0.rows(start, len).into_owned()))
    }

    /// `[1 | F]`.
    fn design(&self) -> Mat {
        let mut v = Mat::from_element(self.len(), self.n_features() + 1, 1.0);
        v.columns_mut(1, self.n_features()).copy_from(&self.0);
        v
    }
}

/// One polynomial target: degree `D` of the input delayed by `d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TargetSpec {
    pub degree: usize,
    pub delay: usize,
}

/// Legendre polynomial `P_D(x)` by the three-term recurrence.
pub fn legendre(degree: usize, x: f64) -> f64 {
    let (mut p0, mut p1) = (1.0, x);
    if degree == 0 {
        return p0;
    }
    for n in 1..degree {
        let nf = n as f64;
        let p2 = ((2.0 * nf + 1.0) * x * p1 - nf * p0) / (nf + 1.0);
        p0 = p1;
        p1 = p2;
    }
    p1
}

/// Legendre polynomial rescaled to `domain` with unit second moment under the
/// uniform measure on it.
pub fn normalized_legendre(degree: usize, s: f64, domain: (f64, f64)) -> f64 {
    let x = 2.0 * (s - domain.0) / (domain.1 - domain.0) - 1.0;
    (2.0 * degree as f64 + 1.0).sqrt() * legendre(degree, x)
}

/// Targets `ȳ_k = P̄_D(s_{k−d})` for `k = d .. len`; the first `d` steps have no target.
pub fn build_target(inputs: &[f64], spec: TargetSpec, domain: (f64, f64)) -> Result<Vec<f64>> {
    if spec.degree == 0 {
        return Err(Error::Input("target degree must be >= 1".into()));
    }
    if spec.delay >= inputs.len() {
        return Err(Error::Input(format!(
            "delay {} needs more than {} inputs",
            spec.delay,
            inputs.len()
        )));
    }
    Ok(inputs[..inputs.len() - spec.delay]
        .iter()
        .map(|&s| normalized_legendre(spec.degree, s, domain))
        .collect())
}

/// Trained weights, bias first.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedReadout {
    pub weights: DVector<f64>,
    pub training_mse: f64,
}

impl TrainedReadout {
    pub fn predict(&self, features: &FeatureSeries) -> Result<DVector<f64>> {
        if features.n_features() + 1 != self.weights.len() {
            return Err(Error::dim(
                "TrainedReadout::predict",
                self.weights.len() - 1,
                features.n_features(),
            ));
        }
        Ok(features.design() * &self.weights)
    }
}

/// Training-side factorization shared by every target on the same features.
#[derive(Debug, Clone)]
pub struct ReadoutSolver {
    design: Mat,
    solve: Mat,
}

impl ReadoutSolver {
    /// Plain Moore–Penrose solution when `ridge` is `None`.
    pub fn new(features: &FeatureSeries, ridge: Option<f64>) -> Result<Self> {
        if features.is_empty() || features.n_features() == 0 {
            return Err(Error::Input("cannot train on an empty feature series".into()));
        }
        let design = features.design();
        if design.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("feature series contains non-finite values".into()));
        }
        let solve = match ridge {
            None => linalg::moore_penrose(&design),
            Some(lambda) if lambda > 0.0 => {
                let p = design.ncols();
                let mut gram = design.transpose() * &design;
                for i in 1..p {
                    gram[(i, i)] += lambda;
                }
                let inv = gram
                    .try_inverse()
                    .ok_or_else(|| Error::Numerical("ridge system is singular".into()))?;
                inv * design.transpose()
            }
            Some(lambda) => {
                return Err(Error::config("readout.ridge", format!("must be > 0, got {lambda}")))
            }
        };
        Ok(Self { design, solve })
    }

    pub fn train(&self, target: &[f64]) -> Result<TrainedReadout> {
        if target.len() != self.design.nrows() {
            return Err(Error::dim("ReadoutSolver::train", self.design.nrows(), target.len()));
        }
        let y = DVector::from_column_slice(target);
        let weights = &self.solve * &y;
        let residual = &self.design * &weights - &y;
        Ok(TrainedReadout {
            training_mse: residual.norm_squared() / y.len() as f64,
            weights,
        })
    }

    /// Weights for many targets at once, one column per target.
    fn train_many(&self, targets: &Mat) -> Mat {
        &self.solve * targets
    }
}

/// Trains with the plain pseudo-inverse.
pub fn train(features: &FeatureSeries, target: &[f64]) -> Result<TrainedReadout> {
    ReadoutSolver::new(features, None)?.train(target)
}

fn capacity_from(pred: &[f64], target: &[f64]) -> Result<f64> {
    let n = target.len() as f64;
    let power = target.iter().map(|y| y * y).sum::<f64>() / n;
    if power <= 0.0 {
        return Err(Error::Input("target has zero second moment".into()));
    }
    let mse = pred
        .iter()
        .zip(target)
        .map(|(p, y)| (p - y) * (p - y))
        .sum::<f64>()
        / n;
    Ok((1.0 - mse / power).clamp(0.0, 1.0))
}

/// `max(0, 1 − MSE / ⟨ȳ²⟩)` on held-out data.
pub fn capacity(readout: &TrainedReadout, features: &FeatureSeries, target: &[f64]) -> Result<f64> {
    if target.is_empty() || target.len() != features.len() {
        return Err(Error::dim("capacity", features.len(), target.len()));
    }
    let pred = readout.predict(features)?;
    capacity_from(pred.as_slice(), target)
}

/// Significance filter for individual capacities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CapacityThreshold {
    Off,
    /// `2 (n_features + 1) / L′`.
    Auto,
    Fixed(f64),
}

impl CapacityThreshold {
    pub fn value(&self, n_features: usize, test_len: usize) -> f64 {
        match *self {
            CapacityThreshold::Off => 0.0,
            CapacityThreshold::Auto => 2.0 * (n_features as f64 + 1.0) / test_len as f64,
            CapacityThreshold::Fixed(v) => v,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IpcSettings {
    pub degree_max: usize,
    pub delay_max: usize,
    pub threshold: CapacityThreshold,
    pub domain: (f64, f64),
    pub ridge: Option<f64>,
}

impl Default for IpcSettings {
    fn default() -> Self {
        Self {
            degree_max: 5,
            delay_max: 75,
            threshold: CapacityThreshold::Auto,
            domain: (0.0, 1.0),
            ridge: None,
        }
    }
}

/// Capacities of one trained reservoir over the (degree, delay) grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CapacityReport {
    pub entries: BTreeMap<TargetSpec, f64>,
    pub total_ipc: f64,
    pub normalized_ipc: f64,
    pub n_features: usize,
}

impl CapacityReport {
    pub fn get(&self, degree: usize, delay: usize) -> Option<f64> {
        self.entries.get(&TargetSpec { degree, delay }).copied()
    }

    /// Sum of capacities of one degree over all delays.
    pub fn degree_sum(&self, degree: usize) -> f64 {
        self.entries
            .iter()
            .filter(|(t, _)| t.degree == degree)
            .map(|(_, c)| c)
            .sum()
    }

    /// Linear (degree-1) capacity curve indexed by delay.
    pub fn linear_memory(&self) -> Vec<f64> {
        self.entries
            .iter()
            .filter(|(t, _)| t.degree == 1)
            .map(|(_, c)| *c)
            .collect()
    }

    /// Largest delay whose linear capacity reaches `level`.
    pub fn memory_horizon(&self, level: f64) -> Option<usize> {
        self.entries
            .iter()
            .filter(|(t, c)| t.degree == 1 && **c >= level)
            .map(|(t, _)| t.delay)
            .max()
    }
}

/// Trains one readout per target and evaluates it on the test window.
///
/// `inputs` must end with the inputs that drove the `train` then `test` rows,
/// preceded by at least `delay_max` earlier inputs.
pub fn ipc(
    train: &FeatureSeries,
    test: &FeatureSeries,
    inputs: &[f64],
    settings: &IpcSettings,
) -> Result<CapacityReport> {
    let (l, lt) = (train.len(), test.len());
    let nf = train.n_features();
    if test.n_features() != nf {
        return Err(Error::dim("ipc test features", nf, test.n_features()));
    }
    if lt == 0 {
        return Err(Error::Input("test window is empty".into()));
    }
    if settings.degree_max == 0 {
        return Err(Error::config("readout.degree_max", "must be >= 1"));
    }
    let total = l + lt;
    if inputs.len() < total + settings.delay_max {
        return Err(Error::Input(format!(
            "ipc needs {} inputs ({} driven steps plus {} history), got {}",
            total + settings.delay_max,
            total,
            settings.delay_max,
            inputs.len()
        )));
    }
    let offset = inputs.len() - total;
    let specs: Vec<TargetSpec> = (1..=settings.degree_max)
        .flat_map(|degree| (0..=settings.delay_max).map(move |delay| TargetSpec { degree, delay }))
        .collect();

    let targets = Mat::from_fn(total, specs.len(), |k, j| {
        let spec = specs[j];
        normalized_legendre(spec.degree, inputs[offset + k - spec.delay], settings.domain)
    });

    let solver = ReadoutSolver::new(train, settings.ridge)?;
    let weights = solver.train_many(&targets.rows(0, l).into_owned());
    let pred = test.design() * &weights;
    let thr = settings.threshold.value(nf, lt);

    let caps: Vec<f64> = (0..specs.len())
        .into_par_iter()
        .map(|j| {
            let y: Vec<f64> = targets.column(j).rows(l, lt).iter().copied().collect();
            let p: Vec<f64> = pred.column(j).iter().copied().collect();
            capacity_from(&p, &y).map(|c| if c < thr { 0.0 } else { c })
        })
        .collect::<Result<_>>()?;

    let entries: BTreeMap<TargetSpec, f64> = specs.into_iter().zip(caps).collect();
    let total_ipc = entries.values().sum::<f64>();
    Ok(CapacityReport {
        normalized_ipc: total_ipc / nf as f64,
        total_ipc,
        n_features: nf,
        entries,
    })
}
