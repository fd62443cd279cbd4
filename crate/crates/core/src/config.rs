//! Run configuration: TOML sections per layer, `section.key=value`
//! overrides, and domain checks that name the offending key.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::laws::ScalingSchedule;
use crate::analysis::sim::{Engine, InitialState, ModelSpec};
use crate::analysis::snr::{SnrAveraging, SnrSettings};
use crate::error::{Error, Result};
use crate::readout::{CapacityThreshold, IpcSettings};
use crate::reservoir::{CouplingDistribution, InputEncoding};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Fig2a,
    Fig2b,
    Fig3a,
    Fig3b,
    Fig3c,
    Fig4a,
    Fig4b,
    Fig5,
    #[default]
    Ipc,
    Snr,
    Validate,
}

impl Task {
    pub const ALL: [Task; 11] = [
        Task::Fig2a,
        Task::Fig2b,
        Task::Fig3a,
        Task::Fig3b,
        Task::Fig3c,
        Task::Fig4a,
        Task::Fig4b,
        Task::Fig5,
        Task::Ipc,
        Task::Snr,
        Task::Validate,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Task::Fig2a => "fig2a",
            Task::Fig2b => "fig2b",
            Task::Fig3a => "fig3a",
            Task::Fig3b => "fig3b",
            Task::Fig3c => "fig3c",
            Task::Fig4a => "fig4a",
            Task::Fig4b => "fig4b",
            Task::Fig5 => "fig5",
            Task::Ipc => "ipc",
            Task::Snr => "snr",
            Task::Validate => "validate",
        }
    }
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Task::ALL
            .iter()
            .find(|t| t.name() == s)
            .copied()
            .ok_or_else(|| {
                let names: Vec<&str> = Task::ALL.iter().map(|t| t.name()).collect();
                Error::config("run.task", format!("unknown task `{s}`; expected one of {}", names.join(", ")))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Ideal,
    Ensemble,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub task: Task,
    pub master_seed: u64,
    pub realizations: usize,
    pub output_dir: PathBuf,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            task: Task::Ipc,
            master_seed: 0,
            realizations: 10,
            output_dir: PathBuf::from("out"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReservoirSection {
    pub n_modes: usize,
    pub reflectivity: f64,
    pub m_pulses: usize,
    pub dt: f64,
    pub mode: Mode,
    pub engine: Engine,
    pub squeeze_db_limit: f64,
    pub enforce_squeeze_limit: bool,
    pub initial_state: InitialState,
}

impl Default for ReservoirSection {
    fn default() -> Self {
        Self {
            n_modes: 8,
            reflectivity: 0.9,
            m_pulses: 10_000,
            dt: 1.0,
            mode: Mode::Ideal,
            engine: Engine::Pulses,
            squeeze_db_limit: crate::reservoir::DEFAULT_SQUEEZE_DB_LIMIT,
            enforce_squeeze_limit: true,
            initial_state: InitialState::Vacuum,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReadoutSection {
    pub train_len: usize,
    pub test_len: usize,
    pub degree_max: usize,
    pub delay_max: usize,
    pub threshold: CapacityThreshold,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ridge: Option<f64>,
}

impl Default for ReadoutSection {
    fn default() -> Self {
        Self {
            train_len: 10_000,
            test_len: 5_000,
            degree_max: 5,
            delay_max: 75,
            threshold: CapacityThreshold::Auto,
            ridge: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScalingSection {
    pub c_const: f64,
    pub m_coeff: f64,
    pub m_exponent: f64,
    pub modes: Vec<usize>,
    /// When set, `M(N) = base_m · (N / N₀)^m_exponent` with `N₀` the first
    /// entry of `modes`, in place of `m_coeff · N^m_exponent`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub base_m: Option<usize>,
}

impl Default for ScalingSection {
    fn default() -> Self {
        let s = ScalingSchedule::default();
        Self {
            c_const: s.c_const,
            m_coeff: s.m_coeff,
            m_exponent: s.m_exponent,
            modes: s.modes,
            base_m: None,
        }
    }
}

impl ScalingSection {
    pub fn schedule(&self) -> ScalingSchedule {
        ScalingSchedule {
            c_const: self.c_const,
            m_coeff: self.m_coeff,
            m_exponent: self.m_exponent,
            modes: self.modes.clone(),
        }
    }

    pub fn m_pulses(&self, n: usize) -> usize {
        match self.base_m {
            Some(base) => {
                let n0 = self.modes[0] as f64;
                (base as f64 * (n as f64 / n0).powf(self.m_exponent)).round() as usize
            }
            None => self.schedule().m_pulses(n),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    pub n_grid: Vec<usize>,
    pub r_grid: Vec<f64>,
    pub m_grid: Vec<usize>,
    pub snr_max_delay: usize,
    pub snr_window: usize,
    pub snr_floor_db: f64,
    pub snr_averaging: SnrAveraging,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        let s = SnrSettings::default();
        Self {
            n_grid: vec![8, 10],
            r_grid: vec![0.75, 0.9],
            m_grid: vec![1_000, 10_000],
            snr_max_delay: s.max_delay,
            snr_window: s.window,
            snr_floor_db: s.floor_db,
            snr_averaging: s.averaging,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub run: RunSection,
    pub reservoir: ReservoirSection,
    pub crystal: CouplingDistribution,
    pub encoding: InputEncoding,
    pub readout: ReadoutSection,
    pub scaling: ScalingSection,
    pub experiment: ExperimentSection,
}

fn check_r(key: &str, r: f64) -> Result<()> {
    if r > 0.0 && r < 1.0 {
        Ok(())
    } else {
        Err(Error::config(key, format!("must lie in the open interval (0, 1), got {r}")))
    }
}

fn check_min(key: &str, v: usize, min: usize) -> Result<()> {
    if v >= min {
        Ok(())
    } else {
        Err(Error::config(key, format!("must be >= {min}, got {v}")))
    }
}

impl RunConfig {
    /// Parses TOML text, applies overrides and validates.
    pub fn from_toml_str(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::config("<config>", e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: RunConfig = RunConfig::deserialize(table).map_err(|e| {
            Error::config("<config>", e.to_string().trim().replace('\n', " "))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).map_err(|source| Error::Io {
                path: p.display().to_string(),
                source,
            })?,
            None => String::new(),
        };
        Self::from_toml_str(&text, overrides)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes to TOML")
    }

    pub fn validate(&self) -> Result<()> {
        check_min("run.realizations", self.run.realizations, 1)?;
        let r = &self.reservoir;
        check_min("reservoir.n_modes", r.n_modes, 1)?;
        check_r("reservoir.reflectivity", r.reflectivity)?;
        check_min("reservoir.m_pulses", r.m_pulses, 2)?;
        if !(r.dt > 0.0 && r.dt.is_finite()) {
            return Err(Error::config("reservoir.dt", format!("must be finite and > 0, got {}", r.dt)));
        }
        if r.squeeze_db_limit.is_nan() || r.squeeze_db_limit <= 0.0 {
            return Err(Error::config("reservoir.squeeze_db_limit", "must be > 0"));
        }
        for (k, v) in [
            ("crystal.spread_g", self.crystal.spread_g),
            ("crystal.spread_h", self.crystal.spread_h),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::config(k, format!("must be finite and >= 0, got {v}")));
            }
        }
        self.encoding
            .validate(r.enforce_squeeze_limit.then_some(r.squeeze_db_limit))?;
        let ro = &self.readout;
        check_min("readout.train_len", ro.train_len, 1)?;
        check_min("readout.test_len", ro.test_len, 1)?;
        check_min("readout.degree_max", ro.degree_max, 1)?;
        if let CapacityThreshold::Fixed(v) = ro.threshold {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config("readout.threshold", format!("fixed threshold must lie in [0, 1], got {v}")));
            }
        }
        if let Some(l) = ro.ridge {
            if !(l >= 0.0 && l.is_finite()) {
                return Err(Error::config("readout.ridge", format!("must be finite and >= 0, got {l}")));
            }
        }
        self.scaling.schedule().validate()?;
        if let Some(b) = self.scaling.base_m {
            check_min("scaling.base_m", b, 2)?;
        }
        let e = &self.experiment;
        if e.n_grid.is_empty() || e.n_grid.contains(&0) {
            return Err(Error::config("experiment.n_grid", "needs at least one N, all >= 1"));
        }
        if e.r_grid.is_empty() {
            return Err(Error::config("experiment.r_grid", "needs at least one R"));
        }
        for &v in &e.r_grid {
            check_r("experiment.r_grid", v)?;
        }
        if e.m_grid.is_empty() || e.m_grid.iter().any(|&m| m < 2) {
            return Err(Error::config("experiment.m_grid", "needs at least one M, all >= 2"));
        }
        self.snr_settings().validate()
    }

    pub fn model_spec(&self, n_modes: usize, reflectivity: f64) -> ModelSpec {
        ModelSpec {
            n_modes,
            reflectivity,
            dt: self.reservoir.dt,
            coupling: self.crystal,
            squeeze_db_limit: self.reservoir.squeeze_db_limit,
            enforce_squeeze_limit: self.reservoir.enforce_squeeze_limit,
            encoding: self.encoding,
            initial: self.reservoir.initial_state,
        }
    }

    pub fn ipc_settings(&self) -> IpcSettings {
        IpcSettings {
            degree_max: self.readout.degree_max,
            delay_max: self.readout.delay_max,
            threshold: self.readout.threshold,
            domain: self.encoding.domain,
            ridge: self.readout.ridge,
        }
    }

    pub fn snr_settings(&self) -> SnrSettings {
        SnrSettings {
            max_delay: self.experiment.snr_max_delay,
            window: self.experiment.snr_window,
            floor_db: self.experiment.snr_floor_db,
            averaging: self.experiment.snr_averaging,
        }
    }
}

/// Sets `section.key` from `section.key=value`. The value is read as a TOML
/// value, falling back to a plain string.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::config(spec, "override must look like section.key=value"))?;
    let path = path.trim();
    let (section, key) = path
        .split_once('.')
        .ok_or_else(|| Error::config(path, "override key must look like section.key"))?;
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let entry = table
        .entry(section.to_string())
        .or_insert_with(|| toml::Value::Table(toml::Table::new()));
    match entry {
        toml::Value::Table(t) => {
            t.insert(key.to_string(), value);
            Ok(())
        }
        _ => Err(Error::config(section, "is not a section")),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_gives_defaults() {
        let c = RunConfig::from_toml_str("", &[]).unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.reservoir.n_modes, 8);
        assert_eq!(c.reservoir.reflectivity, 0.9);
        assert_eq!(c.reservoir.m_pulses, 10_000);
        assert_eq!(c.readout.train_len, 10_000);
        assert_eq!(c.readout.test_len, 5_000);
        assert_eq!(c.readout.delay_max, 75);
        assert_eq!(c.readout.degree_max, 5);
        assert_eq!(c.run.realizations, 10);
        assert_eq!(c.encoding.squeeze_strength, 1.0);
        assert!((c.encoding.angle_scale - 3.0 * std::f64::consts::FRAC_PI_4).abs() < 1e-15);
    }

    #[test]
    fn reflectivity_one_is_rejected_by_key() {
        let err = RunConfig::from_toml_str("[reservoir]\nreflectivity = 1.0\n", &[]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("reservoir.reflectivity") && msg.contains("open interval"), "{msg}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_toml_str("[reservoir]\nmodes = 3\n", &[]).is_err());
        assert!(RunConfig::from_toml_str("[nonsense]\nx = 1\n", &[]).is_err());
        assert!(RunConfig::from_toml_str("", &["reservoir.bogus=1".into()]).is_err());
    }

    #[test]
    fn overrides_apply_with_types() {
        let c = RunConfig::from_toml_str(
            "[reservoir]\nn_modes = 4\n",
            &[
                "reservoir.n_modes=6".into(),
                "reservoir.mode=ensemble".into(),
                "experiment.r_grid=[0.5, 0.8]".into(),
                "readout.threshold=off".into(),
                "run.task=fig2a".into(),
            ],
        )
        .unwrap();
        assert_eq!(c.reservoir.n_modes, 6);
        assert_eq!(c.reservoir.mode, Mode::Ensemble);
        assert_eq!(c.experiment.r_grid, vec![0.5, 0.8]);
        assert_eq!(c.readout.threshold, CapacityThreshold::Off);
        assert_eq!(c.run.task, Task::Fig2a);
        assert!(RunConfig::from_toml_str("", &["noequals".into()]).is_err());
        assert!(RunConfig::from_toml_str("", &["nosection=1".into()]).is_err());
    }

    #[test]
    fn round_trip() {
        let mut c = RunConfig::default();
        c.readout.ridge = Some(1e-6);
        c.readout.threshold = CapacityThreshold::Fixed(0.01);
        c.scaling.base_m = Some(20_000);
        c.reservoir.engine = Engine::Gram;
        let text = c.to_toml_string();
        let back = RunConfig::from_toml_str(&text, &[]).unwrap();
        assert_eq!(back, c);
        assert_eq!(RunConfig::from_toml_str(&back.to_toml_string(), &[]).unwrap(), c);
    }

    #[test]
    fn task_names() {
        for t in Task::ALL {
            assert_eq!(t.name().parse::<Task>().unwrap(), t);
        }
        assert!("fig9".parse::<Task>().is_err());
    }

    #[test]
    fn base_m_schedule() {
        let s = ScalingSection {
            base_m: Some(20_000),
            ..Default::default()
        };
        assert_eq!(s.m_pulses(6), 20_000);
        assert_eq!(s.m_pulses(12), 20_000 * 64);
        assert_eq!(ScalingSection::default().m_pulses(6), 139_968);
    }

    #[test]
    fn domain_errors() {
        for (o, key) in [
            ("reservoir.n_modes=0", "reservoir.n_modes"),
            ("reservoir.dt=-1.0", "reservoir.dt"),
            ("run.realizations=0", "run.realizations"),
            ("experiment.r_grid=[0.5, 1.5]", "experiment.r_grid"),
            ("encoding.squeeze_strength=3.0", "encoding.squeeze_strength"),
            ("scaling.modes=[2]", "scaling.c_const"),
        ] {
            let e = RunConfig::from_toml_str("", &[o.into()]).unwrap_err();
            assert!(e.to_string().contains(key), "{o}: {e}");
        }
    }
}
