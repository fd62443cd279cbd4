//! Figure and task experiments: grids of (N, R, M) cells, each averaged over
//! realizations, turned into CSV tables.

use std::time::Instant;

use super::laws::{mean_stderr, predicted_shift_m, predicted_shift_r, predicted_slope_db};
use super::runner::{run_realizations, Failure, RunOutcome};
use super::sim::{simulate_features, Engine, ModelSpec, SimMode};
use super::snr::{gamma_decay, noise_scaling, snr_curve, SnrCurve, SnrSettings};
use crate::config::{Mode, RunConfig, Task};
use crate::error::{Error, Result};
use crate::io::{Table, Timing, CAPACITY_HEADER, IPC_HEADER, SNR_HEADER, VALIDATE_HEADER};
use crate::readout::{ipc, CapacityReport, IpcSettings};
use crate::reservoir::{round_trip_symplectic, verify_echo_state, washout_length};
use crate::seed::realization_seed;

/// Result of one task.
#[derive(Debug, Clone)]
pub struct TaskOutput {
    pub tables: Vec<Table>,
    pub realization_seeds: Vec<u64>,
    pub failures: Vec<Failure>,
    pub timings: Vec<Timing>,
    /// Set by `validate` when any check is red.
    pub checks_failed: bool,
}

impl TaskOutput {
    fn new(cfg: &RunConfig, realizations: usize) -> Self {
        Self {
            tables: Vec::new(),
            realization_seeds: (0..realizations)
                .map(|i| realization_seed(cfg.run.master_seed, i))
                .collect(),
            failures: Vec::new(),
            timings: Vec::new(),
            checks_failed: false,
        }
    }

    fn record<T>(&mut self, cell: &str, started: Instant, run: &RunOutcome<T>) {
        self.timings.push(Timing {
            label: cell.to_string(),
            seconds: started.elapsed().as_secs_f64(),
        });
        self.failures.extend(run.resampled.iter().map(|r| Failure {
            cell: cell.to_string(),
            resample: r.clone(),
        }));
    }
}

/// Steps discarded before the training window.
pub fn readout_washout(reflectivity: f64, delay_max: usize) -> Result<usize> {
    Ok(washout_length(reflectivity)?.max(delay_max))
}

/// Trains and scores the readout on one realization.
pub fn capacity_realization(
    spec: &ModelSpec,
    seed: u64,
    mode: SimMode,
    train_len: usize,
    test_len: usize,
    settings: &IpcSettings,
) -> Result<CapacityReport> {
    let model = spec.draw(seed)?;
    let wash = readout_washout(spec.reflectivity, settings.delay_max)?;
    let inputs = spec.draw_inputs(seed, wash + train_len + test_len);
    let sigma0 = spec.initial_covariance(seed)?;
    let features = simulate_features(&model, &inputs, mode, &sigma0, seed)?;
    let train = features.window(wash, train_len)?;
    let test = features.window(wash + train_len, test_len)?;
    ipc(&train, &test, &inputs, settings)
}

fn capacity_cell(
    cfg: &RunConfig,
    spec: &ModelSpec,
    mode: SimMode,
    settings: &IpcSettings,
    realizations: usize,
) -> Result<RunOutcome<CapacityReport>> {
    run_realizations(cfg.run.master_seed, realizations, |_, seed| {
        capacity_realization(spec, seed, mode, cfg.readout.train_len, cfg.readout.test_len, settings)
    })
}

fn ensemble_mode(cfg: &RunConfig, m_pulses: usize) -> SimMode {
    SimMode::Ensemble {
        m_pulses,
        engine: cfg.reservoir.engine,
    }
}

fn push_capacity_rows(
    table: &mut Table,
    spec: &ModelSpec,
    mode: SimMode,
    reports: &[CapacityReport],
    delay_max: usize,
) -> Result<()> {
    for d in 0..=delay_max {
        let vals: Vec<f64> = reports.iter().map(|r| r.get(1, d).unwrap_or(f64::NAN)).collect();
        let (mean, se) = mean_stderr(&vals);
        table.push(vec![
            spec.n_modes.into(),
            spec.reflectivity.into(),
            mode.m_pulses().into(),
            d.into(),
            mean.into(),
            se.into(),
            reports.len().into(),
        ])?;
    }
    Ok(())
}

fn push_ipc_rows(
    table: &mut Table,
    spec: &ModelSpec,
    mode: SimMode,
    reports: &[CapacityReport],
    degree_max: usize,
    scenario: &str,
) -> Result<()> {
    let total = reports.iter().map(|r| r.total_ipc).sum::<f64>() / reports.len() as f64;
    let norm = reports.iter().map(|r| r.normalized_ipc).sum::<f64>() / reports.len() as f64;
    for degree in 1..=degree_max {
        let sum = reports.iter().map(|r| r.degree_sum(degree)).sum::<f64>() / reports.len() as f64;
        table.push(vec![
            spec.n_modes.into(),
            spec.reflectivity.into(),
            mode.m_pulses().into(),
            degree.into(),
            sum.into(),
            total.into(),
            norm.into(),
            reports.len().into(),
            scenario.into(),
        ])?;
    }
    Ok(())
}

fn push_snr_rows(table: &mut Table, spec: &ModelSpec, m_pulses: usize, curve: &SnrCurve) -> Result<()> {
    for (i, &d) in curve.delays.iter().enumerate() {
        table.push(vec![
            spec.n_modes.into(),
            spec.reflectivity.into(),
            m_pulses.into(),
            d.into(),
            curve.snr_db[i].into(),
            curve.stderr[i].into(),
            curve.slope.into(),
            curve.height.into(),
            curve.n_realizations.into(),
        ])?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn timed_snr(
    out: &mut TaskOutput,
    cell: &str,
    spec: &ModelSpec,
    master: u64,
    realizations: usize,
    m_pulses: usize,
    engine: Engine,
    settings: &SnrSettings,
) -> Result<SnrCurve> {
    let started = Instant::now();
    let curve = snr_curve(spec, master, realizations, m_pulses, engine, settings)?;
    out.timings.push(Timing {
        label: cell.to_string(),
        seconds: started.elapsed().as_secs_f64(),
    });
    out.failures.extend(curve.resampled.iter().map(|r| Failure {
        cell: cell.to_string(),
        resample: r.clone(),
    }));
    Ok(curve)
}

/// The four resource schedules compared as N grows.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    Constant,
    ROnly,
    MOnly,
    Both,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [Scenario::Constant, Scenario::ROnly, Scenario::MOnly, Scenario::Both];

    pub fn name(&self) -> &'static str {
        match self {
            Scenario::Constant => "constant",
            Scenario::ROnly => "r_only",
            Scenario::MOnly => "m_only",
            Scenario::Both => "both",
        }
    }

    /// (R, M) at `n`; fixed resources stay at their value for the first N of the schedule.
    pub fn resources(&self, cfg: &RunConfig, n: usize) -> Result<(f64, usize)> {
        let sched = cfg.scaling.schedule();
        let n0 = cfg.scaling.modes[0];
        let r = match self {
            Scenario::ROnly | Scenario::Both => sched.reflectivity(n)?,
            _ => sched.reflectivity(n0)?,
        };
        let m = match self {
            Scenario::MOnly | Scenario::Both => cfg.scaling.m_pulses(n),
            _ => cfg.scaling.m_pulses(n0),
        };
        Ok((r, m))
    }
}

fn scaling_table(cfg: &RunConfig, out: &mut TaskOutput, name: &str, scenarios: &[Scenario]) -> Result<Table> {
    let mut table = Table::new(name, IPC_HEADER);
    let settings = cfg.ipc_settings();
    for &n in &cfg.scaling.modes {
        for sc in scenarios {
            let (r, m) = sc.resources(cfg, n)?;
            let spec = cfg.model_spec(n, r);
            let mode = ensemble_mode(cfg, m);
            let cell = format!("{name}:{}:N={n}", sc.name());
            let started = Instant::now();
            let run = capacity_cell(cfg, &spec, mode, &settings, cfg.run.realizations)?;
            out.record(&cell, started, &run);
            push_ipc_rows(&mut table, &spec, mode, &run.results, settings.degree_max, sc.name())?;
        }
    }
    Ok(table)
}

/// Runs `cfg.run.task`.
pub fn run_task(cfg: &RunConfig) -> Result<TaskOutput> {
    cfg.validate()?;
    let task = cfg.run.task;
    let reals = cfg.run.realizations;
    let master = cfg.run.master_seed;
    let engine = cfg.reservoir.engine;
    let snr = cfg.snr_settings();
    let e = &cfg.experiment;
    let mut out = TaskOutput::new(cfg, reals);

    match task {
        Task::Fig2a | Task::Fig3a => {
            let mut table = Table::new(task.name(), CAPACITY_HEADER);
            let settings = IpcSettings {
                degree_max: 1,
                ..cfg.ipc_settings()
            };
            let modes: Vec<SimMode> = if task == Task::Fig2a {
                vec![SimMode::Ideal]
            } else {
                e.m_grid.iter().map(|&m| ensemble_mode(cfg, m)).collect()
            };
            for &n in &e.n_grid {
                for &r in &e.r_grid {
                    for &mode in &modes {
                        let spec = cfg.model_spec(n, r);
                        let cell = format!("{}:N={n}:R={r}:M={:?}", task.name(), mode.m_pulses());
                        let started = Instant::now();
                        let run = capacity_cell(cfg, &spec, mode, &settings, reals)?;
                        out.record(&cell, started, &run);
                        push_capacity_rows(&mut table, &spec, mode, &run.results, settings.delay_max)?;
                    }
                }
            }
            out.tables.push(table);
        }
        Task::Fig2b => {
            let mut table = Table::new("fig2b", IPC_HEADER);
            let settings = cfg.ipc_settings();
            for &n in &e.n_grid {
                for &r in &e.r_grid {
                    let spec = cfg.model_spec(n, r);
                    let cell = format!("fig2b:N={n}:R={r}");
                    let started = Instant::now();
                    let run = capacity_cell(cfg, &spec, SimMode::Ideal, &settings, reals)?;
                    out.record(&cell, started, &run);
                    push_ipc_rows(&mut table, &spec, SimMode::Ideal, &run.results, settings.degree_max, "ideal")?;
                }
            }
            out.tables.push(table);
        }
        Task::Fig4a => {
            let t = scaling_table(cfg, &mut out, "fig4a", &[Scenario::Both])?;
            out.tables.push(t);
        }
        Task::Fig4b => {
            let t = scaling_table(cfg, &mut out, "fig4b", &Scenario::ALL)?;
            out.tables.push(t);
        }
        Task::Fig3b | Task::Fig3c | Task::Fig5 | Task::Snr => {
            let mut table = Table::new(task.name(), SNR_HEADER);
            let (n0, r0, m0) = (cfg.reservoir.n_modes, cfg.reservoir.reflectivity, cfg.reservoir.m_pulses);
            let cells: Vec<(usize, f64, usize)> = match task {
                Task::Fig3b => e.m_grid.iter().map(|&m| (n0, r0, m)).collect(),
                Task::Fig3c => e.r_grid.iter().map(|&r| (n0, r, m0)).collect(),
                Task::Fig5 => e.n_grid.iter().map(|&n| (n, r0, m0)).collect(),
                _ => vec![(n0, r0, m0)],
            };
            for (n, r, m) in cells {
                let spec = cfg.model_spec(n, r);
                let cell = format!("{}:N={n}:R={r}:M={m}", task.name());
                let curve = timed_snr(&mut out, &cell, &spec, master, reals, m, engine, &snr)?;
                push_snr_rows(&mut table, &spec, m, &curve)?;
            }
            out.tables.push(table);
        }
        Task::Ipc => {
            let spec = cfg.model_spec(cfg.reservoir.n_modes, cfg.reservoir.reflectivity);
            let mode = match cfg.reservoir.mode {
                Mode::Ideal => SimMode::Ideal,
                Mode::Ensemble => ensemble_mode(cfg, cfg.reservoir.m_pulses),
            };
            let settings = cfg.ipc_settings();
            let started = Instant::now();
            let run = capacity_cell(cfg, &spec, mode, &settings, reals)?;
            out.record("ipc", started, &run);
            let scenario = match cfg.reservoir.mode {
                Mode::Ideal => "ideal",
                Mode::Ensemble => "ensemble",
            };
            let mut t = Table::new("ipc", IPC_HEADER);
            push_ipc_rows(&mut t, &spec, mode, &run.results, settings.degree_max, scenario)?;
            let mut c = Table::new("ipc_linear_memory", CAPACITY_HEADER);
            push_capacity_rows(&mut c, &spec, mode, &run.results, settings.delay_max)?;
            out.tables.push(t);
            out.tables.push(c);
        }
        Task::Validate => {
            let reals = reals.max(20);
            out.realization_seeds = (0..reals).map(|i| realization_seed(master, i)).collect();
            let checks = validation_checks(cfg, reals, &mut out)?;
            let mut table = Table::new("validate", VALIDATE_HEADER);
            for c in &checks {
                table.push(vec![
                    c.name.as_str().into(),
                    c.passed.into(),
                    c.measured.into(),
                    c.expected.into(),
                    c.tolerance.into(),
                ])?;
            }
            out.checks_failed = checks.iter().any(|c| !c.passed);
            out.tables.push(table);
        }
    }
    Ok(out)
}

/// One line of the validation suite.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    pub expected: f64,
    pub tolerance: f64,
}

impl Check {
    /// Passes when `|measured − expected| ≤ tolerance`.
    pub fn abs(name: impl Into<String>, measured: f64, expected: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            passed: (measured - expected).abs() <= tolerance,
            measured,
            expected,
            tolerance,
        }
    }

    /// Passes when `|measured / expected − 1| ≤ tolerance`.
    pub fn rel(name: impl Into<String>, measured: f64, expected: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            passed: (measured / expected - 1.0).abs() <= tolerance,
            measured,
            expected,
            tolerance,
        }
    }

    /// Passes when `measured ≥ expected`.
    pub fn at_least(name: impl Into<String>, measured: f64, expected: f64) -> Self {
        Self {
            name: name.into(),
            passed: measured >= expected,
            measured,
            expected,
            tolerance: 0.0,
        }
    }
}

/// Symplecticity, echo state, noise scaling, delay decay and SNR line laws,
/// at the configured N and engine.
pub fn validation_checks(cfg: &RunConfig, reals: usize, out: &mut TaskOutput) -> Result<Vec<Check>> {
    let master = cfg.run.master_seed;
    let n = cfg.reservoir.n_modes;
    let r0 = cfg.reservoir.reflectivity;
    let engine = cfg.reservoir.engine;
    let snr = cfg.snr_settings();
    let e = &cfg.experiment;
    if e.m_grid.len() < 2 || e.r_grid.len() < 2 {
        return Err(Error::config(
            "experiment.m_grid",
            "validate needs at least two entries in m_grid and r_grid",
        ));
    }
    let mut checks = Vec::new();

    let started = Instant::now();
    let spec = cfg.model_spec(n, r0);
    let run = run_realizations(master, reals, |_, seed| {
        let model = spec.draw(seed)?;
        let p = model.params();
        let residual = model
            .s1()
            .residual()
            .max(model.s2().residual())
            .max(round_trip_symplectic(p)?.residual());
        let rho = verify_echo_state(p)?;
        Ok((residual, (rho - r0.sqrt()).abs()))
    })?;
    out.record("validate:symplectic", started, &run);
    let residual = run.results.iter().map(|v| v.0).fold(0.0, f64::max);
    let echo = run.results.iter().map(|v| v.1).fold(0.0, f64::max);
    checks.push(Check::abs("symplectic_residual", residual, 0.0, 1e-10));
    checks.push(Check::abs("echo_state_radius_minus_sqrt_r", echo, 0.0, 1e-8));

    let started = Instant::now();
    let m_values = [100, 1_000, 10_000];
    let ns = noise_scaling(&spec, master, reals, &m_values, engine, &snr)?;
    out.timings.push(Timing {
        label: "validate:noise_scaling".into(),
        seconds: started.elapsed().as_secs_f64(),
    });
    checks.push(Check::abs("noise_exponent", ns.fit.slope, -0.5, 0.1));

    let started = Instant::now();
    let decay = gamma_decay(&spec, master, reals, 15, snr.window)?;
    out.timings.push(Timing {
        label: "validate:gamma_decay".into(),
        seconds: started.elapsed().as_secs_f64(),
    });
    checks.push(Check::rel("gamma_decay_slope", decay.slope, r0.log10(), 0.02));
    checks.push(Check::at_least("gamma_decay_r_squared", decay.r_squared, 0.99));

    let (m_lo, m_hi) = (e.m_grid[0], e.m_grid[1]);
    let lo = timed_snr(out, "validate:snr_m_lo", &spec, master, reals, m_lo, engine, &snr)?;
    let hi = timed_snr(out, "validate:snr_m_hi", &spec, master, reals, m_hi, engine, &snr)?;
    checks.push(Check::abs(
        "snr_height_shift_m",
        hi.height - lo.height,
        predicted_shift_m(m_lo as f64, m_hi as f64)?,
        0.5,
    ));

    let (ra, rb) = (e.r_grid[0], e.r_grid[1]);
    let m = cfg.reservoir.m_pulses;
    let spec_a = cfg.model_spec(n, ra);
    let spec_b = cfg.model_spec(n, rb);
    let ca = timed_snr(out, "validate:snr_r_a", &spec_a, master, reals, m, engine, &snr)?;
    let cb = timed_snr(out, "validate:snr_r_b", &spec_b, master, reals, m, engine, &snr)?;
    checks.push(Check::abs(
        "snr_gamma1_shift_r",
        cb.snr_db[0] - ca.snr_db[0],
        predicted_shift_r(ra, rb)?,
        1.0,
    ));
    for (r, c) in [(ra, &ca), (rb, &cb)] {
        checks.push(Check::rel(format!("snr_slope_r{r}"), c.slope, predicted_slope_db(r), 0.05));
    }
    Ok(checks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::Cell;

    fn tiny() -> RunConfig {
        let mut c = RunConfig::default();
        c.run.realizations = 2;
        c.reservoir.n_modes = 2;
        c.reservoir.m_pulses = 500;
        c.reservoir.engine = Engine::Gram;
        c.readout.train_len = 300;
        c.readout.test_len = 150;
        c.readout.delay_max = 6;
        c.readout.degree_max = 2;
        c.experiment.n_grid = vec![2];
        c.experiment.r_grid = vec![0.5, 0.7];
        c.experiment.m_grid = vec![200, 2_000];
        c.experiment.snr_max_delay = 4;
        c.experiment.snr_window = 10;
        c.scaling.modes = vec![4, 5];
        c.scaling.base_m = Some(300);
        c
    }

    #[test]
    fn schedules_per_scenario() {
        let c = tiny();
        let r4 = 1.0 - 10.0 / 16.0;
        let r5 = 1.0 - 10.0 / 25.0;
        let m5 = (300.0 * (1.25f64).powi(6)).round() as usize;
        assert_eq!(Scenario::Constant.resources(&c, 5).unwrap(), (r4, 300));
        assert_eq!(Scenario::ROnly.resources(&c, 5).unwrap(), (r5, 300));
        assert_eq!(Scenario::MOnly.resources(&c, 5).unwrap(), (r4, m5));
        assert_eq!(Scenario::Both.resources(&c, 5).unwrap(), (r5, m5));
    }

    #[test]
    fn every_task_produces_its_table() {
        for task in Task::ALL {
            if task == Task::Validate {
                continue;
            }
            let mut c = tiny();
            c.run.task = task;
            let out = run_task(&c).unwrap();
            let t = &out.tables[0];
            let expected_header = match task {
                Task::Fig2a | Task::Fig3a => CAPACITY_HEADER,
                Task::Fig3b | Task::Fig3c | Task::Fig5 | Task::Snr => SNR_HEADER,
                _ => IPC_HEADER,
            };
            assert_eq!(t.header, expected_header, "{task:?}");
            assert!(!t.rows.is_empty(), "{task:?}");
            let rows = match task {
                Task::Fig2a => 2 * 7,
                Task::Fig3a => 2 * 2 * 7,
                Task::Fig2b => 2 * 2,
                Task::Fig4a => 2 * 2,
                Task::Fig4b => 2 * 4 * 2,
                Task::Fig3b | Task::Fig3c => 2 * 4,
                Task::Fig5 | Task::Snr => 4,
                Task::Ipc => 2,
                Task::Validate => unreachable!(),
            };
            assert_eq!(t.rows.len(), rows, "{task:?}");
        }
    }

    #[test]
    fn ideal_rows_leave_m_blank() {
        let mut c = tiny();
        c.run.task = Task::Fig2a;
        let out = run_task(&c).unwrap();
        assert_eq!(out.tables[0].rows[0][2], Cell::Blank);
        c.run.task = Task::Fig3a;
        let out = run_task(&c).unwrap();
        assert_eq!(out.tables[0].rows[0][2], Cell::Int(200));
    }

    #[test]
    fn same_seed_same_tables() {
        let mut c = tiny();
        c.run.task = Task::Fig3b;
        let a = run_task(&c).unwrap();
        let b = run_task(&c).unwrap();
        assert_eq!(a.tables, b.tables);
        c.run.master_seed = 1;
        assert_ne!(run_task(&c).unwrap().tables, a.tables);
    }

    #[test]
    fn capacity_bounded_and_memory_decays() {
        let c = tiny();
        let spec = c.model_spec(2, 0.5);
        let rep = capacity_realization(&spec, 3, SimMode::Ideal, 2000, 1000, &c.ipc_settings()).unwrap();
        for v in rep.entries.values() {
            assert!((0.0..=1.0 + 1e-12).contains(v));
        }
        let mem = rep.linear_memory();
        assert!(mem[1] > mem[6]);
        assert!(rep.normalized_ipc <= 1.0 + 1e-9);
    }
}
