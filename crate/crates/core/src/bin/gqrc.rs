use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use gqrc_core::analysis::experiment::run_task;
use gqrc_core::config::{RunConfig, Task};
use gqrc_core::io::{write_manifest, write_tables, RunManifest};
use gqrc_core::Result;

/// Gaussian quantum reservoir simulator: figure datasets, capacity and SNR runs.
#[derive(Debug, Parser)]
#[command(name = "gqrc", version)]
struct Cli {
    /// fig2a, fig2b, fig3a, fig3b, fig3c, fig4a, fig4b, fig5, ipc, snr or validate
    task: String,
    /// TOML configuration file; defaults are used for anything it leaves out
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed (overrides run.master_seed)
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides run.output_dir)
    #[arg(long)]
    out: Option<PathBuf>,
    /// section.key=value, applied after the config file; repeatable
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn run(cli: Cli) -> Result<i32> {
    let task: Task = cli.task.parse()?;
    let mut overrides = cli.overrides;
    overrides.push(format!("run.task=\"{}\"", task.name()));
    if let Some(seed) = cli.seed {
        overrides.push(format!("run.master_seed={seed}"));
    }
    let mut cfg = RunConfig::load(cli.config.as_deref(), &overrides)?;
    if let Some(out) = cli.out {
        cfg.run.output_dir = out;
    }

    let output = run_task(&cfg)?;
    let dir = cfg.run.output_dir.clone();
    let files = write_tables(&dir, &output.tables)?;
    let status = if output.checks_failed { 1 } else { 0 };
    let manifest = RunManifest {
        software: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        task: task.name().into(),
        master_seed: cfg.run.master_seed,
        config: cfg.to_toml_string(),
        realization_seeds: output.realization_seeds,
        files,
        timings: output.timings,
        failures: output.failures,
        exit_status: status,
    };
    let path = write_manifest(&dir, task.name(), &manifest)?;
    for f in &manifest.files {
        eprintln!("wrote {} ({} rows)", dir.join(&f.file).display(), f.rows);
    }
    eprintln!("wrote {}", path.display());
    if task == Task::Validate {
        for t in &output.tables {
            print!("{}", t.to_csv());
        }
        if output.checks_failed {
            eprintln!("validation: some checks failed");
        }
    }
    Ok(status)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("gqrc: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
