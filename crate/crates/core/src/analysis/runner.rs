//! Parallel realizations with derived seeds and a single resample on
//! numerical failure.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::seed::{realization_seed, resample_seed};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Resample {
    pub index: usize,
    pub seed: u64,
    pub new_seed: u64,
    pub error: String,
}

/// A resample tagged with the experiment cell it happened in.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Failure {
    pub cell: String,
    #[serde(flatten)]
    pub resample: Resample,
}

#[derive(Debug, Clone)]
pub struct RunOutcome<T> {
    pub results: Vec<T>,
    pub seeds: Vec<u64>,
    pub resampled: Vec<Resample>,
}

/// Runs `f(index, seed)` for `n` realizations of `master`.
///
/// A realization that fails with a numerical error is redrawn once with
/// [`resample_seed`]; any other error, or a second failure, aborts the run.
pub fn run_realizations<T, F>(master: u64, n: usize, f: F) -> Result<RunOutcome<T>>
where
    T: Send,
    F: Fn(usize, u64) -> Result<T> + Sync,
{
    if n == 0 {
        return Err(Error::config("run.realizations", "must be >= 1"));
    }
    let raw: Vec<Result<(T, u64, Option<Resample>)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let seed = realization_seed(master, i);
            match f(i, seed) {
                Ok(v) => Ok((v, seed, None)),
                Err(Error::Numerical(msg)) => {
                    let new_seed = resample_seed(seed);
                    let v = f(i, new_seed).map_err(|e| {
                        Error::Numerical(format!(
                            "realization {i} failed twice (seed {seed:#x}: {msg}; seed {new_seed:#x}: {e})"
                        ))
                    })?;
                    Ok((
                        v,
                        new_seed,
                        Some(Resample {
                            index: i,
                            seed,
                            new_seed,
                            error: msg,
                        }),
                    ))
                }
                Err(e) => Err(e),
            }
        })
        .collect();
    let mut out = RunOutcome {
        results: Vec::with_capacity(n),
        seeds: Vec::with_capacity(n),
        resampled: Vec::new(),
    };
    for r in raw {
        let (v, seed, resample) = r?;
        out.results.push(v);
        out.seeds.push(seed);
        out.resampled.extend(resample);
    }
    Ok(out)
}
