//! Runs a spec's replicates in parallel and writes their logs.

use std::path::{Path, PathBuf};

use fairfed_core::engine::{self, RunOutput};
use rayon::prelude::*;

use crate::config::RunSpec;
use crate::error::Result;
use crate::output;

/// Output directory of replicate `r`: `out` itself for single-replicate runs.
pub fn replicate_dir(out: &Path, replicates: usize, r: usize) -> PathBuf {
    if replicates == 1 {
        out.to_path_buf()
    } else {
        out.join(format!("replicate_{r:03}"))
    }
}

/// Runs every replicate without touching the filesystem.
pub fn run_replicates(spec: &RunSpec, base_dir: &Path) -> Result<Vec<RunOutput>> {
    let configs = (0..spec.replicates)
        .map(|r| spec.resolve(r, base_dir))
        .collect::<Result<Vec<_>>>()?;
    configs
        .par_iter()
        .map(|cfg| engine::run(cfg).map_err(Into::into))
        .collect()
}

/// Runs and writes each replicate under `out`. Replicates are written only
/// after all of them finished.
pub fn run_to_dir(spec: &RunSpec, base_dir: &Path, out: &Path) -> Result<Vec<RunOutput>> {
    let outputs = run_replicates(spec, base_dir)?;
    for (r, o) in outputs.iter().enumerate() {
        output::write_run(&replicate_dir(out, spec.replicates, r), o)?;
    }
    Ok(outputs)
}
