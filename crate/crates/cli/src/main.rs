//! `batchlens` — experiment presets for the single-neuron autoencoder
//! simulator. See `batchlens --help` for the preset list.

mod args;
mod emit;
mod manifest;
mod presets;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Preset};
use presets::CliError;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(k) = cli.parallel {
        // Worker count never changes outputs, only wall time.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(k).build_global();
    }
    let out_dir = cli
        .out_dir
        .or_else(|| std::env::var_os("BATCHLENS_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));

    let result = match &cli.preset {
        Preset::Fig2(a) => presets::fig2(a, &out_dir),
        Preset::LandscapeGrid(a) => presets::landscape_grid(a, &out_dir),
        Preset::SgdEnsemble(a) => presets::sgd_ensemble(a, &out_dir),
        Preset::RwStats(a) => presets::rw_stats(a, &out_dir),
        Preset::CsgdScan(a) => presets::csgd_scan(a, &out_dir),
        Preset::CossimStats(a) => presets::cossim_stats(a, &out_dir),
        Preset::Sharpness(a) => presets::sharpness(a, &out_dir),
    };

    match result {
        Ok(manifest) if manifest.all_pass => ExitCode::from(0),
        Ok(_) => ExitCode::from(1),
        Err(CliError::Setup(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Io(e)) => {
            eprintln!("i/o error: {e}");
            ExitCode::from(3)
        }
    }
}
