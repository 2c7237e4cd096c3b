//! Command-line grammar: `batchlens <preset> [--key=value]...`.

use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "batchlens",
    version,
    about = "Single-neuron autoencoder training dynamics: presets, observables, and checks",
    after_help = "Outputs land in --out-dir (default: $BATCHLENS_OUT, else ./out).\n\
                  Exit codes: 0 all checks passed, 1 a check failed, 2 usage error, 3 I/O error."
)]
pub struct Cli {
    /// Output directory for CSV/JSON artifacts
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Worker threads for ensemble presets (outputs are identical for any value)
    #[arg(long, global = true)]
    pub parallel: Option<usize>,
    #[command(subcommand)]
    pub preset: Preset,
}

#[derive(Subcommand)]
pub enum Preset {
    /// GD vs b=1 SGD trajectories from w0 = (0.1, 0.08) on the 2-D standard dataset
    Fig2(Fig2Args),
    /// ReLU loss surface on a grid over [0, 1.2]^2 (m = n = 2)
    LandscapeGrid(LandscapeArgs),
    /// Uniform mini-batch SGD ensemble checked against the limit characterization
    SgdEnsemble(EnsembleArgs),
    /// Log-ratio random-walk increment statistics and bound checks
    RwStats(EnsembleArgs),
    /// Cyclic-SGD invariant-region scan plus convergence runs (m = n = 2)
    CsgdScan(CsgdArgs),
    /// Limiting cosine similarities of GD vs SGD across problem sizes
    CossimStats(CossimArgs),
    /// Max- and trace-curvature reports at canonical global minima
    Sharpness(SharpnessArgs),
}

/// Inserts the flags that were explicitly provided into a string map (the
/// manifest echoes exactly what the user overrode).
macro_rules! overrides {
    ($self:ident, $($field:ident),+ $(,)?) => {{
        let mut map = BTreeMap::new();
        $(
            if let Some(v) = &$self.$field {
                map.insert(stringify!($field).replace('_', "-"), format!("{v:?}").trim_matches('"').to_string());
            }
        )+
        map
    }};
}

#[derive(Args)]
pub struct Fig2Args {
    /// Step size (default 1/8)
    #[arg(long)]
    pub eta: Option<f64>,
    /// Maximum steps per run
    #[arg(long)]
    pub steps: Option<usize>,
    /// Seed for the SGD batch stream
    #[arg(long)]
    pub seed: Option<u64>,
    /// Record stride
    #[arg(long)]
    pub stride: Option<usize>,
    /// Add c_1..c_n coordinate columns to the CSVs
    #[arg(long)]
    pub dump_coords: bool,
}

impl Fig2Args {
    pub fn overrides(&self) -> BTreeMap<String, String> {
        let mut map = overrides!(self, eta, steps, seed, stride);
        if self.dump_coords {
            map.insert("dump-coords".into(), "true".into());
        }
        map
    }
}

#[derive(Args)]
pub struct LandscapeArgs {
    /// Grid points per axis (default 101)
    #[arg(long)]
    pub grid: Option<usize>,
}

impl LandscapeArgs {
    pub fn overrides(&self) -> BTreeMap<String, String> {
        overrides!(self, grid)
    }
}

#[derive(Args)]
pub struct EnsembleArgs {
    /// Ambient dimension (default 10)
    #[arg(long)]
    pub n: Option<usize>,
    /// Training-set size (default 8)
    #[arg(long)]
    pub m: Option<usize>,
    /// Mini-batch size (default 1)
    #[arg(long)]
    pub b: Option<usize>,
    /// Step size (default 0.2)
    #[arg(long)]
    pub eta: Option<f64>,
    /// Number of seeds (default 100)
    #[arg(long)]
    pub seeds: Option<u64>,
    /// Maximum steps per run (default 200000)
    #[arg(long)]
    pub horizon: Option<usize>,
    /// Initialization scale (default 0.5)
    #[arg(long)]
    pub sigma_init: Option<f64>,
    /// Base seed (default 0)
    #[arg(long)]
    pub seed: Option<u64>,
    /// Activation: linear or relu (default linear)
    #[arg(long)]
    pub activation: Option<String>,
}

impl EnsembleArgs {
    pub fn overrides(&self) -> BTreeMap<String, String> {
        overrides!(self, n, m, b, eta, seeds, horizon, sigma_init, seed, activation)
    }
}

#[derive(Args)]
pub struct CsgdArgs {
    /// Scan grid size per axis (default 256)
    #[arg(long)]
    pub grid: Option<usize>,
    /// Step size (default 1/4)
    #[arg(long)]
    pub eta: Option<f64>,
    /// Number of convergence runs (default 50)
    #[arg(long)]
    pub inits: Option<usize>,
    /// Seed for drawing initializations
    #[arg(long)]
    pub seed: Option<u64>,
}

impl CsgdArgs {
    pub fn overrides(&self) -> BTreeMap<String, String> {
        overrides!(self, grid, eta, inits, seed)
    }
}

#[derive(Args)]
pub struct CossimArgs {
    /// Problem sizes n = m, comma separated (default 64,256,1024)
    #[arg(long, value_delimiter = ',')]
    pub sizes: Option<Vec<usize>>,
    /// Seeds per size and strategy (default 50)
    #[arg(long)]
    pub seeds: Option<usize>,
    /// Initialization scale (default 0.5)
    #[arg(long)]
    pub sigma_init: Option<f64>,
    /// Step size (default 0.2)
    #[arg(long)]
    pub eta: Option<f64>,
    /// Base seed (default 9000)
    #[arg(long)]
    pub seed: Option<u64>,
}

impl CossimArgs {
    pub fn overrides(&self) -> BTreeMap<String, String> {
        overrides!(self, sizes, seeds, sigma_init, eta, seed)
    }
}

#[derive(Args)]
pub struct SharpnessArgs {
    /// Monte Carlo trace samples (default 100000)
    #[arg(long)]
    pub samples: Option<usize>,
    /// One-sided finite-difference step (default 1e-4)
    #[arg(long)]
    pub h: Option<f64>,
    /// Seed for direction sampling (default 11)
    #[arg(long)]
    pub seed: Option<u64>,
    /// Random unit directions for the curvature bound (default 10000)
    #[arg(long)]
    pub dirs: Option<usize>,
}

impl SharpnessArgs {
    pub fn overrides(&self) -> BTreeMap<String, String> {
        overrides!(self, samples, h, seed, dirs)
    }
}
