//! The experiment presets.
//!
//! Each preset runs its workload, writes the data files plus
//! `<preset>_manifest.json` / `<preset>_checks.json` into the output
//! directory, and returns the manifest; the process exit code is 0 only if
//! every named check passed.

use std::collections::BTreeMap;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use batchlens::basis_data::{gaussian_init, OrthoDataset};
use batchlens::dynamics::{
    run_training, Activation, BatchStrategy, RunSummary, TrainConfig, TrainOutcome,
};
use batchlens::landscape::{
    curvature_analytic, global_min_check, loss_rewritten, sharpness_report,
};
use batchlens::observables::{
    cossim_statistics, csgd_region_scan, gd_invariant_residual, increment_stats,
    predicted_gd_limit, IncrementStats, LimitLabel,
};
use batchlens::Error as CoreError;

use crate::args;
use crate::emit::{emit_grid_csv, emit_json, emit_rows_csv, emit_trajectory_csv};
use crate::manifest::{Check, ChecksFile, RunEntry, RunManifest, SCHEMA_VERSION};

pub enum CliError {
    /// Filesystem problem: exit 3.
    Io(io::Error),
    /// Invalid experiment configuration: exit 2.
    Setup(String),
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Io(e)
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        CliError::Setup(e.to_string())
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Gaussian init rescaled strictly inside the unit ball.
fn unit_ball_init(n: usize, sigma: f64, seed: u64) -> Result<Vec<f64>> {
    let mut w = gaussian_init::<f64>(n, sigma, seed)?;
    let norm = dot(&w, &w).sqrt();
    if norm >= 0.95 {
        let s = 0.9 / norm;
        for x in w.iter_mut() {
            *x *= s;
        }
    }
    Ok(w)
}

/// Boundedness checks aggregated over a set of runs (eta <= 1/5 regime).
fn bounds_checks(runs: &[(f64, bool, &RunSummary<f64>)]) -> Vec<Check> {
    let mut norm_ok = true;
    let mut sign_ok = true;
    let mut coord_ok = true;
    let mut psi_ok = true;
    let mut floor_ok = true;
    let mut nscript_ok = true;
    for (eta, full_batch, summary) in runs {
        let b = &summary.bounds;
        norm_ok &= b.norm_bound_ok(*eta);
        sign_ok &= b.sign_stable;
        coord_ok &= b.coord_bound_ok();
        psi_ok &= b.psi_monotone_ok();
        floor_ok &= b.phi_floor_ok();
        if *full_batch {
            nscript_ok &= b.nscript_ok();
        }
    }
    let n = runs.len();
    vec![
        Check::new("bounds_norm", norm_ok, format!("{n} runs, ||w||^2 <= 1 + eta/4")),
        Check::new("bounds_sign_stability", sign_ok, format!("{n} runs")),
        Check::new("bounds_coordinates", coord_ok, format!("{n} runs, |c| < 1")),
        Check::new("bounds_psi_monotone", psi_ok, format!("{n} runs")),
        Check::new("bounds_phi_floor", floor_ok, format!("{n} runs")),
        Check::new("bounds_nscript", nscript_ok, "full-batch runs only"),
    ]
}

struct PresetSink {
    preset: &'static str,
    out_dir: PathBuf,
    overrides: BTreeMap<String, String>,
    started: Instant,
}

impl PresetSink {
    fn new(
        preset: &'static str,
        out_dir: &Path,
        overrides: BTreeMap<String, String>,
    ) -> Result<Self> {
        std::fs::create_dir_all(out_dir)?;
        Ok(Self {
            preset,
            out_dir: out_dir.to_path_buf(),
            overrides,
            started: Instant::now(),
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    fn finish(
        self,
        seeds: Vec<u64>,
        runs: Vec<RunEntry>,
        checks: Vec<Check>,
    ) -> Result<RunManifest> {
        let all_pass = checks.iter().all(|c| c.pass);
        let checks_file = ChecksFile {
            schema_version: SCHEMA_VERSION,
            preset: self.preset.to_string(),
            checks: checks.clone(),
            all_pass,
        };
        emit_json(
            &self.path(&format!("{}_checks.json", self.preset)),
            &checks_file,
        )?;
        let manifest_path = self.path(&format!("{}_manifest.json", self.preset));
        let manifest = RunManifest {
            schema_version: SCHEMA_VERSION,
            preset: self.preset.to_string(),
            overrides: self.overrides,
            seeds,
            runs,
            checks,
            all_pass,
            wall_time_ms: self.started.elapsed().as_millis() as u64,
        };
        emit_json(&manifest_path, &manifest)?;
        for check in &manifest.checks {
            eprintln!(
                "[{}] {}: {} ({})",
                manifest.preset,
                check.name,
                if check.pass { "PASS" } else { "FAIL" },
                check.detail
            );
        }
        Ok(manifest)
    }
}

// ------------------------------------------------------------------- fig2

pub fn fig2(a: &args::Fig2Args, out_dir: &Path) -> Result<RunManifest> {
    let sink = PresetSink::new("fig2", out_dir, a.overrides())?;
    let eta = a.eta.unwrap_or(0.125);
    let steps = a.steps.unwrap_or(20_000);
    let seed = a.seed.unwrap_or(0);
    let stride = a.stride.unwrap_or(1);
    let ds = OrthoDataset::<f64>::standard(2, 2)?;
    let w0 = [0.1, 0.08];

    let mut cfg = TrainConfig::new(Activation::Linear, eta, BatchStrategy::Full);
    cfg.max_steps = steps;
    cfg.conv_tol = 1e-9;
    cfg.record_stride = stride;
    cfg.dump_coords = true;
    let gd = run_training(&ds, &w0, &cfg).map_err(setup)?;

    cfg.strategy = BatchStrategy::Uniform { b: 1 };
    cfg.seed = seed;
    let sgd = run_training(&ds, &w0, &cfg).map_err(setup)?;

    fn columns(dump: bool, out: &TrainOutcome<f64>) -> Option<&[Vec<f64>]> {
        if dump {
            out.coord_snapshots.as_deref()
        } else {
            None
        }
    }
    emit_trajectory_csv(
        &sink.path("fig2_gd.csv"),
        &gd.trajectory,
        columns(a.dump_coords, &gd),
    )?;
    emit_trajectory_csv(
        &sink.path("fig2_sgd_b1.csv"),
        &sgd.trajectory,
        columns(a.dump_coords, &sgd),
    )?;

    let predicted = predicted_gd_limit(&ds, &w0, Activation::Linear).map_err(setup)?;
    let gd_err = max_abs_diff(&ds.to_ambient(&gd.final_state).map_err(setup)?, &predicted);
    let residual =
        gd_invariant_residual(gd.coord_snapshots.as_ref().unwrap(), 2).map_err(setup)?;
    let max_dr = gd.trajectory[..gd.trajectory.len() - 1]
        .iter()
        .filter(|r| r.delta_r.is_finite())
        .map(|r| r.delta_r.abs())
        .fold(0.0, f64::max);
    let sgd_datapoint = matches!(
        sgd.summary.label,
        LimitLabel::Datapoint { sign: 1, .. }
    );

    let mut checks = vec![
        Check::new(
            "gd_limit_matches_projected_init",
            gd_err < 1e-6,
            format!("max err {gd_err:.2e}"),
        ),
        Check::new(
            "gd_invariant_residual",
            residual < 1e-10,
            format!("residual {residual:.2e}"),
        ),
        Check::new(
            "gd_log_ratio_constant",
            max_dr < 1e-12,
            format!("max |dR| {max_dr:.2e}"),
        ),
        Check::new(
            "sgd_reaches_positive_datapoint",
            sgd_datapoint,
            format!("{:?}", sgd.summary.label),
        ),
    ];
    checks.extend(bounds_checks(&[
        (eta, true, &gd.summary),
        (eta, false, &sgd.summary),
    ]));

    let runs = vec![
        RunEntry::from_summary("gd", 0, &gd.summary),
        RunEntry::from_summary("sgd_b1", seed, &sgd.summary),
    ];
    sink.finish(vec![seed], runs, checks)
}

// -------------------------------------------------------------- landscape

pub fn landscape_grid(a: &args::LandscapeArgs, out_dir: &Path) -> Result<RunManifest> {
    let sink = PresetSink::new("landscape_grid", out_dir, a.overrides())?;
    let grid = a.grid.unwrap_or(101);
    if grid < 2 {
        return Err(CliError::Setup("grid must be at least 2".into()));
    }
    let ds = OrthoDataset::<f64>::standard(2, 2)?;
    let span = 1.2;
    let mut rows = Vec::with_capacity(grid * grid);
    let mut best = (f64::INFINITY, 0.0, 0.0);
    let mut form_gap = 0.0f64;
    for i in 0..grid {
        for j in 0..grid {
            let w1 = span * i as f64 / (grid - 1) as f64;
            let w2 = span * j as f64 / (grid - 1) as f64;
            let w = [w1, w2];
            let loss = loss_rewritten(&ds, &w).map_err(setup)?;
            let direct =
                batchlens::dynamics::objective_loss(&ds, &w, Activation::Relu).map_err(setup)?;
            form_gap = form_gap.max((loss - direct).abs());
            if loss < best.0 {
                best = (loss, w1, w2);
            }
            rows.push((w1, w2, loss));
        }
    }
    emit_grid_csv(&sink.path("landscape_grid.csv"), &rows)?;

    let (min_loss, w1, w2) = best;
    let radius = (w1 * w1 + w2 * w2).sqrt();
    let checks = vec![
        Check::new(
            "grid_min_matches_global_value",
            (min_loss - 0.25).abs() < 1e-3,
            format!("min {min_loss:.6} at ({w1:.3}, {w2:.3})"),
        ),
        Check::new(
            "grid_min_on_quarter_circle",
            (radius - 1.0).abs() < 0.05 && w1 >= 0.0 && w2 >= 0.0,
            format!("|w| = {radius:.4}"),
        ),
        Check::new(
            "loss_forms_agree",
            form_gap < 1e-12,
            format!("max gap {form_gap:.2e}"),
        ),
    ];
    sink.finish(vec![], vec![], checks)
}

// ------------------------------------------------------------- ensembles

/// (seed, w0, outcome); a diverged run carries its failing step.
type EnsembleRunResult = (u64, Vec<f64>, std::result::Result<TrainOutcome<f64>, usize>);

struct EnsembleSpec {
    n: usize,
    m: usize,
    b: usize,
    eta: f64,
    seeds: u64,
    horizon: usize,
    sigma: f64,
    base_seed: u64,
    activation: Activation,
}

impl EnsembleSpec {
    fn from_args(a: &args::EnsembleArgs) -> Result<Self> {
        let activation = match a.activation.as_deref() {
            None | Some("linear") => Activation::Linear,
            Some("relu") => Activation::Relu,
            Some(other) => {
                return Err(CliError::Setup(format!(
                    "unknown activation {other:?} (expected linear or relu)"
                )))
            }
        };
        Ok(EnsembleSpec {
            n: a.n.unwrap_or(10),
            m: a.m.unwrap_or(8),
            b: a.b.unwrap_or(1),
            eta: a.eta.unwrap_or(0.2),
            seeds: a.seeds.unwrap_or(100),
            horizon: a.horizon.unwrap_or(200_000),
            sigma: a.sigma_init.unwrap_or(0.5),
            base_seed: a.seed.unwrap_or(0),
            activation,
        })
    }

    fn run(&self) -> Result<Vec<EnsembleRunResult>> {
        let ds = OrthoDataset::<f64>::standard(self.n, self.m)?;
        BatchStrategy::Uniform { b: self.b }.validate(self.m)?;
        let seeds: Vec<u64> = (0..self.seeds).map(|k| self.base_seed.wrapping_add(k)).collect();
        // Ensure the positive set is nonempty for ReLU runs (deterministic
        // reseeding on rejection).
        let inits: Vec<(u64, Vec<f64>)> = seeds
            .iter()
            .map(|&seed| {
                let mut s = seed;
                let mut w0 = unit_ball_init(self.n, self.sigma, s)?;
                if self.activation == Activation::Relu {
                    while !w0[..self.m].iter().any(|&c| c > 0.0) {
                        s = s.wrapping_add(1 << 40);
                        w0 = unit_ball_init(self.n, self.sigma, s)?;
                    }
                }
                Ok((seed, w0))
            })
            .collect::<Result<_>>()?;
        let runs: Vec<_> = inits
            .into_par_iter()
            .map(|(seed, w0)| {
                let mut cfg = TrainConfig::new(
                    self.activation,
                    self.eta,
                    BatchStrategy::Uniform { b: self.b },
                );
                cfg.seed = seed;
                cfg.conv_tol = 1e-8;
                cfg.max_steps = self.horizon;
                let out = match run_training(&ds, &w0, &cfg) {
                    Ok(out) => Ok(out),
                    Err(CoreError::Divergence { step }) => Err(step),
                    Err(other) => panic!("unexpected run error: {other}"),
                };
                (seed, w0, out)
            })
            .collect();
        Ok(runs)
    }
}

pub fn sgd_ensemble(a: &args::EnsembleArgs, out_dir: &Path) -> Result<RunManifest> {
    let sink = PresetSink::new("sgd_ensemble", out_dir, a.overrides())?;
    let spec = EnsembleSpec::from_args(a)?;
    let results = spec.run()?;

    let mut entries = Vec::new();
    let mut diverged = 0usize;
    let mut all_datapoints = true;
    let mut signs_match = true;
    let mut aligned = true;
    let mut psi_small = true;
    let mut norm_near_one = true;
    let mut bounds_input = Vec::new();
    for (seed, w0, out) in &results {
        match out {
            Err(step) => {
                diverged += 1;
                entries.push(RunEntry::diverged(format!("seed{seed}"), *seed, *step));
            }
            Ok(out) => {
                let s = &out.summary;
                entries.push(RunEntry::from_summary(format!("seed{seed}"), *seed, s));
                match s.label {
                    LimitLabel::Datapoint { index, sign } => {
                        let expected_positive = w0[index] > 0.0;
                        signs_match &= (sign == 1) == expected_positive;
                        if spec.activation == Activation::Relu {
                            signs_match &= sign == 1 && expected_positive;
                        }
                        aligned &= out.final_state.coords[index].abs() >= 1.0 - 1e-6;
                    }
                    _ => all_datapoints = false,
                }
                psi_small &= s.final_psi < 1e-8;
                norm_near_one &= s.final_norm_sq >= 1.0 - 1e-6;
                bounds_input.push((spec.eta, false, s));
            }
        }
    }

    // Sample trajectory for the first seed.
    if let Some((seed, _, Ok(out))) = results.first() {
        emit_trajectory_csv(
            &sink.path(&format!("sgd_ensemble_seed{seed}.csv")),
            &out.trajectory,
            None,
        )?;
    }

    let mut checks = vec![
        Check::new("no_divergence", diverged == 0, format!("{diverged} diverged")),
        Check::new(
            "all_runs_reach_datapoints",
            all_datapoints && diverged == 0,
            format!("{} runs", results.len()),
        ),
        Check::new("limit_signs_match_init", signs_match, "sign(c_0(i*))"),
        Check::new("final_alignment", aligned, "|c(i*)| >= 1 - 1e-6"),
        Check::new("final_psi_vanishes", psi_small, "Psi < 1e-8"),
        Check::new("final_norm_at_least_one", norm_near_one, "||w||^2 >= 1 - 1e-6"),
    ];
    let bounds_refs: Vec<(f64, bool, &RunSummary<f64>)> =
        bounds_input.iter().map(|(e, f, s)| (*e, *f, *s)).collect();
    checks.extend(bounds_checks(&bounds_refs));

    let seeds = results.iter().map(|(s, _, _)| *s).collect();
    sink.finish(seeds, entries, checks)
}

// --------------------------------------------------------------- rw-stats

pub fn rw_stats(a: &args::EnsembleArgs, out_dir: &Path) -> Result<RunManifest> {
    let sink = PresetSink::new("rw_stats", out_dir, a.overrides())?;
    let spec = EnsembleSpec::from_args(a)?;
    if spec.activation != Activation::Linear {
        return Err(CliError::Setup(
            "rw-stats analyzes linear-activation runs".into(),
        ));
    }
    let results = spec.run()?;

    let mut entries = Vec::new();
    let mut stats: Vec<(u64, IncrementStats<f64>)> = Vec::new();
    let mut rows = Vec::new();
    for (seed, _, out) in &results {
        let out = match out {
            Ok(out) => out,
            Err(step) => {
                entries.push(RunEntry::diverged(format!("seed{seed}"), *seed, *step));
                continue;
            }
        };
        entries.push(RunEntry::from_summary(format!("seed{seed}"), *seed, &out.summary));
        let window_start = out.summary.steps / 2;
        let s = increment_stats(&out.trajectory, spec.eta, spec.m, spec.b, window_start)
            .map_err(setup)?;
        rows.push(format!(
            "{seed},{},{},{},{},{},{},{},{},{},{}",
            out.summary.steps,
            s.window_start,
            s.n_hit,
            s.n_miss,
            s.mean_dr_hit,
            s.mean_dr_miss,
            s.mean_dr_all,
            s.se_all,
            s.min_dr_hit,
            s.max_abs_dr,
        ));
        stats.push((*seed, s));
    }
    emit_rows_csv(
        &sink.path("rw_stats.csv"),
        "seed,steps,window_start,n_hit,n_miss,mean_dr_hit,mean_dr_miss,mean_dr_all,se_all,min_dr_hit,max_abs_dr",
        &rows,
    )?;

    if stats.is_empty() {
        return Err(CliError::Setup("no usable runs for statistics".into()));
    }
    let bounds = &stats[0].1;
    let (hit_bound, k_bound) = (bounds.hit_bound, bounds.k_bound);
    let (drift_bound, drift_second) = (bounds.drift_bound, bounds.drift_bound_second_order);
    let min_hit = stats
        .iter()
        .map(|(_, s)| s.min_dr_hit)
        .fold(f64::INFINITY, f64::min);
    let max_abs = stats.iter().map(|(_, s)| s.max_abs_dr).fold(0.0, f64::max);

    // Pooled mean and standard error across all windows.
    let mut n_total = 0.0f64;
    let mut sum = 0.0f64;
    let mut sum_sq = 0.0f64;
    for (_, s) in &stats {
        let n = (s.n_hit + s.n_miss) as f64;
        let var = s.se_all * s.se_all * n;
        sum += s.mean_dr_all * n;
        sum_sq += var * (n - 1.0) + n * s.mean_dr_all * s.mean_dr_all;
        n_total += n;
    }
    let mean = sum / n_total;
    let se = (((sum_sq - n_total * mean * mean) / (n_total - 1.0)) / n_total).sqrt();

    // Full-batch control from the first initialization.
    let ds = OrthoDataset::<f64>::standard(spec.n, spec.m)?;
    let w0 = unit_ball_init(spec.n, spec.sigma, spec.base_seed)?;
    let mut cfg = TrainConfig::new(Activation::Linear, spec.eta, BatchStrategy::Full);
    cfg.conv_tol = 1e-12;
    cfg.max_steps = 2000;
    let control = run_training(&ds, &w0, &cfg).map_err(setup)?;
    let control_max = control.trajectory[..control.trajectory.len() - 1]
        .iter()
        .filter(|r| r.delta_r.is_finite())
        .map(|r| r.delta_r.abs())
        .fold(0.0, f64::max);

    let checks = vec![
        Check::new(
            "hit_step_floor",
            min_hit >= hit_bound - 1e-10,
            format!("min hit dR {min_hit:.6} vs log(1+0.95*eta) = {hit_bound:.6}"),
        ),
        Check::new(
            "increment_bound",
            max_abs <= k_bound + 1e-10,
            format!("max |dR| {max_abs:.6} vs K = {k_bound:.6}"),
        ),
        Check::new(
            "pooled_drift_first_order",
            mean >= drift_bound - 3.0 * se,
            format!(
                "pooled mean {mean:.6} (se {se:.6}) vs eta*b*(m-b)^2/(2m(m-1)^2) = {drift_bound:.6}"
            ),
        ),
        Check::new(
            "pooled_drift_second_order",
            mean >= drift_second - 3.0 * se,
            format!("pooled mean {mean:.6} (se {se:.6}) vs eta^2 variant = {drift_second:.6}"),
        ),
        Check::new(
            "full_batch_control",
            control_max < 1e-12,
            format!("max |dR| {control_max:.2e}"),
        ),
    ];

    let seeds = results.iter().map(|(s, _, _)| *s).collect();
    sink.finish(seeds, entries, checks)
}

// -------------------------------------------------------------- csgd-scan

#[derive(Serialize)]
struct ScanJson {
    grid_size: usize,
    eta: f64,
    points_checked: usize,
    potential_violations: usize,
    invariance_violations: usize,
    min_potential_drop: f64,
}

pub fn csgd_scan(a: &args::CsgdArgs, out_dir: &Path) -> Result<RunManifest> {
    let sink = PresetSink::new("csgd_scan", out_dir, a.overrides())?;
    let grid = a.grid.unwrap_or(256);
    let eta = a.eta.unwrap_or(0.25);
    let inits = a.inits.unwrap_or(50);
    let base_seed = a.seed.unwrap_or(0);

    let report = csgd_region_scan::<f64>(grid, eta).map_err(setup)?;
    emit_json(
        &sink.path("csgd_scan.json"),
        &ScanJson {
            grid_size: report.grid_size,
            eta: report.eta,
            points_checked: report.points_checked,
            potential_violations: report.potential_violations,
            invariance_violations: report.invariance_violations,
            min_potential_drop: report.min_potential_drop,
        },
    )?;

    // Convergence runs from y0 >= z0 > 0, ||w0|| < 1.
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    let ds = OrthoDataset::<f64>::standard(2, 2)?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(base_seed);
    let mut entries = Vec::new();
    let mut reached = 0usize;
    for k in 0..inits {
        let (y0, z0) = loop {
            let a: f64 = rng.gen_range(0.01..0.99);
            let b: f64 = rng.gen_range(0.01..0.99);
            let (y, z) = if a >= b { (a, b) } else { (b, a) };
            if y * y + z * z < 1.0 {
                break (y, z);
            }
        };
        let mut cfg = TrainConfig::new(Activation::Linear, eta, BatchStrategy::Cyclic);
        cfg.conv_tol = 1e-9;
        cfg.max_steps = 100_000;
        let out = run_training(&ds, &[y0, z0], &cfg).map_err(setup)?;
        if max_abs_diff(&out.final_state.coords, &[1.0, 0.0]) < 1e-6 {
            reached += 1;
        }
        entries.push(RunEntry::from_summary(format!("init{k}"), k as u64, &out.summary));
    }

    let checks = vec![
        Check::new(
            "scan_potential_decreases",
            report.potential_violations == 0,
            format!(
                "{} violations over {} points (min drop {:.2e})",
                report.potential_violations, report.points_checked, report.min_potential_drop
            ),
        ),
        Check::new(
            "scan_region_invariant",
            report.invariance_violations == 0,
            format!("{} violations", report.invariance_violations),
        ),
        Check::new(
            "all_runs_reach_first_datapoint",
            reached == inits,
            format!("{reached}/{inits}"),
        ),
    ];
    sink.finish(vec![base_seed], entries, checks)
}

// ----------------------------------------------------------- cossim-stats

pub fn cossim_stats(a: &args::CossimArgs, out_dir: &Path) -> Result<RunManifest> {
    let sink = PresetSink::new("cossim_stats", out_dir, a.overrides())?;
    let sizes = a.sizes.clone().unwrap_or_else(|| vec![64, 256, 1024]);
    let seeds = a.seeds.unwrap_or(50);
    let sigma = a.sigma_init.unwrap_or(0.5);
    let eta = a.eta.unwrap_or(0.2);
    let base_seed = a.seed.unwrap_or(9000);
    if sizes.is_empty() {
        return Err(CliError::Setup("need at least one size".into()));
    }

    // (size, strategy) pairs run in parallel; results keep a fixed order.
    let strategies = [BatchStrategy::Full, BatchStrategy::Uniform { b: 1 }];
    let mut tasks = Vec::new();
    for &n in &sizes {
        for &strategy in &strategies {
            tasks.push((n, strategy));
        }
    }
    let summaries: Vec<_> = tasks
        .par_iter()
        .map(|&(n, strategy)| {
            cossim_statistics::<f64>(n, n, sigma, eta, &[strategy], seeds, base_seed)
                .map(|mut v| (n, v.remove(0)))
        })
        .collect::<std::result::Result<_, _>>()
        .map_err(setup)?;

    let mut rows = Vec::new();
    let mut entries = Vec::new();
    let mut checks = Vec::new();
    let mut gd_medians: Vec<(usize, f64)> = Vec::new();
    for (n, summary) in &summaries {
        let strat_name = match summary.strategy {
            BatchStrategy::Full => "gd".to_string(),
            BatchStrategy::Uniform { b } => format!("sgd_b{b}"),
            BatchStrategy::Cyclic => "csgd".to_string(),
        };
        for run in &summary.runs {
            rows.push(format!(
                "{n},{strat_name},{},{},{}",
                run.seed, run.cossim_data, run.cossim_init
            ));
            entries.push(RunEntry::from_summary(
                format!("n{n}_{strat_name}_seed{}", run.seed),
                run.seed,
                &run.summary,
            ));
        }
        let bound = 2.0 * ((*n as f64).ln() / *n as f64).sqrt();
        match summary.strategy {
            BatchStrategy::Uniform { .. } => {
                let exact = summary.runs.iter().all(|r| {
                    matches!(r.summary.label, LimitLabel::Datapoint { .. })
                        && r.cossim_data == 1.0
                });
                checks.push(Check::new(
                    format!("n{n}_sgd_data_alignment_exact"),
                    exact && summary.all_converged,
                    "cossim(limit, data) = 1",
                ));
                checks.push(Check::new(
                    format!("n{n}_sgd_init_decorrelated"),
                    summary.median_cossim_init <= bound,
                    format!(
                        "median {:.4} <= 2 sqrt(log n / n) = {bound:.4}",
                        summary.median_cossim_init
                    ),
                ));
            }
            BatchStrategy::Full => {
                checks.push(Check::new(
                    format!("n{n}_gd_init_correlated"),
                    summary.all_converged && summary.median_cossim_init >= 0.5,
                    format!("median {:.4} >= 0.5", summary.median_cossim_init),
                ));
                gd_medians.push((*n, summary.median_cossim_data));
            }
            BatchStrategy::Cyclic => {}
        }
    }
    emit_rows_csv(
        &sink.path("cossim_stats.csv"),
        "n,strategy,seed,cossim_data,cossim_init",
        &rows,
    )?;

    if gd_medians.len() >= 2 {
        gd_medians.sort_by_key(|(n, _)| *n);
        let (n_lo, v_lo) = gd_medians[0];
        let (n_hi, v_hi) = gd_medians[gd_medians.len() - 1];
        let observed = v_hi / v_lo;
        let predicted =
            (((n_hi as f64).ln() / n_hi as f64) / ((n_lo as f64).ln() / n_lo as f64)).sqrt();
        let ratio = observed / predicted;
        checks.push(Check::new(
            "gd_data_correlation_scaling",
            (0.5..=2.0).contains(&ratio),
            format!(
                "median cossim(data) ratio n={n_hi}/n={n_lo}: observed {observed:.4} vs \
                 sqrt(log n / n) prediction {predicted:.4}"
            ),
        ));
    }

    sink.finish(vec![base_seed], entries, checks)
}

// -------------------------------------------------------------- sharpness

#[derive(Serialize)]
struct SharpnessJson {
    name: String,
    n: usize,
    m: usize,
    s_size: usize,
    max_curv_analytic: f64,
    max_curv_numeric: f64,
    trace_analytic: f64,
    trace_mc: f64,
    trace_mc_se: f64,
    n_samples: usize,
}

pub fn sharpness(a: &args::SharpnessArgs, out_dir: &Path) -> Result<RunManifest> {
    let sink = PresetSink::new("sharpness", out_dir, a.overrides())?;
    let samples = a.samples.unwrap_or(100_000);
    let h = a.h.unwrap_or(1e-4);
    let seed = a.seed.unwrap_or(11);
    let dirs = a.dirs.unwrap_or(10_000);

    let ds2 = OrthoDataset::<f64>::standard(2, 2)?;
    let x = std::f64::consts::FRAC_1_SQRT_2;
    let ds10 = OrthoDataset::<f64>::standard(10, 8)?;
    let mut w_mix = vec![0.0; 10];
    w_mix[..4].fill(0.5);
    let mut w_pure10 = vec![0.0; 10];
    w_pure10[0] = 1.0;

    let points: Vec<(&str, &OrthoDataset<f64>, Vec<f64>)> = vec![
        ("m2_pure", &ds2, vec![1.0, 0.0]),
        ("m2_mixture", &ds2, vec![x, x]),
        ("m8_pure", &ds10, w_pure10),
        ("m8_support4", &ds10, w_mix),
    ];

    let mut reports = Vec::new();
    for (name, ds, w) in &points {
        debug_assert!(global_min_check(ds, w, 1e-9).map_err(setup)?.in_m);
        let rep = sharpness_report(ds, w, samples, h, seed).map_err(setup)?;
        reports.push(SharpnessJson {
            name: name.to_string(),
            n: ds.n(),
            m: ds.m(),
            s_size: rep.s_size,
            max_curv_analytic: rep.max_curv_analytic,
            max_curv_numeric: rep.max_curv_numeric,
            trace_analytic: rep.trace_analytic,
            trace_mc: rep.trace_mc,
            trace_mc_se: rep.trace_mc_se,
            n_samples: rep.n_samples,
        });
    }
    emit_json(&sink.path("sharpness.json"), &reports)?;

    let by_name = |name: &str| reports.iter().find(|r| r.name == name).unwrap();
    let (m2p, m2m) = (by_name("m2_pure"), by_name("m2_mixture"));
    let (m8p, m8m) = (by_name("m8_pure"), by_name("m8_support4"));

    let mc_ok = reports
        .iter()
        .all(|r| (r.trace_mc - r.trace_analytic).abs() < 3.0 * r.trace_mc_se);

    // Directional bound: the analytic curvature over random unit directions
    // never exceeds 4/m and attains it along v = w.
    let mut dir_ok = true;
    for (_, ds, w) in points.iter().take(2) {
        let mut worst = 0.0f64;
        for k in 0..dirs {
            let mut v = gaussian_init::<f64>(ds.n(), 0.9, 500_000 + k as u64).map_err(setup)?;
            let nv = dot(&v, &v).sqrt();
            for xi in v.iter_mut() {
                *xi /= nv;
            }
            worst = worst.max(curvature_analytic(ds, w, &v).map_err(setup)?);
        }
        let cap = 4.0 / ds.m() as f64;
        dir_ok &= worst <= cap + 1e-6;
        dir_ok &= (curvature_analytic(ds, w, w).map_err(setup)? - cap).abs() < 1e-6;
    }

    let checks = vec![
        Check::new(
            "max_curvature_numeric",
            (m2p.max_curv_numeric - 2.0).abs() < 1e-3 && (m2m.max_curv_numeric - 2.0).abs() < 1e-3,
            format!("{:.5} and {:.5} vs 4/m = 2", m2p.max_curv_numeric, m2m.max_curv_numeric),
        ),
        Check::new(
            "trace_analytic_values",
            (m2p.trace_analytic - 2.25).abs() < 1e-12 && (m2m.trace_analytic - 2.0).abs() < 1e-12,
            format!("{} and {}", m2p.trace_analytic, m2m.trace_analytic),
        ),
        Check::new(
            "trace_monte_carlo",
            mc_ok,
            format!("{} points within 3 se", reports.len()),
        ),
        Check::new(
            "small_batch_minimum_is_sharper",
            (m8p.trace_analytic - 1.1875).abs() < 1e-12
                && (m8m.trace_analytic - 1.0).abs() < 1e-12
                && m8p.trace_analytic > m8m.trace_analytic,
            format!("Tr {} > {}", m8p.trace_analytic, m8m.trace_analytic),
        ),
        Check::new(
            "directional_curvature_bound",
            dir_ok,
            format!("{dirs} random unit directions per point"),
        ),
    ];
    sink.finish(vec![seed], vec![], checks)
}

fn setup(e: CoreError) -> CliError {
    CliError::Setup(e.to_string())
}
