//! Acceptance suite: one test per criterion, each printing a pass/fail line
//! with the measured quantities (run with `--nocapture` to see the lines for
//! passing criteria too).
//!
//! Expensive run ensembles are built once and shared between criteria.

use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use batchlens::basis_data::{gaussian_init, NeuronState, OrthoDataset};
use batchlens::dynamics::{
    effective_batch, gd_two_dim_step, next_batch, run_training, step_ambient, step_coords,
    Activation, BatchStrategy, TrainConfig, TrainOutcome,
};
use batchlens::landscape::{
    curvature_analytic, global_min_check, global_min_value, loss_rewritten, sharpness_report,
};
use batchlens::observables::{
    cossim_statistics, csgd_region_scan, gd_invariant_residual, increment_stats,
    predicted_gd_limit, CossimStrategySummary, IncrementStats, LimitLabel,
};
use batchlens::rng::{stream_rng, Stream};

type Outcome = TrainOutcome<f64>;

fn report(num: usize, name: &str, ok: bool, details: &str) {
    println!(
        "[acceptance] criterion {num:2} ({name}): {} — {details}",
        if ok { "PASS" } else { "FAIL" }
    );
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Gaussian init rescaled strictly inside the unit ball.
fn ball_init(n: usize, sigma: f64, seed: u64) -> Vec<f64> {
    let mut w = gaussian_init::<f64>(n, sigma, seed).unwrap();
    let nrm = norm(&w);
    if nrm >= 0.95 {
        let s = 0.9 / nrm;
        for x in w.iter_mut() {
            *x *= s;
        }
    }
    w
}

// ---------------------------------------------------------------- fixtures

struct Fig2Run {
    out: Outcome,
    elapsed: Duration,
}

/// Criterion 1 workload: m = n = 2 standard, w0 = (0.1, 0.08), eta = 1/8,
/// full batch, linear.
fn fig2_gd() -> &'static Fig2Run {
    static CELL: OnceLock<Fig2Run> = OnceLock::new();
    CELL.get_or_init(|| {
        let ds = OrthoDataset::<f64>::standard(2, 2).unwrap();
        let mut cfg = TrainConfig::new(Activation::Linear, 0.125, BatchStrategy::Full);
        cfg.conv_tol = 1e-9;
        cfg.max_steps = 10_000;
        cfg.dump_coords = true;
        let start = Instant::now();
        let out = run_training(&ds, &[0.1, 0.08], &cfg).unwrap();
        Fig2Run {
            out,
            elapsed: start.elapsed(),
        }
    })
}

struct GdRun {
    m: usize,
    eta: f64,
    out: Outcome,
}

/// Twenty random full-batch linear runs (n <= 16, m <= n), coords recorded.
fn random_gd_runs() -> &'static Vec<GdRun> {
    static CELL: OnceLock<Vec<GdRun>> = OnceLock::new();
    CELL.get_or_init(|| {
        let mut picker = ChaCha8Rng::seed_from_u64(2024);
        (0..20u64)
            .map(|k| {
                let n = picker.gen_range(2..=16usize);
                let m = picker.gen_range(1..=n);
                let eta = picker.gen_range(0.02..=0.2f64);
                let ds = OrthoDataset::<f64>::standard(n, m).unwrap();
                let w0 = ball_init(n, 0.5, 400 + k);
                let mut cfg = TrainConfig::new(Activation::Linear, eta, BatchStrategy::Full);
                cfg.conv_tol = 1e-9;
                cfg.max_steps = 5_000;
                cfg.dump_coords = true;
                let out = run_training(&ds, &w0, &cfg).unwrap();
                GdRun { m, eta, out }
            })
            .collect()
    })
}

const ENSEMBLE_M: usize = 8;
const ENSEMBLE_N: usize = 10;
const ENSEMBLE_ETA: f64 = 0.2;
const ENSEMBLE_SEEDS: u64 = 100;

struct EnsembleRun {
    b: usize,
    w0: Vec<f64>,
    out: Outcome,
}

struct Ensemble {
    runs: Vec<EnsembleRun>,
    elapsed: Duration,
}

/// Criterion 4 workload: m=8, n=10, b in {1, 3}, eta=0.2, 100 seeds.
fn sgd_ensemble() -> &'static Ensemble {
    static CELL: OnceLock<Ensemble> = OnceLock::new();
    CELL.get_or_init(|| {
        let ds = OrthoDataset::<f64>::standard(ENSEMBLE_N, ENSEMBLE_M).unwrap();
        let start = Instant::now();
        let mut runs = Vec::new();
        for &b in &[1usize, 3] {
            for seed in 0..ENSEMBLE_SEEDS {
                let w0 = ball_init(ENSEMBLE_N, 0.5, seed);
                let mut cfg = TrainConfig::new(
                    Activation::Linear,
                    ENSEMBLE_ETA,
                    BatchStrategy::Uniform { b },
                );
                cfg.seed = seed;
                cfg.conv_tol = 1e-8;
                cfg.max_steps = 200_000;
                let out = run_training(&ds, &w0, &cfg).unwrap();
                runs.push(EnsembleRun { b, w0, out });
            }
        }
        Ensemble {
            runs,
            elapsed: start.elapsed(),
        }
    })
}

struct ReluRun {
    strategy: BatchStrategy,
    w0: Vec<f64>,
    out: Outcome,
}

/// Criterion 5 workload: ReLU runs on m=8, n=10 with mixed-sign inits.
fn relu_runs() -> &'static Vec<ReluRun> {
    static CELL: OnceLock<Vec<ReluRun>> = OnceLock::new();
    CELL.get_or_init(|| {
        let ds = OrthoDataset::<f64>::standard(ENSEMBLE_N, ENSEMBLE_M).unwrap();
        let mut runs = Vec::new();
        let mut strategies = vec![BatchStrategy::Full; 10];
        for k in 0..50usize {
            strategies.push(BatchStrategy::Uniform {
                b: if k % 2 == 0 { 1 } else { 3 },
            });
        }
        for (k, &strategy) in strategies.iter().enumerate() {
            // Deterministically skip inits with an empty positive set.
            let mut seed = 7000 + k as u64;
            let mut w0 = ball_init(ENSEMBLE_N, 0.5, seed);
            while !w0[..ENSEMBLE_M].iter().any(|&c| c > 0.0) {
                seed += 1000;
                w0 = ball_init(ENSEMBLE_N, 0.5, seed);
            }
            let mut cfg = TrainConfig::new(Activation::Relu, ENSEMBLE_ETA, strategy);
            cfg.seed = seed;
            cfg.conv_tol = 1e-8;
            cfg.max_steps = 200_000;
            let out = run_training(&ds, &w0, &cfg).unwrap();
            runs.push(ReluRun { strategy, w0, out });
        }
        runs
    })
}

type CossimBySize = (usize, Vec<CossimStrategySummary<f64>>, Duration);

fn cossim_summaries() -> &'static Vec<CossimBySize> {
    static CELL: OnceLock<Vec<CossimBySize>> = OnceLock::new();
    CELL.get_or_init(|| {
        [64usize, 256, 1024]
            .iter()
            .map(|&n| {
                let start = Instant::now();
                let summaries = cossim_statistics::<f64>(
                    n,
                    n,
                    0.5,
                    0.2,
                    &[BatchStrategy::Full, BatchStrategy::Uniform { b: 1 }],
                    50,
                    9000,
                )
                .unwrap();
                (n, summaries, start.elapsed())
            })
            .collect()
    })
}

// ---------------------------------------------------------------- criteria

#[test]
fn criterion_01_gd_limit() {
    let run = fig2_gd();
    let expect = [0.780869, 0.624695];
    let scale = 1.0 / 0.0164f64.sqrt();
    let exact = [0.1 * scale, 0.08 * scale];
    let c = &run.out.final_state.coords;
    let err = max_abs_diff(c, &exact);
    let ok = run.out.summary.converged
        && err < 1e-6
        && max_abs_diff(c, &expect) < 2e-6
        && run.elapsed < Duration::from_secs(1);
    report(
        1,
        "GD limit",
        ok,
        &format!(
            "final=({:.6}, {:.6}), |err|={err:.2e}, {} steps in {:?}",
            c[0], c[1], run.out.summary.steps, run.elapsed
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_02_gd_invariant() {
    let fig2 = fig2_gd();
    let snaps = fig2.out.coord_snapshots.as_ref().unwrap();
    let mut worst = gd_invariant_residual(snaps, 2).unwrap();
    for run in random_gd_runs() {
        let snaps = run.out.coord_snapshots.as_ref().unwrap();
        worst = worst.max(gd_invariant_residual(snaps, run.m).unwrap());
    }
    let ok = worst < 1e-10;
    report(
        2,
        "GD invariant",
        ok,
        &format!("max residual {worst:.2e} over fig2 + 20 random runs"),
    );
    assert!(ok);
}

#[test]
fn criterion_03_two_dim_recursion() {
    let mut picker = ChaCha8Rng::seed_from_u64(31);
    let mut worst = 0.0f64;
    for k in 0..20u64 {
        let n = picker.gen_range(2..=16usize);
        let m = picker.gen_range(1..=n);
        let eta = picker.gen_range(0.02..=0.2f64);
        let ds = OrthoDataset::<f64>::standard(n, m).unwrap();
        let w0 = ball_init(n, 0.5, 600 + k);
        let mut cfg = TrainConfig::new(Activation::Linear, eta, BatchStrategy::Full);
        cfg.conv_tol = 1e-300;
        cfg.max_steps = 1000;
        let out = run_training(&ds, &w0, &cfg).unwrap();
        assert_eq!(out.summary.steps, 1000);
        let (mut phi, mut psi) = (out.trajectory[0].phi, out.trajectory[0].psi);
        for rec in &out.trajectory {
            worst = worst.max((rec.phi - phi).abs()).max((rec.psi - psi).abs());
            let next = gd_two_dim_step(phi, psi, eta);
            phi = next.0;
            psi = next.1;
        }
    }
    let ok = worst < 1e-12;
    report(
        3,
        "two-dim recursion",
        ok,
        &format!("max |sim - recursion| = {worst:.2e} over 20 configs x 1000 steps"),
    );
    assert!(ok);
}

#[test]
fn criterion_04_sgd_limits() {
    let ensemble = sgd_ensemble();
    let mut failures = Vec::new();
    for (k, run) in ensemble.runs.iter().enumerate() {
        let s = &run.out.summary;
        let c = &run.out.final_state.coords;
        let ok = match s.label {
            LimitLabel::Datapoint { index, sign } => {
                let sign_match = (run.w0[index] > 0.0 && sign == 1)
                    || (run.w0[index] < 0.0 && sign == -1);
                sign_match
                    && s.converged
                    && c[index].abs() >= 1.0 - 1e-6
                    && s.final_psi < 1e-8
                    && s.final_norm_sq >= 1.0 - 1e-6
            }
            _ => false,
        };
        if !ok {
            failures.push(format!("run {k} (b={}): {:?}", run.b, s.label));
        }
    }
    let ok = failures.is_empty() && ensemble.elapsed < Duration::from_secs(120);
    report(
        4,
        "SGD limits",
        ok,
        &format!(
            "{}/{} runs converged to signed datapoints in {:?}{}",
            ensemble.runs.len() - failures.len(),
            ensemble.runs.len(),
            ensemble.elapsed,
            if failures.is_empty() {
                String::new()
            } else {
                format!("; failures: {failures:?}")
            }
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_05_relu_reduction() {
    let ds = OrthoDataset::<f64>::standard(ENSEMBLE_N, ENSEMBLE_M).unwrap();

    // (a) Bit-identity with the linear run on pre-intersected batches.
    let mut bit_identical = true;
    for (k, &strategy) in [
        BatchStrategy::Full,
        BatchStrategy::Cyclic,
        BatchStrategy::Uniform { b: 1 },
        BatchStrategy::Uniform { b: 3 },
        BatchStrategy::Uniform { b: 5 },
    ]
    .iter()
    .enumerate()
    {
        let w0 = ball_init(ENSEMBLE_N, 0.5, 50 + k as u64);
        let mut cfg = TrainConfig::new(Activation::Relu, ENSEMBLE_ETA, strategy);
        cfg.seed = 123 + k as u64;
        cfg.conv_tol = 1e-300;
        cfg.max_steps = 500;
        cfg.dump_coords = true;
        let relu = run_training(&ds, &w0, &cfg).unwrap();
        let snaps = relu.coord_snapshots.as_ref().unwrap();
        let mut state = ds.to_coords(&w0).unwrap();
        let mut rng = stream_rng(cfg.seed, Stream::Batch);
        for (t, snap) in snaps.iter().enumerate().take(relu.summary.steps) {
            bit_identical &= *snap == state.coords;
            let batch = next_batch(strategy, ENSEMBLE_M, t, &mut rng).unwrap();
            let eff = effective_batch(&batch, &state, Activation::Relu);
            let (next, _) = step_coords(&state, &eff, ENSEMBLE_ETA);
            state = next;
        }
        bit_identical &= relu.final_state.coords == state.coords;
    }

    // (b) ReLU GD converges to the positive-set projection; (c) ReLU SGD
    // limits lie in { a_i : i in S+ }.
    let mut gd_err = 0.0f64;
    let mut sgd_ok = true;
    for run in relu_runs() {
        let positive: Vec<usize> = (0..ENSEMBLE_M)
            .filter(|&i| run.w0[i] > 0.0)
            .collect();
        match run.strategy {
            BatchStrategy::Full => {
                let predicted =
                    predicted_gd_limit(&ds, &run.w0, Activation::Relu).unwrap();
                let w = ds.to_ambient(&run.out.final_state).unwrap();
                gd_err = gd_err.max(max_abs_diff(&w, &predicted));
            }
            _ => {
                sgd_ok &= matches!(
                    run.out.summary.label,
                    LimitLabel::Datapoint { index, sign: 1 } if positive.contains(&index)
                );
            }
        }
    }
    let ok = bit_identical && gd_err < 1e-6 && sgd_ok;
    report(
        5,
        "ReLU reduction",
        ok,
        &format!(
            "bit-identical={bit_identical}, GD |err|={gd_err:.2e}, SGD limits in S+: {sgd_ok}"
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_06_boundedness_suite() {
    // Aggregates over the runs of criteria 1-5 (all have eta <= 1/5).
    let mut checked = 0usize;
    let mut failures = Vec::new();
    let mut check = |name: String, eta: f64, full_batch: bool, out: &Outcome| {
        let b = &out.summary.bounds;
        let mut bad = Vec::new();
        if !b.norm_bound_ok(eta) {
            bad.push(format!("norm {:.3e}", b.max_norm_sq - 1.0 - eta / 4.0));
        }
        if !b.sign_stable {
            bad.push("sign flip".into());
        }
        if !b.coord_bound_ok() {
            bad.push(format!("coord {}", b.max_abs_coord));
        }
        if !b.psi_monotone_ok() {
            bad.push(format!("psi increase {:.3e}", b.max_psi_increase));
        }
        if !b.phi_floor_ok() {
            bad.push(format!(
                "phi floor {:.3e}",
                b.min_phi_eff - b.phi_eff_0.min(1.0 - b.psi_eff_0)
            ));
        }
        if full_batch && !b.nscript_ok() {
            bad.push(format!("N-script {:.3e}", b.max_nscript_eff - 1.0));
        }
        checked += 1;
        if !bad.is_empty() {
            failures.push(format!("{name}: {bad:?}"));
        }
    };

    check("fig2".into(), 0.125, true, &fig2_gd().out);
    for (k, run) in random_gd_runs().iter().enumerate() {
        check(format!("gd[{k}]"), run.eta, true, &run.out);
    }
    for (k, run) in sgd_ensemble().runs.iter().enumerate() {
        check(format!("sgd[{k}]"), ENSEMBLE_ETA, false, &run.out);
    }
    for (k, run) in relu_runs().iter().enumerate() {
        check(
            format!("relu[{k}]"),
            ENSEMBLE_ETA,
            run.strategy == BatchStrategy::Full,
            &run.out,
        );
    }

    let ok = failures.is_empty();
    report(
        6,
        "boundedness suite",
        ok,
        &format!("{checked} runs checked{}", if ok { String::new() } else { format!("; failures: {failures:?}") }),
    );
    assert!(ok);
}

/// Pooled mean and standard error across per-run window statistics.
fn pool(stats: &[IncrementStats<f64>]) -> (f64, f64, usize) {
    let mut n_total = 0usize;
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for s in stats {
        let n = s.n_hit + s.n_miss;
        let nf = n as f64;
        let var = s.se_all * s.se_all * nf;
        sum += s.mean_dr_all * nf;
        sum_sq += var * (nf - 1.0) + nf * s.mean_dr_all * s.mean_dr_all;
        n_total += n;
    }
    let nf = n_total as f64;
    let mean = sum / nf;
    let var = (sum_sq - nf * mean * mean) / (nf - 1.0);
    (mean, (var / nf).sqrt(), n_total)
}

#[test]
fn criterion_07_random_walk_bounds() {
    let ensemble = sgd_ensemble();
    let hit_bound = (1.0 + 0.95 * ENSEMBLE_ETA).ln();
    let beta = 1.0 - 2.0 * ENSEMBLE_ETA;
    let gamma = beta / (1.0 + 2.0 * ENSEMBLE_ETA);
    let k_bound = (gamma * beta * beta).ln().abs().max((1.0 / (beta * beta)).ln().abs());

    let mut parts: Vec<(String, bool)> = Vec::new();
    for &b in &[1usize, 3] {
        let stats: Vec<IncrementStats<f64>> = ensemble
            .runs
            .iter()
            .filter(|r| r.b == b)
            .map(|r| {
                increment_stats(
                    &r.out.trajectory,
                    ENSEMBLE_ETA,
                    ENSEMBLE_M,
                    b,
                    r.out.summary.steps / 2,
                )
                .unwrap()
            })
            .collect();
        let min_hit = stats.iter().map(|s| s.min_dr_hit).fold(f64::INFINITY, f64::min);
        let max_abs = stats.iter().map(|s| s.max_abs_dr).fold(0.0, f64::max);
        let (mean, se, n) = pool(&stats);
        let drift_bound = stats[0].drift_bound;
        let drift_second = stats[0].drift_bound_second_order;

        let hit_ok = min_hit >= hit_bound - 1e-10;
        let k_ok = max_abs <= k_bound + 1e-10;
        let drift_ok = mean >= drift_bound - 3.0 * se;
        parts.push((
            format!(
                "b={b}: min hit dR {min_hit:.6} vs {hit_bound:.6} -> {}",
                if hit_ok { "PASS" } else { "FAIL" }
            ),
            hit_ok,
        ));
        parts.push((
            format!(
                "b={b}: max |dR| {max_abs:.6} vs K {k_bound:.6} -> {}",
                if k_ok { "PASS" } else { "FAIL" }
            ),
            k_ok,
        ));
        parts.push((
            format!(
                "b={b}: pooled mean dR {mean:.6} (se {se:.6}, n={n}) vs drift bound \
                 {drift_bound:.6} -> {}; second-order constant {drift_second:.6} -> {}",
                if drift_ok { "PASS" } else { "FAIL" },
                if mean >= drift_second - 3.0 * se { "PASS" } else { "FAIL" }
            ),
            drift_ok,
        ));
    }

    // Full-batch control: R is exactly conserved (to rounding).
    let mut full_max = 0.0f64;
    let mut scan = |out: &Outcome| {
        for rec in &out.trajectory[..out.trajectory.len() - 1] {
            if rec.r.is_finite() && rec.delta_r.is_finite() {
                full_max = full_max.max(rec.delta_r.abs());
            }
        }
    };
    scan(&fig2_gd().out);
    for run in random_gd_runs() {
        scan(&run.out);
    }
    let full_ok = full_max < 1e-12;
    parts.push((
        format!(
            "full-batch control: max |dR| {full_max:.2e} vs 1e-12 -> {}",
            if full_ok { "PASS" } else { "FAIL" }
        ),
        full_ok,
    ));

    let ok = parts.iter().all(|(_, ok)| *ok);
    for (line, _) in &parts {
        println!("[acceptance]   criterion  7 detail: {line}");
    }
    report(7, "random-walk bounds", ok, &format!("{} sub-checks", parts.len()));
    assert!(
        ok,
        "failed sub-checks: {:?}",
        parts
            .iter()
            .filter(|(_, ok)| !ok)
            .map(|(line, _)| line.clone())
            .collect::<Vec<_>>()
    );
}

/// The second-order drift constant and the b=1 per-hit floor hold on the
/// same trajectories (companion to criterion 7).
#[test]
fn random_walk_second_order_drift_holds() {
    let ensemble = sgd_ensemble();
    for &b in &[1usize, 3] {
        let stats: Vec<IncrementStats<f64>> = ensemble
            .runs
            .iter()
            .filter(|r| r.b == b)
            .map(|r| {
                increment_stats(
                    &r.out.trajectory,
                    ENSEMBLE_ETA,
                    ENSEMBLE_M,
                    b,
                    r.out.summary.steps / 2,
                )
                .unwrap()
            })
            .collect();
        let (mean, se, _) = pool(&stats);
        let bound = stats[0].drift_bound_second_order;
        assert!(
            mean >= bound - 3.0 * se,
            "b={b}: pooled mean {mean} below second-order constant {bound} (se {se})"
        );
        if b == 1 {
            let min_hit = stats.iter().map(|s| s.min_dr_hit).fold(f64::INFINITY, f64::min);
            assert!(min_hit >= stats[0].hit_bound - 1e-10);
        }
    }
}

#[test]
fn criterion_08_csgd() {
    let ds = OrthoDataset::<f64>::standard(2, 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(88);
    let mut bad = 0usize;
    for _ in 0..50 {
        // y0 >= z0 > 0 with ||w0|| < 1.
        let (y0, z0) = loop {
            let a: f64 = rng.gen_range(0.01..0.99);
            let b: f64 = rng.gen_range(0.01..0.99);
            let (y, z) = if a >= b { (a, b) } else { (b, a) };
            if y * y + z * z < 1.0 {
                break (y, z);
            }
        };
        let mut cfg = TrainConfig::new(Activation::Linear, 0.25, BatchStrategy::Cyclic);
        cfg.conv_tol = 1e-9;
        cfg.max_steps = 100_000;
        let out = run_training(&ds, &[y0, z0], &cfg).unwrap();
        if max_abs_diff(&out.final_state.coords, &[1.0, 0.0]) >= 1e-6 {
            bad += 1;
        }
    }

    let scan = csgd_region_scan::<f64>(256, 0.25).unwrap();
    let ok = bad == 0
        && scan.potential_violations == 0
        && scan.invariance_violations == 0;
    report(
        8,
        "CSGD",
        ok,
        &format!(
            "{}/50 runs reached a_1; scan: {} points, {} potential / {} invariance violations, \
             min V-drop {:.2e}",
            50 - bad,
            scan.points_checked,
            scan.potential_violations,
            scan.invariance_violations,
            scan.min_potential_drop
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_09_global_minima() {
    let mut worst_member = 0.0f64;
    let mut worst_margin = f64::INFINITY;
    let mut worst_forms = 0.0f64;
    for &m in &[2usize, 8] {
        let n = m + 2;
        let ds = OrthoDataset::<f64>::standard(n, m).unwrap();
        let target = global_min_value::<f64>(m);
        for seed in 0..1000u64 {
            // Member of M with random support size.
            let s = 1 + (seed as usize) % m;
            let g = gaussian_init::<f64>(s, 0.9, seed).unwrap();
            let mut c: Vec<f64> = g.iter().map(|x| x.abs().max(1e-3)).collect();
            let nrm = norm(&c);
            for x in c.iter_mut() {
                *x /= nrm;
            }
            let mut coords = vec![0.0; n];
            coords[..s].copy_from_slice(&c);
            let w = ds.to_ambient(&NeuronState::new(coords.clone())).unwrap();
            assert!(global_min_check(&ds, &w, 1e-9).unwrap().in_m);
            let direct =
                batchlens::dynamics::objective_loss(&ds, &w, Activation::Relu).unwrap();
            let rewritten = loss_rewritten(&ds, &w).unwrap();
            worst_member = worst_member.max((rewritten - target).abs());
            worst_forms = worst_forms.max((direct - rewritten).abs());

            // Unit-norm non-member: flip the largest coefficient or add
            // off-span mass (violating mass at least 0.01 either way).
            let mut bad = coords;
            if seed % 2 == 0 {
                let top = (0..s)
                    .max_by(|&a, &b| bad[a].partial_cmp(&bad[b]).unwrap())
                    .unwrap();
                bad[top] *= -1.0;
            } else {
                bad[m] = 0.3;
                let nrm: f64 = bad.iter().map(|c| c * c).sum::<f64>().sqrt();
                for x in bad.iter_mut() {
                    *x /= nrm;
                }
            }
            let wbad = ds.to_ambient(&NeuronState::new(bad)).unwrap();
            assert!(!global_min_check(&ds, &wbad, 1e-9).unwrap().in_m);
            let loss_bad = loss_rewritten(&ds, &wbad).unwrap();
            worst_margin = worst_margin.min(loss_bad - target);
            worst_forms = worst_forms.max(
                (batchlens::dynamics::objective_loss(&ds, &wbad, Activation::Relu).unwrap()
                    - loss_bad)
                    .abs(),
            );
        }
    }
    let ok = worst_member < 1e-12 && worst_margin >= 1e-6 && worst_forms < 1e-12;
    report(
        9,
        "global minima",
        ok,
        &format!(
            "member |loss - (m-1)/2m| <= {worst_member:.2e}, non-member margin >= \
             {worst_margin:.2e}, form gap <= {worst_forms:.2e}"
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_10_sharpness() {
    let ds2 = OrthoDataset::<f64>::standard(2, 2).unwrap();
    let x = std::f64::consts::FRAC_1_SQRT_2;
    let w_sgd = [1.0, 0.0];
    let w_gd = [x, x];

    let rep_sgd = sharpness_report(&ds2, &w_sgd, 100_000, 1e-4, 11).unwrap();
    let rep_gd = sharpness_report(&ds2, &w_gd, 100_000, 1e-4, 12).unwrap();
    let max_ok = (rep_sgd.max_curv_numeric - 2.0).abs() < 1e-3
        && (rep_gd.max_curv_numeric - 2.0).abs() < 1e-3;
    let trace_ok = (rep_sgd.trace_analytic - 2.25).abs() < 1e-12
        && (rep_gd.trace_analytic - 2.0).abs() < 1e-12;
    let mc_ok = (rep_sgd.trace_mc - rep_sgd.trace_analytic).abs() < 3.0 * rep_sgd.trace_mc_se
        && (rep_gd.trace_mc - rep_gd.trace_analytic).abs() < 3.0 * rep_gd.trace_mc_se;

    // m=8, n=10, |S| = 4: the single-datapoint minimum is sharper in trace.
    let ds10 = OrthoDataset::<f64>::standard(10, 8).unwrap();
    let mut w_mix = vec![0.0; 10];
    w_mix[..4].fill(0.5);
    let mut w_pure = vec![0.0; 10];
    w_pure[0] = 1.0;
    let rep_mix = sharpness_report(&ds10, &w_mix, 10_000, 1e-4, 13).unwrap();
    let rep_pure = sharpness_report(&ds10, &w_pure, 10_000, 1e-4, 14).unwrap();
    let mixed_ok = (rep_mix.trace_analytic - 1.0).abs() < 1e-12
        && (rep_pure.trace_analytic - 1.1875).abs() < 1e-12
        && rep_pure.trace_analytic > rep_mix.trace_analytic;

    // Max-eigenvalue tie: the directional curvature never exceeds 4/m, and
    // attains it along v = w.
    let mut dir_ok = true;
    for (ds, w) in [(&ds2, &w_sgd[..]), (&ds2, &w_gd[..])] {
        let mut worst = 0.0f64;
        for k in 0..10_000u64 {
            let mut v = gaussian_init::<f64>(ds.n(), 0.9, 100_000 + k).unwrap();
            let nv = norm(&v);
            for xi in v.iter_mut() {
                *xi /= nv;
            }
            worst = worst.max(curvature_analytic(ds, w, &v).unwrap());
        }
        dir_ok &= worst <= 4.0 / ds.m() as f64 + 1e-6;
        let at_w = curvature_analytic(ds, w, w).unwrap();
        dir_ok &= (at_w - 4.0 / ds.m() as f64).abs() < 1e-6;
    }

    let ok = max_ok && trace_ok && mc_ok && mixed_ok && dir_ok;
    report(
        10,
        "sharpness",
        ok,
        &format!(
            "max numeric ({:.5}, {:.5}); traces ({}, {}); MC ({:.4}+-{:.4}, {:.4}+-{:.4}); \
             mixed traces ({}, {}); directional bound {dir_ok}",
            rep_sgd.max_curv_numeric,
            rep_gd.max_curv_numeric,
            rep_sgd.trace_analytic,
            rep_gd.trace_analytic,
            rep_sgd.trace_mc,
            rep_sgd.trace_mc_se,
            rep_gd.trace_mc,
            rep_gd.trace_mc_se,
            rep_mix.trace_analytic,
            rep_pure.trace_analytic
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_11_cosine_similarity() {
    let all = cossim_summaries();
    let mut ok = true;
    let mut details = Vec::new();
    let mut gd_data_medians = Vec::new();
    let mut total = Duration::ZERO;
    for (n, summaries, elapsed) in all.iter() {
        total += *elapsed;
        let bound = 2.0 * ((*n as f64).ln() / *n as f64).sqrt();
        for s in summaries {
            match s.strategy {
                BatchStrategy::Uniform { .. } => {
                    let exact = s.runs.iter().all(|r| {
                        matches!(r.summary.label, LimitLabel::Datapoint { .. })
                            && r.cossim_data == 1.0
                    });
                    ok &= exact && s.all_converged && s.median_cossim_init <= bound;
                    details.push(format!(
                        "n={n} SGD: data exact={exact}, median init {:.4} <= {bound:.4}",
                        s.median_cossim_init
                    ));
                }
                BatchStrategy::Full => {
                    ok &= s.all_converged && s.median_cossim_init >= 0.5;
                    gd_data_medians.push((*n, s.median_cossim_data));
                    details.push(format!(
                        "n={n} GD: median init {:.4} >= 0.5, median data {:.4}",
                        s.median_cossim_init, s.median_cossim_data
                    ));
                }
                BatchStrategy::Cyclic => {}
            }
        }
    }
    // Two-point scaling of the GD data-correlation between n=1024 and n=64.
    let at = |n: usize| {
        gd_data_medians
            .iter()
            .find(|(nn, _)| *nn == n)
            .map(|(_, v)| *v)
            .unwrap()
    };
    let observed = at(1024) / at(64);
    let predicted =
        ((1024f64.ln() / 1024.0) / (64f64.ln() / 64.0)).sqrt();
    let scaling_ok = observed / predicted <= 2.0 && observed / predicted >= 0.5;
    ok &= scaling_ok && total < Duration::from_secs(300);
    details.push(format!(
        "scaling ratio observed {observed:.4} vs predicted {predicted:.4}; total {total:?}"
    ));
    report(11, "cosine similarity", ok, &details.join(" | "));
    assert!(ok);
}

#[test]
fn criterion_12_cross_form_stepping() {
    let mut picker = ChaCha8Rng::seed_from_u64(121);
    let mut worst = 0.0f64;
    for k in 0..100u64 {
        let n = picker.gen_range(2..=12usize);
        let m = picker.gen_range(1..=n);
        let ds = if k % 2 == 0 {
            OrthoDataset::<f64>::standard(n, m).unwrap()
        } else {
            OrthoDataset::<f64>::random_orthonormal(n, m, k).unwrap()
        };
        let w = gaussian_init::<f64>(n, 0.8, 300 + k).unwrap();
        let state = ds.to_coords(&w).unwrap();
        let act = if k % 3 == 0 {
            Activation::Relu
        } else {
            Activation::Linear
        };
        let b = picker.gen_range(1..=m);
        let mut batch: Vec<usize> = (0..m).collect();
        for i in 0..b {
            let j = picker.gen_range(i..m);
            batch.swap(i, j);
        }
        batch.truncate(b);
        batch.sort_unstable();
        let eta = picker.gen_range(0.01..=0.2f64);
        let eff = effective_batch(&batch, &state, act);
        let (stepped, _) = step_coords(&state, &eff, eta);
        let ambient = step_ambient(&ds, &w, &batch, eta, act).unwrap();
        let via = ds.to_coords(&ambient).unwrap();
        worst = worst.max(max_abs_diff(&stepped.coords, &via.coords));
    }
    let ok = worst < 1e-12;
    report(
        12,
        "cross-form stepping",
        ok,
        &format!("max |coords(step_ambient) - step_coords| = {worst:.2e} over 100 triples"),
    );
    assert!(ok);
}
