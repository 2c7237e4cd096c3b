//! Analysis quantities extracted from states and trajectories.
//!
//! * `(Phi, Psi)` — squared mass of the iterate inside and outside the data
//!   span.
//! * `R` — the log-ratio alignment process
//!   `log(|c(i*)| / sum_{l != i*} |c(l)|)` whose escape to +infinity
//!   certifies alignment with a single datapoint.
//! * Predicted limits, limit classification, and the full-batch invariant
//!   `c_t(i) = c_0(i) sqrt(Phi_t / Phi_0)`.
//! * Increment statistics of `R` over a late-time window, together with the
//!   theoretical drift / per-hit / boundedness constants they are checked
//!   against.
//! * The two-dimensional cyclic-SGD epoch map, its alignment potential
//!   `V(y, z) = z / y`, and a grid scan of the invariant region.

use crate::basis_data::{gaussian_init, NeuronState, OrthoDataset};
use crate::dynamics::{run_training, Activation, BatchStrategy, TrainConfig, TrajectoryRecord};
use crate::error::{Error, Result};
use crate::linalg::{dot, norm};
use crate::{real, Scalar};

/// Where a run ended up.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LimitLabel {
    /// Within tolerance of `sign * a_{index}` (index 0-based, sign +-1).
    Datapoint { index: usize, sign: i8 },
    /// Within tolerance of the projected, normalized initialization.
    GdMixture,
    NotConverged,
}

/// `Phi = sum_{i < m} c(i)^2`, `Psi = sum_{j >= m} c(j)^2`.
pub fn phi_psi<F: Scalar>(state: &NeuronState<F>, m: usize) -> (F, F) {
    debug_assert!(m <= state.len());
    let phi = state.coords[..m].iter().fold(F::zero(), |a, &c| a + c * c);
    let psi = state.coords[m..].iter().fold(F::zero(), |a, &c| a + c * c);
    (phi, psi)
}

/// Log-ratio `R = log(|c(i*)| / sum_{l != i*, l < m} |c(l)|)` and the
/// maximizing index (smallest on ties).
///
/// Returns `+inf` when the remaining in-span coordinates are exactly zero
/// (the limit has been reached), and NaN when every in-span coordinate is
/// zero.
pub fn log_ratio<F: Scalar>(state: &NeuronState<F>, m: usize) -> (F, usize) {
    debug_assert!(m <= state.len());
    let mut i_star = 0usize;
    let mut a_star = F::neg_infinity();
    for (i, &c) in state.coords[..m].iter().enumerate() {
        if c.abs() > a_star {
            a_star = c.abs();
            i_star = i;
        }
    }
    let mut sum_rest = F::zero();
    for (i, &c) in state.coords[..m].iter().enumerate() {
        if i != i_star {
            sum_rest = sum_rest + c.abs();
        }
    }
    let a_star = state.coords[i_star].abs();
    let r = if a_star == F::zero() {
        F::nan()
    } else if sum_rest == F::zero() {
        F::infinity()
    } else {
        (a_star / sum_rest).ln()
    };
    (r, i_star)
}

/// `|<w/||w||, x/||x||>|`, in [0, 1].
pub fn cossim<F: Scalar>(w: &[F], x: &[F]) -> Result<F> {
    if w.len() != x.len() {
        return Err(Error::Dimension(format!(
            "vector lengths differ: {} vs {}",
            w.len(),
            x.len()
        )));
    }
    let (nw, nx) = (norm(w), norm(x));
    if nw == F::zero() || nx == F::zero() {
        return Err(Error::InvalidInput(
            "cosine similarity of a zero vector".into(),
        ));
    }
    Ok((dot(w, x) / (nw * nx)).abs().min(F::one()))
}

/// Maximum cosine similarity with the training points.
pub fn cossim_dataset<F: Scalar>(w: &[F], dataset: &OrthoDataset<F>) -> Result<F> {
    let mut best = F::zero();
    for i in 0..dataset.m() {
        best = best.max(cossim(w, dataset.column(i))?);
    }
    Ok(best)
}

/// Initially positive datapoint directions `{ i < m : c(i) > 0 }` (strict;
/// zeros excluded).
pub fn positive_set<F: Scalar>(state: &NeuronState<F>, m: usize) -> Vec<usize> {
    state.coords[..m]
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > F::zero())
        .map(|(i, _)| i)
        .collect()
}

/// Limit of full-batch GD: the initialization projected onto the span of the
/// (effective) dataset and normalized. The projection runs over all m
/// training directions for a linear activation and over the initially
/// positive set for ReLU.
pub fn predicted_gd_limit<F: Scalar>(
    dataset: &OrthoDataset<F>,
    w0: &[F],
    act: Activation,
) -> Result<Vec<F>> {
    let state = dataset.to_coords(w0)?;
    let m = dataset.m();
    let mut proj = vec![F::zero(); dataset.n()];
    match act {
        Activation::Linear => proj[..m].copy_from_slice(&state.coords[..m]),
        Activation::Relu => {
            for i in positive_set(&state, m) {
                proj[i] = state.coords[i];
            }
        }
    }
    let nrm = norm(&proj);
    if !(nrm > F::zero()) {
        return Err(Error::DegenerateInitialization(
            "initialization has no mass in the relevant data span".into(),
        ));
    }
    for c in proj.iter_mut() {
        *c = *c / nrm;
    }
    dataset.to_ambient(&NeuronState::new(proj))
}

/// Classify a state against the candidate limit points: a signed datapoint
/// first, then the predicted GD point (compared in ambient space), else not
/// converged.
pub fn classify_limit<F: Scalar>(
    state: &NeuronState<F>,
    dataset: &OrthoDataset<F>,
    predicted: Option<&[F]>,
    tol: F,
) -> LimitLabel {
    let m = dataset.m();
    let mut i_star = 0usize;
    let mut a_star = F::neg_infinity();
    for (i, &c) in state.coords[..m].iter().enumerate() {
        if c.abs() > a_star {
            a_star = c.abs();
            i_star = i;
        }
    }
    let mut residual = (state.coords[i_star].abs() - F::one()).abs();
    for (i, &c) in state.coords.iter().enumerate() {
        if i != i_star {
            residual = residual.max(c.abs());
        }
    }
    if residual < tol {
        let sign = if state.coords[i_star] > F::zero() { 1 } else { -1 };
        return LimitLabel::Datapoint {
            index: i_star,
            sign,
        };
    }
    if let Some(p) = predicted {
        if let Ok(w) = dataset.to_ambient(state) {
            let far = w.iter().zip(p).any(|(&a, &b)| (a - b).abs() >= tol);
            if !far {
                return LimitLabel::GdMixture;
            }
        }
    }
    LimitLabel::NotConverged
}

/// Largest violation of `c_t(i) = c_0(i) sqrt(Phi_t / Phi_0)` over recorded
/// coordinate snapshots of a full-batch linear run.
pub fn gd_invariant_residual<F: Scalar>(snapshots: &[Vec<F>], m: usize) -> Result<F> {
    let first = snapshots
        .first()
        .ok_or_else(|| Error::InvalidInput("no snapshots".into()))?;
    let phi0 = first[..m].iter().fold(F::zero(), |a, &c| a + c * c);
    if !(phi0 > F::zero()) {
        return Err(Error::DegenerateInitialization("Phi_0 = 0".into()));
    }
    let mut worst = F::zero();
    for snap in snapshots {
        let phi = snap[..m].iter().fold(F::zero(), |a, &c| a + c * c);
        let ratio = (phi / phi0).sqrt();
        for i in 0..m {
            if first[i] != F::zero() {
                worst = worst.max((snap[i] - first[i] * ratio).abs());
            }
        }
    }
    Ok(worst)
}

/// Late-window statistics of the log-ratio increments, with the theoretical
/// constants they are compared against.
#[derive(Debug, Clone, PartialEq)]
pub struct IncrementStats<F> {
    pub n_hit: usize,
    pub n_miss: usize,
    pub mean_dr_hit: F,
    pub mean_dr_miss: F,
    pub mean_dr_all: F,
    /// Standard error of `mean_dr_all`.
    pub se_all: F,
    pub max_abs_dr: F,
    pub min_dr_hit: F,
    pub window_start: usize,
    /// Window stopped early at the first infinite R.
    pub truncated: bool,
    /// Drift floor eta*b*(m-b)^2 / (2m(m-1)^2).
    pub drift_bound: F,
    /// Second-order variant eta^2*b*(m-b)^2 / (2m(m-1)^2), the constant the
    /// expansion log(1/(1-x)) >= x(1 + x/2) of the conditional-mean drift
    /// actually produces.
    pub drift_bound_second_order: F,
    /// Per-hit-step floor log(1 + (19/20) eta).
    pub hit_bound: F,
    /// Increment bound max(|log(gamma beta^2)|, |log(1/beta^2)|) with
    /// beta = 1 - 2 eta, gamma = (1 - 2 eta) / (1 + 2 eta).
    pub k_bound: F,
}

/// Aggregate the log-ratio increments of `trajectory` over
/// `[window_start, end)`, truncating at the first infinite `R`. Records must
/// carry per-step `delta_r` and `batch_hit`; the trailing record (which has
/// no outgoing transition) is ignored.
pub fn increment_stats<F: Scalar>(
    trajectory: &[TrajectoryRecord<F>],
    eta: F,
    m: usize,
    b: usize,
    window_start: usize,
) -> Result<IncrementStats<F>> {
    if m < 2 {
        return Err(Error::InvalidParameter(
            "increment statistics need m >= 2".into(),
        ));
    }
    if b == 0 || b > m {
        return Err(Error::InvalidParameter(format!(
            "batch size b={b} out of range for m={m}"
        )));
    }
    let end = match trajectory.last() {
        Some(rec) => rec.t,
        None => return Err(Error::InvalidWindow("empty trajectory".into())),
    };
    if window_start >= end {
        return Err(Error::InvalidWindow(format!(
            "window start {window_start} is not before the trajectory end {end}"
        )));
    }

    let mut truncated = false;
    let mut drs: Vec<F> = Vec::new();
    let mut hits: Vec<bool> = Vec::new();
    for rec in &trajectory[..trajectory.len() - 1] {
        if rec.t < window_start {
            continue;
        }
        if !rec.r.is_finite() || !rec.delta_r.is_finite() {
            truncated = true;
            break;
        }
        drs.push(rec.delta_r);
        hits.push(rec.batch_hit);
    }
    if drs.is_empty() {
        return Err(Error::InvalidWindow(
            "window contains no finite increments".into(),
        ));
    }

    let count = real::<F>(drs.len() as f64);
    let sum = drs.iter().fold(F::zero(), |a, &x| a + x);
    let mean_all = sum / count;
    let var = if drs.len() > 1 {
        drs.iter()
            .fold(F::zero(), |a, &x| a + (x - mean_all) * (x - mean_all))
            / real::<F>((drs.len() - 1) as f64)
    } else {
        F::zero()
    };
    let se_all = (var / count).sqrt();

    let mut n_hit = 0usize;
    let mut sum_hit = F::zero();
    let mut sum_miss = F::zero();
    let mut max_abs = F::zero();
    let mut min_hit = F::infinity();
    for (&dr, &hit) in drs.iter().zip(&hits) {
        max_abs = max_abs.max(dr.abs());
        if hit {
            n_hit += 1;
            sum_hit = sum_hit + dr;
            min_hit = min_hit.min(dr);
        } else {
            sum_miss = sum_miss + dr;
        }
    }
    let n_miss = drs.len() - n_hit;
    let mean_dr_hit = if n_hit > 0 {
        sum_hit / real::<F>(n_hit as f64)
    } else {
        F::nan()
    };
    let mean_dr_miss = if n_miss > 0 {
        sum_miss / real::<F>(n_miss as f64)
    } else {
        F::nan()
    };

    let (mf, bf) = (real::<F>(m as f64), real::<F>(b as f64));
    let gap = mf - bf;
    let denom = real::<F>(2.0) * mf * (mf - F::one()) * (mf - F::one());
    let drift_bound = eta * bf * gap * gap / denom;
    let drift_bound_second_order = eta * drift_bound;
    let hit_bound = (F::one() + real::<F>(0.95) * eta).ln();
    let beta = F::one() - real::<F>(2.0) * eta;
    let gamma = beta / (F::one() + real::<F>(2.0) * eta);
    let k_bound = (gamma * beta * beta)
        .ln()
        .abs()
        .max((F::one() / (beta * beta)).ln().abs());

    Ok(IncrementStats {
        n_hit,
        n_miss,
        mean_dr_hit,
        mean_dr_miss,
        mean_dr_all: mean_all,
        se_all,
        max_abs_dr: max_abs,
        min_dr_hit: min_hit,
        window_start,
        truncated,
        drift_bound,
        drift_bound_second_order,
        hit_bound,
        k_bound,
    })
}

/// One run of a cosine-similarity ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct CossimRun<F> {
    pub seed: u64,
    /// cossim(limit, dataset).
    pub cossim_data: F,
    /// cossim(limit, w0).
    pub cossim_init: F,
    pub summary: crate::dynamics::RunSummary<F>,
}

/// Ensemble medians of the limiting cosine similarities for one strategy.
#[derive(Debug, Clone, PartialEq)]
pub struct CossimStrategySummary<F> {
    pub strategy: BatchStrategy,
    pub median_cossim_data: F,
    pub median_cossim_init: F,
    pub all_converged: bool,
    pub runs: Vec<CossimRun<F>>,
}

/// For each strategy, run `n_seeds` trainings from shared Gaussian
/// initializations on the standard dataset and report the medians of
/// cossim(limit, dataset) and cossim(limit, w0).
///
/// Converged runs are evaluated at their classified limit point; a run that
/// fails to converge is evaluated at its final iterate and clears
/// `all_converged`.
pub fn cossim_statistics<F: Scalar>(
    n: usize,
    m: usize,
    sigma_init: F,
    eta: F,
    strategies: &[BatchStrategy],
    n_seeds: usize,
    base_seed: u64,
) -> Result<Vec<CossimStrategySummary<F>>> {
    if m * 4 < n || m > n {
        return Err(Error::InvalidParameter(format!(
            "need m in [n/4, n] for the proportional regime, got n={n}, m={m}"
        )));
    }
    if !(sigma_init < F::one()) {
        return Err(Error::InvalidParameter(
            "sigma_init must be below 1".into(),
        ));
    }
    if n_seeds == 0 {
        return Err(Error::InvalidParameter("n_seeds must be positive".into()));
    }
    let dataset = OrthoDataset::standard(n, m)?;
    let max_steps = 3000 * m + 100_000;

    let mut out = Vec::with_capacity(strategies.len());
    for &strategy in strategies {
        let mut runs = Vec::with_capacity(n_seeds);
        let mut all_converged = true;
        for k in 0..n_seeds {
            let seed = base_seed.wrapping_add(k as u64);
            let w0 = gaussian_init::<F>(n, sigma_init, seed)?;
            let mut cfg = TrainConfig::new(Activation::Linear, eta, strategy);
            cfg.seed = seed;
            cfg.max_steps = max_steps;
            cfg.conv_tol = real(1e-8);
            cfg.record_stride = max_steps;
            let res = run_training(&dataset, &w0, &cfg)?;
            let label = res.summary.label;
            let limit = match label {
                LimitLabel::Datapoint { index, sign } => {
                    let mut v = dataset.column(index).to_vec();
                    if sign < 0 {
                        for x in v.iter_mut() {
                            *x = -*x;
                        }
                    }
                    v
                }
                LimitLabel::GdMixture => {
                    predicted_gd_limit(&dataset, &w0, Activation::Linear)?
                }
                LimitLabel::NotConverged => {
                    all_converged = false;
                    dataset.to_ambient(&res.final_state)?
                }
            };
            runs.push(CossimRun {
                seed,
                cossim_data: cossim_dataset(&limit, &dataset)?,
                cossim_init: cossim(&limit, &w0)?,
                summary: res.summary,
            });
        }
        let mut data: Vec<F> = runs.iter().map(|r| r.cossim_data).collect();
        let mut init: Vec<F> = runs.iter().map(|r| r.cossim_init).collect();
        out.push(CossimStrategySummary {
            strategy,
            median_cossim_data: median(&mut data),
            median_cossim_init: median(&mut init),
            all_converged,
            runs,
        });
    }
    Ok(out)
}

fn median<F: Scalar>(xs: &mut [F]) -> F {
    debug_assert!(!xs.is_empty());
    xs.sort_by(|a, b| a.partial_cmp(b).expect("no NaN in medians"));
    let mid = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[mid]
    } else {
        (xs[mid - 1] + xs[mid]) / real(2.0)
    }
}

/// One epoch (two steps) of cyclic SGD in the m = n = 2 coordinates
/// `(y, z) = (<w, a_1>, <w, a_2>)`: the first-datapoint step followed by the
/// second-datapoint step.
pub fn csgd_epoch_map<F: Scalar>(y: F, z: F, eta: F) -> (F, F) {
    let two = real::<F>(2.0);
    // Step on the first datapoint: u = y^2.
    let u = y * y;
    let nsq = y * y + z * z;
    let y1 = y * (F::one() + eta * (two - u - nsq));
    let z1 = z * (F::one() - eta * u);
    // Step on the second datapoint: u = z1^2.
    let u2 = z1 * z1;
    let nsq2 = y1 * y1 + z1 * z1;
    let z2 = z1 * (F::one() + eta * (two - u2 - nsq2));
    let y2 = y1 * (F::one() - eta * u2);
    (y2, z2)
}

/// Alignment potential `V(y, z) = z / y`; strictly decreasing along cyclic
/// SGD epochs inside the invariant region.
pub fn csgd_potential<F: Scalar>(y: F, z: F) -> Result<F> {
    if !(y > F::zero()) {
        return Err(Error::InvalidInput(format!(
            "potential requires y > 0, got y={y}"
        )));
    }
    Ok(z / y)
}

/// Outcome of a grid scan of the cyclic-SGD invariant region
/// `A = { y >= z > 0, y^2 + z^2 <= 1 + eta/4 }`.
#[derive(Debug, Clone, PartialEq)]
pub struct CsgdScanReport<F> {
    pub grid_size: usize,
    pub eta: F,
    pub points_checked: usize,
    /// Points where V failed to strictly decrease over one epoch.
    pub potential_violations: usize,
    /// Points mapped outside A by one epoch.
    pub invariance_violations: usize,
    pub min_potential_drop: F,
}

/// Evaluate `V(F(y, z)) < V(y, z)` and `F(y, z) in A` on a uniform
/// `grid_size x grid_size` grid of cell centers covering A.
pub fn csgd_region_scan<F: Scalar>(grid_size: usize, eta: F) -> Result<CsgdScanReport<F>> {
    if grid_size < 16 {
        return Err(Error::InvalidParameter(format!(
            "grid_size must be at least 16, got {grid_size}"
        )));
    }
    if !(eta > F::zero()) {
        return Err(Error::InvalidParameter("eta must be positive".into()));
    }
    let radius_sq = F::one() + eta / real(4.0);
    let side = radius_sq.sqrt();
    let g = real::<F>(grid_size as f64);
    let half = real::<F>(0.5);
    let in_region =
        |y: F, z: F| y >= z && z > F::zero() && y * y + z * z <= radius_sq;

    let mut checked = 0usize;
    let mut potential_violations = 0usize;
    let mut invariance_violations = 0usize;
    let mut min_drop = F::infinity();
    for i in 0..grid_size {
        for j in 0..=i {
            let y = (real::<F>(i as f64) + half) * side / g;
            let z = (real::<F>(j as f64) + half) * side / g;
            if !in_region(y, z) {
                continue;
            }
            checked += 1;
            let (y2, z2) = csgd_epoch_map(y, z, eta);
            let drop = z / y - z2 / y2;
            if !(drop > F::zero()) {
                potential_violations += 1;
            }
            if !in_region(y2, z2) {
                invariance_violations += 1;
            }
            min_drop = min_drop.min(drop);
        }
    }
    Ok(CsgdScanReport {
        grid_size,
        eta,
        points_checked: checked,
        potential_violations,
        invariance_violations,
        min_potential_drop: min_drop,
    })
}
