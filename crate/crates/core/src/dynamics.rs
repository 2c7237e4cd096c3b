//! Autoencoder forward map, gradients, batch schedulers, and the training
//! loop.
//!
//! The model is `f(x; w) = w * phi(<w, x>)` with squared reconstruction loss
//! `l(w; x) = ||x - f(x; w)||^2 / 2`, trained by constant-step mini-batch
//! gradient descent `w <- w - eta * sum_{i in B} grad l(w; a_i)`.
//!
//! Because the data are orthonormal, the update decouples in data
//! coordinates `c(i) = <w, a_i>`: with `u = sum_{i in B} c(i)^2`,
//!
//! ```text
//! c'(i) = c(i) * (1 + eta*(2 - u - ||w||^2))   i in B
//! c'(j) = c(j) * (1 - eta*u)                   j not in B
//! ```
//!
//! [`step_coords`] implements that form; [`step_ambient`] implements the raw
//! gradient step and exists solely to cross-validate it.

use rand::Rng;

use crate::basis_data::{NeuronState, OrthoDataset};
use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, norm_sq};
use crate::observables::{classify_limit, predicted_gd_limit, LimitLabel};
use crate::rng::{stream_rng, Stream};
use crate::{real, Scalar};

/// Neuron activation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Linear,
    Relu,
}

impl Activation {
    #[inline]
    pub fn apply<F: Scalar>(self, z: F) -> F {
        match self {
            Activation::Linear => z,
            Activation::Relu => z.max(F::zero()),
        }
    }

    /// phi'(z); for ReLU this is the indicator of z > 0 (zero at the kink).
    #[inline]
    pub fn derivative_indicator<F: Scalar>(self, z: F) -> bool {
        match self {
            Activation::Linear => true,
            Activation::Relu => z > F::zero(),
        }
    }
}

/// Mini-batch schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchStrategy {
    /// B_t = all m training points.
    Full,
    /// B_t drawn uniformly from the size-b subsets, 1 <= b < m.
    Uniform { b: usize },
    /// B_t = { t mod m } (deterministic order, b = 1).
    Cyclic,
}

impl BatchStrategy {
    pub fn validate(self, m: usize) -> Result<()> {
        match self {
            BatchStrategy::Uniform { b } if b == 0 || b >= m => Err(Error::InvalidParameter(
                format!("uniform batch size must satisfy 1 <= b < m, got b={b}, m={m}"),
            )),
            _ => Ok(()),
        }
    }

    pub fn batch_size(self, m: usize) -> usize {
        match self {
            BatchStrategy::Full => m,
            BatchStrategy::Uniform { b } => b,
            BatchStrategy::Cyclic => 1,
        }
    }
}

/// Training-run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig<F> {
    pub activation: Activation,
    /// Step size eta of the gradient update.
    pub eta: F,
    pub strategy: BatchStrategy,
    pub max_steps: usize,
    /// Tolerance for limit detection (see [`classify_limit`]).
    pub conv_tol: F,
    /// Master seed; batch sampling uses its batch stream.
    pub seed: u64,
    /// Emit a trajectory record every this many steps (the final step is
    /// always recorded).
    pub record_stride: usize,
    /// Keep a coordinate snapshot alongside every record.
    pub dump_coords: bool,
}

impl<F: Scalar> TrainConfig<F> {
    pub fn new(activation: Activation, eta: F, strategy: BatchStrategy) -> Self {
        Self {
            activation,
            eta,
            strategy,
            max_steps: 200_000,
            conv_tol: real(1e-10),
            seed: 0,
            record_stride: 1,
            dump_coords: false,
        }
    }

    /// True when eta lies outside the regime eta <= 1/5 the convergence
    /// guarantees assume.
    pub fn eta_warning(&self) -> bool {
        self.eta > real(0.2)
    }

    fn validate(&self, m: usize) -> Result<()> {
        if !(self.eta > F::zero()) {
            return Err(Error::InvalidParameter(format!(
                "eta must be positive, got {}",
                self.eta
            )));
        }
        if !(self.conv_tol > F::zero()) {
            return Err(Error::InvalidParameter("conv_tol must be positive".into()));
        }
        if self.max_steps == 0 {
            return Err(Error::InvalidParameter("max_steps must be positive".into()));
        }
        if self.record_stride == 0 {
            return Err(Error::InvalidParameter(
                "record_stride must be positive".into(),
            ));
        }
        self.strategy.validate(m)
    }
}

/// Multiplicative factors of one coordinate step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepFactors<F> {
    /// u = squared mass of the batch coordinates.
    pub u: F,
    /// Factor applied to in-batch coordinates: 1 + eta*(2 - u - ||w||^2).
    pub a_factor: F,
    /// Factor applied to all other coordinates: 1 - eta*u.
    pub b_factor: F,
}

/// Per-step observables of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord<F> {
    pub t: usize,
    pub phi: F,
    pub psi: F,
    /// Log-ratio R_t; +inf once the non-maximal in-span coordinates vanish.
    pub r: F,
    pub norm_sq: F,
    pub loss: F,
    /// Argmax_i |c(i)| over the training coordinates, 0-based.
    pub i_star: usize,
    /// Whether i_star was in the (effective) batch applied at this step.
    pub batch_hit: bool,
    /// Outgoing increment R_{t+1} - R_t; 0 on the final record.
    pub delta_r: F,
}

/// Extremes of the boundedness quantities, tracked online over a run.
///
/// For ReLU runs the in-span mass `phi_eff` is taken over the initially
/// positive directions S+ (the effective dataset of the equivalent linear
/// run); for linear runs it is the usual Phi over all m training
/// coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundsReport<F> {
    pub max_norm_sq: F,
    pub sign_stable: bool,
    pub max_abs_coord: F,
    /// Most positive one-step change of the out-of-span mass Psi.
    pub max_psi_increase: F,
    pub min_phi_eff: F,
    pub phi_eff_0: F,
    pub psi_eff_0: F,
    /// Max over t of phi_eff + (5/8) * (||w||^2 - phi_eff).
    pub max_nscript_eff: F,
}

impl<F: Scalar> BoundsReport<F> {
    /// ||w_t||^2 <= 1 + eta/4 (+1e-12).
    pub fn norm_bound_ok(&self, eta: F) -> bool {
        self.max_norm_sq <= F::one() + eta / real(4.0) + real(1e-12)
    }

    /// |c_t(i)| < 1 (+1e-12).
    pub fn coord_bound_ok(&self) -> bool {
        self.max_abs_coord < F::one() + real(1e-12)
    }

    /// Psi never increases by more than 1e-15.
    pub fn psi_monotone_ok(&self) -> bool {
        self.max_psi_increase <= real(1e-15)
    }

    /// phi_eff stays above min(phi_0, 1 - psi_0) (-1e-12).
    pub fn phi_floor_ok(&self) -> bool {
        self.min_phi_eff >= self.phi_eff_0.min(F::one() - self.psi_eff_0) - real(1e-12)
    }

    /// Full-batch only: phi_eff + (5/8) psi_eff stays below 1. The slack
    /// covers saturation once the gap shrinks past f64 resolution.
    pub fn nscript_ok(&self) -> bool {
        self.max_nscript_eff < F::one() + real(1e-12)
    }
}

/// Limit classification plus aggregate run facts.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary<F> {
    /// Steps actually taken.
    pub steps: usize,
    pub converged: bool,
    pub label: LimitLabel,
    pub eta_warning: bool,
    pub final_phi: F,
    pub final_psi: F,
    pub final_r: F,
    pub final_norm_sq: F,
    pub final_loss: F,
    pub bounds: BoundsReport<F>,
}

/// Everything a training run produces.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome<F> {
    pub trajectory: Vec<TrajectoryRecord<F>>,
    /// Coordinate snapshots aligned with `trajectory`, when requested.
    pub coord_snapshots: Option<Vec<Vec<F>>>,
    pub final_state: NeuronState<F>,
    pub summary: RunSummary<F>,
}

/// Autoencoder output `w * phi(<w, x>)`.
pub fn forward<F: Scalar>(w: &[F], x: &[F], act: Activation) -> Result<Vec<F>> {
    check_equal_len(w, x)?;
    let z = act.apply(dot(w, x));
    Ok(w.iter().map(|&wi| wi * z).collect())
}

/// Gradient of the pointwise loss,
/// `phi'(<w,x>) * [x w^T + <w,x> I] * (f(x; w) - x)`.
pub fn pointwise_gradient<F: Scalar>(w: &[F], x: &[F], act: Activation) -> Result<Vec<F>> {
    check_equal_len(w, x)?;
    let c = dot(w, x);
    if !act.derivative_indicator(c) {
        return Ok(vec![F::zero(); w.len()]);
    }
    // On the active branch phi(c) = c for both activations.
    let d: Vec<F> = w.iter().zip(x).map(|(&wi, &xi)| wi * c - xi).collect();
    let wd = dot(w, &d);
    Ok(x.iter()
        .zip(&d)
        .map(|(&xi, &di)| xi * wd + c * di)
        .collect())
}

/// Reconstruction objective `(1/m) sum_i ||a_i - f(a_i; w)||^2 / 2`,
/// evaluated in ambient space.
pub fn objective_loss<F: Scalar>(dataset: &OrthoDataset<F>, w: &[F], act: Activation) -> Result<F> {
    if w.len() != dataset.n() {
        return Err(Error::Dimension(format!(
            "weight length {} does not match dataset n={}",
            w.len(),
            dataset.n()
        )));
    }
    let m = dataset.m();
    let mut total = F::zero();
    for i in 0..m {
        let a = dataset.column(i);
        let out = forward(w, a, act)?;
        let err = a
            .iter()
            .zip(&out)
            .fold(F::zero(), |acc, (&ai, &oi)| acc + (ai - oi) * (ai - oi));
        total = total + err / real(2.0);
    }
    Ok(total / real(m as f64))
}

/// Objective evaluated from coordinates via the expansion
/// `1/2 + (1/m) sum_i phi(c_i)^2 (||w||^2/2 - 1)`.
pub(crate) fn coord_loss<F: Scalar>(coords: &[F], m: usize, act: Activation) -> F {
    let nsq = norm_sq(coords);
    let act_mass = coords[..m].iter().fold(F::zero(), |acc, &c| {
        let p = act.apply(c);
        acc + p * p
    });
    real::<F>(0.5) + act_mass * (nsq / real(2.0) - F::one()) / real(m as f64)
}

/// Batch indices for step `t` (0-based, sorted ascending).
pub fn next_batch<R: Rng>(
    strategy: BatchStrategy,
    m: usize,
    t: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    strategy.validate(m)?;
    match strategy {
        BatchStrategy::Full => Ok((0..m).collect()),
        BatchStrategy::Cyclic => Ok(vec![t % m]),
        BatchStrategy::Uniform { b } => {
            // Partial Fisher-Yates: exact uniformity over size-b subsets.
            // b = 1 short-circuits to the identical single draw.
            if b == 1 {
                return Ok(vec![rng.gen_range(0..m)]);
            }
            let mut idx: Vec<usize> = (0..m).collect();
            for k in 0..b {
                let j = rng.gen_range(k..m);
                idx.swap(k, j);
            }
            idx.truncate(b);
            idx.sort_unstable();
            Ok(idx)
        }
    }
}

/// Batch actually applied by the update: for ReLU only the positively
/// correlated directions receive gradient, so the batch reduces to
/// `B intersect { i : c(i) > 0 }`; may be empty, in which case the step is a
/// no-op.
pub fn effective_batch<F: Scalar>(
    batch: &[usize],
    state: &NeuronState<F>,
    act: Activation,
) -> Vec<usize> {
    match act {
        Activation::Linear => batch.to_vec(),
        Activation::Relu => filter_positive(batch, &state.coords),
    }
}

fn filter_positive<F: Scalar>(batch: &[usize], coords: &[F]) -> Vec<usize> {
    batch
        .iter()
        .copied()
        .filter(|&i| coords[i] > F::zero())
        .collect()
}

/// One coordinate-form update. `batch` must already be effective (for ReLU,
/// intersected with the positive set) and sorted ascending.
pub fn step_coords<F: Scalar>(
    state: &NeuronState<F>,
    batch: &[usize],
    eta: F,
) -> (NeuronState<F>, StepFactors<F>) {
    let mut coords = state.coords.clone();
    let mut sorted;
    let batch = if batch.windows(2).all(|w| w[0] < w[1]) {
        batch
    } else {
        sorted = batch.to_vec();
        sorted.sort_unstable();
        sorted.dedup();
        &sorted
    };
    let factors = step_in_place(&mut coords, batch, eta);
    (NeuronState::new(coords), factors)
}

/// In-place core of [`step_coords`]; `batch` sorted ascending.
fn step_in_place<F: Scalar>(coords: &mut [F], batch: &[usize], eta: F) -> StepFactors<F> {
    let nsq = norm_sq(coords);
    step_in_place_with_norm(coords, batch, eta, nsq)
}

/// Step primitive taking the precomputed squared norm (which the training
/// loop already has from its per-step scan).
fn step_in_place_with_norm<F: Scalar>(
    coords: &mut [F],
    batch: &[usize],
    eta: F,
    nsq: F,
) -> StepFactors<F> {
    if batch.is_empty() {
        return StepFactors {
            u: F::zero(),
            a_factor: F::one(),
            b_factor: F::one(),
        };
    }
    let u = batch
        .iter()
        .fold(F::zero(), |acc, &i| acc + coords[i] * coords[i]);
    let a_factor = F::one() + eta * (real::<F>(2.0) - u - nsq);
    let b_factor = F::one() - eta * u;
    // Scale the inter-batch segments; tight slice loops vectorize.
    let mut prev = 0usize;
    for &i in batch {
        for c in &mut coords[prev..i] {
            *c = *c * b_factor;
        }
        coords[i] = coords[i] * a_factor;
        prev = i + 1;
    }
    for c in &mut coords[prev..] {
        *c = *c * b_factor;
    }
    StepFactors {
        u,
        a_factor,
        b_factor,
    }
}

/// One raw gradient step `w - eta * sum_{i in B} grad l(w; a_i)` in ambient
/// space. Exists to cross-validate [`step_coords`].
pub fn step_ambient<F: Scalar>(
    dataset: &OrthoDataset<F>,
    w: &[F],
    batch: &[usize],
    eta: F,
    act: Activation,
) -> Result<Vec<F>> {
    debug_assert!(batch.iter().all(|&i| i < dataset.m()));
    let mut out = w.to_vec();
    for &i in batch {
        let g = pointwise_gradient(w, dataset.column(i), act)?;
        axpy(&mut out, -eta, &g);
    }
    Ok(out)
}

/// One step of the closed-form full-batch GD recursion on (Phi, Psi):
///
/// ```text
/// Phi' = Phi + 2*eta*Phi*(2 - 2*Phi - Psi) + eta^2*Phi*(2 - 2*Phi - Psi)^2
/// Psi' = Psi - 2*eta*Phi*Psi + eta^2*Phi^2*Psi
/// ```
pub fn gd_two_dim_step<F: Scalar>(phi: F, psi: F, eta: F) -> (F, F) {
    let two = real::<F>(2.0);
    let f = two - two * phi - psi;
    let phi_next = phi + two * eta * phi * f + eta * eta * phi * f * f;
    let psi_next = psi - two * eta * phi * psi + eta * eta * phi * phi * psi;
    (phi_next, psi_next)
}

/// Quantities scanned on every step (tight vectorizable loops).
#[derive(Clone, Copy)]
struct LightObs<F> {
    /// Full-order squared norm, bit-identical to `norm_sq(coords)`.
    nsq_full: F,
    phi: F,
    psi: F,
    phi_eff: F,
    max_abs: F,
}

fn light_observe<F: Scalar>(coords: &[F], m: usize, eff_mask: Option<&[F]>) -> LightObs<F> {
    let nsq_full = norm_sq(coords);
    let phi = coords[..m].iter().fold(F::zero(), |a, &c| a + c * c);
    let psi = coords[m..].iter().fold(F::zero(), |a, &c| a + c * c);
    let phi_eff = match eff_mask {
        None => phi,
        Some(mask) => coords[..m]
            .iter()
            .zip(mask)
            .fold(F::zero(), |a, (&c, &w)| a + w * c * c),
    };
    let max_abs = coords.iter().fold(F::zero(), |a, &c| a.max(c.abs()));
    LightObs {
        nsq_full,
        phi,
        psi,
        phi_eff,
        max_abs,
    }
}

/// Alignment quantities, needed only at records and convergence checks.
#[derive(Clone, Copy)]
struct AlignObs<F> {
    r: F,
    i_star: usize,
    /// Max-norm distance to sign(c(i_star)) * e_{i_star}.
    datapoint_residual: F,
}

fn align_observe<F: Scalar>(coords: &[F], m: usize) -> AlignObs<F> {
    let mut i_star = 0usize;
    let mut a_star = F::neg_infinity();
    for (i, &c) in coords[..m].iter().enumerate() {
        if c.abs() > a_star {
            a_star = c.abs();
            i_star = i;
        }
    }
    // Summing the rest directly (instead of subtracting the max from a
    // total) keeps the R = +inf sentinel exact.
    let mut sum_rest = F::zero();
    let mut max_rest = F::zero();
    for (i, &c) in coords[..m].iter().enumerate() {
        if i != i_star {
            sum_rest = sum_rest + c.abs();
            max_rest = max_rest.max(c.abs());
        }
    }
    let a_star = coords[i_star].abs();
    let r = if a_star == F::zero() {
        F::nan()
    } else if sum_rest == F::zero() {
        F::infinity()
    } else {
        (a_star / sum_rest).ln()
    };
    let max_out = coords[m..]
        .iter()
        .fold(F::zero(), |acc, &c| acc.max(c.abs()));
    AlignObs {
        r,
        i_star,
        datapoint_residual: (a_star - F::one()).abs().max(max_rest).max(max_out),
    }
}

struct BoundsMonitor<F> {
    report: BoundsReport<F>,
    prev_psi: F,
}

impl<F: Scalar> BoundsMonitor<F> {
    fn new(obs: &LightObs<F>) -> Self {
        let psi_eff_0 = obs.nsq_full - obs.phi_eff;
        Self {
            report: BoundsReport {
                max_norm_sq: obs.nsq_full,
                sign_stable: true,
                max_abs_coord: obs.max_abs,
                max_psi_increase: F::neg_infinity(),
                min_phi_eff: obs.phi_eff,
                phi_eff_0: obs.phi_eff,
                psi_eff_0,
                max_nscript_eff: obs.phi_eff + real::<F>(0.625) * psi_eff_0,
            },
            prev_psi: obs.psi,
        }
    }

    /// Coordinates evolve multiplicatively, so signs are preserved on a step
    /// exactly when both applied factors are positive; `factors_positive`
    /// carries that per-step fact.
    fn update(&mut self, obs: &LightObs<F>, factors_positive: bool) {
        let rep = &mut self.report;
        rep.max_norm_sq = rep.max_norm_sq.max(obs.nsq_full);
        rep.max_abs_coord = rep.max_abs_coord.max(obs.max_abs);
        rep.max_psi_increase = rep.max_psi_increase.max(obs.psi - self.prev_psi);
        rep.min_phi_eff = rep.min_phi_eff.min(obs.phi_eff);
        let nscript = obs.phi_eff + real::<F>(0.625) * (obs.nsq_full - obs.phi_eff);
        rep.max_nscript_eff = rep.max_nscript_eff.max(nscript);
        rep.sign_stable &= factors_positive;
        self.prev_psi = obs.psi;
    }
}

/// How often non-stride-1 runs test for convergence.
const CONV_CHECK_STRIDE: usize = 64;

/// Run mini-batch training until `max_steps` or until the iterate is within
/// `conv_tol` of a limit point (a signed datapoint, or the projected and
/// normalized initialization for full-batch runs).
///
/// Records observables every `record_stride` steps plus the final step; each
/// record's `delta_r`/`batch_hit` describe the transition leaving that step.
pub fn run_training<F: Scalar>(
    dataset: &OrthoDataset<F>,
    w0: &[F],
    config: &TrainConfig<F>,
) -> Result<TrainOutcome<F>> {
    let n = dataset.n();
    let m = dataset.m();
    config.validate(m)?;
    if w0.len() != n {
        return Err(Error::Dimension(format!(
            "w0 length {} does not match dataset n={n}",
            w0.len()
        )));
    }
    if !w0.iter().all(|c| c.is_finite()) {
        return Err(Error::InvalidInput("w0 has non-finite entries".into()));
    }

    let mut coords = dataset.to_coords(w0)?.coords;
    // Effective in-span directions: S+ for ReLU, all of [m] for linear.
    let eff_mask: Option<Vec<F>> = match config.activation {
        Activation::Linear => None,
        Activation::Relu => Some(
            coords[..m]
                .iter()
                .map(|&c| if c > F::zero() { F::one() } else { F::zero() })
                .collect(),
        ),
    };
    let predicted = predicted_gd_limit(dataset, w0, config.activation).ok();
    let predicted_coords = match &predicted {
        Some(p) => Some(dataset.to_coords(p)?.coords),
        None => None,
    };
    // Coordinate-space prefilter for the (ambient) mixture test.
    let mixture_guard = config.conv_tol / real((n as f64).sqrt());

    let mut rng = stream_rng(config.seed, Stream::Batch);
    let mut light = light_observe(&coords, m, eff_mask.as_deref());
    let mut monitor = BoundsMonitor::new(&light);
    let mut trajectory: Vec<TrajectoryRecord<F>> = Vec::new();
    let mut snapshots: Option<Vec<Vec<F>>> = config.dump_coords.then(Vec::new);
    // Alignment observables of the current state, computed lazily.
    let mut align: Option<AlignObs<F>> = None;

    let mut t = 0usize;
    let mut converged = false;
    loop {
        let due = t % config.record_stride == 0;
        let conv_due = config.record_stride == 1 || t % CONV_CHECK_STRIDE == 0;
        if (due || conv_due) && align.is_none() {
            align = Some(align_observe(&coords, m));
        }
        if conv_due
            && is_converged(
                align.as_ref().expect("alignment computed for check"),
                &coords,
                dataset,
                predicted_coords.as_deref(),
                predicted.as_deref(),
                mixture_guard,
                config.conv_tol,
            )?
        {
            converged = true;
            break;
        }
        if t >= config.max_steps {
            break;
        }

        let batch = next_batch(config.strategy, m, t, &mut rng)?;
        let relu_eff;
        let eff: &[usize] = match config.activation {
            Activation::Linear => &batch,
            Activation::Relu => {
                relu_eff = filter_positive(&batch, &coords);
                &relu_eff
            }
        };

        let record_base = if due {
            let a = *align.as_ref().expect("alignment computed when due");
            let batch_hit = a.r.is_finite() && eff.contains(&a.i_star);
            if let Some(snaps) = snapshots.as_mut() {
                snaps.push(coords.clone());
            }
            Some((light, a, coord_loss(&coords, m, config.activation), batch_hit))
        } else {
            None
        };

        let factors = step_in_place_with_norm(&mut coords, eff, config.eta, light.nsq_full);
        light = light_observe(&coords, m, eff_mask.as_deref());
        if !light.nsq_full.is_finite() || !light.max_abs.is_finite() {
            return Err(Error::Divergence { step: t });
        }
        monitor.update(
            &light,
            factors.a_factor > F::zero() && factors.b_factor > F::zero(),
        );

        if let Some((pre, pre_align, loss, batch_hit)) = record_base {
            let align_next = align_observe(&coords, m);
            trajectory.push(TrajectoryRecord {
                t,
                phi: pre.phi,
                psi: pre.psi,
                r: pre_align.r,
                norm_sq: pre.phi + pre.psi,
                loss,
                i_star: pre_align.i_star,
                batch_hit,
                delta_r: align_next.r - pre_align.r,
            });
            align = Some(align_next);
        } else {
            align = None;
        }
        t += 1;
    }

    // Final record (the loop always breaks before recording the last state).
    let final_align = align.unwrap_or_else(|| align_observe(&coords, m));
    trajectory.push(TrajectoryRecord {
        t,
        phi: light.phi,
        psi: light.psi,
        r: final_align.r,
        norm_sq: light.phi + light.psi,
        loss: coord_loss(&coords, m, config.activation),
        i_star: final_align.i_star,
        batch_hit: false,
        delta_r: F::zero(),
    });
    if let Some(snaps) = snapshots.as_mut() {
        snaps.push(coords.clone());
    }

    let final_loss = trajectory.last().expect("final record").loss;
    let final_state = NeuronState::new(coords);
    let label = classify_limit(&final_state, dataset, predicted.as_deref(), config.conv_tol);
    let summary = RunSummary {
        steps: t,
        converged,
        label,
        eta_warning: config.eta_warning(),
        final_phi: light.phi,
        final_psi: light.psi,
        final_r: final_align.r,
        final_norm_sq: light.phi + light.psi,
        final_loss,
        bounds: monitor.report,
    };
    Ok(TrainOutcome {
        trajectory,
        coord_snapshots: snapshots,
        final_state,
        summary,
    })
}

fn is_converged<F: Scalar>(
    align: &AlignObs<F>,
    coords: &[F],
    dataset: &OrthoDataset<F>,
    predicted_coords: Option<&[F]>,
    predicted: Option<&[F]>,
    mixture_guard: F,
    tol: F,
) -> Result<bool> {
    if align.datapoint_residual < tol {
        return Ok(true);
    }
    if let (Some(pc), Some(p)) = (predicted_coords, predicted) {
        // Cheap coordinate prefilter; the ambient comparison (an O(n^2)
        // basis change) runs only once the coordinates are already close.
        let near = coords
            .iter()
            .zip(pc)
            .all(|(&c, &q)| (c - q).abs() < mixture_guard);
        if near {
            let w = dataset.to_ambient(&NeuronState::new(coords.to_vec()))?;
            let far = w.iter().zip(p).any(|(&a, &b)| (a - b).abs() >= tol);
            return Ok(!far);
        }
    }
    Ok(false)
}

fn check_equal_len<F>(a: &[F], b: &[F]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!(
            "vector lengths differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs_diff;

    fn standard2() -> OrthoDataset<f64> {
        OrthoDataset::standard(2, 2).unwrap()
    }

    #[test]
    fn forward_matches_definition() {
        let zero = forward(&[0.0, 0.0], &[0.3, -0.4], Activation::Linear).unwrap();
        assert_eq!(zero, vec![0.0, 0.0]);

        let out = forward(&[1.0, 0.0], &[1.0, 0.0], Activation::Linear).unwrap();
        assert_eq!(out, vec![1.0, 0.0]);

        // Dead ReLU neuron: <w, x> = 0 gives the zero output.
        let out = forward(&[0.5, 0.0], &[0.0, 1.0], Activation::Relu).unwrap();
        assert_eq!(out, vec![0.0, 0.0]);
    }

    #[test]
    fn pointwise_gradient_hand_checked() {
        // Fixed point: f(a_1; a_1) = a_1.
        let g = pointwise_gradient(&[1.0, 0.0], &[1.0, 0.0], Activation::Linear).unwrap();
        assert!(max_abs_diff(&g, &[0.0, 0.0]) < 1e-15);

        // Hand evaluation: c = 0.5, f - x = (-0.75, 0),
        // [x w^T + c I] = [[1.0, 0], [0, 0.5]] so the gradient is (-0.75, 0).
        let g = pointwise_gradient(&[0.5, 0.0], &[1.0, 0.0], Activation::Linear).unwrap();
        assert!(max_abs_diff(&g, &[-0.75, 0.0]) < 1e-15);

        // Inactive ReLU branch.
        let g = pointwise_gradient(&[-0.5, 0.1], &[1.0, 0.0], Activation::Relu).unwrap();
        assert_eq!(g, vec![0.0, 0.0]);
    }

    #[test]
    fn objective_loss_examples() {
        let ds = standard2();
        assert!((objective_loss(&ds, &[0.0, 0.0], Activation::Relu).unwrap() - 0.5).abs() < 1e-15);
        assert!((objective_loss(&ds, &[1.0, 0.0], Activation::Relu).unwrap() - 0.25).abs() < 1e-15);
        let ds1 = OrthoDataset::<f64>::standard(2, 1).unwrap();
        assert!(objective_loss(&ds1, &[1.0, 0.0], Activation::Relu).unwrap() < 1e-15);
    }

    #[test]
    fn coord_loss_agrees_with_objective() {
        let ds = OrthoDataset::<f64>::random_orthonormal(5, 3, 9).unwrap();
        for (k, act) in [(0u64, Activation::Linear), (1, Activation::Relu)] {
            for seed in 0..20u64 {
                let w = crate::basis_data::gaussian_init::<f64>(5, 0.9, seed * 7 + k).unwrap();
                let direct = objective_loss(&ds, &w, act).unwrap();
                let coords = ds.to_coords(&w).unwrap();
                let rewritten = coord_loss(&coords.coords, 3, act);
                assert!(
                    (direct - rewritten).abs() < 1e-12,
                    "{direct} vs {rewritten}"
                );
            }
        }
    }

    #[test]
    fn next_batch_schedules() {
        let mut rng = stream_rng(0, Stream::Batch);
        assert_eq!(
            next_batch(BatchStrategy::Full, 3, 5, &mut rng).unwrap(),
            vec![0, 1, 2]
        );
        // Cyclic visits datapoints in order: first point at t=0.
        assert_eq!(
            next_batch(BatchStrategy::Cyclic, 2, 0, &mut rng).unwrap(),
            vec![0]
        );
        assert_eq!(
            next_batch(BatchStrategy::Cyclic, 2, 1, &mut rng).unwrap(),
            vec![1]
        );
        assert_eq!(
            next_batch(BatchStrategy::Cyclic, 2, 2, &mut rng).unwrap(),
            vec![0]
        );
        assert!(next_batch(BatchStrategy::Uniform { b: 5 }, 5, 0, &mut rng).is_err());
        assert!(next_batch(BatchStrategy::Uniform { b: 0 }, 5, 0, &mut rng).is_err());
    }

    #[test]
    fn uniform_batches_have_uniform_marginals() {
        // Each index should appear with frequency b/m over many draws.
        let (m, b, draws) = (5usize, 2usize, 50_000usize);
        let mut rng = stream_rng(42, Stream::Batch);
        let mut counts = vec![0usize; m];
        for t in 0..draws {
            let batch = next_batch(BatchStrategy::Uniform { b }, m, t, &mut rng).unwrap();
            assert_eq!(batch.len(), b);
            assert!(batch.windows(2).all(|w| w[0] < w[1]));
            for i in batch {
                counts[i] += 1;
            }
        }
        let p = b as f64 / m as f64;
        let se = (p * (1.0 - p) / draws as f64).sqrt();
        for &c in &counts {
            let freq = c as f64 / draws as f64;
            assert!(
                (freq - p).abs() < 3.0 * se,
                "frequency {freq} vs {p} (se {se})"
            );
        }
    }

    #[test]
    fn effective_batch_filters_positive_directions() {
        let state = NeuronState::<f64>::new(vec![0.3, -0.2, 0.5]);
        assert_eq!(
            effective_batch(&[0, 1], &state, Activation::Linear),
            vec![0, 1]
        );
        assert_eq!(
            effective_batch(&[0, 1], &state, Activation::Relu),
            vec![0]
        );
        let state = NeuronState::<f64>::new(vec![0.3, -0.1, 0.5]);
        assert!(effective_batch(&[1], &state, Activation::Relu).is_empty());
        // Zero coordinate is excluded (phi'(0) = 0).
        let state = NeuronState::<f64>::new(vec![0.0, 0.3]);
        assert!(effective_batch(&[0], &state, Activation::Relu).is_empty());
    }

    #[test]
    fn step_coords_hand_checked() {
        // u = 0.0164, a = 1 + 0.125 * (2 - 2*0.0164) = 1.2459.
        let s = NeuronState::<f64>::new(vec![0.1, 0.08]);
        let (next, f) = step_coords(&s, &[0, 1], 0.125);
        assert!((f.u - 0.0164).abs() < 1e-15);
        assert!((f.a_factor - 1.2459).abs() < 1e-12);
        assert!(max_abs_diff(&next.coords, &[0.12459, 0.099672]) < 1e-12);

        // u = 0.01, a = 1 + 0.125 * (2 - 0.01 - 0.0164) = 1.2467, b = 0.99875.
        let (next, f) = step_coords(&s, &[0], 0.125);
        assert!((f.a_factor - 1.2467).abs() < 1e-12);
        assert!((f.b_factor - 0.99875).abs() < 1e-15);
        assert!(max_abs_diff(&next.coords, &[0.12467, 0.0799]) < 1e-12);

        // Converged state is a fixed point: u = 1, ||w||^2 = 1, a = 1.
        let s = NeuronState::<f64>::new(vec![1.0, 0.0]);
        let (next, f) = step_coords(&s, &[0], 0.33);
        assert_eq!(f.a_factor, 1.0);
        assert_eq!(next.coords, vec![1.0, 0.0]);
    }

    #[test]
    fn empty_batch_is_exact_noop() {
        let s = NeuronState::<f64>::new(vec![0.1, -0.2, 0.3]);
        let (next, f) = step_coords(&s, &[], 0.2);
        assert_eq!(next.coords, s.coords);
        assert_eq!((f.u, f.a_factor, f.b_factor), (0.0, 1.0, 1.0));
    }

    #[test]
    fn step_factors_positive_for_small_eta() {
        // ||w0|| < 1 and eta <= 1/5 keep both factors strictly positive.
        let s = NeuronState::<f64>::new(vec![0.6, -0.5, 0.3]);
        let (_, f) = step_coords(&s, &[0, 1], 0.2);
        assert!(f.a_factor > 0.0 && f.b_factor > 0.0);
    }

    #[test]
    fn step_ambient_matches_step_coords() {
        let ds = OrthoDataset::<f64>::random_orthonormal(6, 4, 5).unwrap();
        for seed in 0..100u64 {
            let w = crate::basis_data::gaussian_init::<f64>(6, 0.8, seed).unwrap();
            let state = ds.to_coords(&w).unwrap();
            let batch: Vec<usize> = match seed % 4 {
                0 => vec![0],
                1 => vec![1, 3],
                2 => vec![0, 1, 2, 3],
                _ => vec![2],
            };
            let act = if seed % 2 == 0 {
                Activation::Linear
            } else {
                Activation::Relu
            };
            let eff = effective_batch(&batch, &state, act);
            let (coord_next, _) = step_coords(&state, &eff, 0.15);
            let ambient_next = step_ambient(&ds, &w, &batch, 0.15, act).unwrap();
            let via_ambient = ds.to_coords(&ambient_next).unwrap();
            assert!(
                max_abs_diff(&coord_next.coords, &via_ambient.coords) < 1e-12,
                "seed {seed}"
            );
        }
    }

    #[test]
    fn relu_step_with_all_negative_correlations_is_identity() {
        let ds = standard2();
        let w = [-0.3, -0.4];
        let next = step_ambient(&ds, &w, &[0, 1], 0.2, Activation::Relu).unwrap();
        assert_eq!(next, w.to_vec());
    }

    #[test]
    fn gd_two_dim_step_examples() {
        // Matches the coordinate step: Phi' = Phi * a^2 with a = 1.2459.
        let s = NeuronState::<f64>::new(vec![0.1, 0.08]);
        let (next, _) = step_coords(&s, &[0, 1], 0.125);
        let phi_from_sim: f64 = next.coords.iter().map(|c| c * c).sum();
        let (phi2, psi2) = gd_two_dim_step::<f64>(0.0164, 0.0, 0.125);
        assert!((phi2 - phi_from_sim).abs() < 1e-12);
        assert_eq!(psi2, 0.0);

        assert_eq!(gd_two_dim_step::<f64>(1.0, 0.0, 0.17), (1.0, 0.0));
        assert_eq!(gd_two_dim_step::<f64>(0.0, 0.5, 0.17), (0.0, 0.5));
    }

    #[test]
    fn run_training_gd_reaches_projected_initialization() {
        let ds = standard2();
        let cfg = TrainConfig::new(Activation::Linear, 0.125, BatchStrategy::Full);
        let out = run_training(&ds, &[0.1, 0.08], &cfg).unwrap();
        assert!(out.summary.converged);
        assert_eq!(out.summary.label, LimitLabel::GdMixture);
        let scale = 1.0 / 0.0164f64.sqrt();
        let expect = [0.1 * scale, 0.08 * scale];
        assert!(max_abs_diff(&out.final_state.coords, &expect) < 1e-6);
    }

    #[test]
    fn run_training_sgd_reaches_a_datapoint() {
        let ds = standard2();
        let mut cfg = TrainConfig::new(Activation::Linear, 0.125, BatchStrategy::Uniform { b: 1 });
        for seed in 0..5 {
            cfg.seed = seed;
            let out = run_training(&ds, &[0.1, 0.08], &cfg).unwrap();
            assert!(out.summary.converged, "seed {seed}");
            match out.summary.label {
                LimitLabel::Datapoint { sign, .. } => assert_eq!(sign, 1),
                other => panic!("seed {seed}: unexpected label {other:?}"),
            }
            let c = &out.final_state.coords;
            assert!((c[0] - 1.0).abs() < 1e-6 || (c[1] - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn run_training_cyclic_reaches_first_datapoint() {
        // <w0, a_1> >= <w0, a_2> > 0 sends cyclic SGD to the first datapoint.
        let ds = standard2();
        let mut cfg = TrainConfig::new(Activation::Linear, 0.125, BatchStrategy::Cyclic);
        cfg.conv_tol = 1e-9;
        let out = run_training(&ds, &[0.1, 0.08], &cfg).unwrap();
        assert_eq!(
            out.summary.label,
            LimitLabel::Datapoint { index: 0, sign: 1 }
        );
        assert!(max_abs_diff(&out.final_state.coords, &[1.0, 0.0]) < 1e-6);
    }

    #[test]
    fn run_training_divergence_is_reported() {
        let ds = standard2();
        let mut cfg = TrainConfig::new(Activation::Linear, 40.0, BatchStrategy::Full);
        cfg.max_steps = 10_000;
        match run_training(&ds, &[0.5, 0.4], &cfg) {
            Err(Error::Divergence { .. }) => {}
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn eta_warning_flag() {
        let cfg = TrainConfig::new(Activation::Linear, 0.25, BatchStrategy::Full);
        assert!(cfg.eta_warning());
        let cfg = TrainConfig::new(Activation::Linear, 0.2, BatchStrategy::Full);
        assert!(!cfg.eta_warning());
    }

    #[test]
    fn trajectory_records_are_consistent() {
        let ds = standard2();
        let mut cfg = TrainConfig::new(Activation::Linear, 0.125, BatchStrategy::Full);
        cfg.max_steps = 50;
        cfg.conv_tol = 1e-14;
        let out = run_training(&ds, &[0.1, 0.08], &cfg).unwrap();
        for rec in &out.trajectory {
            assert!(rec.phi >= 0.0 && rec.psi >= 0.0);
            assert!((rec.norm_sq - (rec.phi + rec.psi)).abs() < 1e-10);
        }
        // Records every stride plus the final step.
        let last = out.trajectory.last().unwrap();
        assert_eq!(last.t, out.summary.steps);
        assert_eq!(last.delta_r, 0.0);
        assert!(!last.batch_hit);
    }

    #[test]
    fn record_stride_subsamples_but_keeps_final() {
        let ds = standard2();
        let mut cfg = TrainConfig::new(Activation::Linear, 0.125, BatchStrategy::Full);
        cfg.record_stride = 7;
        cfg.max_steps = 20;
        cfg.conv_tol = 1e-15;
        let out = run_training(&ds, &[0.1, 0.08], &cfg).unwrap();
        let ts: Vec<usize> = out.trajectory.iter().map(|r| r.t).collect();
        assert_eq!(ts, vec![0, 7, 14, 20]);
    }

    #[test]
    fn determinism_same_config_same_trajectory() {
        let ds = OrthoDataset::<f64>::random_orthonormal(6, 4, 11).unwrap();
        let w0 = crate::basis_data::gaussian_init::<f64>(6, 0.5, 3).unwrap();
        let mut cfg = TrainConfig::new(Activation::Relu, 0.2, BatchStrategy::Uniform { b: 2 });
        cfg.max_steps = 2_000;
        cfg.seed = 77;
        let a = run_training(&ds, &w0, &cfg).unwrap();
        let b = run_training(&ds, &w0, &cfg).unwrap();
        assert_eq!(a.trajectory, b.trajectory);
        assert_eq!(a.final_state, b.final_state);
    }
}
