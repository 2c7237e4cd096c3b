//! Loss-landscape analysis of the ReLU objective.
//!
//! The objective expands to `L(w) = 1/2 + (1/m) sum_i f_i(w)` with
//! `f_i(w) = phi^2(<w, a_i>) (||w||^2/2 - 1)`. Its global minima are the
//! nonnegative unit-norm combinations of the training points
//! `M = { sum c_i a_i : c_i >= 0, sum c_i^2 = 1 }`, where the value is
//! `(m-1)/(2m)`.
//!
//! `L` is not twice differentiable at points orthogonal to a datapoint, so
//! curvature is measured with one-sided second directional derivatives
//! `D^2_v`. At a point of `M` with support `S` the contribution of `f_i` is
//!
//! ```text
//! D^2_v f_i(w) = v' H_i v   if <w, a_i> > 0, or <w, a_i> = 0 and <v, a_i> >= 0,
//!              = 0          otherwise,
//! H_i = (||w||^2 - 2) a_i a_i' + 2 <w, a_i> (a_i w' + w a_i') + <w, a_i>^2 I.
//! ```
//!
//! Sharpness is reported as the maximum curvature `4/m` (attained at v = w)
//! and the Gaussian-average (trace) curvature `(2n + 8 - m - |S|) / (2m)`.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::basis_data::OrthoDataset;
use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, norm, norm_sq};
use crate::rng::sample_rng;
use crate::{real, Scalar};

/// Membership tolerance for the global-minimum set.
const MEMBERSHIP_TOL: f64 = 1e-9;
/// Coefficients below this magnitude sit on the kink of their ReLU term.
const KINK_TOL: f64 = 1e-12;

/// Result of testing `w` against the global-minimum set.
#[derive(Debug, Clone, PartialEq)]
pub struct MinimaMembership<F> {
    pub in_m: bool,
    /// Data-span coefficients `c_i = <w, a_i>`, i < m.
    pub coeffs: Vec<F>,
    /// Squared mass outside the data span.
    pub off_span_mass: F,
    pub sum_sq: F,
    pub min_coeff: F,
}

/// Minimum value of the ReLU objective, `(m - 1) / (2m)`.
pub fn global_min_value<F: Scalar>(m: usize) -> F {
    real::<F>((m as f64 - 1.0) / (2.0 * m as f64))
}

/// Test membership in `M`: nonnegative coefficients, unit squared sum, and
/// no mass outside the data span, all within `tol`.
pub fn global_min_check<F: Scalar>(
    dataset: &OrthoDataset<F>,
    w: &[F],
    tol: F,
) -> Result<MinimaMembership<F>> {
    if !(tol > F::zero()) {
        return Err(Error::InvalidParameter("tol must be positive".into()));
    }
    let state = dataset.to_coords(w)?;
    let m = dataset.m();
    let coeffs: Vec<F> = state.coords[..m].to_vec();
    let off_span_mass = state.coords[m..].iter().fold(F::zero(), |a, &c| a + c * c);
    let sum_sq = coeffs.iter().fold(F::zero(), |a, &c| a + c * c);
    let min_coeff = coeffs.iter().fold(F::infinity(), |a, &c| a.min(c));
    let in_m =
        off_span_mass < tol && (sum_sq - F::one()).abs() < tol && min_coeff > -tol;
    Ok(MinimaMembership {
        in_m,
        coeffs,
        off_span_mass,
        sum_sq,
        min_coeff,
    })
}

/// ReLU objective in the rewritten form
/// `1/2 + (1/m) sum_i phi^2(<w, a_i>) (||w||^2/2 - 1)`.
pub fn loss_rewritten<F: Scalar>(dataset: &OrthoDataset<F>, w: &[F]) -> Result<F> {
    if w.len() != dataset.n() {
        return Err(Error::Dimension(format!(
            "weight length {} does not match dataset n={}",
            w.len(),
            dataset.n()
        )));
    }
    let m = dataset.m();
    let nsq = norm_sq(w);
    let mut act_mass = F::zero();
    for i in 0..m {
        let c = dot(w, dataset.column(i));
        let p = c.max(F::zero());
        act_mass = act_mass + p * p;
    }
    Ok(real::<F>(0.5) + act_mass * (nsq / real(2.0) - F::one()) / real(m as f64))
}

/// Gradient of the ReLU objective away from kinks:
/// `(1/m) sum_{i : c_i > 0} [ c_i (||w||^2 - 2) a_i + c_i^2 w ]`.
pub fn loss_gradient<F: Scalar>(dataset: &OrthoDataset<F>, w: &[F]) -> Result<Vec<F>> {
    if w.len() != dataset.n() {
        return Err(Error::Dimension("weight/dataset size mismatch".into()));
    }
    let m = dataset.m();
    let nsq = norm_sq(w);
    let inv_m = F::one() / real::<F>(m as f64);
    let mut grad = vec![F::zero(); w.len()];
    for i in 0..m {
        let c = dot(w, dataset.column(i));
        if c > F::zero() {
            axpy(&mut grad, inv_m * c * (nsq - real(2.0)), dataset.column(i));
            axpy(&mut grad, inv_m * c * c, w);
        }
    }
    Ok(grad)
}

/// One-sided directional derivative by forward differences with one
/// Richardson refinement: all sample points lie on the approach side, so
/// kinks at `x` are measured correctly.
pub fn one_sided_d1<F, G>(f: G, x: &[F], v: &[F], h: F) -> Result<F>
where
    F: Scalar,
    G: Fn(&[F]) -> F,
{
    check_direction(x, v, h)?;
    let fx = f(x);
    let q = |step: F| -> F { (f(&offset(x, v, step)) - fx) / step };
    let coarse = q(h);
    let fine = q(h / real(2.0));
    let d1 = real::<F>(2.0) * fine - coarse;
    if !d1.is_finite() {
        return Err(Error::Numeric("non-finite directional derivative".into()));
    }
    Ok(d1)
}

/// One-sided second directional derivative by the three-point forward
/// stencil `(f(x + 2hv) - 2 f(x + hv) + f(x)) / h^2`.
pub fn one_sided_d2<F, G>(f: G, x: &[F], v: &[F], h: F) -> Result<F>
where
    F: Scalar,
    G: Fn(&[F]) -> F,
{
    check_direction(x, v, h)?;
    let two = real::<F>(2.0);
    let d2 = (f(&offset(x, v, two * h)) - two * f(&offset(x, v, h)) + f(x)) / (h * h);
    if !d2.is_finite() {
        return Err(Error::Numeric(
            "non-finite second directional derivative".into(),
        ));
    }
    Ok(d2)
}

fn check_direction<F: Scalar>(x: &[F], v: &[F], h: F) -> Result<()> {
    if x.len() != v.len() {
        return Err(Error::Dimension("point/direction size mismatch".into()));
    }
    if !(h > F::zero()) {
        return Err(Error::InvalidInput("step h must be positive".into()));
    }
    if norm(v) == F::zero() {
        return Err(Error::InvalidInput("zero direction".into()));
    }
    Ok(())
}

fn offset<F: Scalar>(x: &[F], v: &[F], t: F) -> Vec<F> {
    x.iter().zip(v).map(|(&xi, &vi)| xi + t * vi).collect()
}

/// Contribution `D^2_v f_i(w)` of one datapoint term at a point of `M`
/// (not yet divided by m). Implements the case rule with the kink branch
/// active for `<v, a_i> >= 0`; moving along the kink counts as active.
pub fn curvature_term<F: Scalar>(dataset: &OrthoDataset<F>, w: &[F], v: &[F], i: usize) -> F {
    let a = dataset.column(i);
    let c = dot(w, a);
    let va = dot(v, a);
    let kink = real::<F>(KINK_TOL);
    let active = c > kink || (c.abs() <= kink && va >= F::zero());
    if !active {
        return F::zero();
    }
    let nsq = norm_sq(w);
    let vw = dot(v, w);
    (nsq - real(2.0)) * va * va
        + real::<F>(4.0) * c * va * vw
        + c * c * norm_sq(v)
}

/// One-sided second directional derivative of the objective at `w in M`,
/// `(1/m) sum_i D^2_v f_i(w)`. Errors unless `w` is in the global-minimum
/// set within 1e-9.
pub fn curvature_analytic<F: Scalar>(dataset: &OrthoDataset<F>, w: &[F], v: &[F]) -> Result<F> {
    require_membership(dataset, w)?;
    if v.len() != w.len() {
        return Err(Error::Dimension("direction size mismatch".into()));
    }
    Ok(curvature_sum(dataset, w, v))
}

fn curvature_sum<F: Scalar>(dataset: &OrthoDataset<F>, w: &[F], v: &[F]) -> F {
    let m = dataset.m();
    let mut total = F::zero();
    for i in 0..m {
        total = total + curvature_term(dataset, w, v, i);
    }
    total / real(m as f64)
}

fn require_membership<F: Scalar>(dataset: &OrthoDataset<F>, w: &[F]) -> Result<()> {
    let membership = global_min_check(dataset, w, real(MEMBERSHIP_TOL))?;
    if !membership.in_m {
        return Err(Error::InvalidPoint(format!(
            "point is not in the global-minimum set within {MEMBERSHIP_TOL:e} \
             (sum_sq={}, min_coeff={}, off_span={})",
            membership.sum_sq, membership.min_coeff, membership.off_span_mass
        )));
    }
    Ok(())
}

/// Analytic and numeric curvature measures at a global minimum.
#[derive(Debug, Clone, PartialEq)]
pub struct SharpnessReport<F> {
    /// Maximum curvature 4/m.
    pub max_curv_analytic: F,
    /// One-sided second derivative along v = w.
    pub max_curv_numeric: F,
    /// Trace curvature (2n + 8 - m - |S|) / (2m).
    pub trace_analytic: F,
    /// Monte Carlo Gaussian average of the analytic curvature.
    pub trace_mc: F,
    pub trace_mc_se: F,
    pub n_samples: usize,
    /// Support size |S| of the minimum.
    pub s_size: usize,
}

/// Sharpness at a global minimum `w` with Monte Carlo trace estimation over
/// `n_samples` standard Gaussian directions (deterministic per-sample
/// substreams of `seed`).
pub fn sharpness_report<F: Scalar>(
    dataset: &OrthoDataset<F>,
    w: &[F],
    n_samples: usize,
    h: F,
    seed: u64,
) -> Result<SharpnessReport<F>> {
    if n_samples < 1000 {
        return Err(Error::InvalidParameter(format!(
            "need at least 1000 trace samples, got {n_samples}"
        )));
    }
    require_membership(dataset, w)?;
    let n = dataset.n();
    let m = dataset.m();
    let s_size = (0..m)
        .filter(|&i| dot(w, dataset.column(i)) > real(MEMBERSHIP_TOL))
        .count();

    let max_curv_analytic = real::<F>(4.0 / m as f64);
    let trace_analytic =
        real::<F>((2.0 * n as f64 + 8.0 - m as f64 - s_size as f64) / (2.0 * m as f64));

    let relu_loss = |x: &[F]| loss_rewritten(dataset, x).expect("loss evaluation");
    let max_curv_numeric = one_sided_d2(relu_loss, w, w, h)?;

    let mut sum = F::zero();
    let mut sum_sq = F::zero();
    let mut v = vec![F::zero(); n];
    for k in 0..n_samples {
        let mut rng = sample_rng(seed, k as u64);
        for x in v.iter_mut() {
            let g: f64 = rng.sample(StandardNormal);
            *x = real(g);
        }
        let c = curvature_sum(dataset, w, &v);
        sum = sum + c;
        sum_sq = sum_sq + c * c;
    }
    let count = real::<F>(n_samples as f64);
    let trace_mc = sum / count;
    let var = (sum_sq - sum * sum / count) / real::<F>((n_samples - 1) as f64);
    let trace_mc_se = (var.max(F::zero()) / count).sqrt();

    Ok(SharpnessReport {
        max_curv_analytic,
        max_curv_numeric,
        trace_analytic,
        trace_mc,
        trace_mc_se,
        n_samples,
        s_size,
    })
}
