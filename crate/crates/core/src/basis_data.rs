//! Orthonormal datasets and basis changes.
//!
//! A dataset is an orthonormal basis `a_1, ..., a_n` of R^n whose first `m`
//! columns are the training points. The neuron `w` is analyzed through its
//! coordinates `c(i) = <w, a_i>`; this module owns the conversions between
//! the ambient vector and that coordinate representation.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{axpy, dot, norm_sq};
use crate::rng::{stream_rng, Stream};
use crate::{real, Scalar};

/// How the basis was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    /// Standard basis vectors; the basis matrix is exactly the identity.
    Standard,
    /// Orthonormal factor of a seeded Gaussian matrix (Householder QR with
    /// positive pivots).
    Random,
}

/// Orthonormal dataset: `n` basis directions, the first `m` of which are the
/// training points.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthoDataset<F> {
    n: usize,
    m: usize,
    kind: DatasetKind,
    seed: u64,
    /// Column-major basis; column `i` is `a_i`.
    basis: Vec<F>,
}

/// Neuron weight in data coordinates, `coords[i] = <w, a_i>`.
#[derive(Debug, Clone, PartialEq)]
pub struct NeuronState<F> {
    pub coords: Vec<F>,
}

impl<F: Scalar> NeuronState<F> {
    pub fn new(coords: Vec<F>) -> Self {
        Self { coords }
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }
}

fn check_sizes(n: usize, m: usize) -> Result<()> {
    if n == 0 || m == 0 || m > n {
        return Err(Error::Dimension(format!(
            "need 1 <= m <= n, got n={n}, m={m}"
        )));
    }
    Ok(())
}

impl<F: Scalar> OrthoDataset<F> {
    /// Dataset on the standard basis of R^n with `m` training points.
    pub fn standard(n: usize, m: usize) -> Result<Self> {
        check_sizes(n, m)?;
        let mut basis = vec![F::zero(); n * n];
        for i in 0..n {
            basis[i * n + i] = F::one();
        }
        Ok(Self {
            n,
            m,
            kind: DatasetKind::Standard,
            seed: 0,
            basis,
        })
    }

    /// Random orthonormal dataset: QR of a seeded standard-Gaussian matrix by
    /// Householder reflections, with every pivot made positive so the result
    /// is a deterministic function of the seed.
    pub fn random_orthonormal(n: usize, m: usize, seed: u64) -> Result<Self> {
        check_sizes(n, m)?;
        let mut rng = stream_rng(seed, Stream::Basis);
        // Column-major Gaussian matrix.
        let mut a = vec![F::zero(); n * n];
        for x in a.iter_mut() {
            let g: f64 = rng.sample(StandardNormal);
            *x = real(g);
        }
        let basis = householder_orthonormal(&mut a, n);
        Ok(Self {
            n,
            m,
            kind: DatasetKind::Random,
            seed,
            basis,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of training points (first `m` basis directions).
    pub fn m(&self) -> usize {
        self.m
    }

    pub fn kind(&self) -> DatasetKind {
        self.kind
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Basis direction `a_i` (0-based).
    pub fn column(&self, i: usize) -> &[F] {
        &self.basis[i * self.n..(i + 1) * self.n]
    }

    /// Coordinates of an ambient vector: `coords[i] = <w, a_i>`.
    pub fn to_coords(&self, w: &[F]) -> Result<NeuronState<F>> {
        if w.len() != self.n {
            return Err(Error::Dimension(format!(
                "vector length {} does not match dataset n={}",
                w.len(),
                self.n
            )));
        }
        let coords = (0..self.n).map(|i| dot(w, self.column(i))).collect();
        Ok(NeuronState::new(coords))
    }

    /// Ambient vector of a coordinate state: `w = sum_i coords[i] * a_i`.
    pub fn to_ambient(&self, state: &NeuronState<F>) -> Result<Vec<F>> {
        if state.len() != self.n {
            return Err(Error::Dimension(format!(
                "state length {} does not match dataset n={}",
                state.len(),
                self.n
            )));
        }
        let mut w = vec![F::zero(); self.n];
        for (i, &c) in state.coords.iter().enumerate() {
            axpy(&mut w, c, self.column(i));
        }
        Ok(w)
    }

    /// Largest deviation of the Gram matrix from the identity.
    pub fn orthonormality_residual(&self) -> F {
        let mut worst = F::zero();
        for i in 0..self.n {
            for j in i..self.n {
                let g = dot(self.column(i), self.column(j));
                let target = if i == j { F::one() } else { F::zero() };
                worst = worst.max((g - target).abs());
            }
        }
        worst
    }
}

/// In-place Householder QR of the column-major matrix `a`; returns the
/// orthonormal factor with the sign convention diag(R) > 0.
fn householder_orthonormal<F: Scalar>(a: &mut [F], n: usize) -> Vec<F> {
    // Reflector k is stored as (v_k, beta_k) acting on rows k..n.
    let mut vs: Vec<Vec<F>> = Vec::with_capacity(n);
    let mut betas = vec![F::zero(); n];
    let mut diag_sign = vec![F::one(); n];

    for k in 0..n {
        let mut v: Vec<F> = (k..n).map(|r| a[k * n + r]).collect();
        let alpha = norm_sq(&v).sqrt();
        // v = x + sign(x0)*|x|*e1 avoids cancellation; pivot becomes -sign(x0)*|x|.
        let sign = if v[0] >= F::zero() { F::one() } else { -F::one() };
        let pivot = -sign * alpha;
        v[0] = v[0] + sign * alpha;
        let vn = norm_sq(&v);
        let beta = if vn > F::zero() {
            real::<F>(2.0) / vn
        } else {
            F::zero()
        };
        // Apply the reflector to the trailing columns.
        for j in k..n {
            let col = &mut a[j * n..(j + 1) * n];
            let s = beta * dot(&v, &col[k..n]);
            axpy(&mut col[k..n], -s, &v);
        }
        diag_sign[k] = if pivot < F::zero() { -F::one() } else { F::one() };
        betas[k] = beta;
        vs.push(v);
    }

    // q_j = H_0 ... H_{n-1} e_j, then flip columns so diag(R) > 0.
    let mut q = vec![F::zero(); n * n];
    for j in 0..n {
        let col = &mut q[j * n..(j + 1) * n];
        col[j] = F::one();
        for k in (0..=j.min(n - 1)).rev() {
            let v = &vs[k];
            let s = betas[k] * dot(v, &col[k..n]);
            axpy(&mut col[k..n], -s, v);
        }
        if diag_sign[j] < F::zero() {
            for x in col.iter_mut() {
                *x = -*x;
            }
        }
    }
    q
}

/// Draw `w_0 ~ N(0, (sigma_init^2 / n) I_n)`, deterministic given the seed.
pub fn gaussian_init<F: Scalar>(n: usize, sigma_init: F, seed: u64) -> Result<Vec<F>> {
    if n == 0 {
        return Err(Error::Dimension("n must be positive".into()));
    }
    if !(sigma_init > F::zero()) {
        return Err(Error::InvalidParameter(format!(
            "sigma_init must be positive, got {sigma_init}"
        )));
    }
    let scale = sigma_init / real::<F>(n as f64).sqrt();
    let mut rng = stream_rng(seed, Stream::Init);
    Ok((0..n)
        .map(|_| {
            let g: f64 = rng.sample(StandardNormal);
            scale * real(g)
        })
        .collect())
}
