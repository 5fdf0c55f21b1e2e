//! NNGP kernels of the two models and the regularized Gram systems that GP
//! regression solves against.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{CnnArch, QuadArch};
use crate::error::{Error, Result};

/// Which model's NNGP kernel to build.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum KernelSpec {
    /// Linear CNN: `K(x, x') = sigma_a^2 sigma_w^2 / (N S) * x . x'`.
    CnnLinear(CnnArch),
    /// Quadratic FCN: `K(x, x') = 2 sigma_w^4 / M * (x . x')^2`.
    Quad(QuadArch),
}

impl KernelSpec {
    pub fn dim(&self) -> usize {
        match self {
            Self::CnnLinear(a) => a.dim(),
            Self::Quad(a) => a.dim,
        }
    }
}

/// Kernel eigenvalues on the relevant target eigenspaces, at the level the
/// EK-limit equations use them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum EkParameters {
    /// Linear CNN: single relevant eigenvalue `lambda` of the
    /// linear-function eigenspace under N(0, I).
    Cnn { lambda: f64 },
    /// Quadratic model under N(0, I/d): `lambda0` for |x|^2 and
    /// `lambda2` for the x_i x_j / traceless-diagonal family.
    Quad { lambda0: f64, lambda2: f64 },
}

impl EkParameters {
    pub fn for_spec(spec: &KernelSpec) -> Self {
        match spec {
            KernelSpec::CnnLinear(a) => Self::Cnn { lambda: a.lambda() },
            KernelSpec::Quad(a) => {
                let d = a.dim as f64;
                let base = 2.0 * a.sigma_w2 * a.sigma_w2 / a.width as f64;
                Self::Quad {
                    lambda0: base * (2.0 / (d * d) + 1.0 / d),
                    lambda2: base * 2.0 / (d * d),
                }
            }
        }
    }
}

/// Evaluate the kernel on a single pair of points.
pub fn kernel_eval(spec: &KernelSpec, x: &DVector<f64>, y: &DVector<f64>) -> Result<f64> {
    if x.len() != spec.dim() || y.len() != spec.dim() {
        return Err(Error::DimMismatch { context: "kernel input dim", expected: spec.dim(), got: x.len().max(y.len()) });
    }
    let dot = x.dot(y);
    Ok(match spec {
        KernelSpec::CnnLinear(a) => a.lambda() * dot,
        KernelSpec::Quad(a) => 2.0 * a.sigma_w2 * a.sigma_w2 / a.width as f64 * dot * dot,
    })
}

fn kernel_of_dot(spec: &KernelSpec, dot: f64) -> f64 {
    match spec {
        KernelSpec::CnnLinear(a) => a.lambda() * dot,
        KernelSpec::Quad(a) => 2.0 * a.sigma_w2 * a.sigma_w2 / a.width as f64 * dot * dot,
    }
}

/// Symmetric Gram matrix of the kernel on the rows of `x`.
///
/// Rows are assembled in parallel blocks; entries are independent so the
/// result is deterministic.
pub fn gram(spec: &KernelSpec, x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|mu| {
            let xm = x.row(mu);
            (0..n).map(|nu| kernel_of_dot(spec, xm.dot(&x.row(nu)))).collect()
        })
        .collect();
    DMatrix::from_fn(n, n, |i, j| rows[i][j])
}

/// Cross-Gram between training rows `x` and evaluation rows `x_eval`
/// (shape `n x n_eval`).
pub fn cross_gram(spec: &KernelSpec, x: &DMatrix<f64>, x_eval: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows();
    let m = x_eval.nrows();
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|mu| {
            let xm = x.row(mu);
            (0..m).map(|nu| kernel_of_dot(spec, xm.dot(&x_eval.row(nu)))).collect()
        })
        .collect();
    DMatrix::from_fn(n, m, |i, j| rows[i][j])
}

/// Cholesky handle for `K + sigma^2 I` with a jitter escalation policy.
///
/// Jitter starts at `1e-12 * trace(K)/n` and escalates by 10x up to
/// `1e-6 * trace(K)/n`; the jitter actually used is reported. Callers may
/// opt in to an eigenvalue-clamping fallback past that point.
pub struct RegularizedGram {
    kernel: DMatrix<f64>,
    sigma2: f64,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    jitter_used: f64,
}

impl RegularizedGram {
    pub fn new(kernel: DMatrix<f64>, sigma2: f64) -> Result<Self> {
        Self::with_fallback(kernel, sigma2, false)
    }

    /// `clamp_fallback` enables the eigenvalue-clamped factorization once
    /// jitter escalation is exhausted.
    pub fn with_fallback(kernel: DMatrix<f64>, sigma2: f64, clamp_fallback: bool) -> Result<Self> {
        assert!(sigma2 > 0.0, "sigma2 must be positive");
        let n = kernel.nrows();
        assert_eq!(n, kernel.ncols());
        let trace_scale = kernel.trace().abs() / n.max(1) as f64;
        let base = if trace_scale > 0.0 { trace_scale } else { 1.0 };

        let mut jitter = 0.0;
        loop {
            let mut reg = kernel.clone();
            for i in 0..n {
                reg[(i, i)] += sigma2 + jitter;
            }
            if let Some(chol) = nalgebra::Cholesky::new(reg) {
                return Ok(Self { kernel, sigma2, chol, jitter_used: jitter });
            }
            jitter = if jitter == 0.0 { 1e-12 * base } else { jitter * 10.0 };
            if jitter > 1e-6 * base {
                break;
            }
        }
        if clamp_fallback {
            // Clamp negative kernel eigenvalues at zero, then factorize.
            let eig = nalgebra::SymmetricEigen::new(kernel.clone());
            let clamped = DVector::from_fn(n, |i, _| eig.eigenvalues[i].max(0.0));
            let rebuilt = &eig.eigenvectors * DMatrix::from_diagonal(&clamped) * eig.eigenvectors.transpose();
            let mut reg = rebuilt;
            for i in 0..n {
                reg[(i, i)] += sigma2;
            }
            if let Some(chol) = nalgebra::Cholesky::new(reg) {
                return Ok(Self { kernel, sigma2, chol, jitter_used: f64::NAN });
            }
        }
        Err(Error::SpdFailure { final_jitter: 1e-6 * base })
    }

    pub fn kernel(&self) -> &DMatrix<f64> {
        &self.kernel
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    /// Jitter added to the diagonal (NaN when the clamp fallback fired).
    pub fn jitter_used(&self) -> f64 {
        self.jitter_used
    }

    pub fn n(&self) -> usize {
        self.kernel.nrows()
    }

    /// Solve `(K + sigma^2 I) u = v`.
    pub fn solve(&self, v: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(v)
    }

    /// Solve against every column of `m`.
    pub fn solve_mat(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        self.chol.solve(m)
    }
}

/// Convenience: factorize a kernel Gram directly.
pub fn factorize(kernel: DMatrix<f64>, sigma2: f64) -> Result<RegularizedGram> {
    RegularizedGram::new(kernel, sigma2)
}
