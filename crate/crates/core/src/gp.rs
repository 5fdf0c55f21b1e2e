//! Plain and shifted-target GP regression: posterior means, train
//! discrepancies, and posterior covariances including the kernel shift.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernels::RegularizedGram;

/// Target shift applied before GP regression; zero in the GP limit.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetShift {
    pub train: DVector<f64>,
    pub test: DVector<f64>,
}

impl TargetShift {
    pub fn zero(n_train: usize, n_test: usize) -> Self {
        Self { train: DVector::zeros(n_train), test: DVector::zeros(n_test) }
    }
}

/// Train discrepancies `delta_g = g - <f>` and their dual values
/// `delta_g / sigma^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Discrepancies {
    pub values: DVector<f64>,
    pub dual: DVector<f64>,
}

impl Discrepancies {
    pub fn from_values(values: DVector<f64>, sigma2: f64) -> Self {
        let dual = &values / sigma2;
        Self { values, dual }
    }
}

/// A fitted (optionally shifted-target) GP regression.
pub struct GpFit {
    gram: RegularizedGram,
    targets: DVector<f64>,
    shift_train: Option<DVector<f64>>,
    /// weights = (K + sigma^2 I)^-1 (g - Delta g)
    weights: DVector<f64>,
}

impl GpFit {
    pub fn fit(gram: RegularizedGram, targets: DVector<f64>) -> Result<Self> {
        Self::fit_shifted(gram, targets, None)
    }

    pub fn fit_shifted(
        gram: RegularizedGram,
        targets: DVector<f64>,
        shift_train: Option<DVector<f64>>,
    ) -> Result<Self> {
        if targets.len() != gram.n() {
            return Err(Error::DimMismatch { context: "gp targets", expected: gram.n(), got: targets.len() });
        }
        if let Some(s) = &shift_train {
            if s.len() != gram.n() {
                return Err(Error::DimMismatch { context: "gp train shift", expected: gram.n(), got: s.len() });
            }
        }
        let shifted = match &shift_train {
            Some(s) => &targets - s,
            None => targets.clone(),
        };
        let weights = gram.solve(&shifted);
        Ok(Self { gram, targets, shift_train, weights })
    }

    pub fn gram(&self) -> &RegularizedGram {
        &self.gram
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    /// Posterior mean at evaluation points:
    /// `<f*> = Delta g* + K*^T (K + sigma^2 I)^-1 (g - Delta g)`.
    ///
    /// `cross` has shape `n_train x n_eval`; `shift_test` defaults to zero.
    pub fn mean_test(&self, cross: &DMatrix<f64>, shift_test: Option<&DVector<f64>>) -> Result<DVector<f64>> {
        if cross.nrows() != self.gram.n() {
            return Err(Error::DimMismatch { context: "cross gram rows", expected: self.gram.n(), got: cross.nrows() });
        }
        let mut out = cross.transpose() * &self.weights;
        if let Some(s) = shift_test {
            if s.len() != out.len() {
                return Err(Error::DimMismatch { context: "gp test shift", expected: out.len(), got: s.len() });
            }
            out += s;
        }
        Ok(out)
    }

    /// Train discrepancies `delta_g = g_raw - [Delta g + K K~^-1 (g_raw - Delta g)]`.
    ///
    /// Computed through the weights identity `delta_g = sigma^2 * weights`
    /// (plus nothing else: the shift cancels), avoiding an extra O(n^3)
    /// product. The explicit path is kept in tests.
    pub fn discrepancies_train(&self) -> Discrepancies {
        let sigma2 = self.gram.sigma2();
        let values = &self.weights * sigma2;
        Discrepancies::from_values(values, sigma2)
    }

    /// Posterior mean on the training points.
    pub fn mean_train(&self) -> DVector<f64> {
        let disc = self.discrepancies_train();
        &self.targets - &disc.values
    }

    pub fn shift_train(&self) -> Option<&DVector<f64>> {
        self.shift_train.as_ref()
    }
}

/// GP posterior covariance at test points:
/// `Sigma** = K** - K*^T (K + sigma^2 I)^-1 K*`.
pub fn posterior_cov_test_gp(
    fit: &GpFit,
    cross: &DMatrix<f64>,
    k_star_star: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    if cross.nrows() != fit.gram().n() {
        return Err(Error::DimMismatch { context: "cross gram rows", expected: fit.gram().n(), got: cross.nrows() });
    }
    let sol = fit.gram().solve_mat(cross);
    let mut cov = k_star_star - cross.transpose() * sol;
    // symmetrize away factorization round-off
    let covt = cov.transpose();
    cov = (cov + covt) * 0.5;
    Ok(cov)
}

/// Train-set posterior covariance of the shifted theory:
/// `Sigma = sigma^2 I - sigma^4 [sigma^2 I + K + Delta K]^-1`.
pub fn posterior_cov_train_shifted(
    kernel: &DMatrix<f64>,
    delta_k: &DMatrix<f64>,
    sigma2: f64,
) -> Result<DMatrix<f64>> {
    let n = kernel.nrows();
    if delta_k.nrows() != n || delta_k.ncols() != n {
        return Err(Error::DimMismatch { context: "delta K shape", expected: n * n, got: delta_k.len() });
    }
    let mut shifted = kernel + delta_k;
    for i in 0..n {
        shifted[(i, i)] += sigma2;
    }
    let inv = shifted
        .clone()
        .try_inverse()
        .ok_or(Error::SingularBracket { min_eig: 0.0 })?;
    let mut cov = inv * (-sigma2 * sigma2);
    for i in 0..n {
        cov[(i, i)] += sigma2;
    }
    let covt = cov.transpose();
    Ok((cov + covt) * 0.5)
}

/// Cosine-distance style learning measure `alpha = 1 - <f, g> / <g, g>`.
pub fn empirical_alpha(predictions: &DVector<f64>, targets: &DVector<f64>) -> Result<f64> {
    if predictions.len() != targets.len() {
        return Err(Error::DimMismatch { context: "alpha inputs", expected: targets.len(), got: predictions.len() });
    }
    let gg = targets.norm_squared();
    if gg == 0.0 {
        return Err(Error::ZeroTarget);
    }
    Ok(1.0 - predictions.dot(targets) / gg)
}
