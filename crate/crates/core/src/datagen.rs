//! Teachers, input measures, and exact network evaluation for the two toy
//! models: the two-layer linear CNN and the quadratic two-layer FCN.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::StreamKey;

/// Architecture of the two-layer linear CNN student/teacher family.
///
/// The input dimension is `d = N * S`: `N` non-overlapping windows of
/// length `S`. Window `i` occupies the contiguous coordinates
/// `S*(i-1)..S*i` (zero-based: `S*i..S*(i+1)`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CnnArch {
    /// Number of convolutional windows.
    pub n_windows: usize,
    /// Window length == stride.
    pub window: usize,
    /// Channel count.
    pub channels: usize,
    /// Readout prior variance scale sigma_a^2.
    pub sigma_a2: f64,
    /// Conv prior variance scale sigma_w^2.
    pub sigma_w2: f64,
}

impl CnnArch {
    pub fn new(n_windows: usize, window: usize, channels: usize, sigma_a2: f64, sigma_w2: f64) -> Self {
        assert!(n_windows >= 1 && window >= 1 && channels >= 1);
        assert!(sigma_a2 > 0.0 && sigma_w2 > 0.0);
        Self { n_windows, window, channels, sigma_a2, sigma_w2 }
    }

    /// Input dimension d = N*S.
    pub fn dim(&self) -> usize {
        self.n_windows * self.window
    }

    /// Kernel scale lambda = sigma_a^2 sigma_w^2 / (N S).
    pub fn lambda(&self) -> f64 {
        self.sigma_a2 * self.sigma_w2 / (self.n_windows as f64 * self.window as f64)
    }
}

/// Parameters of a linear CNN: readout `a` (N x C) and filters `w` (S x C).
#[derive(Debug, Clone, PartialEq)]
pub struct CnnParams {
    pub readout: DMatrix<f64>,
    pub filters: DMatrix<f64>,
}

impl CnnParams {
    /// Window structure must match the arch; the channel count is taken
    /// from the parameters themselves so a C*=1 teacher evaluates under a
    /// wide student arch.
    pub fn shape_check(&self, arch: &CnnArch) -> Result<()> {
        if self.readout.nrows() != arch.n_windows {
            return Err(Error::DimMismatch {
                context: "cnn readout rows",
                expected: arch.n_windows,
                got: self.readout.nrows(),
            });
        }
        if self.filters.nrows() != arch.window {
            return Err(Error::DimMismatch {
                context: "cnn filter rows",
                expected: arch.window,
                got: self.filters.nrows(),
            });
        }
        if self.readout.ncols() != self.filters.ncols() {
            return Err(Error::DimMismatch {
                context: "cnn channel count",
                expected: self.readout.ncols(),
                got: self.filters.ncols(),
            });
        }
        Ok(())
    }
}

/// Architecture of the quadratic two-layer FCN student,
/// `f(x) = sum_m (w_m . x)^2 - sigma_w^2 |x|^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadArch {
    pub dim: usize,
    pub width: usize,
    pub sigma_w2: f64,
}

impl QuadArch {
    pub fn new(dim: usize, width: usize, sigma_w2: f64) -> Self {
        assert!(dim >= 1 && width >= 1 && sigma_w2 > 0.0);
        Self { dim, width, sigma_w2 }
    }
}

/// Input measure for synthetic data sets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeasureTag {
    /// Coordinates i.i.d. N(0, 1).
    GaussianUnit,
    /// Coordinates i.i.d. N(0, 1/d); E|x|^2 = 1.
    GaussianOverD,
    /// Uniform on the sphere of the given radius.
    Hypersphere { radius: f64 },
}

impl MeasureTag {
    pub fn parse(s: &str, radius: Option<f64>) -> Result<Self> {
        match s {
            "gaussian_unit" => Ok(Self::GaussianUnit),
            "gaussian_1_over_d" => Ok(Self::GaussianOverD),
            "hypersphere" => Ok(Self::Hypersphere { radius: radius.unwrap_or(1.0) }),
            other => Err(Error::UnknownMeasure(other.to_string())),
        }
    }
}

/// A training or test set plus the provenance needed to regenerate it.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub inputs: DMatrix<f64>,
    pub targets: DVector<f64>,
    pub measure: MeasureTag,
    pub seed: u64,
}

/// Draw an `n x d` input matrix with rows i.i.d. from `measure`.
///
/// Deterministic given `(n, d, measure, seed)`; the seed keys its own
/// ChaCha stream so disjoint draws never share state.
pub fn sample_inputs(n: usize, d: usize, measure: MeasureTag, seed: u64) -> DMatrix<f64> {
    assert!(n >= 1 && d >= 1);
    let mut rng = StreamKey::new(seed, "inputs", 0).rng();
    let mut x = DMatrix::zeros(n, d);
    for mu in 0..n {
        for j in 0..d {
            x[(mu, j)] = rng.sample::<f64, _>(StandardNormal);
        }
        match measure {
            MeasureTag::GaussianUnit => {}
            MeasureTag::GaussianOverD => {
                let s = 1.0 / (d as f64).sqrt();
                for j in 0..d {
                    x[(mu, j)] *= s;
                }
            }
            MeasureTag::Hypersphere { radius } => {
                // Gaussian draw + normalization is uniform by rotational symmetry.
                let norm: f64 = (0..d).map(|j| x[(mu, j)] * x[(mu, j)]).sum::<f64>().sqrt();
                let s = radius / norm;
                for j in 0..d {
                    x[(mu, j)] *= s;
                }
            }
        }
    }
    x
}

/// Draw a rank-1 CNN teacher (C* = 1) from the layer priors.
///
/// With `normalize` the filter is rescaled to `|w*|^2 = 1` and the readout
/// to `sum_i (a*_i)^2 = 1`.
pub fn make_cnn_teacher(arch: &CnnArch, seed: u64, normalize: bool) -> CnnParams {
    let mut rng = StreamKey::new(seed, "teacher", 0).rng();
    let n = arch.n_windows;
    let s = arch.window;
    let mut a = DMatrix::zeros(n, 1);
    let mut w = DMatrix::zeros(s, 1);
    let sa = (arch.sigma_a2 / n as f64).sqrt();
    for i in 0..n {
        a[(i, 0)] = sa * rng.sample::<f64, _>(StandardNormal);
    }
    let sw = (arch.sigma_w2 / s as f64).sqrt();
    for j in 0..s {
        w[(j, 0)] = sw * rng.sample::<f64, _>(StandardNormal);
    }
    if normalize {
        let an = a.column(0).norm();
        let wn = w.column(0).norm();
        a /= an;
        w /= wn;
    }
    CnnParams { readout: a, filters: w }
}

/// Evaluate the linear CNN `f(x) = sum_{i,c} a_{i,c} (w_c . x_window_i)`
/// on every row of `x`.
pub fn eval_cnn(arch: &CnnArch, params: &CnnParams, x: &DMatrix<f64>) -> Result<DVector<f64>> {
    params.shape_check(arch)?;
    if x.ncols() != arch.dim() {
        return Err(Error::DimMismatch { context: "cnn input dim", expected: arch.dim(), got: x.ncols() });
    }
    let (n_w, s, c) = (arch.n_windows, arch.window, params.readout.ncols());
    let n = x.nrows();
    let mut out = DVector::zeros(n);
    for mu in 0..n {
        let mut acc = 0.0;
        for i in 0..n_w {
            for ch in 0..c {
                let mut dot = 0.0;
                for j in 0..s {
                    dot += params.filters[(j, ch)] * x[(mu, i * s + j)];
                }
                acc += params.readout[(i, ch)] * dot;
            }
        }
        out[mu] = acc;
    }
    Ok(out)
}

/// Draw the quadratic-model teacher vector with i.i.d. unit-normal entries.
pub fn make_quadratic_teacher(d: usize, seed: u64) -> DVector<f64> {
    assert!(d >= 1);
    let mut rng = StreamKey::new(seed, "quad-teacher", 0).rng();
    DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Evaluate `f(x) = sum_m (w_m . x)^2 - sigma_w^2 |x|^2` for an `M x d`
/// weight matrix on every row of `x`.
pub fn eval_quadratic(weights: &DMatrix<f64>, sigma_w2: f64, x: &DMatrix<f64>) -> Result<DVector<f64>> {
    if weights.ncols() != x.ncols() {
        return Err(Error::DimMismatch { context: "quad input dim", expected: weights.ncols(), got: x.ncols() });
    }
    let n = x.nrows();
    let mut out = DVector::zeros(n);
    for mu in 0..n {
        let row = x.row(mu);
        let mut pos = 0.0;
        for m in 0..weights.nrows() {
            let mut dot = 0.0;
            for j in 0..x.ncols() {
                dot += weights[(m, j)] * row[j];
            }
            pos += dot * dot;
        }
        out[mu] = pos - sigma_w2 * row.norm_squared();
    }
    Ok(out)
}

/// Teacher targets `g(x) = (w* . x)^2 - sigma_w^2 |x|^2` for a rank-1 teacher.
pub fn eval_quadratic_teacher(w_star: &DVector<f64>, sigma_w2: f64, x: &DMatrix<f64>) -> Result<DVector<f64>> {
    let w = DMatrix::from_rows(&[w_star.transpose()]);
    eval_quadratic(&w, sigma_w2, x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gaussian_unit_variance() {
        let x = sample_inputs(10_000, 5, MeasureTag::GaussianUnit, 1);
        for j in 0..5 {
            let col = x.column(j);
            let var = col.map(|v| v * v).sum() / 10_000.0;
            assert!((var - 1.0).abs() < 0.05, "var {var}");
        }
    }

    #[test]
    fn hypersphere_unit_norms() {
        let x = sample_inputs(10_000, 20, MeasureTag::Hypersphere { radius: 1.0 }, 2);
        for mu in 0..x.nrows() {
            assert_relative_eq!(x.row(mu).norm(), 1.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn gaussian_over_d_mean_norm() {
        let x = sample_inputs(10_000, 20, MeasureTag::GaussianOverD, 3);
        let mean_sq: f64 = (0..x.nrows()).map(|mu| x.row(mu).norm_squared()).sum::<f64>() / 10_000.0;
        assert!((mean_sq - 1.0).abs() < 0.05, "mean |x|^2 = {mean_sq}");
    }

    #[test]
    fn sampling_is_deterministic() {
        let a = sample_inputs(17, 9, MeasureTag::GaussianUnit, 99);
        let b = sample_inputs(17, 9, MeasureTag::GaussianUnit, 99);
        assert_eq!(a, b);
    }

    #[test]
    fn teacher_normalization_exact() {
        let arch = CnnArch::new(6, 5, 1, 1.0, 1.0);
        let t = make_cnn_teacher(&arch, 5, true);
        assert_relative_eq!(t.filters.column(0).norm_squared(), 1.0, max_relative = 1e-14);
        assert_relative_eq!(t.readout.column(0).norm_squared(), 1.0, max_relative = 1e-14);
        let t2 = make_cnn_teacher(&arch, 5, true);
        assert_eq!(t.readout, t2.readout);
        assert_eq!(t.filters, t2.filters);
    }

    #[test]
    fn cnn_eval_against_naive_loop() {
        let arch = CnnArch::new(3, 4, 2, 0.7, 1.3);
        let mut rng = StreamKey::new(11, "t", 0).rng();
        let a = DMatrix::from_fn(3, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
        let w = DMatrix::from_fn(4, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
        let params = CnnParams { readout: a.clone(), filters: w.clone() };
        let x = sample_inputs(7, 12, MeasureTag::GaussianUnit, 12);
        let f = eval_cnn(&arch, &params, &x).unwrap();
        for mu in 0..7 {
            let mut acc = 0.0;
            for i in 0..3 {
                for c in 0..2 {
                    for j in 0..4 {
                        acc += a[(i, c)] * w[(j, c)] * x[(mu, 4 * i + j)];
                    }
                }
            }
            assert_relative_eq!(f[mu], acc, max_relative = 1e-12);
        }
    }

    #[test]
    fn cnn_zero_readout_gives_zero() {
        let arch = CnnArch::new(2, 3, 2, 1.0, 1.0);
        let params = CnnParams {
            readout: DMatrix::zeros(2, 2),
            filters: DMatrix::from_element(3, 2, 0.5),
        };
        let x = sample_inputs(4, 6, MeasureTag::GaussianUnit, 4);
        let f = eval_cnn(&arch, &params, &x).unwrap();
        assert_eq!(f, DVector::zeros(4));
    }

    #[test]
    fn cnn_single_window_inner_product() {
        // N=1, C=1, a=1, w=x  ->  f = |x|^2
        let arch = CnnArch::new(1, 4, 1, 1.0, 1.0);
        let x = sample_inputs(1, 4, MeasureTag::GaussianUnit, 8);
        let params = CnnParams {
            readout: DMatrix::from_element(1, 1, 1.0),
            filters: DMatrix::from_fn(4, 1, |j, _| x[(0, j)]),
        };
        let f = eval_cnn(&arch, &params, &x).unwrap();
        assert_relative_eq!(f[0], x.row(0).norm_squared(), max_relative = 1e-14);
    }

    #[test]
    fn quad_teacher_deterministic_and_centered() {
        let w1 = make_quadratic_teacher(20, 3);
        let w2 = make_quadratic_teacher(20, 3);
        assert_eq!(w1, w2);
        // g(0) = 0
        let x = DMatrix::zeros(1, 20);
        let g = eval_quadratic_teacher(&w1, 1.0, &x).unwrap();
        assert_eq!(g[0], 0.0);
    }

    #[test]
    fn quad_teacher_mean_over_draws() {
        // E_w*[g(x)] at |x|=1 equals 1 - sigma_w^2 = 0 for sigma_w^2 = 1.
        let d = 10;
        let x = {
            let mut x = sample_inputs(1, d, MeasureTag::Hypersphere { radius: 1.0 }, 77);
            x[(0, 0)] += 0.0;
            x
        };
        let reps = 20_000;
        let mut acc = 0.0;
        for k in 0..reps {
            let w = make_quadratic_teacher(d, 1000 + k);
            acc += eval_quadratic_teacher(&w, 1.0, &x).unwrap()[0];
        }
        let mean = acc / reps as f64;
        // MC stderr ~ sqrt(Var)/sqrt(reps) ~ 0.01
        assert!(mean.abs() < 0.05, "mean {mean}");
    }

    #[test]
    fn quad_eval_edge_cases_and_oracle() {
        let d = 5;
        let x = sample_inputs(6, d, MeasureTag::GaussianUnit, 21);
        // all w_m = 0 -> f = -sigma_w^2 |x|^2
        let w0 = DMatrix::zeros(3, d);
        let f = eval_quadratic(&w0, 0.9, &x).unwrap();
        for mu in 0..6 {
            assert_relative_eq!(f[mu], -0.9 * x.row(mu).norm_squared(), max_relative = 1e-14);
        }
        // M=1 with w_1 = w* reproduces the teacher
        let ws = make_quadratic_teacher(d, 5);
        let wm = DMatrix::from_rows(&[ws.transpose()]);
        let fs = eval_quadratic(&wm, 0.9, &x).unwrap();
        let gs = eval_quadratic_teacher(&ws, 0.9, &x).unwrap();
        assert_eq!(fs, gs);
        // naive loop oracle
        let mut rng = StreamKey::new(31, "w", 0).rng();
        let w = DMatrix::from_fn(4, d, |_, _| rng.sample::<f64, _>(StandardNormal));
        let f = eval_quadratic(&w, 1.3, &x).unwrap();
        for mu in 0..6 {
            let mut acc = 0.0;
            for m in 0..4 {
                let mut dot = 0.0;
                for j in 0..d {
                    dot += w[(m, j)] * x[(mu, j)];
                }
                acc += dot * dot;
            }
            acc -= 1.3 * x.row(mu).norm_squared();
            assert_relative_eq!(f[mu], acc, max_relative = 1e-12);
        }
    }
}
