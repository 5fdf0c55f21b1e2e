//! Feature-learning phase-transition analysis: empirical hidden-weight
//! covariance, Marchenko-Pastur baseline, the spike surrogate Q, the
//! ensemble-averaged covariance prediction, and the critical channel count.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::langevin::SnapshotSink;

/// Summary of one spectral sweep point.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SpectralReport {
    pub eigenvalues: Vec<f64>,
    pub mp_edges: (f64, f64),
    pub q_mean: f64,
    pub q_stderr: f64,
    pub c_crit: f64,
    /// Q <= lambda_plus: the spike sits inside the bulk.
    pub in_bulk: bool,
}

/// Normalized empirical covariance of the hidden filters,
/// `Sigma_W = (S/C) W W^T` for an `S x C` filter matrix.
pub fn sigma_w(w: &DMatrix<f64>) -> DMatrix<f64> {
    let s = w.nrows() as f64;
    let c = w.ncols() as f64;
    let mut m = w * w.transpose();
    m *= s / c;
    m
}

/// Marchenko-Pastur bulk edges `lambda_pm = (1 +- sqrt(S/C))^2`.
pub fn mp_edges(s: usize, c: usize) -> (f64, f64) {
    assert!(c > 0, "channel count must be positive");
    let r = (s as f64 / c as f64).sqrt();
    ((1.0 - r) * (1.0 - r), (1.0 + r) * (1.0 + r))
}

/// Marchenko-Pastur density with ratio `S/C` evaluated on `grid`.
///
/// For S > C the continuous part carries mass `C/S` and an atom of mass
/// `1 - C/S` sits at zero (not represented on the grid).
pub fn mp_density(s: usize, c: usize, grid: &[f64]) -> Vec<f64> {
    let ratio = s as f64 / c as f64;
    let (lo, hi) = mp_edges(s, c);
    grid.iter()
        .map(|&x| {
            if x <= lo || x >= hi || x <= 0.0 {
                0.0
            } else {
                ((hi - x) * (x - lo)).sqrt() / (2.0 * std::f64::consts::PI * ratio * x)
            }
        })
        .collect()
}

/// Spike surrogate `Q = w*^T Sigma_W w*`; `w*` is normalized first.
pub fn q_statistic(sigma_w_matrix: &DMatrix<f64>, w_star: &DVector<f64>) -> Result<f64> {
    if w_star.len() != sigma_w_matrix.nrows() {
        return Err(Error::DimMismatch {
            context: "q statistic dims",
            expected: sigma_w_matrix.nrows(),
            got: w_star.len(),
        });
    }
    let norm = w_star.norm();
    if norm == 0.0 {
        return Err(Error::ZeroTarget);
    }
    let u = w_star / norm;
    Ok((sigma_w_matrix * &u).dot(&u))
}

/// Critical channel count below which the teacher feature pops out of the
/// MP bulk:
/// `C_crit = 4 / (S (S^-1 + (sigma^2/n) S)^4) * (1 + (S^2 + n/sigma^2)^-1)`
/// for N = S. For N != S the same expression is used with
/// `lambda = 1/(N S)` replacing `S^-2` (documented extension).
pub fn c_crit(s: usize, n_windows: usize, n: usize, sigma2: f64) -> f64 {
    let sf = s as f64;
    let lambda = 1.0 / (n_windows as f64 * sf);
    let s_over_n = sigma2 / n as f64;
    // lambda + sigma^2/n plays the S^-1 + (sigma^2/n) S role divided by S:
    // for N = S this reduces to the printed formula exactly.
    let denom = sf * (sf * (lambda + s_over_n)).powi(4);
    let correction = 1.0 + 1.0 / (1.0 / lambda + n as f64 / sigma2);
    4.0 / denom * correction
}

/// Ensemble-average prediction of the hidden-weight covariance to O(1/C):
/// `<Sigma_W> = (1 + (1/lambda + n/sigma^2)^-1) I
///  + (2/C) lambda/(lambda + sigma^2/n)^2 w* w*^T`.
pub fn predicted_sigma_w(
    s: usize,
    n_windows: usize,
    n: usize,
    sigma2: f64,
    channels: usize,
    w_star: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    if w_star.len() != s {
        return Err(Error::DimMismatch { context: "predicted sigma_w dims", expected: s, got: w_star.len() });
    }
    let norm = w_star.norm();
    if norm == 0.0 {
        return Err(Error::ZeroTarget);
    }
    let u = w_star / norm;
    let lambda = 1.0 / (n_windows as f64 * s as f64);
    let s_over_n = sigma2 / n as f64;
    let diag = 1.0 + 1.0 / (1.0 / lambda + n as f64 / sigma2);
    let spike = 2.0 / channels as f64 * lambda / ((lambda + s_over_n) * (lambda + s_over_n));
    let mut m = DMatrix::identity(s, s) * diag;
    m.syger(spike, &u, &u, 1.0);
    for i in 0..s {
        for j in 0..i {
            m[(j, i)] = m[(i, j)];
        }
    }
    Ok(m)
}

/// Streaming snapshot accumulator: pools Sigma_W eigenvalues, Q values and
/// the running mean of Sigma_W without storing snapshots.
#[derive(Debug, Clone)]
pub struct SpectralAccumulator {
    pub w_star: DVector<f64>,
    pub eigenvalues: Vec<f64>,
    pub q_values: Vec<f64>,
    pub sigma_w_sum: DMatrix<f64>,
    pub count: usize,
}

impl SpectralAccumulator {
    pub fn new(w_star: DVector<f64>) -> Self {
        let s = w_star.len();
        Self { w_star, eigenvalues: Vec::new(), q_values: Vec::new(), sigma_w_sum: DMatrix::zeros(s, s), count: 0 }
    }

    pub fn merge(&mut self, other: &SpectralAccumulator) {
        self.eigenvalues.extend_from_slice(&other.eigenvalues);
        self.q_values.extend_from_slice(&other.q_values);
        self.sigma_w_sum += &other.sigma_w_sum;
        self.count += other.count;
    }

    pub fn mean_sigma_w(&self) -> DMatrix<f64> {
        &self.sigma_w_sum / self.count.max(1) as f64
    }

    pub fn q_mean_stderr(&self) -> (f64, f64) {
        let n = self.q_values.len();
        if n == 0 {
            return (f64::NAN, f64::NAN);
        }
        let mean = self.q_values.iter().sum::<f64>() / n as f64;
        if n < 2 {
            return (mean, 0.0);
        }
        let var = self.q_values.iter().map(|q| (q - mean) * (q - mean)).sum::<f64>() / (n - 1) as f64;
        (mean, (var / n as f64).sqrt())
    }

    /// Assemble the report for a sweep point.
    pub fn report(&self, s: usize, n_windows: usize, n: usize, sigma2: f64, channels: usize) -> SpectralReport {
        let (q_mean, q_stderr) = self.q_mean_stderr();
        let edges = mp_edges(s, channels);
        SpectralReport {
            eigenvalues: self.eigenvalues.clone(),
            mp_edges: edges,
            q_mean,
            q_stderr,
            c_crit: c_crit(s, n_windows, n, sigma2),
            in_bulk: q_mean <= edges.1,
        }
    }
}

impl SnapshotSink for SpectralAccumulator {
    fn accept(&mut self, _seed: usize, _step: usize, w: &DMatrix<f64>) {
        let sw = sigma_w(w);
        let eig = nalgebra::SymmetricEigen::new(sw.clone());
        self.eigenvalues.extend(eig.eigenvalues.iter());
        if let Ok(q) = q_statistic(&sw, &self.w_star) {
            self.q_values.push(q);
        }
        self.sigma_w_sum += sw;
        self.count += 1;
    }
}

/// Freedman-Diaconis bin width on a pooled sample.
pub fn fd_bin_width(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n < 4 {
        return 1.0;
    }
    let q1 = sorted[n / 4];
    let q3 = sorted[3 * n / 4];
    let iqr = (q3 - q1).max(f64::MIN_POSITIVE);
    2.0 * iqr / (n as f64).cbrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn sigma_w_scaled_orthonormal_columns() {
        // w_c = e_c: W W^T diagonal
        let s = 4;
        let w = DMatrix::<f64>::identity(s, s);
        let m = sigma_w(&w);
        for i in 0..s {
            for j in 0..s {
                if i != j {
                    assert_eq!(m[(i, j)], 0.0);
                }
            }
        }
    }

    #[test]
    fn sigma_w_wishart_mean() {
        // entries i.i.d. N(0, 1/S): E[Sigma_W] = I, 5% at S=50, C=5000
        let s = 50;
        let c = 5000;
        let mut rng = crate::rng::StreamKey::new(1, "wishart", 0).rng();
        let w = DMatrix::from_fn(s, c, |_, _| rng.sample::<f64, _>(StandardNormal) / (s as f64).sqrt());
        let m = sigma_w(&w);
        for i in 0..s {
            assert!((m[(i, i)] - 1.0).abs() < 0.05 * 3.0, "diag {}", m[(i, i)]);
        }
        let offdiag_max = (0..s)
            .flat_map(|i| (0..i).map(move |j| (i, j)))
            .map(|(i, j)| m[(i, j)].abs())
            .fold(0.0, f64::max);
        assert!(offdiag_max < 0.1);
    }

    #[test]
    fn sigma_w_matches_naive_double_loop() {
        let mut rng = crate::rng::StreamKey::new(2, "w", 0).rng();
        let w = DMatrix::from_fn(5, 9, |_, _| rng.sample::<f64, _>(StandardNormal));
        let m = sigma_w(&w);
        for i in 0..5 {
            for j in 0..5 {
                let mut acc = 0.0;
                for cc in 0..9 {
                    acc += w[(i, cc)] * w[(j, cc)];
                }
                acc *= 5.0 / 9.0;
                assert_relative_eq!(m[(i, j)], acc, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn mp_edges_special_cases() {
        assert_eq!(mp_edges(8, 8), (0.0, 4.0));
        let (lo, hi) = mp_edges(1, 1_000_000_000);
        assert!((lo - 1.0).abs() < 1e-4 && (hi - 1.0).abs() < 1e-4);
    }

    #[test]
    fn mp_density_normalizes() {
        let (s, c) = (60, 240);
        let (lo, hi) = mp_edges(s, c);
        let m = 200_000;
        let grid: Vec<f64> = (0..=m).map(|k| lo + (hi - lo) * k as f64 / m as f64).collect();
        let dens = mp_density(s, c, &grid);
        // trapezoid quadrature
        let h = (hi - lo) / m as f64;
        let integral: f64 = h * (dens.iter().sum::<f64>() - 0.5 * (dens[0] + dens[m]));
        assert!((integral - 1.0).abs() < 1e-6, "mass {integral}");
    }

    #[test]
    fn mp_density_matches_wishart_sample() {
        // KS distance between the MP cdf and pooled Wishart eigenvalues.
        let (s, c) = (60, 2000);
        let mut pooled = Vec::new();
        for rep in 0..100 {
            let mut rng = crate::rng::StreamKey::new(3, "wishart", rep).rng();
            let w = DMatrix::from_fn(s, c, |_, _| rng.sample::<f64, _>(StandardNormal) / (s as f64).sqrt());
            let m = sigma_w(&w);
            let eig = nalgebra::SymmetricEigen::new(m);
            pooled.extend(eig.eigenvalues.iter().cloned());
        }
        pooled.sort_by(|a, b| a.partial_cmp(b).unwrap());
        // numeric MP cdf on a fine grid
        let (lo, hi) = mp_edges(s, c);
        let m = 20_000;
        let grid: Vec<f64> = (0..=m).map(|k| lo + (hi - lo) * k as f64 / m as f64).collect();
        let dens = mp_density(s, c, &grid);
        let h = (hi - lo) / m as f64;
        let mut cdf = vec![0.0f64; grid.len()];
        for k in 1..grid.len() {
            cdf[k] = cdf[k - 1] + 0.5 * h * (dens[k] + dens[k - 1]);
        }
        let mut ks: f64 = 0.0;
        for (idx, ev) in pooled.iter().enumerate() {
            let emp = (idx + 1) as f64 / pooled.len() as f64;
            let pos = ((ev - lo) / h).clamp(0.0, m as f64) as usize;
            let theory = cdf[pos.min(m)];
            ks = ks.max((emp - theory).abs());
        }
        assert!(ks < 0.02, "KS distance {ks}");
    }

    #[test]
    fn q_statistic_forms() {
        let s = 6;
        let eye = DMatrix::<f64>::identity(s, s);
        let w_star = DVector::from_fn(s, |i, _| (i as f64 + 1.0).sin());
        assert_relative_eq!(q_statistic(&eye, &w_star).unwrap(), 1.0, max_relative = 1e-12);
        // Sigma = I + a w* w*^T (normalized w*) -> 1 + a
        let u = &w_star / w_star.norm();
        let mut m = eye.clone();
        m.syger(2.5, &u, &u, 1.0);
        for i in 0..s {
            for j in 0..i {
                m[(j, i)] = m[(i, j)];
            }
        }
        assert_relative_eq!(q_statistic(&m, &w_star).unwrap(), 3.5, max_relative = 1e-12);
        assert!(q_statistic(&eye, &DVector::zeros(s)).is_err());
    }

    #[test]
    fn q_tracks_top_eigenvalue_for_strong_spike() {
        // rank-1 strength 10 at S/C = 0.1
        let (s, c) = (40, 400);
        let mut rng = crate::rng::StreamKey::new(4, "w", 0).rng();
        let mut w = DMatrix::from_fn(s, c, |_, _| rng.sample::<f64, _>(StandardNormal) / (s as f64).sqrt());
        let u = {
            let mut u = DVector::from_fn(s, |_, _| rng.sample::<f64, _>(StandardNormal));
            u /= u.norm();
            u
        };
        // add the spike to every column
        let strength: f64 = 10.0;
        for cc in 0..c {
            let coef = strength.sqrt() / (s as f64).sqrt() * rng.sample::<f64, _>(StandardNormal);
            for i in 0..s {
                w[(i, cc)] += coef * u[i];
            }
        }
        let m = sigma_w(&w);
        let q = q_statistic(&m, &u).unwrap();
        let eig = nalgebra::SymmetricEigen::new(m);
        let top = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!((q - top).abs() / top < 0.05, "q {q} top {top}");
    }

    #[test]
    fn c_crit_golden_and_limit() {
        let v = c_crit(60, 60, 650, 1.0);
        assert!((470.0..=476.0).contains(&v), "c_crit {v}");
        let v2 = c_crit(15, 15, 62, 1.0);
        assert!((v2 - 29.5).abs() < 0.5, "c_crit {v2}");
        // n -> infinity at fixed S: the (1 + (S^2 + n/sigma^2)^-1)
        // correction tends to 1 and the expression tends to 4 S^3.
        let s = 12usize;
        let inf = c_crit(s, s, 4_000_000_000, 1.0);
        let expect = 4.0 * (s as f64).powi(3);
        assert_relative_eq!(inf, expect, max_relative = 1e-4);
    }

    #[test]
    fn predicted_sigma_w_limits() {
        let s = 8;
        let w_star = DVector::from_fn(s, |i, _| if i == 0 { 1.0 } else { 0.0 });
        let m = predicted_sigma_w(s, s, 40, 1.0, 1_000_000_000, &w_star).unwrap();
        let lambda = 1.0 / 64.0;
        let diag = 1.0 + 1.0 / (1.0 / lambda + 40.0);
        for i in 0..s {
            for j in 0..s {
                let expect = if i == j { diag } else { 0.0 };
                assert_relative_eq!(m[(i, j)], expect, epsilon = 1e-7);
            }
        }
        // Q of the predicted matrix
        let m2 = predicted_sigma_w(s, s, 40, 1.0, 64, &w_star).unwrap();
        let q = q_statistic(&m2, &w_star).unwrap();
        let s_over_n = 1.0 / 40.0;
        let expect = diag + 2.0 / 64.0 * lambda / ((lambda + s_over_n) * (lambda + s_over_n));
        assert_relative_eq!(q, expect, max_relative = 1e-12);
    }

    #[test]
    fn q_invariant_under_column_sign_flips() {
        let mut rng = crate::rng::StreamKey::new(5, "w", 0).rng();
        let w = DMatrix::from_fn(6, 10, |_, _| rng.sample::<f64, _>(StandardNormal));
        let u = DVector::from_fn(6, |i, _| (i as f64).cos());
        let q0 = q_statistic(&sigma_w(&w), &u).unwrap();
        let mut flipped = w.clone();
        for cc in [1usize, 4, 7] {
            for i in 0..6 {
                flipped[(i, cc)] = -flipped[(i, cc)];
            }
        }
        let q1 = q_statistic(&sigma_w(&flipped), &u).unwrap();
        assert_relative_eq!(q0, q1, max_relative = 1e-12);
    }
}
