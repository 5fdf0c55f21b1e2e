//! Exact cumulant machinery for both toy models: fourth/sixth-order
//! contractions and the full target shift as a function of the dual
//! variables, plus the kernel-shift Jacobian.
//!
//! For the linear CNN the whole even-cumulant tower resums into a
//! log-det generating function over the `S x S` window accumulator
//! `M(v) = sum_i y_i y_i^T`, `y_i = sum_mu v_mu x_window_i^mu`, giving
//! the closed-form shift used by the finite-n solver at small channel
//! counts where the series diverges.

use nalgebra::{DMatrix, DVector};

use crate::datagen::{CnnArch, QuadArch};
use crate::error::{Error, Result};
use crate::kernels::{gram, KernelSpec};

/// Saddle-point dual values `v_mu = delta_g_mu / sigma^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct DualVector(pub DVector<f64>);

/// Per-window views of an input set: `per_window[i]` is the `n x S` matrix
/// whose row `mu` is window `i` of `x_mu`. These are the accumulators all
/// CNN contractions run over.
#[derive(Debug, Clone)]
pub struct WindowGrams {
    pub per_window: Vec<DMatrix<f64>>,
    pub n: usize,
    pub window: usize,
}

impl WindowGrams {
    pub fn new(x: &DMatrix<f64>, arch: &CnnArch) -> Result<Self> {
        if x.ncols() != arch.dim() {
            return Err(Error::DimMismatch { context: "window split", expected: arch.dim(), got: x.ncols() });
        }
        let s = arch.window;
        let per_window = (0..arch.n_windows)
            .map(|i| x.columns(i * s, s).into_owned())
            .collect();
        Ok(Self { per_window, n: x.nrows(), window: s })
    }

    /// `y_i = sum_mu v_mu x_window_i^mu` for every window.
    fn window_sums(&self, v: &DVector<f64>) -> Vec<DVector<f64>> {
        self.per_window.iter().map(|xi| xi.transpose() * v).collect()
    }

    /// `M(v) = sum_i y_i y_i^T`.
    fn accumulator(&self, ys: &[DVector<f64>]) -> DMatrix<f64> {
        let s = self.window;
        let mut m = DMatrix::zeros(s, s);
        for y in ys {
            m.ger(1.0, y, y, 1.0);
        }
        m
    }
}

/// Shared precomputation for one contraction: `y_i` from the train duals
/// and the window accumulator `M`.
fn contraction_state(
    train: &WindowGrams,
    v: &DualVector,
) -> Result<(Vec<DVector<f64>>, DMatrix<f64>)> {
    if v.0.len() != train.n {
        return Err(Error::DimMismatch { context: "dual length", expected: train.n, got: v.0.len() });
    }
    let ys = train.window_sums(&v.0);
    let m = train.accumulator(&ys);
    Ok((ys, m))
}

/// Evaluate `sum_i eval_window_i^T z_i` rows for every eval point, where
/// `z_i = Op * y_i`. This is the free-index side of every CNN contraction.
fn contract_eval(eval: &WindowGrams, zs: &[DVector<f64>]) -> DVector<f64> {
    let mut out = DVector::zeros(eval.n);
    for (xi, z) in eval.per_window.iter().zip(zs) {
        out.gemv(1.0, xi, z, 1.0);
    }
    out
}

/// Fourth-cumulant contraction: component `nu` equals
/// `(1/3!) sum_{m1 m2 m3} kappa_4(nu, m1, m2, m3) v_m1 v_m2 v_m3`,
/// computed via window accumulators in O(n S^2) after precomputation.
///
/// `eval` may be the training windows themselves or a disjoint test set
/// (free index on the eval point, sums over the train duals).
pub fn cnn_kappa4_contract(
    train: &WindowGrams,
    eval: &WindowGrams,
    arch: &CnnArch,
    v: &DualVector,
) -> Result<DVector<f64>> {
    let (ys, m) = contraction_state(train, v)?;
    let lam = arch.lambda();
    let c = arch.channels as f64;
    let zs: Vec<DVector<f64>> = ys.iter().map(|y| &m * y).collect();
    Ok(contract_eval(eval, &zs) * (lam * lam / c))
}

/// Sixth-cumulant contraction with the chain structure over three window
/// indices; prefactor `lambda^3 / C^2`.
pub fn cnn_kappa6_contract(
    train: &WindowGrams,
    eval: &WindowGrams,
    arch: &CnnArch,
    v: &DualVector,
) -> Result<DVector<f64>> {
    let (ys, m) = contraction_state(train, v)?;
    let lam = arch.lambda();
    let c = arch.channels as f64;
    let m2 = &m * &m;
    let zs: Vec<DVector<f64>> = ys.iter().map(|y| &m2 * y).collect();
    Ok(contract_eval(eval, &zs) * (lam * lam * lam / (c * c)))
}

/// How to evaluate the CNN target shift.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CnnShiftMode {
    /// Truncated cumulant series. `order` is 4 (kappa_4 only) or 6.
    Series { order: usize },
    /// All-order log-det resummation; requires spectral radius
    /// `(lambda/C) * lambda_max(M) < 1`.
    Resummed,
}

/// Spectral radius of the resummation operator `(lambda/C) M(v)`.
pub fn cnn_resummation_radius(train: &WindowGrams, arch: &CnnArch, v: &DualVector) -> Result<f64> {
    let (_, m) = contraction_state(train, v)?;
    let eig = nalgebra::SymmetricEigen::new(m);
    let max = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(arch.lambda() / arch.channels as f64 * max.max(0.0))
}

/// CNN target shift at the eval points.
///
/// Series mode sums the r=4 (and optionally r=6) contractions. Resummed
/// mode evaluates `Delta g_nu = lambda sum_i w_i(nu)^T (B^-1 - I) y_i`
/// with `B = I - (lambda/C) M(v)`, which Taylor-matches the series at
/// orders v^3 and v^5 (gated in tests).
pub fn cnn_delta_g(
    train: &WindowGrams,
    eval: &WindowGrams,
    arch: &CnnArch,
    v: &DualVector,
    mode: CnnShiftMode,
) -> Result<DVector<f64>> {
    match mode {
        CnnShiftMode::Series { order } => {
            assert!(order == 4 || order == 6, "series order must be 4 or 6");
            let mut out = cnn_kappa4_contract(train, eval, arch, v)?;
            if order >= 6 {
                out += cnn_kappa6_contract(train, eval, arch, v)?;
            }
            Ok(out)
        }
        CnnShiftMode::Resummed => {
            let (ys, m) = contraction_state(train, v)?;
            let lam = arch.lambda();
            let c = arch.channels as f64;
            let s = train.window;
            let b = DMatrix::identity(s, s) - &m * (lam / c);
            let chol = nalgebra::Cholesky::new(b.clone()).ok_or_else(|| {
                let eig = nalgebra::SymmetricEigen::new(m.clone());
                let max = eig.eigenvalues.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                Error::ResummationDiverged { radius: lam / c * max }
            })?;
            // z_i = (B^-1 - I) y_i
            let zs: Vec<DVector<f64>> = ys.iter().map(|y| chol.solve(y) - y).collect();
            Ok(contract_eval(eval, &zs) * lam)
        }
    }
}

/// Quadratic-model cumulant generating function
/// `C(t) = -(M/2) tr log[I - (2 sigma_w^2 / M) sum_mu t_mu x_mu x_mu^T]
///  - sum_mu t_mu sigma_w^2 |x_mu|^2` evaluated at real dual values.
pub fn quad_cgf(t: &DualVector, x: &DMatrix<f64>, arch: &QuadArch) -> Result<f64> {
    let bracket = quad_bracket(t, x, arch)?;
    let chol = nalgebra::Cholesky::new(bracket.clone()).ok_or_else(|| {
        let eig = nalgebra::SymmetricEigen::new(bracket);
        Error::NonPositiveDefiniteCgf { min_eig: eig.eigenvalues.min() }
    })?;
    // log det from the Cholesky diagonal
    let mut logdet = 0.0;
    let l = chol.l();
    for i in 0..l.nrows() {
        logdet += l[(i, i)].ln();
    }
    logdet *= 2.0;
    let m = arch.width as f64;
    let mut linear = 0.0;
    for mu in 0..x.nrows() {
        linear += t.0[mu] * arch.sigma_w2 * x.row(mu).norm_squared();
    }
    Ok(-0.5 * m * logdet - linear)
}

/// Bracket matrix `B(v) = I - (2 sigma_w^2 / M) sum_mu v_mu x_mu x_mu^T`.
pub fn quad_bracket(v: &DualVector, x: &DMatrix<f64>, arch: &QuadArch) -> Result<DMatrix<f64>> {
    let (n, d) = (x.nrows(), x.ncols());
    if v.0.len() != n {
        return Err(Error::DimMismatch { context: "dual length", expected: n, got: v.0.len() });
    }
    if d != arch.dim {
        return Err(Error::DimMismatch { context: "quad input dim", expected: arch.dim, got: d });
    }
    let scale = 2.0 * arch.sigma_w2 / arch.width as f64;
    let mut b = DMatrix::identity(d, d);
    for mu in 0..n {
        let row = x.row(mu).transpose();
        b.syger(-scale * v.0[mu], &row, &row, 1.0);
    }
    // syger fills one triangle; mirror it
    for i in 0..d {
        for j in 0..i {
            b[(j, i)] = b[(i, j)];
        }
    }
    Ok(b)
}

/// Quadratic-model target shift at the eval points:
/// `Delta g_nu = -sum_mu K(x_nu, x_mu) v_mu
///  + sigma_w^2 x_nu^T B(v)^-1 x_nu - sigma_w^2 |x_nu|^2`.
pub fn quad_delta_g(
    v: &DualVector,
    x: &DMatrix<f64>,
    arch: &QuadArch,
    x_eval: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    let bracket = quad_bracket(v, x, arch)?;
    let chol = nalgebra::Cholesky::new(bracket.clone()).ok_or_else(|| {
        let eig = nalgebra::SymmetricEigen::new(bracket);
        Error::SingularBracket { min_eig: eig.eigenvalues.min() }
    })?;
    quad_delta_g_with(&chol, v, x, arch, x_eval)
}

/// Same as [`quad_delta_g`] but reusing a bracket factorization; the solver
/// factorizes once per iteration and evaluates train and test shifts.
pub fn quad_delta_g_with(
    bracket_chol: &nalgebra::Cholesky<f64, nalgebra::Dyn>,
    v: &DualVector,
    x: &DMatrix<f64>,
    arch: &QuadArch,
    x_eval: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    if x_eval.ncols() != arch.dim {
        return Err(Error::DimMismatch { context: "quad eval dim", expected: arch.dim, got: x_eval.ncols() });
    }
    let n_eval = x_eval.nrows();
    let scale = 2.0 * arch.sigma_w2 * arch.sigma_w2 / arch.width as f64;
    // kernel term: K_eval_train * v
    let dots = x_eval * x.transpose();
    let mut out = DVector::zeros(n_eval);
    for nu in 0..n_eval {
        let mut acc = 0.0;
        for mu in 0..x.nrows() {
            let dd = dots[(nu, mu)];
            acc += dd * dd * v.0[mu];
        }
        out[nu] = -scale * acc;
    }
    // bracket term
    let solved = bracket_chol.solve(&x_eval.transpose());
    for nu in 0..n_eval {
        let xr = x_eval.row(nu);
        let quad_form: f64 = (0..arch.dim).map(|j| xr[j] * solved[(j, nu)]).sum();
        out[nu] += arch.sigma_w2 * (quad_form - xr.norm_squared());
    }
    Ok(out)
}

/// Which model's shift the Jacobian differentiates.
#[derive(Debug, Clone)]
pub enum ShiftModel<'a> {
    Cnn { arch: &'a CnnArch, mode: CnnShiftMode },
    Quad(&'a QuadArch),
}

/// Kernel shift `Delta K_{mu nu} = d Delta g_nu / d v_mu` on the training set.
///
/// Quadratic model: analytic closed form
/// `Delta K = (2 sigma_w^4 / M) (x_mu^T B^-1 x_nu)^2 - K_{mu nu}`.
/// CNN: central finite differences of the shift with relative step
/// `h = fd_step * (1 + |v_mu|)`.
pub fn delta_k(
    model: &ShiftModel<'_>,
    x: &DMatrix<f64>,
    v: &DualVector,
    fd_step: f64,
) -> Result<DMatrix<f64>> {
    match model {
        ShiftModel::Quad(arch) => {
            let bracket = quad_bracket(v, x, arch)?;
            let chol = nalgebra::Cholesky::new(bracket.clone()).ok_or_else(|| {
                let eig = nalgebra::SymmetricEigen::new(bracket);
                Error::SingularBracket { min_eig: eig.eigenvalues.min() }
            })?;
            Ok(quad_delta_k_with(&chol, x, arch))
        }
        ShiftModel::Cnn { arch, mode } => {
            let n = x.nrows();
            let train = WindowGrams::new(x, arch)?;
            let mut jac = DMatrix::zeros(n, n);
            let mut vp = v.0.clone();
            for mu in 0..n {
                let h = fd_step * (1.0 + v.0[mu].abs());
                if h == 0.0 {
                    return Err(Error::FdUnderflow { index: mu });
                }
                vp[mu] = v.0[mu] + h;
                let plus = cnn_delta_g(&train, &train, arch, &DualVector(vp.clone()), *mode)?;
                vp[mu] = v.0[mu] - h;
                let minus = cnn_delta_g(&train, &train, arch, &DualVector(vp.clone()), *mode)?;
                vp[mu] = v.0[mu];
                for nu in 0..n {
                    jac[(mu, nu)] = (plus[nu] - minus[nu]) / (2.0 * h);
                }
            }
            Ok(jac)
        }
    }
}

/// Analytic quadratic-model kernel shift given a bracket factorization.
pub fn quad_delta_k_with(
    bracket_chol: &nalgebra::Cholesky<f64, nalgebra::Dyn>,
    x: &DMatrix<f64>,
    arch: &QuadArch,
) -> DMatrix<f64> {
    let n = x.nrows();
    let scale = 2.0 * arch.sigma_w2 * arch.sigma_w2 / arch.width as f64;
    let solved = bracket_chol.solve(&x.transpose()); // d x n
    let p = x * &solved; // (x_mu^T B^-1 x_nu)
    let k = gram(&KernelSpec::Quad(*arch), x);
    DMatrix::from_fn(n, n, |i, j| scale * p[(i, j)] * p[(i, j)] - k[(i, j)])
}

pub mod oracle_support {
    //! Naive tensor-sum oracles, O(n^r): independent test-only twins of
    //! the fast contractions. Exposed so integration suites can call
    //! them; never used on the library's computation paths. Keep n <= 5.

    use super::*;

    /// kappa_4 of the linear CNN by direct pairing enumeration.
    pub fn kappa4_naive(wg: &WindowGrams, arch: &CnnArch, idx: [usize; 4]) -> f64 {
        let lam = arch.lambda();
        let c = arch.channels as f64;
        let n_w = wg.per_window.len();
        let win = |p: usize, i: usize| wg.per_window[i].row(idx[p]);
        let mut tot = 0.0;
        for (a, b, cc, d) in [(0, 1, 2, 3), (0, 2, 1, 3), (0, 3, 1, 2)] {
            for (p, q) in [((a, b), (cc, d)), ((a, b), (d, cc))] {
                for i in 0..n_w {
                    for j in 0..n_w {
                        let t1 = win(p.0, i).dot(&win(p.1, j));
                        let t2 = win(q.0, i).dot(&win(q.1, j));
                        tot += t1 * t2;
                    }
                }
            }
        }
        lam * lam / c * tot
    }

    /// kappa_6 by summing the chain value over all 720 label permutations
    /// and dividing by the 3! window-index relabelings.
    pub fn kappa6_naive(wg: &WindowGrams, arch: &CnnArch, idx: [usize; 6]) -> f64 {
        let lam = arch.lambda();
        let c = arch.channels as f64;
        let n_w = wg.per_window.len();
        let win = |p: usize, i: usize| wg.per_window[i].row(idx[p]);
        let mut perm = [0usize; 6];
        let mut tot = 0.0;
        permute(&mut perm, &mut [false; 6], 0, &mut |p| {
            let mut sum = 0.0;
            for i in 0..n_w {
                for j in 0..n_w {
                    for k in 0..n_w {
                        sum += win(p[0], i).dot(&win(p[1], j))
                            * win(p[2], i).dot(&win(p[3], k))
                            * win(p[4], j).dot(&win(p[5], k));
                    }
                }
            }
            tot += sum;
        });
        lam.powi(3) / (c * c) * tot / 6.0
    }

    fn permute(perm: &mut [usize; 6], used: &mut [bool; 6], depth: usize, f: &mut impl FnMut(&[usize; 6])) {
        if depth == 6 {
            f(perm);
            return;
        }
        for v in 0..6 {
            if !used[v] {
                used[v] = true;
                perm[depth] = v;
                permute(perm, used, depth + 1, f);
                used[v] = false;
            }
        }
    }

    /// Naive kappa_4 contraction (1/3!) sum kappa_4(nu, ...) v v v.
    pub fn contract4_naive(wg: &WindowGrams, arch: &CnnArch, v: &DVector<f64>) -> DVector<f64> {
        let n = wg.n;
        DVector::from_fn(n, |nu, _| {
            let mut acc = 0.0;
            for m1 in 0..n {
                for m2 in 0..n {
                    for m3 in 0..n {
                        acc += kappa4_naive(wg, arch, [nu, m1, m2, m3]) * v[m1] * v[m2] * v[m3];
                    }
                }
            }
            acc / 6.0
        })
    }

    /// Naive kappa_6 contraction (1/5!) sum kappa_6(nu, ...) v^5.
    pub fn contract6_naive(wg: &WindowGrams, arch: &CnnArch, v: &DVector<f64>) -> DVector<f64> {
        let n = wg.n;
        DVector::from_fn(n, |nu, _| {
            let mut acc = 0.0;
            for m1 in 0..n {
                for m2 in 0..n {
                    for m3 in 0..n {
                        for m4 in 0..n {
                            for m5 in 0..n {
                                acc += kappa6_naive(wg, arch, [nu, m1, m2, m3, m4, m5])
                                    * v[m1] * v[m2] * v[m3] * v[m4] * v[m5];
                            }
                        }
                    }
                }
            }
            acc / 120.0
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::{sample_inputs, MeasureTag};
    use approx::assert_relative_eq;

    fn small_setup(n: usize, n_w: usize, s: usize, c: usize, seed: u64) -> (CnnArch, WindowGrams, DualVector) {
        let arch = CnnArch::new(n_w, s, c, 1.0, 1.0);
        let x = sample_inputs(n, n_w * s, MeasureTag::GaussianUnit, seed);
        let wg = WindowGrams::new(&x, &arch).unwrap();
        let mut rng_v = crate::rng::StreamKey::new(seed, "v", 1).rng();
        use rand::Rng;
        use rand_distr::StandardNormal;
        let v = DVector::from_fn(n, |_, _| 0.3 * rng_v.sample::<f64, _>(StandardNormal));
        (arch, wg, DualVector(v))
    }

    #[test]
    fn kappa4_zero_dual_is_zero() {
        let (arch, wg, _) = small_setup(3, 2, 3, 5, 1);
        let z = DualVector(DVector::zeros(3));
        let out = cnn_kappa4_contract(&wg, &wg, &arch, &z).unwrap();
        assert_eq!(out, DVector::zeros(3));
        let out6 = cnn_kappa6_contract(&wg, &wg, &arch, &z).unwrap();
        assert_eq!(out6, DVector::zeros(3));
    }

    #[test]
    fn kappa4_matches_naive_tensor_oracle() {
        let (arch, wg, v) = small_setup(3, 2, 3, 5, 2);
        let fast = cnn_kappa4_contract(&wg, &wg, &arch, &v).unwrap();
        let naive = oracle_support::contract4_naive(&wg, &arch, &v.0);
        assert_relative_eq!((fast - naive.clone()).norm() / naive.norm(), 0.0, epsilon = 1e-10);
    }

    #[test]
    fn kappa6_matches_naive_tensor_oracle() {
        let (arch, wg, v) = small_setup(3, 2, 2, 4, 3);
        let fast = cnn_kappa6_contract(&wg, &wg, &arch, &v).unwrap();
        let naive = oracle_support::contract6_naive(&wg, &arch, &v.0);
        assert_relative_eq!((fast - naive.clone()).norm() / naive.norm(), 0.0, epsilon = 1e-10);
    }

    #[test]
    fn kappa4_single_point_closed_form() {
        // N=1: kappa_4(x,x,x,x) = 6 (lambda^2/C) |x|^4
        let arch = CnnArch::new(1, 4, 8, 1.0, 1.0);
        let x = sample_inputs(1, 4, MeasureTag::GaussianUnit, 4);
        let wg = WindowGrams::new(&x, &arch).unwrap();
        let k4 = oracle_support::kappa4_naive(&wg, &arch, [0, 0, 0, 0]);
        let lam = arch.lambda();
        let expect = 6.0 * lam * lam / 8.0 * x.row(0).norm_squared().powi(2);
        assert_relative_eq!(k4, expect, max_relative = 1e-12);
        // and the contraction with v = e_1 recovers kappa_4/3! at nu = 0
        let v = DualVector(DVector::from_element(1, 1.0));
        let out = cnn_kappa4_contract(&wg, &wg, &arch, &v).unwrap();
        assert_relative_eq!(out[0], k4 / 6.0, max_relative = 1e-12);
    }

    #[test]
    fn cumulant_contractions_scale_in_channels() {
        // kappa_4 contraction ~ 1/C, kappa_6 ~ 1/C^2 exactly.
        let (arch1, wg, v) = small_setup(4, 2, 3, 1, 5);
        let arch8 = CnnArch { channels: 8, ..arch1 };
        let k4_1 = cnn_kappa4_contract(&wg, &wg, &arch1, &v).unwrap();
        let k4_8 = cnn_kappa4_contract(&wg, &wg, &arch8, &v).unwrap();
        assert_relative_eq!((k4_1 / 8.0 - k4_8).norm(), 0.0, epsilon = 1e-14);
        let k6_1 = cnn_kappa6_contract(&wg, &wg, &arch1, &v).unwrap();
        let k6_8 = cnn_kappa6_contract(&wg, &wg, &arch8, &v).unwrap();
        assert_relative_eq!((k6_1 / 64.0 - k6_8).norm(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn delta_g_odd_in_dual() {
        let (arch, wg, v) = small_setup(4, 2, 3, 3, 6);
        let neg = DualVector(-v.0.clone());
        for mode in [CnnShiftMode::Series { order: 6 }, CnnShiftMode::Resummed] {
            let plus = cnn_delta_g(&wg, &wg, &arch, &v, mode).unwrap();
            let minus = cnn_delta_g(&wg, &wg, &arch, &neg, mode).unwrap();
            assert_relative_eq!((plus + minus).norm(), 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn resummed_taylor_matches_series() {
        let (arch, wg, v) = small_setup(4, 2, 3, 3, 7);
        // At t*v: resummed = t^3 K4 + t^5 K6 + O(t^7)
        let t = 1e-2;
        let vt = DualVector(&v.0 * t);
        let res = cnn_delta_g(&wg, &wg, &arch, &vt, CnnShiftMode::Resummed).unwrap();
        let k4 = cnn_kappa4_contract(&wg, &wg, &arch, &vt).unwrap();
        let k6 = cnn_kappa6_contract(&wg, &wg, &arch, &vt).unwrap();
        let series = &k4 + &k6;
        // the residual is the t^7 term; with |v| ~ 0.3 t and window sums
        // O(1) it sits far below 1e-8 relative.
        let rel = (res - series).norm() / k4.norm();
        assert!(rel < 1e-8, "taylor mismatch {rel}");
    }

    #[test]
    fn delta_g_vanishes_at_large_channels() {
        let (arch, wg, v) = small_setup(4, 2, 3, 1, 8);
        let big = CnnArch { channels: 1_000_000_000, ..arch };
        let dg = cnn_delta_g(&wg, &wg, &big, &v, CnnShiftMode::Resummed).unwrap();
        let dg_small = cnn_delta_g(&wg, &wg, &arch, &v, CnnShiftMode::Resummed).unwrap();
        // O(1/C) suppression
        assert!(dg.norm() < dg_small.norm() * 1e-8);
        let v0 = DualVector(DVector::zeros(4));
        let z = cnn_delta_g(&wg, &wg, &arch, &v0, CnnShiftMode::Resummed).unwrap();
        assert_eq!(z, DVector::zeros(4));
    }

    #[test]
    fn resummation_divergence_reported() {
        let (arch, wg, v) = small_setup(3, 2, 2, 1, 9);
        // crank the duals until (lambda/C) lambda_max(M) >= 1
        let mut scale = 1.0;
        loop {
            let vv = DualVector(&v.0 * scale);
            let radius = cnn_resummation_radius(&wg, &arch, &vv).unwrap();
            if radius >= 1.2 {
                match cnn_delta_g(&wg, &wg, &arch, &vv, CnnShiftMode::Resummed) {
                    Err(Error::ResummationDiverged { radius }) => {
                        assert!(radius >= 1.0);
                        break;
                    }
                    other => panic!("expected divergence, got {other:?}"),
                }
            }
            scale *= 2.0;
        }
    }

    #[test]
    fn quad_cgf_basics() {
        let arch = QuadArch::new(1, 3, 1.0);
        let x = DMatrix::from_element(1, 1, 1.0);
        let zero = DualVector(DVector::zeros(1));
        assert_eq!(quad_cgf(&zero, &x, &arch).unwrap(), 0.0);
        // scalar case: C(t) = -(M/2) log(1 - 2 sw2 t / M) - t sw2
        let t = 0.1;
        let c = quad_cgf(&DualVector(DVector::from_element(1, t)), &x, &arch).unwrap();
        let expect = -1.5 * (1.0 - 2.0 * t / 3.0).ln() - t;
        assert_relative_eq!(c, expect, max_relative = 1e-12);
        // second Taylor coefficient equals K(x,x) = 2 sw2^2 / M
        let h = 1e-4;
        let cp = quad_cgf(&DualVector(DVector::from_element(1, h)), &x, &arch).unwrap();
        let cm = quad_cgf(&DualVector(DVector::from_element(1, -h)), &x, &arch).unwrap();
        let second = (cp + cm) / (h * h);
        assert_relative_eq!(second, 2.0 / 3.0, max_relative = 1e-6);
    }

    #[test]
    fn quad_cgf_second_derivative_is_gram() {
        let arch = QuadArch::new(3, 7, 1.1);
        let x = sample_inputs(4, 3, MeasureTag::GaussianOverD, 10);
        let k = gram(&KernelSpec::Quad(arch), &x);
        let h = 1e-4;
        for mu in 0..4 {
            for nu in 0..4 {
                let mut tpp = DVector::zeros(4);
                tpp[mu] += h;
                tpp[nu] += h;
                let mut tpm = DVector::zeros(4);
                tpm[mu] += h;
                tpm[nu] -= h;
                let mut tmp = DVector::zeros(4);
                tmp[mu] -= h;
                tmp[nu] += h;
                let mut tmm = DVector::zeros(4);
                tmm[mu] -= h;
                tmm[nu] -= h;
                let fd = (quad_cgf(&DualVector(tpp), &x, &arch).unwrap()
                    - quad_cgf(&DualVector(tpm), &x, &arch).unwrap()
                    - quad_cgf(&DualVector(tmp), &x, &arch).unwrap()
                    + quad_cgf(&DualVector(tmm), &x, &arch).unwrap())
                    / (4.0 * h * h);
                assert_relative_eq!(fd, k[(mu, nu)], epsilon = 1e-6, max_relative = 1e-6);
            }
        }
    }

    #[test]
    fn quad_cgf_first_order_vanishes() {
        // d/dt C at 0 = 0: the |x|^2 subtraction centers the prior.
        let arch = QuadArch::new(4, 5, 0.9);
        let x = sample_inputs(3, 4, MeasureTag::GaussianUnit, 11);
        // Richardson-extrapolated central difference kills the h^2 term,
        // leaving truncation ~h^4 and roundoff ~eps/h.
        let fd_at = |mu: usize, h: f64| {
            let mut tp = DVector::zeros(3);
            tp[mu] = h;
            let mut tm = DVector::zeros(3);
            tm[mu] = -h;
            (quad_cgf(&DualVector(tp), &x, &arch).unwrap()
                - quad_cgf(&DualVector(tm), &x, &arch).unwrap())
                / (2.0 * h)
        };
        for mu in 0..3 {
            let h = 1e-3;
            let fd = (4.0 * fd_at(mu, h / 2.0) - fd_at(mu, h)) / 3.0;
            assert!(fd.abs() < 1e-10, "first derivative {fd}");
        }
    }

    #[test]
    fn quad_delta_g_zero_dual_and_large_width() {
        let arch = QuadArch::new(3, 6, 1.0);
        let x = sample_inputs(4, 3, MeasureTag::GaussianUnit, 12);
        let z = DualVector(DVector::zeros(4));
        let dg = quad_delta_g(&z, &x, &arch, &x).unwrap();
        assert_relative_eq!(dg.norm(), 0.0, epsilon = 1e-13);

        use rand::Rng;
        use rand_distr::StandardNormal;
        let mut rng = crate::rng::StreamKey::new(13, "v", 0).rng();
        let v = DualVector(DVector::from_fn(4, |_, _| 0.2 * rng.sample::<f64, _>(StandardNormal)));
        let big = QuadArch::new(3, 1_000_000_000, 1.0);
        let dg_big = quad_delta_g(&v, &x, &big, &x).unwrap();
        assert!(dg_big.norm() < 1e-7, "1/M suppression failed: {}", dg_big.norm());
    }

    #[test]
    fn quad_delta_g_matches_cgf_gradient_minus_kernel() {
        // Delta g_nu = d/dt_nu [CGF - kernel part] at t = v, via finite
        // differences of quad_cgf.
        let arch = QuadArch::new(3, 5, 1.2);
        let x = sample_inputs(4, 3, MeasureTag::GaussianOverD, 14);
        use rand::Rng;
        use rand_distr::StandardNormal;
        let mut rng = crate::rng::StreamKey::new(15, "v", 0).rng();
        let v = DVector::from_fn(4, |_, _| 0.15 * rng.sample::<f64, _>(StandardNormal));
        let dg = quad_delta_g(&DualVector(v.clone()), &x, &arch, &x).unwrap();
        let k = gram(&KernelSpec::Quad(arch), &x);
        let h = 1e-5;
        for nu in 0..4 {
            let mut vp = v.clone();
            vp[nu] += h;
            let mut vm = v.clone();
            vm[nu] -= h;
            let fd = (quad_cgf(&DualVector(vp), &x, &arch).unwrap()
                - quad_cgf(&DualVector(vm), &x, &arch).unwrap())
                / (2.0 * h);
            let kernel_grad = k.row(nu).transpose().dot(&v);
            assert_relative_eq!(dg[nu], fd - kernel_grad, epsilon = 1e-6, max_relative = 1e-6);
        }
    }

    #[test]
    fn delta_k_quad_analytic_vs_finite_difference() {
        let arch = QuadArch::new(3, 5, 1.0);
        let x = sample_inputs(4, 3, MeasureTag::GaussianUnit, 16);
        use rand::Rng;
        use rand_distr::StandardNormal;
        let mut rng = crate::rng::StreamKey::new(17, "v", 0).rng();
        let v = DVector::from_fn(4, |_, _| 0.1 * rng.sample::<f64, _>(StandardNormal));
        let dual = DualVector(v.clone());
        let analytic = delta_k(&ShiftModel::Quad(&arch), &x, &dual, 1e-5).unwrap();
        // FD of quad_delta_g
        let h = 1e-5;
        let mut fd = DMatrix::zeros(4, 4);
        for mu in 0..4 {
            let mut vp = v.clone();
            vp[mu] += h;
            let mut vm = v.clone();
            vm[mu] -= h;
            let plus = quad_delta_g(&DualVector(vp), &x, &arch, &x).unwrap();
            let minus = quad_delta_g(&DualVector(vm), &x, &arch, &x).unwrap();
            for nu in 0..4 {
                fd[(mu, nu)] = (plus[nu] - minus[nu]) / (2.0 * h);
            }
        }
        let rel = (analytic.clone() - fd).norm() / analytic.norm().max(1e-30);
        assert!(rel < 1e-5, "jacobian mismatch {rel}");

        // v = 0: Delta K = 0 (the bracket term's Jacobian equals the kernel)
        let z = DualVector(DVector::zeros(4));
        let dk0 = delta_k(&ShiftModel::Quad(&arch), &x, &z, 1e-5).unwrap();
        assert_relative_eq!(dk0.norm(), 0.0, epsilon = 1e-10);
    }

    #[test]
    fn delta_k_symmetry_both_models() {
        let arch = QuadArch::new(3, 5, 1.0);
        let x = sample_inputs(4, 3, MeasureTag::GaussianUnit, 18);
        use rand::Rng;
        use rand_distr::StandardNormal;
        let mut rng = crate::rng::StreamKey::new(19, "v", 0).rng();
        let v = DualVector(DVector::from_fn(4, |_, _| 0.1 * rng.sample::<f64, _>(StandardNormal)));
        let dkq = delta_k(&ShiftModel::Quad(&arch), &x, &v, 1e-5).unwrap();
        assert_relative_eq!((dkq.clone() - dkq.transpose()).norm(), 0.0, epsilon = 1e-8);

        let carch = CnnArch::new(2, 3, 4, 1.0, 1.0);
        let xc = sample_inputs(4, 6, MeasureTag::GaussianUnit, 20);
        let dkc = delta_k(
            &ShiftModel::Cnn { arch: &carch, mode: CnnShiftMode::Resummed },
            &xc,
            &v,
            1e-5,
        )
        .unwrap();
        let asym = (dkc.clone() - dkc.transpose()).norm() / dkc.norm().max(1e-30);
        assert!(asym < 1e-8, "cnn delta K asymmetry {asym}");
    }
}
