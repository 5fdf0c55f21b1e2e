//! Randomized property suites over the module invariants.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use selfcons_gp::cumulants::{
    cnn_delta_g, cnn_kappa4_contract, cnn_kappa6_contract, delta_k, quad_delta_g, CnnShiftMode,
    DualVector, ShiftModel, WindowGrams,
};
use selfcons_gp::datagen::{eval_cnn, eval_quadratic, sample_inputs, CnnArch, MeasureTag, QuadArch};
use selfcons_gp::gp::{empirical_alpha, posterior_cov_train_shifted};
use selfcons_gp::kernels::{factorize, gram, kernel_eval, KernelSpec};
use selfcons_gp::rng::StreamKey;
use selfcons_gp::spectral::{mp_edges, q_statistic, sigma_w};

fn arb_seed() -> impl Strategy<Value = u64> {
    0u64..1_000_000
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn cnn_eval_is_linear_in_inputs(seed in arb_seed(), scale in -3.0f64..3.0) {
        let arch = CnnArch::new(3, 2, 2, 1.0, 1.0);
        let x = sample_inputs(4, 6, MeasureTag::GaussianUnit, seed);
        let params = selfcons_gp::datagen::make_cnn_teacher(&CnnArch::new(3, 2, 1, 1.0, 1.0), seed + 1, false);
        let f1 = eval_cnn(&arch, &params, &x).unwrap();
        let f2 = eval_cnn(&arch, &params, &(x * scale)).unwrap();
        prop_assert!((f2 - f1 * scale).norm() < 1e-10);
    }

    #[test]
    fn quad_eval_is_quadratic_in_inputs(seed in arb_seed(), scale in -3.0f64..3.0) {
        let x = sample_inputs(4, 5, MeasureTag::GaussianUnit, seed);
        let mut rng = StreamKey::new(seed, "w", 0).rng();
        use rand::Rng;
        use rand_distr::StandardNormal;
        let w = DMatrix::from_fn(3, 5, |_, _| rng.sample::<f64, _>(StandardNormal));
        let f1 = eval_quadratic(&w, 0.8, &x).unwrap();
        let f2 = eval_quadratic(&w, 0.8, &(x * scale)).unwrap();
        prop_assert!((f2 - f1 * scale * scale).norm() < 1e-8 * (1.0 + scale * scale));
    }

    #[test]
    fn quad_positive_part_nonnegative(seed in arb_seed()) {
        // first term of the quadratic student is a sum of squares
        let x = sample_inputs(6, 5, MeasureTag::GaussianUnit, seed);
        let mut rng = StreamKey::new(seed, "w", 1).rng();
        use rand::Rng;
        use rand_distr::StandardNormal;
        let w = DMatrix::from_fn(4, 5, |_, _| rng.sample::<f64, _>(StandardNormal));
        let f = eval_quadratic(&w, 0.0, &x).unwrap(); // sigma_w^2 = 0 isolates the square term
        prop_assert!(f.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn sampling_deterministic(seed in arb_seed()) {
        let a = sample_inputs(5, 7, MeasureTag::GaussianOverD, seed);
        let b = sample_inputs(5, 7, MeasureTag::GaussianOverD, seed);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn cnn_kernel_is_fcn_kernel(seed in arb_seed()) {
        // depends on x . x' only
        let arch = CnnArch::new(3, 2, 4, 0.9, 1.1);
        let spec = KernelSpec::CnnLinear(arch);
        let x = sample_inputs(2, 6, MeasureTag::GaussianUnit, seed);
        let k = kernel_eval(&spec, &x.row(0).transpose(), &x.row(1).transpose()).unwrap();
        let dot = x.row(0).dot(&x.row(1));
        prop_assert!((k - arch.lambda() * dot).abs() < 1e-12 * (1.0 + dot.abs()));
    }

    #[test]
    fn quad_kernel_sign_invariance(seed in arb_seed()) {
        let spec = KernelSpec::Quad(QuadArch::new(6, 3, 1.2));
        let x = sample_inputs(2, 6, MeasureTag::GaussianUnit, seed);
        let a = x.row(0).transpose();
        let b = x.row(1).transpose();
        let k0 = kernel_eval(&spec, &a, &b).unwrap();
        let k1 = kernel_eval(&spec, &(-&a), &b).unwrap();
        let k2 = kernel_eval(&spec, &a, &(-&b)).unwrap();
        prop_assert!((k0 - k1).abs() < 1e-12 * (1.0 + k0.abs()));
        prop_assert!((k0 - k2).abs() < 1e-12 * (1.0 + k0.abs()));
    }

    #[test]
    fn odd_cumulants_vanish_cnn(seed in arb_seed(), scale in 0.05f64..0.5) {
        // every CNN contraction is odd under v -> -v
        let arch = CnnArch::new(2, 3, 3, 1.0, 1.0);
        let x = sample_inputs(4, 6, MeasureTag::GaussianUnit, seed);
        let wg = WindowGrams::new(&x, &arch).unwrap();
        let mut rng = StreamKey::new(seed, "v", 2).rng();
        use rand::Rng;
        use rand_distr::StandardNormal;
        let v = DVector::from_fn(4, |_, _| scale * rng.sample::<f64, _>(StandardNormal));
        let plus = cnn_delta_g(&wg, &wg, &arch, &DualVector(v.clone()), CnnShiftMode::Series { order: 6 }).unwrap();
        let minus = cnn_delta_g(&wg, &wg, &arch, &DualVector(-v), CnnShiftMode::Series { order: 6 }).unwrap();
        prop_assert!((plus + minus).norm() < 1e-12);
    }

    #[test]
    fn cumulant_channel_scaling(seed in arb_seed()) {
        // kappa4 ~ 1/C, kappa6 ~ 1/C^2 exactly at fixed inputs
        let arch1 = CnnArch::new(2, 2, 1, 1.0, 1.0);
        let arch4 = CnnArch { channels: 4, ..arch1 };
        let x = sample_inputs(3, 4, MeasureTag::GaussianUnit, seed);
        let wg = WindowGrams::new(&x, &arch1).unwrap();
        let v = DualVector(DVector::from_fn(3, |i, _| 0.2 + 0.1 * i as f64));
        let a4 = cnn_kappa4_contract(&wg, &wg, &arch1, &v).unwrap();
        let b4 = cnn_kappa4_contract(&wg, &wg, &arch4, &v).unwrap();
        prop_assert!((a4 / 4.0 - b4).norm() < 1e-14);
        let a6 = cnn_kappa6_contract(&wg, &wg, &arch1, &v).unwrap();
        let b6 = cnn_kappa6_contract(&wg, &wg, &arch4, &v).unwrap();
        prop_assert!((a6 / 16.0 - b6).norm() < 1e-14);
    }

    #[test]
    fn resummed_series_taylor_match(seed in arb_seed()) {
        let arch = CnnArch::new(2, 3, 4, 1.0, 1.0);
        let x = sample_inputs(4, 6, MeasureTag::GaussianUnit, seed);
        let wg = WindowGrams::new(&x, &arch).unwrap();
        let mut rng = StreamKey::new(seed, "v", 3).rng();
        use rand::Rng;
        use rand_distr::StandardNormal;
        let v = DVector::from_fn(4, |_, _| 0.003 * rng.sample::<f64, _>(StandardNormal));
        let dual = DualVector(v);
        let res = cnn_delta_g(&wg, &wg, &arch, &dual, CnnShiftMode::Resummed).unwrap();
        let ser = cnn_delta_g(&wg, &wg, &arch, &dual, CnnShiftMode::Series { order: 6 }).unwrap();
        let k4 = cnn_kappa4_contract(&wg, &wg, &arch, &dual).unwrap();
        prop_assert!((res - ser).norm() <= 1e-8 * k4.norm().max(1e-300));
    }

    #[test]
    fn delta_k_symmetric_quad(seed in arb_seed()) {
        let arch = QuadArch::new(3, 6, 1.0);
        let x = sample_inputs(4, 3, MeasureTag::GaussianUnit, seed);
        let mut rng = StreamKey::new(seed, "v", 4).rng();
        use rand::Rng;
        use rand_distr::StandardNormal;
        let v = DualVector(DVector::from_fn(4, |_, _| 0.1 * rng.sample::<f64, _>(StandardNormal)));
        let dk = delta_k(&ShiftModel::Quad(&arch), &x, &v, 1e-5).unwrap();
        prop_assert!((dk.clone() - dk.transpose()).norm() < 1e-8 * (1.0 + dk.norm()));
    }

    #[test]
    fn quad_shift_vanishes_at_zero_dual(seed in arb_seed()) {
        let arch = QuadArch::new(4, 8, 1.3);
        let x = sample_inputs(5, 4, MeasureTag::GaussianOverD, seed);
        let z = DualVector(DVector::zeros(5));
        let dg = quad_delta_g(&z, &x, &arch, &x).unwrap();
        prop_assert!(dg.norm() < 1e-12);
    }

    #[test]
    fn shifted_cov_eigenvalues_bounded(seed in arb_seed(), sigma2 in 0.05f64..2.0) {
        // Delta K = 0: all eigenvalues of the train posterior covariance
        // lie in [0, sigma^2].
        let spec = KernelSpec::CnnLinear(CnnArch::new(2, 3, 1, 1.0, 1.0));
        let x = sample_inputs(6, 6, MeasureTag::GaussianUnit, seed);
        let k = gram(&spec, &x);
        let cov = posterior_cov_train_shifted(&k, &DMatrix::zeros(6, 6), sigma2).unwrap();
        let eig = nalgebra::SymmetricEigen::new(cov);
        for ev in eig.eigenvalues.iter() {
            prop_assert!(*ev >= -1e-10 && *ev <= sigma2 + 1e-10);
        }
    }

    #[test]
    fn gp_shifted_identity(seed in arb_seed(), sigma2 in 0.1f64..2.0) {
        // Sigma = sigma^2 I - sigma^4 Ktilde^-1 at Delta K = 0
        let spec = KernelSpec::CnnLinear(CnnArch::new(2, 2, 1, 1.0, 1.0));
        let x = sample_inputs(5, 4, MeasureTag::GaussianUnit, seed);
        let k = gram(&spec, &x);
        let cov = posterior_cov_train_shifted(&k, &DMatrix::zeros(5, 5), sigma2).unwrap();
        let mut kt = k;
        for i in 0..5 {
            kt[(i, i)] += sigma2;
        }
        let oracle = DMatrix::identity(5, 5) * sigma2 - kt.try_inverse().unwrap() * sigma2 * sigma2;
        prop_assert!((cov - oracle).norm() < 1e-9);
    }

    #[test]
    fn alpha_affine_exact(seed in arb_seed(), a in -0.5f64..1.5) {
        let x = sample_inputs(1, 8, MeasureTag::GaussianUnit, seed);
        let g = x.row(0).transpose();
        let pred = &g * (1.0 - a);
        let alpha = empirical_alpha(&pred, &g).unwrap();
        prop_assert!((alpha - a).abs() < 1e-12);
    }

    #[test]
    fn mp_edges_ordered(s in 1usize..64, c in 1usize..512) {
        let (lo, hi) = mp_edges(s, c);
        prop_assert!(lo <= hi);
        prop_assert!(lo >= 0.0);
    }

    #[test]
    fn q_invariant_under_column_flips(seed in arb_seed()) {
        let mut rng = StreamKey::new(seed, "w", 5).rng();
        use rand::Rng;
        use rand_distr::StandardNormal;
        let mut w = DMatrix::from_fn(5, 8, |_, _| rng.sample::<f64, _>(StandardNormal));
        let u = DVector::from_fn(5, |i, _| 1.0 + i as f64);
        let q0 = q_statistic(&sigma_w(&w), &u).unwrap();
        for c in 0..8 {
            if (seed >> c) & 1 == 1 {
                for i in 0..5 {
                    w[(i, c)] = -w[(i, c)];
                }
            }
        }
        let q1 = q_statistic(&sigma_w(&w), &u).unwrap();
        prop_assert!((q0 - q1).abs() < 1e-10 * (1.0 + q0.abs()));
    }

    #[test]
    fn factorize_solve_residual(seed in arb_seed(), sigma2 in 0.01f64..2.0) {
        let spec = KernelSpec::Quad(QuadArch::new(5, 7, 1.0));
        let x = sample_inputs(12, 5, MeasureTag::GaussianOverD, seed);
        let k = gram(&spec, &x);
        let rg = factorize(k.clone(), sigma2).unwrap();
        let v = DVector::from_fn(12, |i, _| ((seed + i as u64) % 17) as f64 - 8.0);
        let u = rg.solve(&v);
        let mut kt = k;
        for i in 0..12 {
            kt[(i, i)] += sigma2;
        }
        let resid = (kt * u - &v).norm() / v.norm().max(1e-300);
        prop_assert!(resid <= 1e-10);
    }
}
