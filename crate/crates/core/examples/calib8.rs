// Temporary calibration driver for the desk-scale alpha comparison.
use nalgebra::DVector;
use selfcons_gp::cumulants::CnnShiftMode;
use selfcons_gp::datagen::{eval_cnn, make_cnn_teacher, sample_inputs, CnnArch, MeasureTag};
use selfcons_gp::gp::{empirical_alpha, GpFit};
use selfcons_gp::kernels::{cross_gram, factorize, gram, KernelSpec};
use selfcons_gp::langevin::{derive_weight_decay_cnn, train_ensemble_simple, LangevinConfig, LangevinModel, WeightDecay};
use selfcons_gp::saddle::{predict_test, solve_saddle, SaddleConfig, SaddleModel};

fn main() {
    let s_len = 8usize;
    let n = 40usize;
    let sigma2 = 1.0;
    let arch0 = CnnArch::new(s_len, s_len, 1, 1.0, 1.0);
    let x = sample_inputs(n, arch0.dim(), MeasureTag::GaussianUnit, 4242);
    let teacher = make_cnn_teacher(&arch0, 4243, true);
    let g = eval_cnn(&arch0, &teacher, &x).unwrap();
    let xt = sample_inputs(200, arch0.dim(), MeasureTag::GaussianUnit, 4244);
    let gt = eval_cnn(&arch0, &teacher, &xt).unwrap();

    let spec = KernelSpec::CnnLinear(arch0);
    let k = gram(&spec, &x);
    let fit = GpFit::fit(factorize(k, sigma2).unwrap(), g.clone()).unwrap();
    let gp_tr = fit.mean_train();
    let cross = cross_gram(&spec, &x, &xt);
    let gp_te = fit.mean_test(&cross, None).unwrap();
    println!(
        "alpha_GP: train {:.4} test {:.4}",
        empirical_alpha(&gp_tr, &g).unwrap(),
        empirical_alpha(&gp_te, &gt).unwrap()
    );

    for &c in &[4usize, 16, 64] {
        let arch = CnnArch { channels: c, ..arch0 };
        // saddle predictions
        let model = SaddleModel::Cnn { arch, mode: CnnShiftMode::Resummed };
        let mut cfg = SaddleConfig::default_for(sigma2);
        cfg.annealing = vec![sigma2];
        let sol = solve_saddle(&model, &x, &g, sigma2, &cfg).unwrap();
        let a_tr_sc = sol.discrepancies.values.dot(&g) / g.norm_squared();
        let pred_test = predict_test(&sol, &model, &x, &g, &xt).unwrap();
        let a_te_sc = empirical_alpha(&pred_test, &gt).unwrap();

        // Langevin
        let gammas = derive_weight_decay_cnn(&arch, sigma2);
        let gmax = match gammas {
            WeightDecay::Cnn { gamma_readout, gamma_filters } => gamma_readout.max(gamma_filters),
            _ => unreachable!(),
        };
        let steps = 120_000;
        let config = LangevinConfig {
            eta: 0.05 / (gmax + 120.0),
            sigma: 1.0,
            gammas,
            steps,
            burn_in: steps / 3,
            thin: 10,
            n_seeds: 10,
            store_snapshots: false,
            cold_start: false,
            record_trace: false,
        };
        let t0 = std::time::Instant::now();
        let stats =
            train_ensemble_simple(&LangevinModel::Cnn(arch), &x, &g, Some((&xt, &gt)), &config, 5000 + c as u64)
                .unwrap();
        let wall = t0.elapsed().as_secs_f64();
        let a_tr = stats.alpha_train;
        let a_te = stats.alpha_test.unwrap_or(f64::NAN);
        println!(
            "C={c}: SC train {a_tr_sc:.4} test {a_te_sc:.4} | emp train {a_tr:.4}+-{:.4} test {a_te:.4}+-{:.4} | rel tr {:.3} te {:.3} | eta {:.2e} wall {wall:.0}s z={:.1}",
            stats.alpha_train_stderr,
            stats.alpha_test_stderr.unwrap_or(f64::NAN),
            (a_tr - a_tr_sc).abs() / a_tr.abs(),
            (a_te - a_te_sc).abs() / a_te.abs(),
            config.eta,
            stats.stationarity_z,
        );
    }
    let _ = DVector::<f64>::zeros(1);
}
