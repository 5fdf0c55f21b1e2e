//! Experiment runners: build the model and data from a config, execute,
//! and write manifest + CSV tables under `results/<experiment>/<hash>/`.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, Context};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;
use sha2::{Digest, Sha256};

use selfcons_gp::cumulants::CnnShiftMode;
use selfcons_gp::datagen::{
    eval_cnn, eval_quadratic_teacher, make_cnn_teacher, make_quadratic_teacher, sample_inputs,
    CnnArch, MeasureTag, QuadArch,
};
use selfcons_gp::diagnostics::{sp_correction_leading, sp_validity_report, SpThresholds};
use selfcons_gp::gp::{empirical_alpha, GpFit};
use selfcons_gp::kernels::{cross_gram, factorize, gram, KernelSpec};
use selfcons_gp::langevin::{
    derive_weight_decay_cnn, derive_weight_decay_quad, train_ensemble, train_ensemble_simple,
    LangevinConfig, LangevinModel, WeightDecay,
};
use selfcons_gp::rng::StreamKey;
use selfcons_gp::saddle::{
    analytic_q_train, ek_alpha_solve, estimate_q_empirical, geometric_schedule, predict_test,
    solve_saddle, SaddleConfig, SaddleMethod, SaddleModel,
};
use selfcons_gp::spectral::SpectralAccumulator;

use crate::config::{ExperimentConfig, ExperimentKind, LangevinBlock, SolverBlock};

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Exit codes: schema 2, non-convergence 3, numerical divergence 4.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunOutcome {
    Ok,
    NonConvergence,
    Divergence,
}

impl RunOutcome {
    pub fn exit_code(self) -> i32 {
        match self {
            RunOutcome::Ok => 0,
            RunOutcome::NonConvergence => 3,
            RunOutcome::Divergence => 4,
        }
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    experiment: &'a ExperimentKind,
    config_hash: String,
    code_version: &'a str,
    wall_time_s: f64,
    converged: bool,
    tables: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    notes: Option<String>,
}

pub struct RunContext {
    pub dir: PathBuf,
    pub config_hash: String,
    tables: Vec<String>,
    start: Instant,
}

impl RunContext {
    fn new(cfg: &ExperimentConfig, raw: &str) -> anyhow::Result<Self> {
        let hash = hex::encode(&Sha256::digest(raw.as_bytes())[..8]);
        let dir = Path::new(&cfg.output_dir)
            .join(format!("{:?}", cfg.experiment).to_lowercase())
            .join(&hash);
        fs::create_dir_all(&dir)?;
        Ok(Self { dir, config_hash: hash, tables: Vec::new(), start: Instant::now() })
    }

    fn header(&self) -> String {
        format!("# config_hash={} code_version={}", self.config_hash, CODE_VERSION)
    }

    fn write_table(&mut self, name: &str, header_cols: &str, rows: &[String]) -> anyhow::Result<()> {
        let path = self.dir.join(name);
        let mut out = String::new();
        out.push_str(&self.header());
        out.push('\n');
        out.push_str(header_cols);
        out.push('\n');
        for r in rows {
            out.push_str(r);
            out.push('\n');
        }
        fs::write(&path, out)?;
        self.tables.push(name.to_string());
        Ok(())
    }

    fn finish(self, cfg: &ExperimentConfig, converged: bool, notes: Option<String>) -> anyhow::Result<PathBuf> {
        let manifest = Manifest {
            experiment: &cfg.experiment,
            config_hash: self.config_hash.clone(),
            code_version: CODE_VERSION,
            wall_time_s: self.start.elapsed().as_secs_f64(),
            converged,
            tables: self.tables.clone(),
            notes,
        };
        fs::write(self.dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
        Ok(self.dir)
    }
}

/// Everything one replicated experiment instance needs.
pub struct Instance {
    pub cnn: Option<CnnArch>,
    pub quad: Option<QuadArch>,
    pub x_train: DMatrix<f64>,
    pub g_train: DVector<f64>,
    pub x_test: DMatrix<f64>,
    pub g_test: DVector<f64>,
    pub w_star: Option<DVector<f64>>,
}

fn measure_of(cfg: &ExperimentConfig) -> anyhow::Result<MeasureTag> {
    Ok(match cfg.data.measure.as_str() {
        "gaussian_unit" => MeasureTag::GaussianUnit,
        "gaussian_1_over_d" => MeasureTag::GaussianOverD,
        "hypersphere" => MeasureTag::Hypersphere { radius: cfg.data.radius },
        other => return Err(anyhow!("unknown measure {other}")),
    })
}

/// Derive the per-replica data/teacher seeds from the master seed.
fn instance_seed(master: u64, replica: usize, salt: u64) -> u64 {
    StreamKey::new(master, "instance", ((replica as u64) << 8) | salt).derive_u64()
}

/// Build one replica of the configured model/data.
pub fn build_instance(cfg: &ExperimentConfig, replica: usize) -> anyhow::Result<Instance> {
    build_instance_with(cfg, replica, None, None)
}

/// Same, overriding channel count (C sweeps) and train size (n sweeps).
pub fn build_instance_with(
    cfg: &ExperimentConfig,
    replica: usize,
    channels_override: Option<usize>,
    n_override: Option<usize>,
) -> anyhow::Result<Instance> {
    let measure = measure_of(cfg)?;
    let data_seed = instance_seed(cfg.master_seed, replica, 1);
    let teacher_seed = instance_seed(cfg.master_seed, replica, 2);
    let test_seed = instance_seed(cfg.master_seed, replica, 3);
    let n_train = n_override.unwrap_or(cfg.data.n_train);

    match cfg.model.kind.as_str() {
        "cnn_linear" => {
            let arch = CnnArch::new(
                cfg.model.n_windows.unwrap(),
                cfg.model.window.unwrap(),
                channels_override.or(cfg.model.channels).unwrap(),
                cfg.model.sigma_a2.unwrap(),
                cfg.model.sigma_w2.unwrap(),
            );
            let d = arch.dim();
            let x_train = sample_inputs(n_train, d, measure, data_seed);
            let x_test = if cfg.data.n_test > 0 {
                sample_inputs(cfg.data.n_test, d, measure, test_seed)
            } else {
                DMatrix::zeros(0, d)
            };
            let teacher = make_cnn_teacher(&arch, teacher_seed, cfg.data.teacher_normalize);
            let g_train = eval_cnn(&arch, &teacher, &x_train)?;
            let g_test = if cfg.data.n_test > 0 {
                eval_cnn(&arch, &teacher, &x_test)?
            } else {
                DVector::zeros(0)
            };
            let w_star = Some(teacher.filters.column(0).into_owned());
            Ok(Instance { cnn: Some(arch), quad: None, x_train, g_train, x_test, g_test, w_star })
        }
        "quad" => {
            let arch = QuadArch::new(
                cfg.model.d.unwrap(),
                cfg.model.width.unwrap(),
                cfg.model.sigma_w2.unwrap(),
            );
            let d = arch.dim;
            let x_train = sample_inputs(n_train, d, measure, data_seed);
            let x_test = if cfg.data.n_test > 0 {
                sample_inputs(cfg.data.n_test, d, measure, test_seed)
            } else {
                DMatrix::zeros(0, d)
            };
            let w_star = make_quadratic_teacher(d, teacher_seed);
            let g_train = eval_quadratic_teacher(&w_star, arch.sigma_w2, &x_train)?;
            let g_test = if cfg.data.n_test > 0 {
                eval_quadratic_teacher(&w_star, arch.sigma_w2, &x_test)?
            } else {
                DVector::zeros(0)
            };
            Ok(Instance { cnn: None, quad: Some(arch), x_train, g_train, x_test, g_test, w_star: Some(w_star) })
        }
        other => Err(anyhow!("unknown model kind {other}")),
    }
}

fn saddle_config(s: &SolverBlock) -> SaddleConfig {
    let annealing = match s.anneal_from {
        Some(from) if from > s.sigma2 => geometric_schedule(from, s.sigma2, s.anneal_stages),
        _ => vec![s.sigma2],
    };
    SaddleConfig {
        method: match s.method.as_str() {
            "newton_krylov" => SaddleMethod::NewtonKrylov,
            _ => SaddleMethod::DampedFixedPoint,
        },
        damping: s.damping,
        tol: s.tol,
        max_iter: s.max_iter,
        annealing,
        seed_solution: None,
    }
}

fn shift_mode(s: &SolverBlock) -> CnnShiftMode {
    match s.shift_mode.as_str() {
        "series4" => CnnShiftMode::Series { order: 4 },
        "series6" => CnnShiftMode::Series { order: 6 },
        _ => CnnShiftMode::Resummed,
    }
}

fn saddle_model(inst: &Instance, s: &SolverBlock) -> SaddleModel {
    match (&inst.cnn, &inst.quad) {
        (Some(arch), _) => SaddleModel::Cnn { arch: *arch, mode: shift_mode(s) },
        (_, Some(arch)) => SaddleModel::Quad { arch: *arch },
        _ => unreachable!(),
    }
}

fn kernel_spec(inst: &Instance) -> KernelSpec {
    match (&inst.cnn, &inst.quad) {
        (Some(a), _) => KernelSpec::CnnLinear(*a),
        (_, Some(a)) => KernelSpec::Quad(*a),
        _ => unreachable!(),
    }
}

fn langevin_config(l: &LangevinBlock, model: &LangevinModel) -> LangevinConfig {
    let sigma2 = l.sigma2;
    let gammas = match model {
        LangevinModel::Cnn(a) => derive_weight_decay_cnn(a, sigma2),
        LangevinModel::Quad(a) => derive_weight_decay_quad(a, sigma2),
    };
    let eta = l.eta.unwrap_or_else(|| auto_eta(model, &gammas));
    LangevinConfig {
        eta,
        sigma: sigma2.sqrt(),
        gammas,
        steps: l.steps,
        burn_in: l.burn_in.unwrap_or(l.steps / 2),
        thin: l.thin,
        n_seeds: l.n_seeds,
        store_snapshots: false,
        cold_start: false,
        record_trace: false,
    }
}

/// Stability-margin learning rate: a small fraction of the inverse of the
/// stiffest curvature scale (the readout decay dominates at large C).
pub fn auto_eta(model: &LangevinModel, gammas: &WeightDecay) -> f64 {
    match (model, gammas) {
        (LangevinModel::Cnn(_), WeightDecay::Cnn { gamma_readout, gamma_filters }) => {
            0.02 / (gamma_readout.max(*gamma_filters) + 100.0)
        }
        (LangevinModel::Quad(_), WeightDecay::Quad { gamma }) => 0.02 / (gamma + 100.0),
        _ => 1e-6,
    }
}

pub fn run(cfg: &ExperimentConfig, raw: &str) -> anyhow::Result<(RunOutcome, PathBuf)> {
    let mut ctx = RunContext::new(cfg, raw)?;
    let outcome = match cfg.experiment {
        ExperimentKind::GpBaseline => run_gp_baseline(cfg, &mut ctx)?,
        ExperimentKind::SaddleSolve => run_saddle_solve(cfg, &mut ctx)?,
        ExperimentKind::EkSweep => run_ek_sweep(cfg, &mut ctx)?,
        ExperimentKind::LangevinSweep => run_langevin_sweep(cfg, &mut ctx)?,
        ExperimentKind::SpectrumSweep => run_spectrum_sweep(cfg, &mut ctx)?,
        ExperimentKind::PhaseRetrieval => run_phase_retrieval(cfg, &mut ctx)?,
        ExperimentKind::Diagnostics => run_diagnostics(cfg, &mut ctx)?,
    };
    let dir = ctx.finish(cfg, outcome == RunOutcome::Ok, None)?;
    Ok((outcome, dir))
}

fn fmt(v: f64) -> String {
    format!("{v:.17e}")
}

fn run_gp_baseline(cfg: &ExperimentConfig, ctx: &mut RunContext) -> anyhow::Result<RunOutcome> {
    let s = cfg.solver.as_ref().unwrap();
    let mut rows_alpha = Vec::new();
    for replica in 0..cfg.data.seeds {
        let inst = build_instance(cfg, replica)?;
        let spec = kernel_spec(&inst);
        let k = gram(&spec, &inst.x_train);
        let fit = GpFit::fit(factorize(k, s.sigma2)?, inst.g_train.clone())?;
        let train_pred = fit.mean_train();
        let alpha_tr = empirical_alpha(&train_pred, &inst.g_train)?;
        let (alpha_te, mse_te) = if inst.x_test.nrows() > 0 {
            let cross = cross_gram(&spec, &inst.x_train, &inst.x_test);
            let pred = fit.mean_test(&cross, None)?;
            let mse = (pred.clone() - &inst.g_test).norm_squared() / inst.g_test.len() as f64;
            (empirical_alpha(&pred, &inst.g_test)?, mse)
        } else {
            (f64::NAN, f64::NAN)
        };
        if replica == 0 {
            selfcons_gp::io::write_predictions(
                &ctx.dir.join("gp_train_predictions.csv"),
                &inst.g_train,
                &train_pred,
                Some(&ctx.header()[2..]),
            )?;
            ctx.tables.push("gp_train_predictions.csv".into());
        }
        rows_alpha.push(format!(
            "{replica},{},{},{}",
            fmt(alpha_tr),
            fmt(alpha_te),
            fmt(mse_te)
        ));
    }
    ctx.write_table("gp_alpha.csv", "replica,alpha_train,alpha_test,test_mse", &rows_alpha)?;
    Ok(RunOutcome::Ok)
}

fn run_saddle_solve(cfg: &ExperimentConfig, ctx: &mut RunContext) -> anyhow::Result<RunOutcome> {
    let s = cfg.solver.as_ref().unwrap();
    let mut all_converged = true;
    let mut rows = Vec::new();
    let mut report = serde_json::Map::new();
    for replica in 0..cfg.data.seeds {
        let inst = build_instance(cfg, replica)?;
        let model = saddle_model(&inst, s);
        let config = saddle_config(s);
        let t0 = Instant::now();
        let sol = solve_saddle(&model, &inst.x_train, &inst.g_train, s.sigma2, &config)?;
        all_converged &= sol.converged;
        let test_pred = if inst.x_test.nrows() > 0 {
            predict_test(&sol, &model, &inst.x_train, &inst.g_train, &inst.x_test)?
        } else {
            DVector::zeros(0)
        };
        let alpha_tr = 1.0 - (&inst.g_train - &sol.discrepancies.values).dot(&inst.g_train)
            / inst.g_train.norm_squared();
        let (alpha_te, mse_te) = if test_pred.len() > 0 {
            (
                empirical_alpha(&test_pred, &inst.g_test)?,
                (test_pred.clone() - &inst.g_test).norm_squared() / inst.g_test.len() as f64,
            )
        } else {
            (f64::NAN, f64::NAN)
        };
        rows.push(format!(
            "{replica},{},{},{},{},{}",
            fmt(sol.residual),
            sol.iterations,
            fmt(alpha_tr),
            fmt(alpha_te),
            fmt(mse_te)
        ));
        if replica == 0 {
            let tr_pred = &inst.g_train - &sol.discrepancies.values;
            selfcons_gp::io::write_predictions(
                &ctx.dir.join("saddle_train_predictions.csv"),
                &inst.g_train,
                &tr_pred,
                Some(&ctx.header()[2..]),
            )?;
            ctx.tables.push("saddle_train_predictions.csv".into());
            report.insert("config".into(), serde_json::to_value(&config)?);
            report.insert("anneal_trace".into(), serde_json::to_value(&sol.anneal_trace)?);
            report.insert("residual".into(), sol.residual.into());
            report.insert("wall_time_s".into(), t0.elapsed().as_secs_f64().into());
            // saddle-point validity criteria ride along with every solve
            let spec = kernel_spec(&inst);
            let kernel = gram(&spec, &inst.x_train);
            let v = selfcons_gp::cumulants::DualVector(sol.discrepancies.dual.clone());
            let sm = match (&inst.cnn, &inst.quad) {
                (Some(a), _) => selfcons_gp::cumulants::ShiftModel::Cnn { arch: a, mode: shift_mode(s) },
                (_, Some(a)) => selfcons_gp::cumulants::ShiftModel::Quad(a),
                _ => unreachable!(),
            };
            if let Ok(correction) =
                sp_correction_leading(&sm, &inst.x_train, &v, &kernel, s.sigma2, 1e-5)
            {
                let validity = sp_validity_report(
                    &sol.discrepancies,
                    &correction,
                    &inst.g_train,
                    inst.x_train.nrows(),
                    SpThresholds::default(),
                );
                report.insert("sp_validity".into(), serde_json::to_value(&validity)?);
            }
        }
    }
    fs::write(ctx.dir.join("solver_report.json"), serde_json::to_string_pretty(&report)?)?;
    ctx.write_table(
        "saddle_summary.csv",
        "replica,residual,iterations,alpha_train,alpha_test,test_mse",
        &rows,
    )?;
    Ok(if all_converged { RunOutcome::Ok } else { RunOutcome::NonConvergence })
}

fn run_ek_sweep(cfg: &ExperimentConfig, ctx: &mut RunContext) -> anyhow::Result<RunOutcome> {
    let s = cfg.solver.as_ref().unwrap();
    let arch = match cfg.model.kind.as_str() {
        "cnn_linear" => (),
        _ => return Err(anyhow!("ek_sweep runs on the cnn_linear model")),
    };
    let _ = arch;
    let pairs: Vec<(usize, usize)> = if cfg.sweep.ns_pairs.is_empty() {
        vec![(cfg.data.n_train, cfg.model.window.unwrap())]
    } else {
        cfg.sweep.ns_pairs.clone()
    };
    let channels = if cfg.sweep.channels.is_empty() {
        vec![cfg.model.channels.unwrap()]
    } else {
        cfg.sweep.channels.clone()
    };
    let mut rows = Vec::new();
    for &(n, s_len) in &pairs {
        // N = S convention for the sweep; lambda = 1/(N S) at unit priors
        let lambda = cfg.model.sigma_a2.unwrap() * cfg.model.sigma_w2.unwrap()
            / (s_len as f64 * s_len as f64);
        let q = analytic_q_train(lambda, n, s.sigma2);
        // empirical q_test from a plain GP run on this geometry
        let mut cfg_inst = cfg.clone();
        cfg_inst.model.n_windows = Some(s_len);
        cfg_inst.model.window = Some(s_len);
        cfg_inst.data.n_train = n;
        let inst = build_instance(&cfg_inst, 0)?;
        let spec = kernel_spec(&inst);
        let k = gram(&spec, &inst.x_train);
        let fit = GpFit::fit(factorize(k, s.sigma2)?, inst.g_train.clone())?;
        let q_test = if inst.x_test.nrows() > 0 {
            let cross = cross_gram(&spec, &inst.x_train, &inst.x_test);
            let pred = fit.mean_test(&cross, None)?;
            estimate_q_empirical(&pred, &inst.g_test, lambda, n, s.sigma2)?
        } else {
            q.q_train
        };
        for &c in &channels {
            let sol = ek_alpha_solve(lambda, n, s.sigma2, c as f64, q.q_train, q_test)?;
            rows.push(format!(
                "{c},{n},{s_len},{s_len},{},{},{},{},{},true",
                fmt(s.sigma2),
                fmt(sol.alpha_train),
                fmt(sol.alpha_test),
                fmt(sol.q_train),
                fmt(sol.q_test)
            ));
        }
    }
    ctx.write_table(
        "ek_sweep.csv",
        "C,n,S,N,sigma2,alpha_pred_train,alpha_pred_test,q_train,q_test,converged",
        &rows,
    )?;
    Ok(RunOutcome::Ok)
}

fn run_langevin_sweep(cfg: &ExperimentConfig, ctx: &mut RunContext) -> anyhow::Result<RunOutcome> {
    let l = cfg.langevin.as_ref().unwrap();
    let channels = if cfg.sweep.channels.is_empty() {
        vec![cfg.model.channels.context("cnn channels")?]
    } else {
        cfg.sweep.channels.clone()
    };
    let mut rows = Vec::new();
    let mut trace_rows = Vec::new();
    let mut mse_points = Vec::new();
    let mut diverged = false;
    for &c in &channels {
        let inst = build_instance_with(cfg, 0, Some(c), None)?;
        let arch = inst.cnn.context("langevin_sweep runs on the cnn_linear model")?;
        let model = LangevinModel::Cnn(arch);
        let lcfg = langevin_config(l, &model);
        let test = if inst.x_test.nrows() > 0 {
            Some((&inst.x_test, &inst.g_test))
        } else {
            None
        };
        let mut lcfg = lcfg;
        lcfg.record_trace = true;
        let stats = match train_ensemble_simple(&model, &inst.x_train, &inst.g_train, test, &lcfg, cfg.master_seed) {
            Ok(s) => s,
            Err(selfcons_gp::Error::LangevinDiverged { .. }) => {
                diverged = true;
                break;
            }
            Err(e) => return Err(e.into()),
        };
        // GP reference on the same data
        let spec = kernel_spec(&inst);
        let k = gram(&spec, &inst.x_train);
        let fit = GpFit::fit(factorize(k, l.sigma2)?, inst.g_train.clone())?;
        let gp_train = fit.mean_train();
        let mse_raw = (stats.mean_train_output.clone() - &gp_train).norm_squared()
            / inst.x_train.nrows() as f64;
        // debias by the seed-to-seed variance of the mean
        let b = stats.seed_train_output.nrows() as f64;
        let mut var_mean = 0.0;
        for j in 0..stats.seed_train_output.ncols() {
            let col = stats.seed_train_output.column(j);
            let m = col.sum() / b;
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (b - 1.0);
            var_mean += var / b;
        }
        var_mean /= stats.seed_train_output.ncols() as f64;
        let mse_debiased = mse_raw - var_mean;
        mse_points.push((c as f64, mse_debiased.max(f64::MIN_POSITIVE)));
        for (seed, step, mse, ar) in stats.trajectory.iter().step_by(25) {
            trace_rows.push(format!("{c},{seed},{step},{},{}", fmt(*mse), fmt(*ar)));
        }
        rows.push(format!(
            "{c},{},{},{},{},{},{},{},{}",
            fmt(stats.alpha_train),
            fmt(stats.alpha_train_stderr),
            fmt(stats.alpha_test.unwrap_or(f64::NAN)),
            fmt(stats.alpha_test_stderr.unwrap_or(f64::NAN)),
            fmt(mse_raw),
            fmt(mse_debiased),
            fmt(lcfg.eta),
            fmt(stats.stationarity_z)
        ));
    }
    ctx.write_table(
        "langevin_sweep.csv",
        "C,alpha_train,alpha_train_stderr,alpha_test,alpha_test_stderr,mse_vs_gp,mse_vs_gp_debiased,eta,stationarity_z",
        &rows,
    )?;
    ctx.write_table("langevin_trace.csv", "C,seed,step,train_mse,alpha_running", &trace_rows)?;
    if mse_points.len() >= 3 {
        let slope = selfcons_gp::diagnostics::gp_convergence_slope(&mse_points)?;
        ctx.write_table("gp_convergence.csv", "slope", &[fmt(slope)])?;
    }
    Ok(if diverged { RunOutcome::Divergence } else { RunOutcome::Ok })
}

fn run_spectrum_sweep(cfg: &ExperimentConfig, ctx: &mut RunContext) -> anyhow::Result<RunOutcome> {
    let l = cfg.langevin.as_ref().unwrap();
    let channels = if cfg.sweep.channels.is_empty() {
        vec![cfg.model.channels.context("cnn channels")?]
    } else {
        cfg.sweep.channels.clone()
    };
    let mut rows = Vec::new();
    let mut eig_rows = Vec::new();
    let mut diverged = false;
    for &c in &channels {
        let inst = build_instance_with(cfg, 0, Some(c), None)?;
        let arch = inst.cnn.context("spectrum_sweep runs on the cnn_linear model")?;
        let w_star = inst.w_star.clone().unwrap();
        let model = LangevinModel::Cnn(arch);
        let lcfg = langevin_config(l, &model);
        let result = train_ensemble(
            &model,
            &inst.x_train,
            &inst.g_train,
            None,
            &lcfg,
            cfg.master_seed,
            |_| SpectralAccumulator::new(w_star.clone()),
        );
        let (_, sinks) = match result {
            Ok(v) => v,
            Err(selfcons_gp::Error::LangevinDiverged { .. }) => {
                diverged = true;
                break;
            }
            Err(e) => return Err(e.into()),
        };
        let mut acc = SpectralAccumulator::new(w_star.clone());
        for s in &sinks {
            acc.merge(s);
        }
        let report = acc.report(arch.window, arch.n_windows, inst.x_train.nrows(), l.sigma2, c);
        rows.push(format!(
            "{c},{},{},{},{},{}",
            fmt(report.q_mean),
            fmt(report.q_stderr),
            fmt(report.mp_edges.1),
            fmt(report.c_crit),
            report.in_bulk
        ));
        // thinned pooled eigenvalues
        let stride = (report.eigenvalues.len() / 2000).max(1);
        for (i, ev) in report.eigenvalues.iter().step_by(stride).enumerate() {
            eig_rows.push(format!("{c},{i},{}", fmt(*ev)));
        }
    }
    ctx.write_table("q_sweep.csv", "C,Q,Q_stderr,lambda_plus,c_crit,in_bulk", &rows)?;
    ctx.write_table("eigenvalues.csv", "C,snapshot_id,eigenvalue", &eig_rows)?;
    Ok(if diverged { RunOutcome::Divergence } else { RunOutcome::Ok })
}

fn run_phase_retrieval(cfg: &ExperimentConfig, ctx: &mut RunContext) -> anyhow::Result<RunOutcome> {
    let s = cfg.solver.as_ref().unwrap();
    let d = cfg.model.d.context("quad model block required")?;
    let ratios = if cfg.sweep.n_over_d.is_empty() {
        vec![1, 2, 3]
    } else {
        cfg.sweep.n_over_d.clone()
    };
    let mut rows = Vec::new();
    let mut medians = Vec::new();
    let mut all_converged = true;
    for &r in &ratios {
        let n = r * d;
        let mut mses = Vec::new();
        for replica in 0..cfg.data.seeds {
            let inst = build_instance_with(cfg, replica, None, Some(n))?;
            let model = saddle_model(&inst, s);
            let config = saddle_config(s);
            let sol = solve_saddle(&model, &inst.x_train, &inst.g_train, s.sigma2, &config)?;
            all_converged &= sol.converged;
            let pred = predict_test(&sol, &model, &inst.x_train, &inst.g_train, &inst.x_test)?;
            let mse = (pred - &inst.g_test).norm_squared() / inst.g_test.len() as f64;
            mses.push(mse);
            rows.push(format!("{r},{replica},{},{},{}", fmt(mse), fmt(sol.residual), sol.converged));
        }
        let mut sorted = mses.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = if sorted.len() % 2 == 1 {
            sorted[sorted.len() / 2]
        } else {
            0.5 * (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2])
        };
        medians.push(format!("{r},{}", fmt(median)));
    }
    ctx.write_table("phase_retrieval.csv", "n_over_d,replica,test_mse,residual,converged", &rows)?;
    ctx.write_table("phase_retrieval_median.csv", "n_over_d,median_test_mse", &medians)?;
    Ok(if all_converged { RunOutcome::Ok } else { RunOutcome::NonConvergence })
}

fn run_diagnostics(cfg: &ExperimentConfig, ctx: &mut RunContext) -> anyhow::Result<RunOutcome> {
    let s = cfg.solver.as_ref().unwrap();
    let inst = build_instance(cfg, 0)?;
    let model = saddle_model(&inst, s);
    let config = saddle_config(s);
    let sol = solve_saddle(&model, &inst.x_train, &inst.g_train, s.sigma2, &config)?;
    let spec = kernel_spec(&inst);
    let kernel = gram(&spec, &inst.x_train);
    let v = selfcons_gp::cumulants::DualVector(sol.discrepancies.dual.clone());
    let shift_model = match (&inst.cnn, &inst.quad) {
        (Some(a), _) => selfcons_gp::cumulants::ShiftModel::Cnn { arch: a, mode: shift_mode(s) },
        (_, Some(a)) => selfcons_gp::cumulants::ShiftModel::Quad(a),
        _ => unreachable!(),
    };
    let correction = sp_correction_leading(&shift_model, &inst.x_train, &v, &kernel, s.sigma2, 1e-5)?;
    let report = sp_validity_report(
        &sol.discrepancies,
        &correction,
        &inst.g_train,
        inst.x_train.nrows(),
        SpThresholds::default(),
    );
    fs::write(ctx.dir.join("sp_validity.json"), serde_json::to_string_pretty(&report)?)?;
    ctx.write_table(
        "diagnostics.csv",
        "criterion_simple,criterion_full_rel,verdict,residual,converged",
        &[format!(
            "{},{},{:?},{},{}",
            fmt(report.criterion_simple),
            fmt(report.criterion_full_rel),
            report.verdict,
            fmt(sol.residual),
            sol.converged
        )],
    )?;
    Ok(if sol.converged { RunOutcome::Ok } else { RunOutcome::NonConvergence })
}

/// Human-readable summary of a results directory.
pub fn report(dir: &Path) -> anyhow::Result<String> {
    let manifest_path = dir.join("manifest.json");
    if !manifest_path.exists() {
        return Err(anyhow!("no manifest in {}", dir.display()));
    }
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(&manifest_path)?)?;
    let mut out = String::new();
    out.push_str(&format!(
        "experiment: {}\nconfig_hash: {}\ncode_version: {}\nwall_time_s: {}\nconverged: {}\n",
        manifest["experiment"], manifest["config_hash"], manifest["code_version"],
        manifest["wall_time_s"], manifest["converged"]
    ));
    if let Some(tables) = manifest["tables"].as_array() {
        out.push_str("tables:\n");
        for t in tables {
            let name = t.as_str().unwrap_or("?");
            let path = dir.join(name);
            let rows = fs::read_to_string(&path)
                .map(|s| s.lines().filter(|l| !l.starts_with('#')).count().saturating_sub(1))
                .unwrap_or(0);
            out.push_str(&format!("  {name}: {rows} rows\n"));
        }
    }
    Ok(out)
}
