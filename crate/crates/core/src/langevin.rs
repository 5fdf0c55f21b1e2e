//! Discrete noisy-gradient trainer
//! `theta_{t+1} = theta_t - (gamma theta_t + grad L) eta + 2 sigma sqrt(eta) xi_t`
//! for both student models, producing equilibrium ensembles, averaged
//! predictors, empirical alpha, and hidden-weight snapshots.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datagen::{CnnArch, QuadArch};
use crate::error::{Error, Result};
use crate::rng::StreamKey;

/// Per-parameter-group weight decay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum WeightDecay {
    Cnn { gamma_readout: f64, gamma_filters: f64 },
    Quad { gamma: f64 },
}

/// Weight decays that make the Gibbs prior match the layer priors:
/// CNN `gamma_a = 2 sigma^2 C N / sigma_a^2`, `gamma_w = 2 sigma^2 S / sigma_w^2`;
/// quad `gamma = 2 M sigma^2 / sigma_w^2`.
pub fn derive_weight_decay_cnn(arch: &CnnArch, sigma2: f64) -> WeightDecay {
    WeightDecay::Cnn {
        gamma_readout: 2.0 * sigma2 * (arch.channels * arch.n_windows) as f64 / arch.sigma_a2,
        gamma_filters: 2.0 * sigma2 * arch.window as f64 / arch.sigma_w2,
    }
}

pub fn derive_weight_decay_quad(arch: &QuadArch, sigma2: f64) -> WeightDecay {
    WeightDecay::Quad { gamma: 2.0 * arch.width as f64 * sigma2 / arch.sigma_w2 }
}

/// Configuration of one ensemble run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LangevinConfig {
    /// Learning rate.
    pub eta: f64,
    /// Noise magnitude sigma; the injected noise per step is
    /// `2 sigma sqrt(eta) xi`. The matching likelihood variance is sigma^2.
    pub sigma: f64,
    pub gammas: WeightDecay,
    pub steps: usize,
    /// Steps discarded before averaging.
    pub burn_in: usize,
    /// Snapshot stride (also the test-output evaluation stride).
    pub thin: usize,
    pub n_seeds: usize,
    /// Keep hidden-weight snapshots in memory.
    pub store_snapshots: bool,
    /// Start from zero parameters instead of a prior draw.
    pub cold_start: bool,
    /// Record (step, train_mse, alpha_running) rows at the thin stride.
    pub record_trace: bool,
}

impl LangevinConfig {
    pub fn new(eta: f64, sigma: f64, gammas: WeightDecay, steps: usize, n_seeds: usize) -> Self {
        assert!(eta > 0.0, "eta must be positive");
        let burn_in = steps / 2;
        Self {
            eta,
            sigma,
            gammas,
            steps,
            burn_in,
            thin: 10,
            n_seeds,
            store_snapshots: false,
            cold_start: false,
            record_trace: false,
        }
    }
}

/// Ensemble and time averaged outputs of a run.
#[derive(Debug, Clone)]
pub struct EnsembleStats {
    /// Per-seed time-averaged train outputs (n_seeds rows).
    pub seed_train_output: DMatrix<f64>,
    /// Per-seed time-averaged test outputs (empty when no test set).
    pub seed_test_output: DMatrix<f64>,
    /// Seed-and-time-averaged outputs.
    pub mean_train_output: DVector<f64>,
    pub mean_test_output: DVector<f64>,
    pub alpha_train: f64,
    pub alpha_train_stderr: f64,
    pub alpha_test: Option<f64>,
    pub alpha_test_stderr: Option<f64>,
    /// `(seed, step, W)` snapshots when requested.
    pub weight_snapshots: Vec<(usize, usize, DMatrix<f64>)>,
    /// z-score of first-half vs second-half per-seed alpha means; large
    /// values indicate the averaging window is not stationary.
    pub stationarity_z: f64,
    pub samples_per_seed: usize,
    /// (seed, step, train_mse, alpha_running) rows at the thin stride when
    /// tracing is enabled.
    pub trajectory: Vec<(usize, usize, f64, f64)>,
}

/// Model to train.
#[derive(Debug, Clone)]
pub enum LangevinModel {
    Cnn(CnnArch),
    Quad(QuadArch),
}

/// Callback-style accumulator over post-burn-in hidden-weight snapshots.
pub trait SnapshotSink: Send {
    fn accept(&mut self, seed: usize, step: usize, w: &DMatrix<f64>);
}

/// Sink that drops everything (statistics-only runs).
pub struct NoSink;
impl SnapshotSink for NoSink {
    fn accept(&mut self, _: usize, _: usize, _: &DMatrix<f64>) {}
}

struct SeedResult {
    train_mean: DVector<f64>,
    test_mean: DVector<f64>,
    first_half_alpha: f64,
    second_half_alpha: f64,
    samples: usize,
    trace: Vec<(usize, usize, f64, f64)>,
}

/// Train an ensemble of independent seeds and average post burn-in.
///
/// Each seed owns a derived RNG stream; seeds run on parallel workers and
/// are reduced in seed order, so results do not depend on scheduling.
pub fn train_ensemble<S: SnapshotSink, F: Fn(usize) -> S + Sync>(
    model: &LangevinModel,
    x_train: &DMatrix<f64>,
    g_train: &DVector<f64>,
    x_test: Option<(&DMatrix<f64>, &DVector<f64>)>,
    config: &LangevinConfig,
    master_seed: u64,
    make_sink: F,
) -> Result<(EnsembleStats, Vec<S>)> {
    assert!(config.burn_in < config.steps, "burn_in must be below steps");
    let n = x_train.nrows();
    let results: Vec<Result<(SeedResult, S)>> = (0..config.n_seeds)
        .into_par_iter()
        .map(|seed| {
            let mut sink = make_sink(seed);
            let r = match model {
                LangevinModel::Cnn(arch) => run_cnn_seed(arch, x_train, g_train, x_test, config, master_seed, seed, &mut sink),
                LangevinModel::Quad(arch) => run_quad_seed(arch, x_train, g_train, x_test, config, master_seed, seed, &mut sink),
            };
            r.map(|sr| (sr, sink))
        })
        .collect();

    let mut seed_results: Vec<SeedResult> = Vec::with_capacity(config.n_seeds);
    let mut sinks = Vec::with_capacity(config.n_seeds);
    for r in results {
        let (sr, sink) = r?;
        seed_results.push(sr);
        sinks.push(sink);
    }

    let n_test = x_test.map(|(xt, _)| xt.nrows()).unwrap_or(0);
    let b = config.n_seeds;
    let mut seed_train = DMatrix::zeros(b, n);
    let mut seed_test = DMatrix::zeros(b, n_test);
    let mut half_diffs = Vec::with_capacity(b);
    let mut samples = 0;
    let mut trajectory = Vec::new();
    for (s, sr) in seed_results.iter_mut().enumerate() {
        seed_train.row_mut(s).copy_from(&sr.train_mean.transpose());
        if n_test > 0 {
            seed_test.row_mut(s).copy_from(&sr.test_mean.transpose());
        }
        half_diffs.push(sr.first_half_alpha - sr.second_half_alpha);
        samples = sr.samples;
        trajectory.append(&mut sr.trace);
    }
    let mean_train = seed_mean(&seed_train);
    let mean_test = seed_mean(&seed_test);
    let (alpha_train, alpha_train_stderr) = alpha_over_seeds_lenient(&seed_train, g_train);
    let (alpha_test, alpha_test_stderr) = match x_test {
        Some((_, gt)) if n_test > 0 => {
            let (a, se) = alpha_over_seeds_lenient(&seed_test, gt);
            (Some(a), Some(se))
        }
        _ => (None, None),
    };
    let z = {
        let m = half_diffs.iter().sum::<f64>() / b as f64;
        let var = half_diffs.iter().map(|d| (d - m) * (d - m)).sum::<f64>() / (b.max(2) - 1) as f64;
        if var > 0.0 { m / (var / b as f64).sqrt() } else { 0.0 }
    };

    Ok((
        EnsembleStats {
            seed_train_output: seed_train,
            seed_test_output: seed_test,
            mean_train_output: mean_train,
            mean_test_output: mean_test,
            alpha_train,
            alpha_train_stderr,
            alpha_test,
            alpha_test_stderr,
            weight_snapshots: Vec::new(),
            stationarity_z: z,
            samples_per_seed: samples,
            trajectory,
        },
        sinks,
    ))
}

fn seed_mean(m: &DMatrix<f64>) -> DVector<f64> {
    if m.ncols() == 0 || m.nrows() == 0 {
        return DVector::zeros(m.ncols());
    }
    DVector::from_fn(m.ncols(), |j, _| m.column(j).sum() / m.nrows() as f64)
}

/// Ensemble alpha with a seed-block standard error; NaN on zero targets
/// (free-theory runs have no alpha).
fn alpha_over_seeds_lenient(seed_outputs: &DMatrix<f64>, targets: &DVector<f64>) -> (f64, f64) {
    match alpha_over_seeds(seed_outputs, targets) {
        Ok(v) => v,
        Err(_) => (f64::NAN, f64::NAN),
    }
}

/// Ensemble alpha with a seed-block standard error.
fn alpha_over_seeds(seed_outputs: &DMatrix<f64>, targets: &DVector<f64>) -> Result<(f64, f64)> {
    let gg = targets.norm_squared();
    if gg == 0.0 {
        return Err(Error::ZeroTarget);
    }
    let b = seed_outputs.nrows();
    let alphas: Vec<f64> = (0..b)
        .map(|s| 1.0 - seed_outputs.row(s).transpose().dot(targets) / gg)
        .collect();
    let mean = alphas.iter().sum::<f64>() / b as f64;
    let se = if b > 1 {
        let var = alphas.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / (b - 1) as f64;
        (var / b as f64).sqrt()
    } else {
        0.0
    };
    Ok((mean, se))
}

/// Alpha with stderr straight from per-seed averaged outputs.
pub fn empirical_alpha_trace(stats: &EnsembleStats, targets: &DVector<f64>) -> Result<(f64, f64)> {
    alpha_over_seeds(&stats.seed_train_output, targets)
}

/// Hidden conv-filter snapshots of a run (CNN only).
pub fn snapshot_hidden_weights(stats: &EnsembleStats) -> Vec<&DMatrix<f64>> {
    stats.weight_snapshots.iter().map(|(_, _, w)| w).collect()
}

#[allow(clippy::too_many_arguments)]
fn run_cnn_seed<S: SnapshotSink>(
    arch: &CnnArch,
    x: &DMatrix<f64>,
    g: &DVector<f64>,
    test: Option<(&DMatrix<f64>, &DVector<f64>)>,
    config: &LangevinConfig,
    master_seed: u64,
    seed: usize,
    sink: &mut S,
) -> Result<SeedResult> {
    let (n, n_w, s_len, c) = (x.nrows(), arch.n_windows, arch.window, arch.channels);
    let d = arch.dim();
    let (gamma_a, gamma_w) = match config.gammas {
        WeightDecay::Cnn { gamma_readout, gamma_filters } => (gamma_readout, gamma_filters),
        WeightDecay::Quad { .. } => panic!("quad weight decay passed to a CNN run"),
    };
    let mut rng = StreamKey::new(master_seed, "langevin-seed", seed as u64).rng();

    // flat, channel-contiguous layouts; the Gibbs prior 2 sigma^2/gamma
    // degenerates at sigma = 0 or gamma = 0, fall back to the layer priors
    let var_a = if config.sigma > 0.0 && gamma_a > 0.0 {
        2.0 * config.sigma * config.sigma / gamma_a
    } else {
        arch.sigma_a2 / (c * n_w) as f64
    };
    let var_w = if config.sigma > 0.0 && gamma_w > 0.0 {
        2.0 * config.sigma * config.sigma / gamma_w
    } else {
        arch.sigma_w2 / s_len as f64
    };
    let mut a = vec![0.0f64; n_w * c];
    let mut w = vec![0.0f64; s_len * c];
    if !config.cold_start {
        for v in a.iter_mut() {
            *v = var_a.sqrt() * rng.sample::<f64, _>(StandardNormal);
        }
        for v in w.iter_mut() {
            *v = var_w.sqrt() * rng.sample::<f64, _>(StandardNormal);
        }
    }

    // xw[(mu*n_w + i)*s_len + s]
    let mut xw = vec![0.0f64; n * d];
    for mu in 0..n {
        for j in 0..d {
            xw[mu * d + j] = x[(mu, j)];
        }
    }
    let xt_flat: Option<(Vec<f64>, usize)> = test.map(|(xt, _)| {
        let m = xt.nrows();
        let mut f = vec![0.0f64; m * d];
        for mu in 0..m {
            for j in 0..d {
                f[mu * d + j] = xt[(mu, j)];
            }
        }
        (f, m)
    });

    let eta = config.eta;
    let noise = 2.0 * config.sigma * eta.sqrt();
    let prior_norm2 = (n_w * c) as f64 * var_a + (s_len * c) as f64 * var_w;
    let diverged_at = 1e12 * prior_norm2; // (1e6 x prior scale)^2

    let mut u = vec![0.0f64; n * n_w * c];
    let mut f_out = vec![0.0f64; n];
    let mut ga = vec![0.0f64; n_w * c];
    let mut gw = vec![0.0f64; s_len * c];
    let mut t_is = vec![0.0f64; n_w * s_len];

    let mut train_sum = vec![0.0f64; n];
    let mut train_cnt = 0usize;
    let n_test = xt_flat.as_ref().map(|(_, m)| *m).unwrap_or(0);
    let mut test_sum = vec![0.0f64; n_test];
    let mut test_cnt = 0usize;
    let gg = g.norm_squared();
    let mut alpha_halves = [0.0f64; 2];
    let mut alpha_counts = [0usize; 2];
    let half_mark = config.burn_in + (config.steps - config.burn_in) / 2;
    let mut trace = Vec::new();
    let mut alpha_run_num = 0.0f64;

    for step in 0..config.steps {
        // u[mu,i,:] = sum_s xw[mu,i,s] * w[s,:]
        for row in 0..n * n_w {
            let urow = &mut u[row * c..(row + 1) * c];
            urow.fill(0.0);
            let base = row * s_len;
            for s in 0..s_len {
                let xv = xw[base + s];
                let wrow = &w[s * c..(s + 1) * c];
                for cc in 0..c {
                    urow[cc] += xv * wrow[cc];
                }
            }
        }
        // f[mu] = sum_{i,c} a[i,c] u[mu,i,c]; residual r = f - g
        for mu in 0..n {
            let mut acc = 0.0;
            for i in 0..n_w {
                let urow = &u[(mu * n_w + i) * c..(mu * n_w + i + 1) * c];
                let arow = &a[i * c..(i + 1) * c];
                let mut dot = 0.0;
                for cc in 0..c {
                    dot += arow[cc] * urow[cc];
                }
                acc += dot;
            }
            f_out[mu] = acc;
        }
        // gradients
        ga.fill(0.0);
        t_is.fill(0.0);
        for mu in 0..n {
            let r = 2.0 * (f_out[mu] - g[mu]);
            for i in 0..n_w {
                let urow = &u[(mu * n_w + i) * c..(mu * n_w + i + 1) * c];
                let garow = &mut ga[i * c..(i + 1) * c];
                for cc in 0..c {
                    garow[cc] += r * urow[cc];
                }
                let base = (mu * n_w + i) * s_len;
                let trow = &mut t_is[i * s_len..(i + 1) * s_len];
                for s in 0..s_len {
                    trow[s] += r * xw[base + s];
                }
            }
        }
        gw.fill(0.0);
        for i in 0..n_w {
            let arow = &a[i * c..(i + 1) * c];
            for s in 0..s_len {
                let t = t_is[i * s_len + s];
                if t != 0.0 {
                    let gwrow = &mut gw[s * c..(s + 1) * c];
                    for cc in 0..c {
                        gwrow[cc] += t * arow[cc];
                    }
                }
            }
        }
        // parameter update
        for (idx, v) in a.iter_mut().enumerate() {
            *v += -eta * (gamma_a * *v + ga[idx]) + noise * rng.sample::<f64, _>(StandardNormal);
        }
        for (idx, v) in w.iter_mut().enumerate() {
            *v += -eta * (gamma_w * *v + gw[idx]) + noise * rng.sample::<f64, _>(StandardNormal);
        }

        if step % 1024 == 0 {
            let norm2: f64 = a.iter().map(|v| v * v).sum::<f64>() + w.iter().map(|v| v * v).sum::<f64>();
            if !norm2.is_finite() || norm2 > diverged_at {
                return Err(Error::LangevinDiverged { step, norm: norm2.sqrt(), norm_ratio: (norm2 / prior_norm2).sqrt() });
            }
        }

        if step >= config.burn_in {
            for mu in 0..n {
                train_sum[mu] += f_out[mu];
            }
            train_cnt += 1;
            if gg > 0.0 {
                let alpha_now = 1.0 - f_out.iter().zip(g.iter()).map(|(f, gv)| f * gv).sum::<f64>() / gg;
                let h = usize::from(step >= half_mark);
                alpha_halves[h] += alpha_now;
                alpha_counts[h] += 1;
            }
            if (step - config.burn_in) % config.thin == 0 {
                if config.record_trace && gg > 0.0 {
                    let mse = f_out
                        .iter()
                        .zip(g.iter())
                        .map(|(f, gv)| (f - gv) * (f - gv))
                        .sum::<f64>()
                        / n as f64;
                    alpha_run_num += 1.0
                        - f_out.iter().zip(g.iter()).map(|(f, gv)| f * gv).sum::<f64>() / gg;
                    let k = (step - config.burn_in) / config.thin + 1;
                    trace.push((seed, step, mse, alpha_run_num / k as f64));
                }
                if let Some((xt, m)) = &xt_flat {
                    // test outputs at the thinning stride
                    for mu in 0..*m {
                        let mut acc = 0.0;
                        for i in 0..n_w {
                            let arow = &a[i * c..(i + 1) * c];
                            let base = mu * d + i * s_len;
                            for cc in 0..c {
                                let mut dot = 0.0;
                                for s in 0..s_len {
                                    dot += w[s * c + cc] * xt[base + s];
                                }
                                acc += arow[cc] * dot;
                            }
                        }
                        test_sum[mu] += acc;
                    }
                    test_cnt += 1;
                }
                let wmat = DMatrix::from_fn(s_len, c, |si, ci| w[si * c + ci]);
                sink.accept(seed, step, &wmat);
            }
        }
    }

    let train_mean = DVector::from_fn(n, |mu, _| train_sum[mu] / train_cnt.max(1) as f64);
    let test_mean = DVector::from_fn(n_test, |mu, _| test_sum[mu] / test_cnt.max(1) as f64);
    Ok(SeedResult {
        train_mean,
        test_mean,
        first_half_alpha: alpha_halves[0] / alpha_counts[0].max(1) as f64,
        second_half_alpha: alpha_halves[1] / alpha_counts[1].max(1) as f64,
        samples: train_cnt,
        trace,
    })
}

#[allow(clippy::too_many_arguments)]
fn run_quad_seed<S: SnapshotSink>(
    arch: &QuadArch,
    x: &DMatrix<f64>,
    g: &DVector<f64>,
    test: Option<(&DMatrix<f64>, &DVector<f64>)>,
    config: &LangevinConfig,
    master_seed: u64,
    seed: usize,
    sink: &mut S,
) -> Result<SeedResult> {
    let (n, d, m_width) = (x.nrows(), arch.dim, arch.width);
    let gamma = match config.gammas {
        WeightDecay::Quad { gamma } => gamma,
        WeightDecay::Cnn { .. } => panic!("cnn weight decay passed to a quad run"),
    };
    let mut rng = StreamKey::new(master_seed, "langevin-seed", seed as u64).rng();
    let var_w = if config.sigma > 0.0 && gamma > 0.0 {
        2.0 * config.sigma * config.sigma / gamma
    } else {
        arch.sigma_w2 / m_width as f64
    };
    let mut w = vec![0.0f64; m_width * d]; // w[m*d + j]
    if !config.cold_start {
        for v in w.iter_mut() {
            *v = var_w.sqrt() * rng.sample::<f64, _>(StandardNormal);
        }
    }
    let mut xflat = vec![0.0f64; n * d];
    let mut x2 = vec![0.0f64; n];
    for mu in 0..n {
        for j in 0..d {
            xflat[mu * d + j] = x[(mu, j)];
        }
        x2[mu] = x.row(mu).norm_squared();
    }

    let eta = config.eta;
    let noise = 2.0 * config.sigma * eta.sqrt();
    let prior_norm2 = (m_width * d) as f64 * var_w;
    let diverged_at = 1e12 * prior_norm2;

    let mut p = vec![0.0f64; n * m_width]; // p[mu*m + m_i] = w_m . x_mu
    let mut f_out = vec![0.0f64; n];
    let mut gw = vec![0.0f64; m_width * d];
    let mut train_sum = vec![0.0f64; n];
    let mut train_cnt = 0usize;
    let n_test = test.map(|(xt, _)| xt.nrows()).unwrap_or(0);
    let mut test_sum = vec![0.0f64; n_test];
    let mut test_cnt = 0usize;
    let gg = g.norm_squared();
    let mut alpha_halves = [0.0f64; 2];
    let mut alpha_counts = [0usize; 2];
    let half_mark = config.burn_in + (config.steps - config.burn_in) / 2;

    for step in 0..config.steps {
        for mu in 0..n {
            let xrow = &xflat[mu * d..(mu + 1) * d];
            let prow = &mut p[mu * m_width..(mu + 1) * m_width];
            let mut acc = 0.0;
            for (mi, pv) in prow.iter_mut().enumerate() {
                let wrow = &w[mi * d..(mi + 1) * d];
                let mut dot = 0.0;
                for j in 0..d {
                    dot += wrow[j] * xrow[j];
                }
                *pv = dot;
                acc += dot * dot;
            }
            f_out[mu] = acc - arch.sigma_w2 * x2[mu];
        }
        gw.fill(0.0);
        for mu in 0..n {
            let r4 = 4.0 * (f_out[mu] - g[mu]);
            let xrow = &xflat[mu * d..(mu + 1) * d];
            let prow = &p[mu * m_width..(mu + 1) * m_width];
            for mi in 0..m_width {
                let coef = r4 * prow[mi];
                let gwrow = &mut gw[mi * d..(mi + 1) * d];
                for j in 0..d {
                    gwrow[j] += coef * xrow[j];
                }
            }
        }
        for (idx, v) in w.iter_mut().enumerate() {
            *v += -eta * (gamma * *v + gw[idx]) + noise * rng.sample::<f64, _>(StandardNormal);
        }

        if step % 1024 == 0 {
            let norm2: f64 = w.iter().map(|v| v * v).sum();
            if !norm2.is_finite() || norm2 > diverged_at {
                return Err(Error::LangevinDiverged { step, norm: norm2.sqrt(), norm_ratio: (norm2 / prior_norm2).sqrt() });
            }
        }

        if step >= config.burn_in {
            for mu in 0..n {
                train_sum[mu] += f_out[mu];
            }
            train_cnt += 1;
            if gg > 0.0 {
                let alpha_now = 1.0 - f_out.iter().zip(g.iter()).map(|(f, gv)| f * gv).sum::<f64>() / gg;
                let h = usize::from(step >= half_mark);
                alpha_halves[h] += alpha_now;
                alpha_counts[h] += 1;
            }
            if (step - config.burn_in) % config.thin == 0 {
                if let Some((xt, _)) = test {
                    for mu in 0..n_test {
                        let mut acc = 0.0;
                        for mi in 0..m_width {
                            let wrow = &w[mi * d..(mi + 1) * d];
                            let mut dot = 0.0;
                            for j in 0..d {
                                dot += wrow[j] * xt[(mu, j)];
                            }
                            acc += dot * dot;
                        }
                        test_sum[mu] += acc - arch.sigma_w2 * xt.row(mu).norm_squared();
                    }
                    test_cnt += 1;
                }
                let wmat = DMatrix::from_fn(d, m_width, |j, mi| w[mi * d + j]);
                sink.accept(seed, step, &wmat);
            }
        }
    }
    let train_mean = DVector::from_fn(n, |mu, _| train_sum[mu] / train_cnt.max(1) as f64);
    let test_mean = DVector::from_fn(n_test, |mu, _| test_sum[mu] / test_cnt.max(1) as f64);
    Ok(SeedResult {
        train_mean,
        test_mean,
        first_half_alpha: alpha_halves[0] / alpha_counts[0].max(1) as f64,
        second_half_alpha: alpha_halves[1] / alpha_counts[1].max(1) as f64,
        samples: train_cnt,
        trace: Vec::new(),
    })
}

/// Sink collecting every snapshot (small runs only).
#[derive(Default)]
pub struct StoreSink(pub Vec<(usize, usize, DMatrix<f64>)>);
impl SnapshotSink for StoreSink {
    fn accept(&mut self, seed: usize, step: usize, w: &DMatrix<f64>) {
        self.0.push((seed, step, w.clone()));
    }
}

impl Default for NoSink {
    fn default() -> Self {
        NoSink
    }
}

/// Convenience wrapper that collects snapshots into `EnsembleStats` when
/// `config.store_snapshots` is set.
pub fn train_ensemble_simple(
    model: &LangevinModel,
    x_train: &DMatrix<f64>,
    g_train: &DVector<f64>,
    x_test: Option<(&DMatrix<f64>, &DVector<f64>)>,
    config: &LangevinConfig,
    master_seed: u64,
) -> Result<EnsembleStats> {
    if config.store_snapshots {
        let (mut stats, sinks) =
            train_ensemble(model, x_train, g_train, x_test, config, master_seed, |_| StoreSink::default())?;
        for sink in sinks {
            stats.weight_snapshots.extend(sink.0);
        }
        Ok(stats)
    } else {
        let (stats, _) = train_ensemble(model, x_train, g_train, x_test, config, master_seed, |_| NoSink)?;
        Ok(stats)
    }
}
