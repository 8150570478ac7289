//! Bayesian estimation of the sparse clipping signal.
//!
//! The unknown magnitudes are recovered by averaging best-linear-unbiased
//! amplitude estimates over the dominant support hypotheses, weighted by
//! posterior probabilities that combine a (weighted) Bernoulli support prior
//! with a Gaussian likelihood of the measurement residual projected onto the
//! orthogonal complement of the selected columns. The dominant supports are
//! found by a breadth-limited greedy forward search; see [`search`] for the
//! incremental update scheme.

mod search;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::rc::MeasurementSystem;
use crate::util::q_func;
use search::{
    beam_search, least_squares, Columns, ComplexPairColumns, PriorTables, RealColumns,
    SearchParams,
};

const RHO_CLAMP: f64 = 1e-6;
const RANK_TOL: f64 = 1e-10;

/// Per-index Bernoulli activation probabilities.
#[derive(Debug, Clone)]
pub struct SupportPrior {
    rho_global: f64,
    rho: Vec<f64>,
}

impl SupportPrior {
    /// Weighted prior: `rho_i = rho * e^{-w(i)}`, normalized so the largest
    /// exponential factor is one, then clamped away from {0, 1}.
    pub fn weighted(rho_global: f64, weights: &[f64]) -> Self {
        let w_min = weights.iter().cloned().fold(f64::INFINITY, f64::min);
        let rho = weights
            .iter()
            .map(|&w| (rho_global * (-(w - w_min)).exp()).clamp(RHO_CLAMP, 1.0 - RHO_CLAMP))
            .collect();
        Self { rho_global: rho_global.clamp(RHO_CLAMP, 1.0 - RHO_CLAMP), rho }
    }

    /// Uniform Bernoulli prior with rate `rho_global`.
    pub fn uniform(rho_global: f64, n: usize) -> Self {
        let r = rho_global.clamp(RHO_CLAMP, 1.0 - RHO_CLAMP);
        Self { rho_global: r, rho: vec![r; n] }
    }

    pub fn rho_global(&self) -> f64 {
        self.rho_global
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    pub fn len(&self) -> usize {
        self.rho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho.is_empty()
    }
}

/// Log of the Bernoulli support prior
/// `sum_{i in S} log rho_i + sum_{k not in S} log(1 - rho_k)`.
pub fn log_prior(prior: &SupportPrior, support: &[usize]) -> f64 {
    let base: f64 = prior.rho.iter().map(|&r| (-r).ln_1p()).sum();
    let extra: f64 = support.iter().map(|&i| prior.rho[i].ln() - (-prior.rho[i]).ln_1p()).sum();
    base + extra
}

/// Engine variant under test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EngineMode {
    /// Weighted prior and phase augmentation (the full scheme).
    Wpa,
    /// Uniform prior, phase augmentation kept.
    Unweighted,
    /// Weighted prior, complex unknown without phase augmentation.
    NoPhase,
    /// Uniform prior and complex unknown (baseline matching pursuit).
    Plain,
}

impl EngineMode {
    fn weighted(self) -> bool {
        matches!(self, EngineMode::Wpa | EngineMode::NoPhase)
    }
    fn phase_augmented(self) -> bool {
        matches!(self, EngineMode::Wpa | EngineMode::Unweighted)
    }
}

/// Search and refinement controls.
#[derive(Debug, Clone)]
pub struct EngineParams {
    /// Beam width of the greedy search.
    pub d_keep: usize,
    /// Maximum support size; `None` selects `max(4, ceil(2 rho N))`.
    pub k_max: Option<usize>,
    /// Dominant supports keep every visited hypothesis within this log-score
    /// window of the best one.
    pub collect_window: f64,
    /// Hard cap on the number of dominant supports carried into the MMSE
    /// average.
    pub collect_cap: usize,
    /// Relative magnitude threshold defining the recovered support.
    pub support_tau: f64,
    /// Maximum refinement iterations.
    pub e_max: usize,
    /// Relative sparsity-rate change that stops the refinement loop.
    pub rho_tol: f64,
}

impl Default for EngineParams {
    fn default() -> Self {
        Self {
            d_keep: 5,
            k_max: None,
            collect_window: 1e6f64.ln(),
            collect_cap: 256,
            support_tau: 0.05,
            e_max: 5,
            rho_tol: 0.02,
        }
    }
}

/// Dominant support hypotheses with posterior weights and BLUE amplitudes.
#[derive(Debug, Clone)]
pub struct SparsePosterior {
    pub supports: Vec<Vec<usize>>,
    /// log p(S | ybar) up to a shared constant.
    pub log_metrics: Vec<f64>,
    /// Normalized posterior probabilities (sum to one).
    pub weights: Vec<f64>,
    /// Per-support amplitude estimates, aligned with `supports`.
    pub blue: Vec<Vec<f64>>,
}

/// Final estimate of the clipping signal.
#[derive(Debug, Clone)]
pub struct RecoveryOutput {
    /// Complex clipping estimate (phase-augmented in magnitude modes).
    pub c_hat: Vec<Complex64>,
    /// Non-negative magnitude estimate.
    pub c_mag: Vec<f64>,
    /// Indices with magnitude above `support_tau * max`.
    pub support_hat: Vec<usize>,
    /// Refined sparsity-rate estimate `|support_hat| / N` (floored at 1/N).
    pub rho_refined: f64,
    /// Refined noise variance per real measurement row.
    pub sigma_z2_refined: f64,
    pub iterations_used: usize,
}

fn sigma_eff(sys: &MeasurementSystem, sigma_row2: f64) -> f64 {
    let mean_y2: f64 = sys.ybar.iter().map(|v| v * v).sum::<f64>() / sys.rows().max(1) as f64;
    sigma_row2.max(1e-15 * mean_y2).max(1e-30)
}

/// Log likelihood `-||P_S^perp ybar||^2 / (2 sigma^2)` of a support.
pub fn log_likelihood(sys: &MeasurementSystem, support: &[usize]) -> Result<f64> {
    let cols = RealColumns(sys);
    let sigma2 = sigma_eff(sys, sys.sigma_z2);
    let res2 = projected_residual2(&cols, support)?;
    Ok(-res2 / (2.0 * sigma2))
}

fn projected_residual2(cols: &impl Columns, groups: &[usize]) -> Result<f64> {
    let rows = cols.rows();
    let g = cols.group_size();
    let ybar = cols.ybar();
    let mut res: Vec<f64> = ybar.to_vec();
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(groups.len() * g);
    for &group in groups {
        for slot in 0..g {
            let mut v = vec![0.0; rows];
            cols.write_column(group, slot, &mut v);
            let norm0: f64 = v.iter().map(|x| x * x).sum();
            for q in &basis {
                let r: f64 = q.iter().zip(v.iter()).map(|(a, b)| a * b).sum();
                for (vi, qi) in v.iter_mut().zip(q.iter()) {
                    *vi -= r * qi;
                }
            }
            let n2: f64 = v.iter().map(|x| x * x).sum();
            if n2 <= RANK_TOL * norm0.max(1e-300) {
                return Err(Error::RankDeficient);
            }
            let inv = 1.0 / n2.sqrt();
            for vi in v.iter_mut() {
                *vi *= inv;
            }
            let beta: f64 = v.iter().zip(res.iter()).map(|(a, b)| a * b).sum();
            for (ri, qi) in res.iter_mut().zip(v.iter()) {
                *ri -= beta * qi;
            }
            basis.push(v);
        }
    }
    Ok(res.iter().map(|x| x * x).sum())
}

/// Best linear unbiased amplitude estimate on a fixed support.
pub fn blue(sys: &MeasurementSystem, support: &[usize]) -> Result<Vec<f64>> {
    least_squares(&RealColumns(sys), support, RANK_TOL).ok_or(Error::RankDeficient)
}

fn softmax(scores: &[f64]) -> Vec<f64> {
    let m = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut w: Vec<f64> = scores.iter().map(|&s| (s - m).exp()).collect();
    let total: f64 = w.iter().sum();
    for v in w.iter_mut() {
        *v /= total;
    }
    w
}

fn auto_k_max(rho: f64, n: usize) -> usize {
    ((2.0 * rho * n as f64).ceil() as usize).max(4)
}

/// Greedy search over support hypotheses on the phase-augmented system.
pub fn greedy_search(
    sys: &MeasurementSystem,
    prior: &SupportPrior,
    params: &EngineParams,
) -> SparsePosterior {
    let cols = RealColumns(sys);
    let sp = SearchParams {
        d_keep: params.d_keep,
        k_max: params.k_max.unwrap_or_else(|| auto_k_max(prior.rho_global, sys.n())),
        window: params.collect_window,
        collect_cap: params.collect_cap,
        sigma2: sigma_eff(sys, sys.sigma_z2),
        rank_tol: RANK_TOL,
    };
    let outcome = beam_search(&cols, &PriorTables::new(prior.rho()), &sp);
    let mut supports = Vec::new();
    let mut log_metrics = Vec::new();
    let mut blues = Vec::new();
    for (s, &score) in outcome.supports.iter().zip(outcome.scores.iter()) {
        let groups: Vec<usize> = s.iter().map(|&i| i as usize).collect();
        if let Some(amps) = least_squares(&cols, &groups, RANK_TOL) {
            supports.push(groups);
            log_metrics.push(score);
            blues.push(amps);
        }
    }
    let weights = softmax(&log_metrics);
    SparsePosterior { supports, log_metrics, weights, blue: blues }
}

/// Full recovery with the weighted, phase-augmented engine.
pub fn recover(
    sys: &MeasurementSystem,
    prior: &SupportPrior,
    params: &EngineParams,
) -> RecoveryOutput {
    run(sys, prior, params, EngineMode::Wpa, None)
}

/// Ablation variants sharing the search mechanics of [`recover`].
pub fn ablations(
    sys: &MeasurementSystem,
    prior: &SupportPrior,
    params: &EngineParams,
    mode: EngineMode,
) -> RecoveryOutput {
    run(sys, prior, params, mode, None)
}

fn run(
    sys: &MeasurementSystem,
    prior: &SupportPrior,
    params: &EngineParams,
    mode: EngineMode,
    sigma_row2_override: Option<f64>,
) -> RecoveryOutput {
    let n = sys.n();
    let prior_eff = if mode.weighted() {
        prior.clone()
    } else {
        SupportPrior::uniform(prior.rho_global, n)
    };
    let sigma_row2 = sigma_row2_override.unwrap_or(sys.sigma_z2);
    let sp = SearchParams {
        d_keep: params.d_keep,
        k_max: params.k_max.unwrap_or_else(|| auto_k_max(prior_eff.rho_global, n)),
        window: params.collect_window,
        collect_cap: params.collect_cap,
        sigma2: sigma_eff(sys, sigma_row2),
        rank_tol: RANK_TOL,
    };
    let tables = PriorTables::new(prior_eff.rho());

    if mode.phase_augmented() {
        let cols = RealColumns(sys);
        let outcome = beam_search(&cols, &tables, &sp);
        let weights = softmax(&outcome.scores);
        let mut ammse = vec![0.0; n];
        let mut total_w = 0.0;
        for (s, &w) in outcome.supports.iter().zip(weights.iter()) {
            let groups: Vec<usize> = s.iter().map(|&i| i as usize).collect();
            if let Some(amps) = least_squares(&cols, &groups, RANK_TOL) {
                for (g, a) in groups.iter().zip(amps.iter()) {
                    ammse[*g] += w * a;
                }
                total_w += w;
            }
        }
        if total_w > 0.0 {
            for v in ammse.iter_mut() {
                *v /= total_w;
            }
        }
        let c_mag: Vec<f64> = ammse.iter().map(|v| v.abs()).collect();
        let c_hat: Vec<Complex64> = c_mag
            .iter()
            .zip(sys.theta.iter())
            .map(|(&m, &t)| Complex64::from_polar(m, t))
            .collect();
        let pred = sys.predict(&c_mag);
        finish(sys, c_hat, c_mag, params, pred)
    } else {
        let cols = ComplexPairColumns::new(sys);
        let outcome = beam_search(&cols, &tables, &sp);
        let weights = softmax(&outcome.scores);
        let mut acc = vec![Complex64::new(0.0, 0.0); n];
        let mut total_w = 0.0;
        for (s, &w) in outcome.supports.iter().zip(weights.iter()) {
            let groups: Vec<usize> = s.iter().map(|&i| i as usize).collect();
            if let Some(amps) = least_squares(&cols, &groups, RANK_TOL) {
                for (gi, g) in groups.iter().enumerate() {
                    acc[*g] += w * Complex64::new(amps[2 * gi], amps[2 * gi + 1]);
                }
                total_w += w;
            }
        }
        if total_w > 0.0 {
            for v in acc.iter_mut() {
                *v /= total_w;
            }
        }
        let c_mag: Vec<f64> = acc.iter().map(|v| v.norm()).collect();
        // Prediction through the un-rotated complex columns.
        let mut pred = vec![0.0; sys.rows()];
        let mut buf = vec![0.0; sys.rows()];
        for (i, v) in acc.iter().enumerate() {
            if v.re != 0.0 || v.im != 0.0 {
                cols.write_column(i, 0, &mut buf);
                for (p, b) in pred.iter_mut().zip(buf.iter()) {
                    *p += v.re * b;
                }
                cols.write_column(i, 1, &mut buf);
                for (p, b) in pred.iter_mut().zip(buf.iter()) {
                    *p += v.im * b;
                }
            }
        }
        finish(sys, acc, c_mag, params, pred)
    }
}

fn finish(
    sys: &MeasurementSystem,
    c_hat: Vec<Complex64>,
    c_mag: Vec<f64>,
    params: &EngineParams,
    pred: Vec<f64>,
) -> RecoveryOutput {
    let n = sys.n();
    let max_mag = c_mag.iter().cloned().fold(0.0, f64::max);
    let support_hat: Vec<usize> = if max_mag > 0.0 {
        (0..n).filter(|&i| c_mag[i] > params.support_tau * max_mag).collect()
    } else {
        Vec::new()
    };
    let rho_refined = (support_hat.len().max(1) as f64) / n as f64;
    let res2: f64 = sys.ybar.iter().zip(pred.iter()).map(|(y, p)| (y - p) * (y - p)).sum();
    let sigma_z2_refined = res2 / sys.rows() as f64;
    RecoveryOutput { c_hat, c_mag, support_hat, rho_refined, sigma_z2_refined, iterations_used: 1 }
}

/// Bootstrap refinement: starting from rough estimates of the sparsity rate
/// and noise variance, alternately recovers the signal and re-estimates both
/// parameters until the rate stabilizes or `e_max` iterations are spent.
pub fn refine(
    sys: &MeasurementSystem,
    rho0: f64,
    sigma0_row2: f64,
    params: &EngineParams,
    mode: EngineMode,
) -> RecoveryOutput {
    let n = sys.n();
    let mut rho = rho0.clamp(1.0 / n as f64, 1.0 - RHO_CLAMP);
    let mut sigma_row2 = sigma0_row2.max(0.0);
    let mut out = None;
    for t in 1..=params.e_max.max(1) {
        let prior = SupportPrior::weighted(rho, &sys.weights);
        let mut result = run(sys, &prior, params, mode, Some(sigma_row2));
        result.iterations_used = t;
        let rho_new = result.rho_refined.max(1.0 / n as f64);
        sigma_row2 = result.sigma_z2_refined;
        let rel = (rho_new - rho).abs() / rho;
        rho = rho_new;
        result.rho_refined = rho;
        let stop = rel < params.rho_tol;
        out = Some(result);
        if stop {
            break;
        }
    }
    out.expect("at least one refinement iteration")
}

/// Initial sparsity-rate estimate `Q((gamma - mu) / sigma)` from the mean and
/// standard deviation of the equalized sample magnitudes.
pub fn initial_sparsity_estimate(xhat_time: &[Complex64], gamma_hat: f64) -> f64 {
    let n = xhat_time.len().max(1) as f64;
    let mags: Vec<f64> = xhat_time.iter().map(|v| v.norm()).collect();
    let mu = mags.iter().sum::<f64>() / n;
    let var = mags.iter().map(|m| (m - mu) * (m - mu)).sum::<f64>() / n;
    let sigma = var.sqrt();
    let z = if sigma > 0.0 { (gamma_hat - mu) / sigma } else { 0.0 };
    q_func(z)
}

/// Genie-aided baseline: BLUE on the exactly known support, phase-augmented.
pub fn oracle_ls(sys: &MeasurementSystem, true_support: &[usize]) -> Result<RecoveryOutput> {
    let amps = blue(sys, true_support)?;
    let n = sys.n();
    let mut c_mag = vec![0.0; n];
    for (&i, &a) in true_support.iter().zip(amps.iter()) {
        c_mag[i] = a.abs();
    }
    let c_hat: Vec<Complex64> =
        c_mag.iter().zip(sys.theta.iter()).map(|(&m, &t)| Complex64::from_polar(m, t)).collect();
    let pred = sys.predict(&c_mag);
    let res2: f64 = sys.ybar.iter().zip(pred.iter()).map(|(y, p)| (y - p) * (y - p)).sum();
    Ok(RecoveryOutput {
        c_hat,
        c_mag,
        support_hat: true_support.to_vec(),
        rho_refined: (true_support.len().max(1) as f64) / n as f64,
        sigma_z2_refined: res2 / sys.rows() as f64,
        iterations_used: 1,
    })
}
