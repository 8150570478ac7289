//! Reliable-carrier selection and measurement-system assembly.
//!
//! The reliability of a carrier is the ratio of the likelihood that its
//! perturbation leaves it inside the correct decision region to the summed
//! likelihoods of every possible wrong decision. The top-P carriers become
//! measurement tones, and the compressed-sensing system for the clipping
//! magnitudes is assembled as a real-valued 2P x N matrix by rotating each
//! column with the signal-derived clipping phase and splitting real and
//! imaginary parts.

use num_complex::Complex64;

use crate::dsp::QamConstellation;
use crate::error::{Error, Result};
use crate::link::ChannelRealization;
use crate::util::log_sum_exp;

/// Variance floor that keeps log-domain scores finite on noiseless runs.
const SIGMA2_FLOOR: f64 = 1e-12;

/// Per-subcarrier reliability scores in the log domain.
#[derive(Debug, Clone)]
pub struct ReliabilityReport {
    /// log of the reliability ratio per carrier; finite for all inputs.
    pub log_scores: Vec<f64>,
    /// Carrier indices sorted by descending score, ties broken by index.
    pub order: Vec<usize>,
}

/// Reliability with a flat noise variance on every carrier.
pub fn reliability(
    xhat: &[Complex64],
    constellation: &QamConstellation,
    sigma_z2: f64,
) -> ReliabilityReport {
    reliability_impl(xhat, constellation, |_| sigma_z2)
}

/// Reliability with an explicit per-carrier variance (e.g. the equalized
/// variance `sigma_z^2 / |D(k)|^2`).
pub fn reliability_per_carrier(
    xhat: &[Complex64],
    constellation: &QamConstellation,
    sigma2: &[f64],
) -> ReliabilityReport {
    reliability_impl(xhat, constellation, |i| sigma2[i])
}

fn reliability_impl<F: Fn(usize) -> f64>(
    xhat: &[Complex64],
    constellation: &QamConstellation,
    var: F,
) -> ReliabilityReport {
    let points = constellation.points();
    let mut log_scores = Vec::with_capacity(xhat.len());
    let mut wrong = Vec::with_capacity(points.len() - 1);
    for (i, &v) in xhat.iter().enumerate() {
        let s2 = var(i).max(SIGMA2_FLOOR);
        let decided = constellation.decide(v);
        let mut num = 0.0;
        wrong.clear();
        for (k, &a) in points.iter().enumerate() {
            let ll = -(v - a).norm_sqr() / s2;
            if k == decided {
                num = ll;
            } else {
                wrong.push(ll);
            }
        }
        log_scores.push(num - log_sum_exp(&wrong));
    }
    let mut order: Vec<usize> = (0..xhat.len()).collect();
    order.sort_by(|&a, &b| log_scores[b].partial_cmp(&log_scores[a]).unwrap().then(a.cmp(&b)));
    ReliabilityReport { log_scores, order }
}

/// Picks the `p` most reliable carriers, skipping `reserved` indices.
/// Returns the chosen indices in ascending carrier order.
pub fn select_rc(report: &ReliabilityReport, p: usize, reserved: &[usize]) -> Result<Vec<usize>> {
    let n = report.log_scores.len();
    let mut blocked = vec![false; n];
    for &r in reserved {
        blocked[r] = true;
    }
    let available = blocked.iter().filter(|b| !**b).count();
    if p > available {
        return Err(Error::Config(format!(
            "cannot select {p} carriers from {available} available"
        )));
    }
    let mut chosen: Vec<usize> =
        report.order.iter().copied().filter(|&i| !blocked[i]).take(p).collect();
    chosen.sort_unstable();
    Ok(chosen)
}

/// Real-valued measurement system for the sparse magnitude vector.
///
/// Rows stack the real parts of the P complex measurements above their
/// imaginary parts. `sigma_z2` is the noise variance per real row, i.e. half
/// the complex per-sample variance.
#[derive(Debug, Clone)]
pub struct MeasurementSystem {
    rows: usize,
    n: usize,
    /// Stacked measurement vector, length `rows`.
    pub ybar: Vec<f64>,
    // Column-major rows x n matrix.
    phibar: Vec<f64>,
    /// Prior weights `gamma_hat - |x_hat(i)|`, length n.
    pub weights: Vec<f64>,
    /// Clipping phases `angle(x_hat(i)) - pi`, length n.
    pub theta: Vec<f64>,
    /// Noise variance per real measurement row.
    pub sigma_z2: f64,
    /// Carrier indices of the complex measurement rows (empty for stacked
    /// multi-branch systems).
    pub chosen: Vec<usize>,
}

impl MeasurementSystem {
    /// Assembles the real split of a complex system `yprime = Phi c + noise`.
    /// `phi` yields the complex entry at (complex row r, column i).
    pub fn from_complex<F: Fn(usize, usize) -> Complex64>(
        yprime: &[Complex64],
        n: usize,
        phi: F,
        weights: Vec<f64>,
        theta: Vec<f64>,
        sigma_z2_complex: f64,
        chosen: Vec<usize>,
    ) -> Self {
        let p = yprime.len();
        let rows = 2 * p;
        let mut ybar = vec![0.0; rows];
        for (r, v) in yprime.iter().enumerate() {
            ybar[r] = v.re;
            ybar[r + p] = v.im;
        }
        let mut phibar = vec![0.0; rows * n];
        for i in 0..n {
            let col = &mut phibar[i * rows..(i + 1) * rows];
            for r in 0..p {
                let v = phi(r, i);
                col[r] = v.re;
                col[r + p] = v.im;
            }
        }
        Self { rows, n, ybar, phibar, weights, theta, sigma_z2: sigma_z2_complex / 2.0, chosen }
    }

    /// Stacks several systems that share the same unknown vector. Weights and
    /// phases are taken from `phase_source` (index into `parts`).
    pub fn stack(parts: &[MeasurementSystem], phase_source: usize) -> Self {
        assert!(!parts.is_empty());
        let n = parts[0].n;
        let rows: usize = parts.iter().map(|s| s.rows).sum();
        let mut ybar = Vec::with_capacity(rows);
        let mut phibar = vec![0.0; rows * n];
        for s in parts {
            assert_eq!(s.n, n);
            ybar.extend_from_slice(&s.ybar);
        }
        for i in 0..n {
            let mut offset = 0usize;
            let col = &mut phibar[i * rows..(i + 1) * rows];
            for s in parts {
                col[offset..offset + s.rows].copy_from_slice(s.column(i));
                offset += s.rows;
            }
        }
        Self {
            rows,
            n,
            ybar,
            phibar,
            weights: parts[phase_source].weights.clone(),
            theta: parts[phase_source].theta.clone(),
            sigma_z2: parts[phase_source].sigma_z2,
            chosen: Vec::new(),
        }
    }

    /// Number of real measurement rows (2P).
    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Unknown dimension.
    pub fn n(&self) -> usize {
        self.n
    }

    /// Column `i` of the stacked real matrix.
    pub fn column(&self, i: usize) -> &[f64] {
        &self.phibar[i * self.rows..(i + 1) * self.rows]
    }

    /// Matrix-vector product `Phibar * c`.
    pub fn predict(&self, c: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows];
        for (i, &ci) in c.iter().enumerate() {
            if ci != 0.0 {
                for (o, &m) in out.iter_mut().zip(self.column(i)) {
                    *o += m * ci;
                }
            }
        }
        out
    }

    /// Residual norm `|| ybar - Phibar c ||`.
    pub fn residual_norm(&self, c: &[f64]) -> f64 {
        let pred = self.predict(c);
        self.ybar.iter().zip(pred.iter()).map(|(y, p)| (y - p) * (y - p)).sum::<f64>().sqrt()
    }
}

/// Builds the single-user measurement system from the equalized frame.
///
/// `y_spec` is the received frequency-domain frame, `x_decided` the ML
/// decisions, `chosen` the reliable-carrier indices, and `xhat_time` the
/// equalized time-domain signal supplying phases and weights. When `gamma`
/// is `None` the threshold is estimated as `max |xhat_time|`.
pub fn build_system(
    y_spec: &[Complex64],
    x_decided: &[Complex64],
    chan: &ChannelRealization,
    chosen: &[usize],
    xhat_time: &[Complex64],
    sigma_z2: f64,
    gamma: Option<f64>,
) -> MeasurementSystem {
    let n = xhat_time.len();
    let gamma_hat =
        gamma.unwrap_or_else(|| xhat_time.iter().map(|v| v.norm()).fold(0.0, f64::max));
    let weights: Vec<f64> = xhat_time.iter().map(|v| gamma_hat - v.norm()).collect();
    let theta: Vec<f64> = xhat_time.iter().map(|v| v.arg() - std::f64::consts::PI).collect();
    let theta_c: Vec<Complex64> = theta.iter().map(|&t| Complex64::from_polar(1.0, t)).collect();
    let yprime: Vec<Complex64> =
        chosen.iter().map(|&k| y_spec[k] - chan.d_diag[k] * x_decided[k]).collect();
    let scale = 1.0 / (n as f64).sqrt();
    let phi = |r: usize, i: usize| -> Complex64 {
        let k = chosen[r];
        let phase = -std::f64::consts::TAU * ((k * i) % n) as f64 / n as f64;
        chan.d_diag[k] * Complex64::from_polar(scale, phase) * theta_c[i]
    };
    MeasurementSystem::from_complex(&yprime, n, phi, weights, theta, sigma_z2, chosen.to_vec())
}
