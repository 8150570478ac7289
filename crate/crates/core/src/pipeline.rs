//! Single-antenna transmit/receive chain: frame generation with ground
//! truth, and the receiver that equalizes, selects reliable carriers,
//! estimates the clipping signal and demaps the corrected spectrum.

use num_complex::Complex64;
use rand::Rng;

use crate::dsp::{self, QamConstellation};
use crate::engine::{self, EngineMode, EngineParams, SupportPrior};
use crate::error::Result;
use crate::link::{self, ChannelRealization, ClipResult, OfdmConfig, ReliabilityVariance};
use crate::rc;

/// Everything drawn for one simulated frame, including the ground truth the
/// oracle baseline and the error counters need.
#[derive(Debug, Clone)]
pub struct FrameData {
    pub bits: Vec<u8>,
    pub spectrum: Vec<Complex64>,
    pub clip: ClipResult,
    pub chan: ChannelRealization,
    /// Received samples for the clipped transmission.
    pub y: Vec<Complex64>,
    /// Received samples had the frame not been clipped (same channel and
    /// noise draw, for paired no-clipping baselines).
    pub y_unclipped: Vec<Complex64>,
}

/// Draws one frame: data bits, clipping, channel and one shared noise vector.
pub fn generate_frame<R: Rng>(
    cfg: &OfdmConfig,
    cons: &QamConstellation,
    rng: &mut R,
) -> Result<FrameData> {
    let bits: Vec<u8> = (0..cfg.bits_per_frame()).map(|_| rng.gen_range(0..2u8)).collect();
    let (spectrum, time) = link::transmit(&bits, cfg, cons)?;
    let clip = link::clip(&time, cfg.clip_ratio)?;
    let chan = link::draw_channel(cfg, rng)?;
    let noise = link::draw_noise(cfg.n, chan.sigma_z2, rng);
    let mut y = link::apply_channel(&clip.x_p, &chan);
    let mut y_unclipped = link::apply_channel(&clip.x, &chan);
    for ((a, b), z) in y.iter_mut().zip(y_unclipped.iter_mut()).zip(noise.iter()) {
        *a += z;
        *b += z;
    }
    Ok(FrameData { bits, spectrum, clip, chan, y, y_unclipped })
}

/// How the receiver obtains the engine's statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StatsMode {
    /// Sparsity rate `exp(-CR^2)` and the configured noise variance.
    Known,
    /// Single run from scaled-off statistics, no refinement.
    Misspecified { rho_factor: f64, sigma_factor: f64 },
    /// Bootstrap refinement from scaled-off statistics.
    Refined { rho_factor: f64, sigma_factor: f64 },
}

/// Receiver algorithm for a single-user frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RecoveryScheme {
    /// Equalize and demap, ignoring the clipping distortion.
    None,
    /// Least squares on the exactly known support (simulation benchmark).
    OracleLs,
    /// The Bayesian engine in the given mode.
    Engine { mode: EngineMode, stats: StatsMode },
}

/// Runs the receiver on `y` with channel state `chan_csi` and returns the
/// demapped bits. `truth` supplies the oracle support and, when
/// `cfg.gamma_known`, the transmitter-signalled threshold.
pub fn receive_single_user(
    y: &[Complex64],
    chan_csi: &ChannelRealization,
    cfg: &OfdmConfig,
    cons: &QamConstellation,
    scheme: RecoveryScheme,
    truth: Option<&ClipResult>,
    params: &EngineParams,
) -> Result<Vec<u8>> {
    let (xhat, xhat_time) = link::equalize(y, chan_csi)?;
    let (naive_bits, decided) = cons.demap(&xhat);
    let scheme = match scheme {
        RecoveryScheme::None => return Ok(naive_bits),
        s => s,
    };

    let sigma_z2 = cfg.sigma_z2();
    let report = match cfg.reliability_variance {
        ReliabilityVariance::Flat => rc::reliability(&xhat, cons, sigma_z2),
        ReliabilityVariance::PerCarrier => {
            let per: Vec<f64> = chan_csi.d_diag.iter().map(|d| sigma_z2 / d.norm_sqr()).collect();
            rc::reliability_per_carrier(&xhat, cons, &per)
        }
    };
    let chosen = rc::select_rc(&report, cfg.rc_count, &[])?;
    let gamma = if cfg.gamma_known { truth.map(|t| t.gamma) } else { None };
    let yspec = dsp::dft(y)?;
    let sys = rc::build_system(&yspec, &decided, chan_csi, &chosen, &xhat_time, sigma_z2, gamma);

    let rho_known = (-cfg.clip_ratio * cfg.clip_ratio).exp();
    let out = match scheme {
        RecoveryScheme::OracleLs => {
            let support = truth.expect("oracle needs the true support").support.clone();
            engine::oracle_ls(&sys, &support)?
        }
        RecoveryScheme::Engine { mode, stats } => match stats {
            StatsMode::Known => {
                let prior = SupportPrior::weighted(rho_known, &sys.weights);
                engine::ablations(&sys, &prior, params, mode)
            }
            StatsMode::Misspecified { rho_factor, sigma_factor } => {
                let prior = SupportPrior::weighted(rho_factor * rho_known, &sys.weights);
                let mut sys2 = sys.clone();
                sys2.sigma_z2 *= sigma_factor;
                engine::ablations(&sys2, &prior, params, mode)
            }
            StatsMode::Refined { rho_factor, sigma_factor } => engine::refine(
                &sys,
                rho_factor * rho_known,
                sigma_factor * sys.sigma_z2,
                params,
                mode,
            ),
        },
        RecoveryScheme::None => unreachable!(),
    };

    let c_spec = dsp::dft(&out.c_hat)?;
    let corrected: Vec<Complex64> = (0..cfg.n)
        .map(|k| (yspec[k] - chan_csi.d_diag[k] * c_spec[k]) / chan_csi.d_diag[k])
        .collect();
    let (bits, _) = cons.demap(&corrected);
    Ok(bits)
}

/// Number of positions where the two bit strings differ.
pub fn count_bit_errors(a: &[u8], b: &[u8]) -> u64 {
    a.iter().zip(b.iter()).filter(|(x, y)| x != y).count() as u64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::rng_from_seed;

    fn noiseless_cfg() -> OfdmConfig {
        OfdmConfig { eb_n0_db: f64::INFINITY, ..Default::default() }
    }

    #[test]
    fn naive_receiver_fails_on_clipped_noiseless_frames() {
        let cfg = noiseless_cfg();
        let cons = cfg.constellation().unwrap();
        let mut rng = rng_from_seed(50);
        let mut total_errors = 0;
        for _ in 0..3 {
            let frame = generate_frame(&cfg, &cons, &mut rng).unwrap();
            let bits = receive_single_user(
                &frame.y,
                &frame.chan,
                &cfg,
                &cons,
                RecoveryScheme::None,
                None,
                &EngineParams::default(),
            )
            .unwrap();
            total_errors += count_bit_errors(&bits, &frame.bits);
        }
        assert!(total_errors > 0, "clipping at CR=1.61 must corrupt naive decisions");
    }

    #[test]
    fn oracle_ls_corrects_noiseless_frames_exactly() {
        let cfg = noiseless_cfg();
        let cons = cfg.constellation().unwrap();
        let mut rng = rng_from_seed(51);
        for _ in 0..3 {
            let frame = generate_frame(&cfg, &cons, &mut rng).unwrap();
            let bits = receive_single_user(
                &frame.y,
                &frame.chan,
                &cfg,
                &cons,
                RecoveryScheme::OracleLs,
                Some(&frame.clip),
                &EngineParams::default(),
            )
            .unwrap();
            assert_eq!(count_bit_errors(&bits, &frame.bits), 0);
        }
    }

    #[test]
    fn wpa_corrects_noiseless_frames_exactly() {
        let cfg = noiseless_cfg();
        let cons = cfg.constellation().unwrap();
        let mut rng = rng_from_seed(52);
        for _ in 0..3 {
            let frame = generate_frame(&cfg, &cons, &mut rng).unwrap();
            let bits = receive_single_user(
                &frame.y,
                &frame.chan,
                &cfg,
                &cons,
                RecoveryScheme::Engine { mode: EngineMode::Wpa, stats: StatsMode::Known },
                Some(&frame.clip),
                &EngineParams::default(),
            )
            .unwrap();
            assert_eq!(count_bit_errors(&bits, &frame.bits), 0);
        }
    }

    #[test]
    fn no_phase_mode_also_corrects_noiseless_frames() {
        let cfg = noiseless_cfg();
        let cons = cfg.constellation().unwrap();
        let mut rng = rng_from_seed(53);
        let frame = generate_frame(&cfg, &cons, &mut rng).unwrap();
        let bits = receive_single_user(
            &frame.y,
            &frame.chan,
            &cfg,
            &cons,
            RecoveryScheme::Engine { mode: EngineMode::NoPhase, stats: StatsMode::Known },
            Some(&frame.clip),
            &EngineParams::default(),
        )
        .unwrap();
        assert_eq!(count_bit_errors(&bits, &frame.bits), 0);
    }

    #[test]
    fn unclipped_noisy_frame_yields_tiny_estimate() {
        // Null-case calibration: no clipping energy in the measurements.
        let cfg = OfdmConfig { clip_ratio: 10.0, eb_n0_db: 27.0, ..Default::default() };
        let cons = cfg.constellation().unwrap();
        let mut rng = rng_from_seed(54);
        let frame = generate_frame(&cfg, &cons, &mut rng).unwrap();
        assert!(frame.clip.support.is_empty());
        let (xhat, xhat_time) = link::equalize(&frame.y, &frame.chan).unwrap();
        let (_, decided) = cons.demap(&xhat);
        let report = rc::reliability(&xhat, &cons, cfg.sigma_z2());
        let chosen = rc::select_rc(&report, cfg.rc_count, &[]).unwrap();
        let yspec = dsp::dft(&frame.y).unwrap();
        let sys = rc::build_system(
            &yspec,
            &decided,
            &frame.chan,
            &chosen,
            &xhat_time,
            cfg.sigma_z2(),
            None,
        );
        let prior = SupportPrior::weighted(0.05, &sys.weights);
        let out = engine::recover(&sys, &prior, &EngineParams::default());
        let norm: f64 = out.c_mag.iter().map(|m| m * m).sum::<f64>().sqrt();
        let bound = 3.0 * cfg.sigma_z2().sqrt() * (cfg.n as f64).sqrt();
        assert!(norm <= bound, "spurious estimate {norm} exceeds {bound}");
    }

    #[test]
    fn paired_noise_is_shared_between_clipped_and_unclipped_paths() {
        let cfg = OfdmConfig { eb_n0_db: 20.0, ..Default::default() };
        let cons = cfg.constellation().unwrap();
        let mut rng = rng_from_seed(55);
        let frame = generate_frame(&cfg, &cons, &mut rng).unwrap();
        // y - H x_p equals y_unclipped - H x (the same noise realization).
        let hx_p = link::apply_channel(&frame.clip.x_p, &frame.chan);
        let hx = link::apply_channel(&frame.clip.x, &frame.chan);
        for i in 0..cfg.n {
            let za = frame.y[i] - hx_p[i];
            let zb = frame.y_unclipped[i] - hx[i];
            assert!((za - zb).norm() < 1e-12);
        }
    }
}
