//! OFDM frame construction, amplitude clipping, circulant Rayleigh channel
//! with calibrated AWGN, and zero-forcing equalization.

use num_complex::Complex64;
use rand::Rng;

use crate::dsp::{self, QamConstellation};
use crate::error::{Error, Result};
use crate::util::complex_gaussian;

/// Channel-tap power convention.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TapVariance {
    /// Per-tap variance `1/N_c`, unit total channel energy (default). Keeps
    /// the Eb/N0 calibration independent of the tap count.
    UnitTotal,
    /// Per-tap unit variance (total energy `N_c`).
    PerTapUnit,
}

/// Variance convention used inside the reliability metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReliabilityVariance {
    /// Flat noise variance `sigma_z^2` on every carrier (default).
    Flat,
    /// Per-carrier equalized variance `sigma_z^2 / |D(k)|^2`.
    PerCarrier,
}

/// Static frame parameters shared by all modules.
#[derive(Debug, Clone)]
pub struct OfdmConfig {
    /// Subcarrier count N (power of two).
    pub n: usize,
    /// QAM order M in {4, 16, 64}.
    pub qam_order: usize,
    /// Channel tap count N_c.
    pub channel_taps: usize,
    /// Clipping ratio CR = gamma / sigma_x.
    pub clip_ratio: f64,
    /// Per-point SNR in dB (set to `f64::INFINITY` for noiseless runs).
    pub eb_n0_db: f64,
    /// Number of reliable carriers / measurement tones P.
    pub rc_count: usize,
    /// Master seed recorded with every run for replay.
    pub seed: u64,
    pub tap_variance: TapVariance,
    pub reliability_variance: ReliabilityVariance,
    /// When true the receiver uses the transmitter-signalled gamma instead
    /// of estimating it as `max |x_hat|`.
    pub gamma_known: bool,
}

impl Default for OfdmConfig {
    fn default() -> Self {
        Self {
            n: 512,
            qam_order: 64,
            channel_taps: 10,
            clip_ratio: 1.61,
            eb_n0_db: 27.0,
            rc_count: 128,
            seed: 0,
            tap_variance: TapVariance::UnitTotal,
            reliability_variance: ReliabilityVariance::Flat,
            gamma_known: false,
        }
    }
}

impl OfdmConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.n.is_power_of_two() {
            return Err(Error::Config(format!("N = {} is not a power of two", self.n)));
        }
        if self.channel_taps == 0 || self.channel_taps > self.n {
            return Err(Error::Config(format!(
                "channel taps {} outside (0, {}]",
                self.channel_taps, self.n
            )));
        }
        if self.rc_count == 0 || self.rc_count >= self.n {
            return Err(Error::Config(format!(
                "measurement tone count {} outside (0, {})",
                self.rc_count, self.n
            )));
        }
        if self.clip_ratio <= 0.0 {
            return Err(Error::Config("clip ratio must be positive".into()));
        }
        QamConstellation::new(self.qam_order).map(|_| ())
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.qam_order.trailing_zeros() as usize
    }

    pub fn bits_per_frame(&self) -> usize {
        self.n * self.bits_per_symbol()
    }

    /// AWGN variance per complex sample for unit symbol energy:
    /// `sigma_z^2 = 1 / (log2(M) * 10^(EbN0_dB/10))`.
    pub fn sigma_z2(&self) -> f64 {
        1.0 / (self.bits_per_symbol() as f64 * 10f64.powf(self.eb_n0_db / 10.0))
    }

    pub fn constellation(&self) -> Result<QamConstellation> {
        QamConstellation::new(self.qam_order)
    }
}

/// Outcome of hard amplitude clipping, with the ground truth needed by the
/// recovery oracles.
#[derive(Debug, Clone)]
pub struct ClipResult {
    /// Unclipped time signal x.
    pub x: Vec<Complex64>,
    /// Clipped time signal x_p = x + c (stored as that exact sum).
    pub x_p: Vec<Complex64>,
    /// Sparse clipping signal c.
    pub c: Vec<Complex64>,
    /// Indices where c is non-zero.
    pub support: Vec<usize>,
    /// Amplitude threshold gamma.
    pub gamma: f64,
}

/// One draw of the circulant Rayleigh channel.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    /// Impulse response, length N_c.
    pub h: Vec<Complex64>,
    /// Frequency response D(k) = sum_l h(l) e^{-j 2 pi k l / N}, length N.
    pub d_diag: Vec<Complex64>,
    /// AWGN variance per complex sample.
    pub sigma_z2: f64,
    /// Number of rejected draws (spectral null guard) before this one.
    pub redraws: u32,
}

/// Maps bits onto QAM symbols and converts to the time domain.
/// Returns the frequency-domain frame X and its IDFT x.
pub fn transmit(
    bits: &[u8],
    cfg: &OfdmConfig,
    constellation: &QamConstellation,
) -> Result<(Vec<Complex64>, Vec<Complex64>)> {
    if bits.len() != cfg.bits_per_frame() {
        return Err(Error::Input(format!(
            "expected {} bits, got {}",
            cfg.bits_per_frame(),
            bits.len()
        )));
    }
    let spectrum = constellation.map_bits(bits)?;
    let time = dsp::idft(&spectrum)?;
    Ok((spectrum, time))
}

/// Hard amplitude clipping at `gamma = cr * rms(|x|)` (per-frame RMS).
/// Samples above the threshold keep their phase and are limited to gamma.
pub fn clip(x: &[Complex64], cr: f64) -> Result<ClipResult> {
    let power = dsp::energy(x);
    if x.is_empty() || power <= 0.0 {
        return Err(Error::Input("cannot clip an empty or zero frame".into()));
    }
    let sigma_x = (power / x.len() as f64).sqrt();
    let gamma = cr * sigma_x;
    let mut c = vec![Complex64::new(0.0, 0.0); x.len()];
    let mut support = Vec::new();
    for (i, &v) in x.iter().enumerate() {
        let mag = v.norm();
        if mag > gamma {
            c[i] = v * (gamma / mag - 1.0);
            support.push(i);
        }
    }
    // x_p is materialized as x + c so the reconstruction identity holds
    // bit-for-bit on the stored vectors.
    let x_p: Vec<Complex64> = x.iter().zip(c.iter()).map(|(a, b)| a + b).collect();
    Ok(ClipResult { x: x.to_vec(), x_p, c, support, gamma })
}

/// Draws i.i.d. zero-mean complex Gaussian taps and their frequency
/// response; redraws while any |D(k)| falls below 1e-6.
pub fn draw_channel<R: Rng>(cfg: &OfdmConfig, rng: &mut R) -> Result<ChannelRealization> {
    let tap_var = match cfg.tap_variance {
        TapVariance::UnitTotal => 1.0 / cfg.channel_taps as f64,
        TapVariance::PerTapUnit => 1.0,
    };
    let mut redraws = 0u32;
    loop {
        let h: Vec<Complex64> =
            (0..cfg.channel_taps).map(|_| complex_gaussian(rng, tap_var)).collect();
        let d_diag = frequency_response(&h, cfg.n)?;
        let min_mag = d_diag.iter().map(|d| d.norm()).fold(f64::INFINITY, f64::min);
        if min_mag >= 1e-6 {
            return Ok(ChannelRealization { h, d_diag, sigma_z2: cfg.sigma_z2(), redraws });
        }
        redraws += 1;
    }
}

/// Frequency response of an impulse response zero-padded to length n:
/// `sqrt(n)` times the unitary DFT of the padded taps.
pub fn frequency_response(h: &[Complex64], n: usize) -> Result<Vec<Complex64>> {
    if h.len() > n {
        return Err(Error::Input(format!("{} taps exceed frame length {n}", h.len())));
    }
    let mut padded = vec![Complex64::new(0.0, 0.0); n];
    padded[..h.len()].copy_from_slice(h);
    let mut d = dsp::dft(&padded)?;
    let scale = (n as f64).sqrt();
    for v in d.iter_mut() {
        *v *= scale;
    }
    Ok(d)
}

/// Direct circular convolution of a frame with a short impulse response.
pub fn circular_convolve(x: &[Complex64], h: &[Complex64]) -> Vec<Complex64> {
    let n = x.len();
    debug_assert!(h.len() <= n);
    let mut y = vec![Complex64::new(0.0, 0.0); n];
    for (l, &tap) in h.iter().enumerate() {
        for (i, out) in y.iter_mut().enumerate() {
            *out += tap * x[(i + n - l) % n];
        }
    }
    y
}

/// Draws a vector of AWGN samples with total per-sample variance `var`.
pub fn draw_noise<R: Rng>(n: usize, var: f64, rng: &mut R) -> Vec<Complex64> {
    if var <= 0.0 {
        return vec![Complex64::new(0.0, 0.0); n];
    }
    (0..n).map(|_| complex_gaussian(rng, var)).collect()
}

/// Passes a frame through the channel without noise.
pub fn apply_channel(x: &[Complex64], chan: &ChannelRealization) -> Vec<Complex64> {
    circular_convolve(x, &chan.h)
}

/// Full propagation: circular convolution plus AWGN drawn from `rng`.
pub fn propagate<R: Rng>(
    x_p: &[Complex64],
    chan: &ChannelRealization,
    rng: &mut R,
) -> Vec<Complex64> {
    let mut y = apply_channel(x_p, chan);
    if chan.sigma_z2 > 0.0 {
        for v in y.iter_mut() {
            *v += complex_gaussian(rng, chan.sigma_z2);
        }
    }
    y
}

/// Zero-forcing equalization: `Xhat = D^{-1} F y`, plus its IDFT, which is
/// the phase and weight source for the recovery engine.
pub fn equalize(
    y: &[Complex64],
    chan: &ChannelRealization,
) -> Result<(Vec<Complex64>, Vec<Complex64>)> {
    let spectrum = dsp::dft(y)?;
    let mut xhat = Vec::with_capacity(spectrum.len());
    for (v, d) in spectrum.iter().zip(chan.d_diag.iter()) {
        if d.norm() < 1e-9 {
            return Err(Error::Numeric("near-singular channel response entry".into()));
        }
        xhat.push(v / d);
    }
    let xhat_time = dsp::idft(&xhat)?;
    Ok((xhat, xhat_time))
}
