//! Complex-vector primitives: unitary DFT/IDFT, Gray-coded square QAM and
//! PAPR computation.
//!
//! Both transform directions carry the `1/sqrt(N)` unitary normalization, so
//! `idft(dft(x)) == x` and Parseval holds without bookkeeping factors. All
//! frame lengths are restricted to powers of two.

use std::cell::RefCell;
use std::collections::HashMap;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftDirection, FftPlanner};

use crate::error::{Error, Result};

thread_local! {
    static PLANS: RefCell<HashMap<(usize, bool), Arc<dyn Fft<f64>>>> =
        RefCell::new(HashMap::new());
}

fn run_fft(x: &[Complex64], forward: bool) -> Result<Vec<Complex64>> {
    let n = x.len();
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::Config(format!(
            "transform length {n} is not a power of two"
        )));
    }
    let plan = PLANS.with(|cell| {
        let mut plans = cell.borrow_mut();
        plans
            .entry((n, forward))
            .or_insert_with(|| {
                let mut planner = FftPlanner::new();
                let dir = if forward {
                    FftDirection::Forward
                } else {
                    FftDirection::Inverse
                };
                planner.plan_fft(n, dir)
            })
            .clone()
    });
    let mut buf = x.to_vec();
    plan.process(&mut buf);
    let scale = 1.0 / (n as f64).sqrt();
    for v in buf.iter_mut() {
        *v *= scale;
    }
    Ok(buf)
}

/// Unitary DFT: `(Fx)(k) = N^{-1/2} sum_n x(n) e^{-j 2 pi k n / N}`.
pub fn dft(x: &[Complex64]) -> Result<Vec<Complex64>> {
    run_fft(x, true)
}

/// Unitary IDFT, the exact inverse of [`dft`].
pub fn idft(x: &[Complex64]) -> Result<Vec<Complex64>> {
    run_fft(x, false)
}

/// Squared Euclidean norm.
pub fn energy(x: &[Complex64]) -> f64 {
    x.iter().map(|v| v.norm_sqr()).sum()
}

/// Euclidean norm.
pub fn norm(x: &[Complex64]) -> f64 {
    energy(x).sqrt()
}

/// Peak-to-average power ratio `max |x(i)|^2 / mean |x(i)|^2`.
pub fn papr(x: &[Complex64]) -> Result<f64> {
    let total = energy(x);
    if x.is_empty() || total <= 0.0 {
        return Err(Error::Input("papr of an empty or zero vector".into()));
    }
    let peak = x.iter().map(|v| v.norm_sqr()).fold(0.0, f64::max);
    Ok(peak * x.len() as f64 / total)
}

fn gray_encode(t: u32) -> u32 {
    t ^ (t >> 1)
}

/// Gray-coded square QAM constellation with unit average symbol energy.
///
/// Symbol index `k` is the concatenation of the in-phase and quadrature bit
/// groups (`k = i_bits << (m/2) | q_bits`); each axis maps its bit group
/// through a Gray code onto equally spaced amplitude levels.
#[derive(Debug, Clone)]
pub struct QamConstellation {
    order: usize,
    bits_per_symbol: usize,
    levels_per_axis: usize,
    scale: f64,
    points: Vec<Complex64>,
    // Gray label of each ascending amplitude level, per axis.
    label_of_level: Vec<u32>,
}

impl QamConstellation {
    /// Builds an `order`-QAM constellation; `order` must be one of 4, 16, 64.
    pub fn new(order: usize) -> Result<Self> {
        if ![4, 16, 64].contains(&order) {
            return Err(Error::Config(format!("unsupported QAM order {order}")));
        }
        let bits_per_symbol = order.trailing_zeros() as usize;
        let axis_bits = bits_per_symbol / 2;
        let levels = 1usize << axis_bits;
        // Levels at +/-1, +/-3, ...: average energy 2(M-1)/3 before scaling.
        let scale = (3.0 / (2.0 * (order as f64 - 1.0))).sqrt();
        let label_of_level: Vec<u32> = (0..levels).map(|t| gray_encode(t as u32)).collect();
        let mut level_of_label = vec![0usize; levels];
        for (t, &g) in label_of_level.iter().enumerate() {
            level_of_label[g as usize] = t;
        }
        let axis_value = |label: usize| -> f64 {
            let t = level_of_label[label];
            ((levels - 1) as f64 - 2.0 * t as f64) * scale
        };
        let points = (0..order)
            .map(|k| {
                let i_label = k >> axis_bits;
                let q_label = k & (levels - 1);
                Complex64::new(axis_value(i_label), axis_value(q_label))
            })
            .collect();
        Ok(Self { order, bits_per_symbol, levels_per_axis: levels, scale, points, label_of_level })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.bits_per_symbol
    }

    /// All constellation points, indexed by symbol label.
    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    /// The point carrying symbol label `k`.
    pub fn point(&self, k: usize) -> Complex64 {
        self.points[k]
    }

    /// Maps a bit sequence (one symbol per `bits_per_symbol` bits, MSB first)
    /// onto constellation points.
    pub fn map_bits(&self, bits: &[u8]) -> Result<Vec<Complex64>> {
        if bits.len() % self.bits_per_symbol != 0 {
            return Err(Error::Input(format!(
                "bit count {} not divisible by {}",
                bits.len(),
                self.bits_per_symbol
            )));
        }
        Ok(bits
            .chunks(self.bits_per_symbol)
            .map(|chunk| {
                let mut k = 0usize;
                for &b in chunk {
                    k = (k << 1) | (b as usize & 1);
                }
                self.points[k]
            })
            .collect())
    }

    fn decide_axis(&self, x: f64) -> usize {
        let levels = self.levels_per_axis;
        // Continuous level coordinate; level t sits at (levels-1-2t)*scale.
        let raw = ((levels - 1) as f64 - x / self.scale) / 2.0;
        let t0 = raw.floor().clamp(0.0, (levels - 1) as f64) as usize;
        let t1 = (t0 + 1).min(levels - 1);
        if t0 == t1 {
            return self.label_of_level[t0] as usize;
        }
        let v = |t: usize| ((levels - 1) as f64 - 2.0 * t as f64) * self.scale;
        let d0 = (x - v(t0)) * (x - v(t0));
        let d1 = (x - v(t1)) * (x - v(t1));
        if d0 < d1 {
            self.label_of_level[t0] as usize
        } else if d1 < d0 {
            self.label_of_level[t1] as usize
        } else {
            // Exact decision-boundary tie: lower bit label wins so that the
            // overall nearest-point tie-break selects the lowest symbol index.
            self.label_of_level[t0].min(self.label_of_level[t1]) as usize
        }
    }

    /// Nearest constellation point in Euclidean distance; exact ties resolve
    /// to the lowest symbol index. Returns the symbol label.
    pub fn decide(&self, z: Complex64) -> usize {
        let axis_bits = self.bits_per_symbol / 2;
        let i_label = self.decide_axis(z.re);
        let q_label = self.decide_axis(z.im);
        (i_label << axis_bits) | q_label
    }

    /// ML decisions for a whole vector: bit labels and the decided points.
    pub fn demap(&self, x: &[Complex64]) -> (Vec<u8>, Vec<Complex64>) {
        let mut bits = Vec::with_capacity(x.len() * self.bits_per_symbol);
        let mut decided = Vec::with_capacity(x.len());
        for &z in x {
            let k = self.decide(z);
            for j in (0..self.bits_per_symbol).rev() {
                bits.push(((k >> j) & 1) as u8);
            }
            decided.push(self.points[k]);
        }
        (bits, decided)
    }

    /// Minimum distance between distinct constellation points.
    pub fn min_distance(&self) -> f64 {
        2.0 * self.scale
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::rng_from_seed;
    use proptest::prelude::*;
    use rand::Rng;

    fn random_vec(n: usize, seed: u64) -> Vec<Complex64> {
        let mut rng = rng_from_seed(seed);
        (0..n)
            .map(|_| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
            .collect()
    }

    #[test]
    fn dft_impulse_gives_constant() {
        let mut x = vec![Complex64::new(0.0, 0.0); 8];
        x[0] = Complex64::new(1.0, 0.0);
        let y = dft(&x).unwrap();
        let want = 1.0 / 8f64.sqrt();
        for v in y {
            assert!((v.re - want).abs() < 1e-12 && v.im.abs() < 1e-12);
        }
    }

    #[test]
    fn dft_of_ones_is_scaled_impulse() {
        let x = vec![Complex64::new(1.0, 0.0); 4];
        let y = dft(&x).unwrap();
        assert!((y[0].re - 2.0).abs() < 1e-12);
        for v in &y[1..] {
            assert!(v.norm() < 1e-12);
        }
    }

    #[test]
    fn idft_inverts_dft_and_preserves_norm() {
        let x = random_vec(512, 1);
        let y = dft(&x).unwrap();
        assert!((norm(&y) - norm(&x)).abs() / norm(&x) < 1e-10);
        let back = idft(&y).unwrap();
        for (a, b) in x.iter().zip(back.iter()) {
            assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn idft_of_impulse_is_unit_magnitude_exponential() {
        let n = 16;
        let mut x = vec![Complex64::new(0.0, 0.0); n];
        x[3] = Complex64::new(1.0, 0.0);
        let y = idft(&x).unwrap();
        let want = 1.0 / (n as f64).sqrt();
        for v in &y {
            assert!((v.norm() - want).abs() < 1e-12);
        }
    }

    #[test]
    fn non_power_of_two_rejected() {
        let x = vec![Complex64::new(1.0, 0.0); 12];
        assert!(matches!(dft(&x), Err(Error::Config(_))));
        assert!(matches!(idft(&x), Err(Error::Config(_))));
    }

    #[test]
    fn papr_constant_vector_is_one() {
        let x = vec![Complex64::new(0.3, -0.4); 64];
        assert!((papr(&x).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn papr_impulse_is_n() {
        let n = 32;
        let mut x = vec![Complex64::new(0.0, 0.0); n];
        x[5] = Complex64::new(0.0, 2.0);
        assert!((papr(&x).unwrap() - n as f64).abs() < 1e-12);
    }

    #[test]
    fn papr_zero_vector_is_error() {
        let x = vec![Complex64::new(0.0, 0.0); 8];
        assert!(matches!(papr(&x), Err(Error::Input(_))));
    }

    #[test]
    fn qam4_all_zero_bits_map_to_first_quadrant() {
        let c = QamConstellation::new(4).unwrap();
        let s = c.map_bits(&[0, 0]).unwrap();
        let want = Complex64::new(1.0 / 2f64.sqrt(), 1.0 / 2f64.sqrt());
        assert!((s[0] - want).norm() < 1e-12);
    }

    #[test]
    fn constellations_have_unit_average_energy() {
        for order in [4, 16, 64] {
            let c = QamConstellation::new(order).unwrap();
            let mean: f64 =
                c.points().iter().map(|p| p.norm_sqr()).sum::<f64>() / order as f64;
            assert!((mean - 1.0).abs() < 1e-12, "order {order}: mean {mean}");
        }
    }

    #[test]
    fn unsupported_order_rejected() {
        assert!(QamConstellation::new(32).is_err());
        assert!(QamConstellation::new(0).is_err());
    }

    #[test]
    fn map_demap_round_trip_all_labels() {
        for order in [4usize, 16, 64] {
            let c = QamConstellation::new(order).unwrap();
            let m = c.bits_per_symbol();
            for k in 0..order {
                let bits: Vec<u8> = (0..m).rev().map(|j| ((k >> j) & 1) as u8).collect();
                let s = c.map_bits(&bits).unwrap();
                let (got, decided) = c.demap(&s);
                assert_eq!(got, bits, "order {order} label {k}");
                assert!((decided[0] - s[0]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn bit_count_mismatch_rejected() {
        let c = QamConstellation::new(16).unwrap();
        assert!(matches!(c.map_bits(&[0, 1, 0]), Err(Error::Input(_))));
    }

    #[test]
    fn gray_property_axis_neighbors_differ_in_one_bit() {
        for order in [4usize, 16, 64] {
            let c = QamConstellation::new(order).unwrap();
            let axis_bits = c.bits_per_symbol() / 2;
            let levels = 1usize << axis_bits;
            for t in 0..levels - 1 {
                let a = c.label_of_level[t];
                let b = c.label_of_level[t + 1];
                assert_eq!((a ^ b).count_ones(), 1, "order {order} level {t}");
            }
        }
    }

    #[test]
    fn decision_midpoint_takes_lowest_index() {
        let c = QamConstellation::new(4).unwrap();
        // Origin is equidistant from all four points; index 0 must win.
        assert_eq!(c.decide(Complex64::new(0.0, 0.0)), 0);
        // Midpoint on one axis only.
        let s = 1.0 / 2f64.sqrt();
        assert_eq!(c.decide(Complex64::new(0.0, s)), 0);
    }

    #[test]
    fn exact_point_is_fixed_point_of_decide() {
        let c = QamConstellation::new(64).unwrap();
        for (k, &p) in c.points().iter().enumerate() {
            assert_eq!(c.decide(p), k);
        }
    }

    // Oracle: exhaustive nearest-neighbor search with lowest-index tie-break.
    fn exhaustive_decide(c: &QamConstellation, z: Complex64) -> usize {
        let mut best = 0usize;
        let mut best_d = f64::INFINITY;
        for (k, &p) in c.points().iter().enumerate() {
            let d = (z - p).norm_sqr();
            if d < best_d {
                best_d = d;
                best = k;
            }
        }
        best
    }

    #[test]
    fn perturbations_below_half_min_distance_never_err() {
        let c = QamConstellation::new(64).unwrap();
        let half = c.min_distance() / 2.0;
        let mut rng = rng_from_seed(9);
        for _ in 0..1000 {
            let k = rng.gen_range(0..64);
            let r = half * 0.999 * rng.gen::<f64>();
            let phi = rng.gen::<f64>() * std::f64::consts::TAU;
            let z = c.point(k) + Complex64::from_polar(r, phi);
            assert_eq!(c.decide(z), k);
            assert_eq!(exhaustive_decide(&c, z), k);
        }
    }

    #[test]
    fn decide_matches_exhaustive_oracle() {
        let c = QamConstellation::new(16).unwrap();
        let mut rng = rng_from_seed(11);
        for _ in 0..5000 {
            let z = Complex64::new(rng.gen::<f64>() * 4.0 - 2.0, rng.gen::<f64>() * 4.0 - 2.0);
            assert_eq!(c.decide(z), exhaustive_decide(&c, z));
        }
    }

    #[test]
    fn demap_is_idempotent() {
        let c = QamConstellation::new(16).unwrap();
        let x = random_vec(128, 3);
        let (bits1, decided1) = c.demap(&x);
        let remapped = c.map_bits(&bits1).unwrap();
        let (bits2, decided2) = c.demap(&remapped);
        assert_eq!(bits1, bits2);
        for (a, b) in decided1.iter().zip(decided2.iter()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn dft_parseval_and_round_trip(seed in 0u64..500, pow in 3u32..11) {
            let n = 1usize << pow;
            let x = random_vec(n, seed);
            let y = dft(&x).unwrap();
            prop_assert!((energy(&y) - energy(&x)).abs() <= 1e-10 * energy(&x));
            let back = idft(&y).unwrap();
            for (a, b) in x.iter().zip(back.iter()) {
                prop_assert!((a - b).norm() < 1e-10);
            }
        }

        #[test]
        fn qam_round_trip_random_bits(seed in 0u64..200) {
            let c = QamConstellation::new(64).unwrap();
            let mut rng = rng_from_seed(seed);
            let bits: Vec<u8> = (0..6 * 32).map(|_| rng.gen_range(0..2u8)).collect();
            let s = c.map_bits(&bits).unwrap();
            let (got, _) = c.demap(&s);
            prop_assert_eq!(got, bits);
        }
    }
}
