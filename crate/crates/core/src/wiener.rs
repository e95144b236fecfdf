//! One-step MMSE prediction of time-domain channel taps.
//!
//! Each (tap, antenna) pair is an independent stationary process sampled
//! once per pilot time. A predictor keeps the last `Q` samples and
//! exponentially weighted second-order statistics, and predicts the next
//! sample as `wᴴ b` where `b` holds the buffered samples, most recent first,
//! and `(R̂ + δI) w = p̂`. The base station holds the prediction for the
//! whole pilot block.

use std::collections::VecDeque;
use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::DelayGrid;
use crate::linalg::{solve_hermitian, CMatrix, ZERO};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WienerConfig {
    /// Filter order `Q`.
    pub order: usize,
    /// Forgetting factor `λ`.
    pub forgetting: f64,
    /// Diagonal loading relative to the zero-lag power, `δ = loading · r̂[0]`.
    pub loading: f64,
}

impl Default for WienerConfig {
    fn default() -> Self {
        Self { order: 8, forgetting: 0.99, loading: 1e-4 }
    }
}

/// Predictor state of one scalar tap process.
#[derive(Debug, Clone)]
pub struct TapPredictor {
    cfg: WienerConfig,
    /// Most recent sample first.
    buffer: VecDeque<Complex64>,
    /// `r̂[d]`, exponentially weighted `conj(x[now-d])·x[now]`.
    lags: Vec<Complex64>,
    cov: CMatrix,
    cross: Vec<Complex64>,
    updates: usize,
}

impl TapPredictor {
    pub fn new(cfg: WienerConfig) -> Self {
        let q = cfg.order.max(1);
        Self {
            cfg: WienerConfig { order: q, ..cfg },
            buffer: VecDeque::with_capacity(q + 1),
            lags: vec![ZERO; q + 1],
            cov: CMatrix::zeros(q, q),
            cross: vec![ZERO; q],
            updates: 0,
        }
    }

    pub fn lags(&self) -> &[Complex64] {
        &self.lags
    }

    pub fn buffer_len(&self) -> usize {
        self.buffer.len()
    }

    /// Number of samples absorbed so far.
    pub fn updates(&self) -> usize {
        self.updates
    }

    pub fn last(&self) -> Option<Complex64> {
        self.buffer.front().copied()
    }

    pub fn update(&mut self, x: Complex64) {
        let lam = self.cfg.forgetting;
        let q = self.cfg.order;
        self.lags[0] = lam * self.lags[0] + (1.0 - lam) * x.norm_sqr();
        for d in 1..=q {
            if let Some(past) = self.buffer.get(d - 1) {
                self.lags[d] = lam * self.lags[d] + (1.0 - lam) * past.conj() * x;
            }
        }
        if self.buffer.len() == q {
            for i in 0..q {
                self.cross[i] = lam * self.cross[i] + (1.0 - lam) * self.buffer[i] * x.conj();
                for j in 0..q {
                    self.cov[(i, j)] = lam * self.cov[(i, j)] + (1.0 - lam) * self.buffer[i] * self.buffer[j].conj();
                }
            }
        }
        self.buffer.push_front(x);
        self.buffer.truncate(q);
        self.updates += 1;
    }

    /// Current filter `w`, once more than `Q` samples have been seen.
    pub fn coefficients(&self) -> Option<Vec<Complex64>> {
        let q = self.cfg.order;
        if self.updates <= q {
            return None;
        }
        let delta = self.cfg.loading * self.lags[0].re;
        let mut a = self.cov.clone();
        for i in 0..q {
            a[(i, i)] += delta;
        }
        let b = CMatrix::from_column_slice(q, 1, &self.cross);
        let w = solve_hermitian(&a, &b)?;
        let w: Vec<Complex64> = w.iter().copied().collect();
        w.iter().all(|z| z.re.is_finite() && z.im.is_finite()).then_some(w)
    }

    /// Applies `w` to the current buffer.
    pub fn apply(&self, w: &[Complex64]) -> Complex64 {
        w.iter().zip(&self.buffer).map(|(wi, bi)| wi.conj() * bi).sum()
    }

    /// One-step prediction, or `None` before warm-up or when the normal
    /// equations cannot be solved.
    pub fn predict(&self) -> Option<Complex64> {
        if self.lags[0].re <= 0.0 {
            return self.last();
        }
        self.coefficients().map(|w| self.apply(&w))
    }
}

/// Tap predictors for every tap and antenna of one user.
#[derive(Debug, Clone)]
pub struct WienerPredictor {
    grid: DelayGrid,
    num_antennas: usize,
    /// Laid out `[tap][antenna]`.
    taps: Vec<TapPredictor>,
}

/// Predicted taps plus the number of processes that fell back to holding
/// their last sample.
#[derive(Debug, Clone, PartialEq)]
pub struct TapPrediction {
    /// Laid out `[tap][antenna]`.
    pub taps: Vec<Complex64>,
    pub fallbacks: usize,
}

impl WienerPredictor {
    pub fn new(grid: DelayGrid, num_antennas: usize, cfg: WienerConfig) -> Self {
        Self {
            grid,
            num_antennas,
            taps: vec![TapPredictor::new(cfg); grid.num_taps * num_antennas],
        }
    }

    pub fn grid(&self) -> DelayGrid {
        self.grid
    }

    pub fn tap(&self, l: usize, antenna: usize) -> &TapPredictor {
        &self.taps[l * self.num_antennas + antenna]
    }

    /// Absorbs one pilot time of observed taps, laid out `[tap][antenna]`.
    pub fn update(&mut self, observed: &[Complex64]) {
        for (p, &x) in self.taps.iter_mut().zip(observed) {
            p.update(x);
        }
    }

    pub fn predict(&self) -> TapPrediction {
        let mut fallbacks = 0;
        let taps = self
            .taps
            .iter()
            .map(|p| {
                p.predict().unwrap_or_else(|| {
                    fallbacks += 1;
                    p.last().unwrap_or(ZERO)
                })
            })
            .collect();
        TapPrediction { taps, fallbacks }
    }
}

/// DFT twiddles `exp(-j2π l n / N)` for the given subcarriers, laid out
/// `[subcarrier][tap]`.
pub fn dft_twiddles(grid: &DelayGrid, subcarriers: &[f64]) -> Vec<Complex64> {
    subcarriers
        .iter()
        .flat_map(|&n| {
            (0..grid.num_taps).map(move |l| Complex64::from_polar(1.0, -2.0 * PI * l as f64 * n / grid.fft_size as f64))
        })
        .collect()
}

/// Frequency response of `[tap][antenna]` taps on the subcarriers whose
/// twiddles are given; output laid out `[subcarrier][antenna]`.
pub fn taps_to_freq(taps: &[Complex64], num_antennas: usize, twiddles: &[Complex64], out: &mut [Complex64]) {
    let num_taps = taps.len() / num_antennas;
    for (s, dst) in out.chunks_mut(num_antennas).enumerate() {
        dst.fill(ZERO);
        for l in 0..num_taps {
            let tw = twiddles[s * num_taps + l];
            for (h, x) in dst.iter_mut().zip(&taps[l * num_antennas..(l + 1) * num_antennas]) {
                *h += tw * x;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pilot::noise_sample;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn constant_tap_is_predicted_exactly() {
        let c = Complex64::new(0.3, -0.4);
        let mut p = TapPredictor::new(WienerConfig::default());
        assert!(p.predict().is_none());
        for _ in 0..600 {
            p.update(c);
        }
        for &r in p.lags() {
            assert!((r - c.norm_sqr()).norm() < 1e-2);
        }
        assert!((p.predict().unwrap() - c).norm() < 1e-4);
    }

    #[test]
    fn zero_forgetting_keeps_instantaneous_products() {
        let cfg = WienerConfig { forgetting: 0.0, ..WienerConfig::default() };
        let mut p = TapPredictor::new(cfg);
        let a = Complex64::new(1.0, 2.0);
        let b = Complex64::new(-0.5, 0.25);
        p.update(a);
        p.update(b);
        assert_eq!(p.lags()[0], Complex64::new(b.norm_sqr(), 0.0));
        assert_eq!(p.lags()[1], a.conj() * b);
    }

    #[test]
    fn pure_tone_lags_and_single_tap_filter() {
        let omega = 0.37;
        let cfg = WienerConfig { order: 1, forgetting: 0.99, loading: 0.0 };
        let mut p = TapPredictor::new(cfg);
        for q in 0..2000 {
            p.update(Complex64::from_polar(1.0, omega * q as f64));
        }
        let r1 = p.lags()[1];
        assert!((r1.norm() - 1.0).abs() < 1e-6);
        assert!((r1.arg() - omega).abs() < 1e-9);
        let w = p.coefficients().unwrap();
        assert!((w[0] - Complex64::from_polar(1.0, -omega)).norm() < 1e-9);
        let next = Complex64::from_polar(1.0, omega * 2000.0);
        assert!((p.predict().unwrap() - next).norm() < 1e-9);
    }

    #[test]
    fn ar1_coefficient_converges() {
        let a = Complex64::from_polar(0.9, 0.3);
        let cfg = WienerConfig { order: 2, forgetting: 0.999, loading: 1e-6 };
        let mut p = TapPredictor::new(cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut x = ZERO;
        for _ in 0..10_000 {
            x = a * x + noise_sample(&mut rng, 1.0 - a.norm_sqr());
            p.update(x);
        }
        let w = p.coefficients().unwrap();
        // optimal filter is w = [conj(a), 0]
        assert!((w[0] - a.conj()).norm() / a.norm() < 0.05, "{w:?}");
        assert!(w[1].norm() < 0.05);
    }

    #[test]
    fn beats_hold_last_on_stationary_mixture() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut p = TapPredictor::new(WienerConfig::default());
        let (mut mse_w, mut mse_h) = (0.0, 0.0);
        for q in 0..20_000 {
            let t = q as f64;
            let x = Complex64::from_polar(0.8, 0.21 * t)
                + Complex64::from_polar(0.5, -0.6 * t + 1.0)
                + noise_sample(&mut rng, 0.01);
            if q > 500 {
                mse_w += (p.predict().unwrap() - x).norm_sqr();
                mse_h += (p.last().unwrap() - x).norm_sqr();
            }
            p.update(x);
        }
        assert!(mse_w <= mse_h * 1.05, "{mse_w} vs {mse_h}");
    }

    #[test]
    fn prediction_commutes_with_dft() {
        let grid = DelayGrid { fft_size: 64, num_taps: 6 };
        let mut pred = WienerPredictor::new(grid, 1, WienerConfig::default());
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut history = Vec::new();
        for q in 0..40 {
            let row: Vec<Complex64> = (0..6)
                .map(|l| Complex64::from_polar(1.0, 0.1 * (l + 1) as f64 * q as f64) + noise_sample(&mut rng, 0.01))
                .collect();
            pred.update(&row);
            history.push(row);
        }
        // one shared filter applied in either domain gives the same answer
        let w = pred.tap(0, 0).coefficients().unwrap();
        let subcarriers = [0.0, 5.0, 17.0, 40.0];
        let tw = dft_twiddles(&grid, &subcarriers);
        let tap_pred: Vec<Complex64> = (0..6).map(|l| pred.tap(l, 0).apply(&w)).collect();
        let mut via_taps = vec![ZERO; subcarriers.len()];
        taps_to_freq(&tap_pred, 1, &tw, &mut via_taps);
        let mut via_freq = vec![ZERO; subcarriers.len()];
        for (i, wi) in w.iter().enumerate() {
            let mut h = vec![ZERO; subcarriers.len()];
            taps_to_freq(&history[history.len() - 1 - i], 1, &tw, &mut h);
            for (acc, x) in via_freq.iter_mut().zip(h) {
                *acc += wi.conj() * x;
            }
        }
        for (a, b) in via_taps.iter().zip(&via_freq) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn zero_lag_is_real_and_nonnegative(xs in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..60)) {
            let mut p = TapPredictor::new(WienerConfig::default());
            for (re, im) in xs {
                p.update(Complex64::new(re, im));
                prop_assert!(p.lags()[0].re >= 0.0 && p.lags()[0].im == 0.0);
                prop_assert!(p.buffer_len() <= 8);
            }
        }
    }
}
