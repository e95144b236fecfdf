//! Downlink pilot grid, noisy pilot observations and aliasing checks.

use std::fmt;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::channel::{eval_taps, ChannelEvaluator, DelayGrid, UserChannelModel};
use crate::error::{Error, Result};

/// Slack on the aliasing products. Published parameters are rounded, e.g.
/// a 16.67 µs delay spread at 15 kHz spacing and pilot spacing 4 gives
/// 1.0002 rather than exactly one.
pub const NYQUIST_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PilotPattern {
    /// OFDM symbols between pilot times.
    pub d_t: usize,
    /// Subcarriers between pilot tones.
    pub d_f: usize,
    /// Pilot times per estimation window.
    pub n_t: usize,
    /// Pilot tones per pilot time.
    pub n_f: usize,
}

impl Default for PilotPattern {
    fn default() -> Self {
        Self { d_t: 20, d_f: 4, n_t: 100, n_f: 50 }
    }
}

impl PilotPattern {
    pub fn validate(&self, fft_size: usize) -> Result<()> {
        if self.d_t == 0 || self.d_f == 0 || self.n_t == 0 || self.n_f == 0 {
            return Err(Error::Config(format!("pilot pattern entries must be positive: {self:?}")));
        }
        if self.n_f * self.d_f > fft_size {
            return Err(Error::Config(format!(
                "{} pilot tones spaced {} do not fit in {} subcarriers",
                self.n_f, self.d_f, fft_size
            )));
        }
        Ok(())
    }

    /// Symbols spanned by one estimation window.
    pub fn window_symbols(&self) -> usize {
        self.n_t * self.d_t
    }

    /// Pilot resource elements and pilot energy (in units of the per-element
    /// pilot power) spent over one window.
    ///
    /// In frequency mode each pilot time carries `n_f` tones at unit power.
    /// In time mode each pilot time carries one impulse at power `n_f`
    /// followed by `n_f - 1` zeros, which occupies the same elements.
    pub fn overhead(&self, mode: ObservationMode) -> PilotOverhead {
        let per_time = match mode {
            // n_f tones at unit power
            ObservationMode::Frequency => (self.n_f, self.n_f as f64),
            // impulse plus n_f - 1 zeros, impulse at power n_f
            ObservationMode::Time { .. } => (1 + (self.n_f - 1), self.n_f as f64),
        };
        PilotOverhead {
            elements: self.n_t * per_time.0,
            energy: self.n_t as f64 * per_time.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PilotOverhead {
    pub elements: usize,
    pub energy: f64,
}

/// Aliasing margins of a pilot pattern.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NyquistReport {
    /// `D_f · τ_max · Δf`, must not exceed one.
    pub delay_product: f64,
    /// `2 · D_t · ζ_max · T_sym`, must not exceed one.
    pub doppler_product: f64,
}

impl NyquistReport {
    pub fn delay_ok(&self) -> bool {
        self.delay_product <= 1.0 + NYQUIST_TOLERANCE
    }

    pub fn doppler_ok(&self) -> bool {
        self.doppler_product <= 1.0 + NYQUIST_TOLERANCE
    }

    pub fn passes(&self) -> bool {
        self.delay_ok() && self.doppler_ok()
    }
}

impl fmt::Display for NyquistReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = |ok: bool| if ok { "ok" } else { "ALIASED" };
        write!(
            f,
            "delay product {:.4} ({}), doppler product {:.4} ({})",
            self.delay_product,
            verdict(self.delay_ok()),
            self.doppler_product,
            verdict(self.doppler_ok())
        )
    }
}

/// Aliasing products for a pattern, given `τ_max·Δf` and `ζ_max·T_sym`.
pub fn check_nyquist(pattern: &PilotPattern, tau_max_norm: f64, zeta_max_norm: f64) -> NyquistReport {
    NyquistReport {
        delay_product: pattern.d_f as f64 * tau_max_norm,
        doppler_product: 2.0 * pattern.d_t as f64 * zeta_max_norm,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservationMode {
    /// Channel sampled on the pilot tones.
    Frequency,
    /// Impulse pilots: the time-domain taps observed directly.
    Time { num_taps: usize },
}

/// Noisy pilot samples for one user, laid out `[pilot time][column][antenna]`
/// where a column is a pilot tone or a tap.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotObservations {
    pub pattern: PilotPattern,
    pub mode: ObservationMode,
    pub noise_variance: f64,
    pub num_antennas: usize,
    /// Symbol index of the first pilot time.
    pub first_symbol: usize,
    grid: Vec<Complex64>,
}

impl PilotObservations {
    pub fn new(
        pattern: PilotPattern,
        mode: ObservationMode,
        noise_variance: f64,
        num_antennas: usize,
        first_symbol: usize,
        grid: Vec<Complex64>,
    ) -> Result<Self> {
        let obs = Self { pattern, mode, noise_variance, num_antennas, first_symbol, grid };
        if obs.grid.len() != obs.num_times() * obs.num_columns() * num_antennas || obs.num_times() == 0 {
            return Err(Error::Config(format!(
                "observation grid of {} samples does not match {} columns x {} antennas",
                obs.grid.len(),
                obs.num_columns(),
                num_antennas
            )));
        }
        Ok(obs)
    }

    pub fn num_columns(&self) -> usize {
        match self.mode {
            ObservationMode::Frequency => self.pattern.n_f,
            ObservationMode::Time { num_taps } => num_taps,
        }
    }

    /// Number of pilot times held, usually `pattern.n_t`.
    pub fn num_times(&self) -> usize {
        self.grid.len().checked_div(self.num_columns() * self.num_antennas).unwrap_or(0)
    }

    pub fn get(&self, q: usize, column: usize, antenna: usize) -> Complex64 {
        self.grid[(q * self.num_columns() + column) * self.num_antennas + antenna]
    }

    /// One pilot time, laid out `[column][antenna]`.
    pub fn row(&self, q: usize) -> &[Complex64] {
        let stride = self.num_columns() * self.num_antennas;
        &self.grid[q * stride..(q + 1) * stride]
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.grid
    }

    /// Symbol index of pilot time `q`.
    pub fn symbol_of(&self, q: usize) -> usize {
        self.first_symbol + q * self.pattern.d_t
    }
}

pub(crate) fn noise_sample<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * (variance / 2.0).sqrt()
}

/// Noise variance of a pilot tone at the given linear pilot SNR.
pub fn pilot_noise_variance(pilot_snr: f64) -> f64 {
    if pilot_snr.is_infinite() {
        0.0
    } else {
        pilot_snr.recip()
    }
}

/// One pilot time on the frequency grid, `[tone][antenna]`.
pub fn freq_row<R: Rng + ?Sized>(
    evaluator: &ChannelEvaluator,
    phasors: &[Complex64],
    symbol: usize,
    noise_variance: f64,
    rng: &mut R,
) -> Vec<Complex64> {
    let tones = phasors.len() / evaluator.num_paths().max(1);
    let mut row = vec![Complex64::new(0.0, 0.0); tones * evaluator.num_antennas()];
    evaluator.response(symbol as f64, phasors, &mut row);
    for z in row.iter_mut() {
        *z += noise_sample(rng, noise_variance);
    }
    row
}

/// Pilot tone indices `m·D_f` for `m = 0..N_f`.
pub fn pilot_tones(pattern: &PilotPattern) -> Vec<f64> {
    (0..pattern.n_f).map(|m| (m * pattern.d_f) as f64).collect()
}

/// Samples the channel on the pilot grid starting at symbol 0 and adds
/// complex Gaussian noise of variance `1/pilot_snr`.
pub fn observe_freq<R: Rng + ?Sized>(
    model: &UserChannelModel,
    pattern: &PilotPattern,
    pilot_snr: f64,
    rng: &mut R,
) -> PilotObservations {
    let evaluator = ChannelEvaluator::new(model);
    let phasors = evaluator.delay_phasors(&pilot_tones(pattern));
    let sigma2 = pilot_noise_variance(pilot_snr);
    let mut grid = Vec::with_capacity(pattern.n_t * pattern.n_f * model.num_antennas);
    for q in 0..pattern.n_t {
        grid.extend(freq_row(&evaluator, &phasors, q * pattern.d_t, sigma2, rng));
    }
    PilotObservations::new(*pattern, ObservationMode::Frequency, sigma2, model.num_antennas, 0, grid)
        .expect("grid built to pattern dimensions")
}

/// One pilot time of impulse-pilot taps, `[tap][antenna]`.
pub fn time_row<R: Rng + ?Sized>(
    model: &UserChannelModel,
    grid: &DelayGrid,
    symbol: usize,
    tap_noise_variance: f64,
    rng: &mut R,
) -> Result<Vec<Complex64>> {
    let taps = eval_taps(model, symbol as f64, grid)?;
    let mut row = Vec::with_capacity(grid.num_taps * model.num_antennas);
    for l in 0..grid.num_taps {
        for antenna in &taps {
            row.push(antenna[l] + noise_sample(rng, tap_noise_variance));
        }
    }
    Ok(row)
}

/// Observes the time-domain taps through impulse pilots. The impulse carries
/// `N_f` times the per-tone pilot power, so each tap sees noise variance
/// `1/(pilot_snr·N_f)`.
pub fn observe_time<R: Rng + ?Sized>(
    model: &UserChannelModel,
    pattern: &PilotPattern,
    grid: &DelayGrid,
    pilot_snr: f64,
    rng: &mut R,
) -> Result<PilotObservations> {
    if grid.num_taps > pattern.n_f {
        return Err(Error::Config(format!(
            "impulse pilots need at least {} zeros after the impulse, pattern has {} tones",
            grid.num_taps, pattern.n_f
        )));
    }
    model.tap_indices(grid)?;
    let sigma2 = pilot_noise_variance(pilot_snr) / pattern.n_f as f64;
    let mut samples = Vec::with_capacity(pattern.n_t * grid.num_taps * model.num_antennas);
    for q in 0..pattern.n_t {
        samples.extend(time_row(model, grid, q * pattern.d_t, sigma2, rng)?);
    }
    PilotObservations::new(
        *pattern,
        ObservationMode::Time { num_taps: grid.num_taps },
        sigma2,
        model.num_antennas,
        0,
        samples,
    )
}
