//! Stand-alone prediction accuracy of a single terminal, used to place a
//! channel type in the predictability taxonomy.

use num_complex::Complex64;

use crate::channel::{validity_horizon, ChannelEvaluator};
use crate::error::Result;
use crate::esprit::estimate;
use crate::linalg::ZERO;
use crate::pilot::{freq_row, pilot_noise_variance, pilot_tones, time_row, ObservationMode, PilotObservations};
use crate::wiener::{dft_twiddles, taps_to_freq, WienerPredictor};

use super::config::{PredictorKind, ScenarioConfig};
use super::run::user_channel;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictionError {
    /// `Σ‖ĥ − h‖² / Σ‖h‖²` over the horizon and evaluation subcarriers.
    pub nmse: f64,
    /// Symbols predicted past the end of the estimation window.
    pub horizon: usize,
}

/// Prediction NMSE of user `user` over the horizon following one estimation
/// window of `N_t` pilots. The horizon is `min(T_valid, N_t·D_t)`; channels
/// are compared every `D_t / rate_samples` symbols.
///
/// The batch predictor extrapolates one estimate over the whole horizon.
/// The frame-by-frame predictor keeps absorbing pilots and holds each
/// one-step prediction over its block.
pub fn prediction_error(cfg: &ScenarioConfig, user: usize, predictor: PredictorKind) -> Result<PredictionError> {
    cfg.validate()?;
    let (model, mut rng) = user_channel(cfg, user)?;
    let evaluator = ChannelEvaluator::new(&model);
    let pattern = cfg.pilot;
    let m = cfg.num_antennas;
    let window = pattern.window_symbols();
    let horizon = validity_horizon(&cfg.mobility(user), cfg.symbol_duration).symbols_or(window as u64) as usize;
    let stride = (pattern.d_t / cfg.rate_samples).max(1);
    let eval_sc = cfg.evaluation_subcarriers();
    let true_phasors = evaluator.delay_phasors(&eval_sc);
    let sigma2 = pilot_noise_variance(cfg.pilot_snr());
    let mut truth = vec![ZERO; eval_sc.len() * m];
    let mut pred = vec![ZERO; eval_sc.len() * m];
    let (mut num, mut den) = (0.0, 0.0);
    let mut accumulate = |pred: &[Complex64], truth: &[Complex64]| {
        for (p, h) in pred.iter().zip(truth) {
            num += (p - h).norm_sqr();
            den += h.norm_sqr();
        }
    };

    match predictor {
        PredictorKind::Esprit => {
            let phasors = evaluator.delay_phasors(&pilot_tones(&pattern));
            let mut grid = Vec::with_capacity(pattern.n_t * pattern.n_f * m);
            for q in 0..pattern.n_t {
                grid.extend(freq_row(&evaluator, &phasors, q * pattern.d_t, sigma2, &mut rng));
            }
            let obs = PilotObservations::new(pattern, ObservationMode::Frequency, sigma2, m, 0, grid)?;
            let est = estimate(&obs, &cfg.esprit)?;
            let est_phasors = est.delay_phasors(&eval_sc);
            for t in (window..window + horizon).step_by(stride) {
                est.response(t as f64, &est_phasors, &mut pred);
                evaluator.response(t as f64, &true_phasors, &mut truth);
                accumulate(&pred, &truth);
            }
        }
        PredictorKind::Wiener => {
            let grid = cfg.delay_grid();
            let twiddles = dft_twiddles(&grid, &eval_sc);
            let tap_var = sigma2 / pattern.n_f as f64;
            let mut wiener = WienerPredictor::new(grid, m, cfg.wiener);
            let end = window + horizon;
            for q in 0..end.div_ceil(pattern.d_t) {
                let start = q * pattern.d_t;
                if start >= window {
                    taps_to_freq(&wiener.predict().taps, m, &twiddles, &mut pred);
                    for t in (start..(start + pattern.d_t).min(end)).step_by(stride) {
                        evaluator.response(t as f64, &true_phasors, &mut truth);
                        accumulate(&pred, &truth);
                    }
                }
                wiener.update(&time_row(&model, &grid, start, tap_var, &mut rng)?);
            }
        }
    }
    Ok(PredictionError { nmse: num / den, horizon })
}
