//! Parametric channel prediction by two-dimensional ESPRIT.
//!
//! On the pilot grid the channel of one antenna is a two-dimensional sum of
//! complex exponentials,
//!
//! ```text
//! Y[q, f] = Σ_p Σ_r A_{r,p} · exp(j ω_{r,p} q) · exp(-j v_p f) + noise
//! ```
//!
//! with `ω = 2π ζ D_t` and `v = 2π τ D_f`. Delays are estimated first from
//! the frequency direction, the per-path time series are then separated by
//! least squares and their Doppler frequencies estimated along time. A joint
//! least-squares fit over the whole grid gives the amplitudes, after which
//! the channel can be evaluated at any symbol and subcarrier.
//!
//! Delay frequencies are reported on `[0, 2π)`: delays are non-negative and
//! the pilot spacing keeps `v` below one full turn, so this branch (not the
//! principal one) is the one that interpolates correctly between pilot
//! tones. Doppler frequencies use the principal branch `(-π, π]`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{eigenvalues, geometric_phasor_sum, hermitian_eigen_desc, least_squares, CMatrix, ZERO};
use crate::pilot::{ObservationMode, PilotObservations, PilotPattern};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelOrder {
    /// Count eigenvalues above `rho` times the median of the trailing half.
    EigenRatio { rho: f64 },
    /// Fixed number of delays and of Dopplers per delay.
    Fixed { paths: usize, per_path: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftSolver {
    LeastSquares,
    TotalLeastSquares,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EspritConfig {
    /// Smoothing window along frequency; defaults to `N_f / 2`.
    pub window_freq: Option<usize>,
    /// Smoothing window along time; defaults to `N_t / 2`.
    pub window_time: Option<usize>,
    pub order: ModelOrder,
    pub solver: ShiftSolver,
    /// Components whose energy over the window falls below this multiple of
    /// the residual noise variance are dropped and the rest refitted.
    /// Thin covariance estimates (one antenna, window near half the series)
    /// let a few noise eigenvalues through the order rule; this removes them.
    pub min_component_snr: f64,
}

impl Default for EspritConfig {
    fn default() -> Self {
        Self {
            window_freq: None,
            window_time: None,
            order: ModelOrder::EigenRatio { rho: 10.0 },
            solver: ShiftSolver::LeastSquares,
            min_component_snr: 10.0,
        }
    }
}

impl EspritConfig {
    fn window(explicit: Option<usize>, len: usize, what: &str) -> Result<usize> {
        let w = explicit.unwrap_or(len / 2);
        if w < 2 || w > len / 2 + 1 {
            return Err(Error::Config(format!(
                "{what} smoothing window {w} must lie in 2..={} for {len} samples",
                len / 2 + 1
            )));
        }
        Ok(w)
    }

    pub fn freq_window(&self, pattern: &PilotPattern) -> Result<usize> {
        Self::window(self.window_freq, pattern.n_f, "frequency")
    }

    pub fn time_window(&self, num_times: usize) -> Result<usize> {
        Self::window(self.window_time, num_times, "time")
    }
}

/// One Doppler component of a path with its per-antenna amplitudes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DopplerComponent {
    /// Radians per pilot-time step.
    pub doppler_freq: f64,
    pub amplitudes: Vec<Complex64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathEstimate {
    /// Radians per pilot-tone step, on `[0, 2π)`.
    pub delay_freq: f64,
    pub components: Vec<DopplerComponent>,
}

/// Estimated frequencies grouped by path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathFrequencies {
    pub delay_freq: f64,
    pub doppler_freqs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SinusoidEstimate {
    pub paths: Vec<PathEstimate>,
    pub num_antennas: usize,
    pub pattern: PilotPattern,
    /// Symbol index of pilot time zero of the fitted window.
    pub origin_symbol: usize,
    /// Squared norm of the least-squares residual over the fitted window.
    pub residual: f64,
}

fn wrap_positive(angle: f64) -> f64 {
    let a = angle.rem_euclid(2.0 * PI);
    if a >= 2.0 * PI {
        0.0
    } else {
        a
    }
}

fn model_order(eigs: &[f64], rule: ModelOrder, fixed: usize) -> usize {
    let len = eigs.len();
    let k = match rule {
        ModelOrder::Fixed { .. } => fixed,
        ModelOrder::EigenRatio { rho } => {
            let mut tail = eigs[len / 2..].to_vec();
            tail.sort_by(f64::total_cmp);
            let median = tail[tail.len() / 2].max(0.0);
            let floor = (rho * median).max(1e-10 * eigs[0].max(0.0));
            eigs.iter().filter(|&&e| e > floor).count()
        }
    };
    k.min(len - 1)
}

/// Rotations `z_k` of the dominant modes of a set of snapshot sequences.
///
/// Every length-`window` stretch of every snapshot contributes to a
/// forward-backward averaged covariance whose signal subspace satisfies
/// `U[1..] = U[..L-1] Ψ`; the eigenvalues of `Ψ` are returned.
fn rotations(
    snapshots: &[Vec<Complex64>],
    window: usize,
    rule: ModelOrder,
    fixed: usize,
    solver: ShiftSolver,
) -> Vec<Complex64> {
    let len = snapshots.first().map_or(0, Vec::len);
    if len < window {
        return Vec::new();
    }
    let per = len - window + 1;
    let mut data = CMatrix::zeros(window, snapshots.len() * per);
    for (s, snap) in snapshots.iter().enumerate() {
        for i in 0..per {
            let col = s * per + i;
            for r in 0..window {
                data[(r, col)] = snap[i + r];
            }
        }
    }
    let forward = &data * data.adjoint();
    let backward = CMatrix::from_fn(window, window, |r, c| forward[(window - 1 - r, window - 1 - c)].conj());
    let cov = (forward + backward) * Complex64::new(0.5, 0.0);
    let (eigs, vecs) = hermitian_eigen_desc(cov);
    if eigs[0] <= 0.0 {
        return Vec::new();
    }
    let k = model_order(&eigs, rule, fixed);
    if k == 0 {
        return Vec::new();
    }
    let us = vecs.columns(0, k).into_owned();
    let upper = us.rows(0, window - 1).into_owned();
    let lower = us.rows(1, window - 1).into_owned();
    let psi = match solver {
        ShiftSolver::LeastSquares => least_squares(&upper, &lower),
        ShiftSolver::TotalLeastSquares => total_least_squares(&upper, &lower),
    };
    eigenvalues(&psi).unwrap_or_default()
}

fn total_least_squares(upper: &CMatrix, lower: &CMatrix) -> CMatrix {
    let k = upper.ncols();
    let mut stacked = CMatrix::zeros(upper.nrows(), 2 * k);
    stacked.columns_mut(0, k).copy_from(upper);
    stacked.columns_mut(k, k).copy_from(lower);
    let gram = stacked.adjoint() * &stacked;
    let (_, v) = hermitian_eigen_desc(gram);
    // right singular vectors, largest first
    let v12 = v.view((0, k), (k, k)).into_owned();
    let v22 = v.view((k, k), (k, k)).into_owned();
    match v22.clone().try_inverse() {
        Some(inv) => -(v12 * inv),
        None => least_squares(upper, lower),
    }
}

fn require_frequency_mode(obs: &PilotObservations) -> Result<()> {
    match obs.mode {
        ObservationMode::Frequency => Ok(()),
        ObservationMode::Time { .. } => Err(Error::Config(
            "ESPRIT prediction needs frequency-domain pilot observations".into(),
        )),
    }
}

/// Delay frequencies `v̂_p` on `[0, 2π)`; empty when no eigenvalue clears the
/// model-order threshold.
pub fn estimate_delays(obs: &PilotObservations, cfg: &EspritConfig) -> Result<Vec<f64>> {
    require_frequency_mode(obs)?;
    let window = cfg.freq_window(&obs.pattern)?;
    cfg.time_window(obs.num_times())?;
    let n_f = obs.pattern.n_f;
    let m = obs.num_antennas;
    let mut snapshots = Vec::with_capacity(obs.num_times() * m);
    for q in 0..obs.num_times() {
        let row = obs.row(q);
        for a in 0..m {
            snapshots.push((0..n_f).map(|f| row[f * m + a]).collect());
        }
    }
    let fixed = match cfg.order {
        ModelOrder::Fixed { paths, .. } => paths,
        ModelOrder::EigenRatio { .. } => 0,
    };
    let mut delays: Vec<f64> = rotations(&snapshots, window, cfg.order, fixed, cfg.solver)
        .into_iter()
        .map(|z| wrap_positive(-z.arg()))
        .collect();
    delays.sort_by(f64::total_cmp);
    Ok(delays)
}

/// Steering matrix `exp(-j v_p f)` over the pilot tones.
fn delay_dictionary(delays: &[f64], n_f: usize) -> CMatrix {
    CMatrix::from_fn(n_f, delays.len(), |f, p| Complex64::from_polar(1.0, -delays[p] * f as f64))
}

/// Per-path time series separated from the observation rows by least
/// squares against the delay dictionary; laid out `[path][antenna][q]`.
fn path_series(obs: &PilotObservations, delays: &[f64]) -> Vec<Vec<Vec<Complex64>>> {
    let n_f = obs.pattern.n_f;
    let m = obs.num_antennas;
    let n_t = obs.num_times();
    let rhs = CMatrix::from_fn(n_f, n_t * m, |f, col| obs.row(col / m)[f * m + col % m]);
    let coeffs = least_squares(&delay_dictionary(delays, n_f), &rhs);
    (0..delays.len())
        .map(|p| (0..m).map(|a| (0..n_t).map(|q| coeffs[(p, q * m + a)]).collect()).collect())
        .collect()
}

/// Doppler frequencies per delay, principal branch.
pub fn estimate_dopplers(obs: &PilotObservations, delays: &[f64], cfg: &EspritConfig) -> Result<Vec<Vec<f64>>> {
    require_frequency_mode(obs)?;
    if delays.is_empty() {
        return Ok(Vec::new());
    }
    let window = cfg.time_window(obs.num_times())?;
    let fixed = match cfg.order {
        ModelOrder::Fixed { per_path, .. } => per_path,
        ModelOrder::EigenRatio { .. } => 0,
    };
    Ok(path_series(obs, delays)
        .into_iter()
        .map(|series| {
            let mut w: Vec<f64> = rotations(&series, window, cfg.order, fixed, cfg.solver)
                .into_iter()
                .map(|z| z.arg())
                .collect();
            w.sort_by(f64::total_cmp);
            w
        })
        .collect())
}

/// Two frequency pairs closer than this in both coordinates are treated as
/// one sinusoid.
const DUPLICATE_TOL: f64 = 1e-9;

/// Joint least-squares amplitudes for the given frequency pairs.
///
/// The dictionary over the `N_t × N_f` grid is separable, so its Gram matrix
/// is a product of two geometric sums and the right-hand side is obtained by
/// projecting each observation row on the path steering vectors.
pub fn fit_amplitudes(obs: &PilotObservations, frequencies: &[PathFrequencies]) -> Result<SinusoidEstimate> {
    require_frequency_mode(obs)?;
    let n_f = obs.pattern.n_f;
    let n_t = obs.num_times();
    let m = obs.num_antennas;
    let energy: f64 = obs.samples().iter().map(|z| z.norm_sqr()).sum();

    let mut pairs: Vec<(f64, f64)> = Vec::new();
    for path in frequencies {
        for &w in &path.doppler_freqs {
            let dup = pairs
                .iter()
                .any(|&(v, o)| (v - path.delay_freq).abs() < DUPLICATE_TOL && (o - w).abs() < DUPLICATE_TOL);
            if dup {
                log::warn!("merging duplicate frequency pair ({}, {w})", path.delay_freq);
            } else {
                pairs.push((path.delay_freq, w));
            }
        }
    }
    let empty = SinusoidEstimate {
        paths: Vec::new(),
        num_antennas: m,
        pattern: obs.pattern,
        origin_symbol: obs.first_symbol,
        residual: energy,
    };
    if pairs.is_empty() {
        return Ok(empty);
    }

    let k = pairs.len();
    let mut gram = CMatrix::from_fn(k, k, |r, c| {
        let (vr, wr) = pairs[r];
        let (vc, wc) = pairs[c];
        geometric_phasor_sum(wc - wr, n_t) * geometric_phasor_sum(vr - vc, n_f)
    });

    // projections of each row on exp(-j v f), one per distinct delay
    let mut delays: Vec<f64> = Vec::new();
    let mut delay_of = Vec::with_capacity(k);
    for &(v, _) in &pairs {
        let idx = match delays.iter().position(|&d| d == v) {
            Some(i) => i,
            None => {
                delays.push(v);
                delays.len() - 1
            }
        };
        delay_of.push(idx);
    }
    let mut proj = vec![ZERO; delays.len() * n_t * m];
    for (d, &v) in delays.iter().enumerate() {
        let steer: Vec<Complex64> = (0..n_f).map(|f| Complex64::from_polar(1.0, v * f as f64)).collect();
        for q in 0..n_t {
            let row = obs.row(q);
            for a in 0..m {
                let s: Complex64 = (0..n_f).map(|f| steer[f] * row[f * m + a]).sum();
                proj[(d * n_t + q) * m + a] = s;
            }
        }
    }
    let rhs = CMatrix::from_fn(k, m, |r, a| {
        let (_, w) = pairs[r];
        let d = delay_of[r];
        (0..n_t)
            .map(|q| Complex64::from_polar(1.0, -w * q as f64) * proj[(d * n_t + q) * m + a])
            .sum()
    });

    let scale = (0..k).map(|i| gram[(i, i)].re).fold(0.0, f64::max);
    for i in 0..k {
        gram[(i, i)] += Complex64::new(1e-12 * scale, 0.0);
    }
    let amps = match gram.clone().cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => least_squares(&gram, &rhs),
    };

    let mut paths: Vec<PathEstimate> = delays
        .iter()
        .map(|&v| PathEstimate { delay_freq: v, components: Vec::new() })
        .collect();
    for (r, &(_, w)) in pairs.iter().enumerate() {
        paths[delay_of[r]].components.push(DopplerComponent {
            doppler_freq: w,
            amplitudes: (0..m).map(|a| amps[(r, a)]).collect(),
        });
    }
    let mut est = SinusoidEstimate { paths, ..empty };
    est.residual = est.residual_on(obs);
    Ok(est)
}

/// Full pipeline: delays, Dopplers per delay, joint amplitude fit.
pub fn estimate(obs: &PilotObservations, cfg: &EspritConfig) -> Result<SinusoidEstimate> {
    let delays = estimate_delays(obs, cfg)?;
    let dopplers = estimate_dopplers(obs, &delays, cfg)?;
    let frequencies: Vec<PathFrequencies> = delays
        .into_iter()
        .zip(dopplers)
        .filter(|(_, w)| !w.is_empty())
        .map(|(delay_freq, doppler_freqs)| PathFrequencies { delay_freq, doppler_freqs })
        .collect();
    let est = fit_amplitudes(obs, &frequencies)?;
    let samples = obs.samples().len();
    let k = est.num_components();
    if cfg.min_component_snr <= 0.0 || k == 0 || samples <= k * obs.num_antennas {
        return Ok(est);
    }
    let noise = est.residual / (samples - k * obs.num_antennas) as f64;
    let cells = (obs.num_times() * obs.pattern.n_f) as f64;
    let kept: Vec<PathFrequencies> = est
        .paths
        .iter()
        .map(|p| PathFrequencies {
            delay_freq: p.delay_freq,
            doppler_freqs: p
                .components
                .iter()
                .filter(|c| {
                    let power = c.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>() / obs.num_antennas as f64;
                    cells * power >= cfg.min_component_snr * noise
                })
                .map(|c| c.doppler_freq)
                .collect(),
        })
        .filter(|p| !p.doppler_freqs.is_empty())
        .collect();
    let kept_count: usize = kept.iter().map(|p| p.doppler_freqs.len()).sum();
    if kept_count == k {
        Ok(est)
    } else {
        fit_amplitudes(obs, &kept)
    }
}

impl SinusoidEstimate {
    fn residual_on(&self, obs: &PilotObservations) -> f64 {
        let tones: Vec<f64> = (0..obs.pattern.n_f).map(|f| (f * obs.pattern.d_f) as f64).collect();
        let phasors = self.delay_phasors(&tones);
        let mut model = vec![ZERO; tones.len() * self.num_antennas];
        (0..obs.num_times())
            .map(|q| {
                self.response(obs.symbol_of(q) as f64, &phasors, &mut model);
                obs.row(q).iter().zip(&model).map(|(y, h)| (y - h).norm_sqr()).sum::<f64>()
            })
            .sum()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn num_components(&self) -> usize {
        self.paths.iter().map(|p| p.components.len()).sum()
    }

    /// Per-path gains at symbol `t`, laid out `[path][antenna]`.
    pub fn path_gains(&self, t: f64) -> Vec<Complex64> {
        let q = (t - self.origin_symbol as f64) / self.pattern.d_t as f64;
        let m = self.num_antennas;
        let mut gains = vec![ZERO; self.paths.len() * m];
        for (p, path) in self.paths.iter().enumerate() {
            for c in &path.components {
                let rot = Complex64::from_polar(1.0, c.doppler_freq * q);
                for (g, a) in gains[p * m..(p + 1) * m].iter_mut().zip(&c.amplitudes) {
                    *g += rot * a;
                }
            }
        }
        gains
    }

    /// Delay phasors `exp(-j v̂ n / D_f)`, laid out `[subcarrier][path]`.
    pub fn delay_phasors(&self, subcarriers: &[f64]) -> Vec<Complex64> {
        let d_f = self.pattern.d_f as f64;
        subcarriers
            .iter()
            .flat_map(|&n| {
                self.paths
                    .iter()
                    .map(move |p| Complex64::from_polar(1.0, -p.delay_freq * n / d_f))
            })
            .collect()
    }

    /// Predicted channel vectors at symbol `t`, laid out `[subcarrier][antenna]`.
    pub fn response(&self, t: f64, phasors: &[Complex64], out: &mut [Complex64]) {
        let gains = self.path_gains(t);
        let p_count = self.paths.len();
        let m = self.num_antennas;
        out.fill(ZERO);
        if p_count == 0 {
            return;
        }
        for (s, dst) in out.chunks_mut(m).enumerate() {
            for p in 0..p_count {
                let ph = phasors[s * p_count + p];
                for (h, g) in dst.iter_mut().zip(&gains[p * m..(p + 1) * m]) {
                    *h += ph * g;
                }
            }
        }
    }
}

/// Evaluates the fitted model at symbol `t` and subcarrier `n`.
pub fn extrapolate(est: &SinusoidEstimate, t: f64, n: f64) -> Vec<Complex64> {
    let mut out = vec![ZERO; est.num_antennas];
    est.response(t, &est.delay_phasors(&[n]), &mut out);
    out
}

/// Builds a frequency-mode observation from explicit sinusoid components,
/// each given as `(v, ω, per-antenna amplitudes)`.
pub fn synthetic_observation(
    pattern: PilotPattern,
    components: &[(f64, f64, Vec<Complex64>)],
    num_antennas: usize,
) -> PilotObservations {
    let mut grid = vec![ZERO; pattern.n_t * pattern.n_f * num_antennas];
    for (q, row) in grid.chunks_mut(pattern.n_f * num_antennas).enumerate() {
        for (f, cell) in row.chunks_mut(num_antennas).enumerate() {
            for (v, w, amps) in components {
                let rot = Complex64::from_polar(1.0, w * q as f64 - v * f as f64);
                for (z, a) in cell.iter_mut().zip(amps) {
                    *z += rot * a;
                }
            }
        }
    }
    PilotObservations::new(pattern, ObservationMode::Frequency, 0.0, num_antennas, 0, grid)
        .expect("grid built to pattern dimensions")
}
