//! Sum-of-sinusoids multipath channels and mobility-derived constants.
//!
//! A user's channel to each base-station antenna is a superposition of
//! clustered paths. Every path has a single delay and carries a bundle of
//! subpaths, each with its own complex amplitude, Doppler shift and departure
//! angle:
//!
//! ```text
//! H_m[t, n] = Σ_p Σ_r A_{r,p} · a_m(θ_{r,p}) · exp(-j2π τ_p n) · exp(j2π ζ_{r,p} t)
//! ```
//!
//! `t` counts OFDM symbols, `n` counts subcarriers, `τ_p` is the path delay
//! multiplied by the subcarrier spacing and `ζ_{r,p}` is the Doppler shift
//! multiplied by the symbol duration. The array response `a_m` is that of a
//! uniform linear array.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::ZERO;

/// Speed of light used for the Doppler and validity-horizon constants. The
/// published mobility tables are computed with the rounded value.
pub const SPEED_OF_LIGHT: f64 = 3.0e8;

/// Distance to the nearest scatterer assumed by the validity horizon.
pub const DEFAULT_R_MIN: f64 = 600.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MobilityProfile {
    /// Terminal speed in m/s.
    pub speed: f64,
    /// Carrier frequency in Hz.
    pub carrier: f64,
    /// Distance to the nearest scatterer in m.
    pub r_min: f64,
    /// Propagation speed in m/s.
    pub light_speed: f64,
}

impl MobilityProfile {
    pub fn new(speed: f64, carrier: f64) -> Self {
        Self {
            speed,
            carrier,
            r_min: DEFAULT_R_MIN,
            light_speed: SPEED_OF_LIGHT,
        }
    }

    pub fn from_kmh(speed_kmh: f64, carrier: f64) -> Self {
        Self::new(speed_kmh / 3.6, carrier)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = self.carrier > 0.0 && self.r_min > 0.0 && self.light_speed > 0.0;
        if !positive || !(self.speed >= 0.0) {
            return Err(Error::Domain(format!("invalid mobility profile {self:?}")));
        }
        Ok(())
    }
}

/// Maximum Doppler shift `f_c·v/c` in Hz.
pub fn max_doppler(profile: &MobilityProfile) -> f64 {
    profile.carrier * profile.speed / profile.light_speed
}

/// How long sinusoid parameters stay usable for extrapolation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ValidityHorizon {
    Finite { seconds: f64, symbols: u64 },
    /// A static terminal never invalidates its parameters.
    Unbounded,
}

impl ValidityHorizon {
    /// Horizon in OFDM symbols, saturating for static terminals.
    pub fn symbols_or(&self, cap: u64) -> u64 {
        match *self {
            ValidityHorizon::Finite { symbols, .. } => symbols.min(cap),
            ValidityHorizon::Unbounded => cap,
        }
    }
}

/// `T_valid = sqrt(c·r_min / (3·f_c·v²))`, also expressed in whole symbols.
pub fn validity_horizon(profile: &MobilityProfile, symbol_duration: f64) -> ValidityHorizon {
    if profile.speed == 0.0 {
        return ValidityHorizon::Unbounded;
    }
    let seconds = (profile.light_speed * profile.r_min
        / (3.0 * profile.carrier * profile.speed * profile.speed))
        .sqrt();
    ValidityHorizon::Finite {
        seconds,
        symbols: (seconds / symbol_duration).floor() as u64,
    }
}

/// Angular layout of the scatterers seen by the terminal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    /// Arrival angles spread over the full circle: Doppler shifts cover the
    /// whole band and are at least one resolution cell apart within a path.
    WellSeparated,
    /// Arrival angles of each path confined to a narrow cone, so its Doppler
    /// shifts bunch around one value.
    Packed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Subpath {
    /// Complex amplitude at the reference antenna.
    pub amplitude: Complex64,
    /// Doppler shift in cycles per OFDM symbol.
    pub doppler: f64,
    /// Departure angle at the base-station array, radians.
    pub departure_angle: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathCluster {
    /// Delay in cycles per subcarrier (delay times subcarrier spacing).
    pub delay: f64,
    pub subpaths: Vec<Subpath>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserChannelModel {
    pub paths: Vec<PathCluster>,
    pub num_antennas: usize,
    /// Element spacing of the base-station array in wavelengths.
    pub antenna_spacing: f64,
}

/// Tap grid of the time-domain channel: delays must be multiples of
/// `1/fft_size` and index fewer than `num_taps` taps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DelayGrid {
    pub fft_size: usize,
    pub num_taps: usize,
}

impl DelayGrid {
    /// Tap index of a normalized delay, if it sits on the grid.
    pub fn tap_index(&self, delay: f64) -> Option<usize> {
        let x = delay * self.fft_size as f64;
        let l = x.round();
        if (x - l).abs() > 1e-9 || l < 0.0 || l as usize >= self.num_taps {
            None
        } else {
            Some(l as usize)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub num_paths: usize,
    pub subpaths_per_path: usize,
    pub num_antennas: usize,
    pub antenna_spacing: f64,
    /// Full width of the arrival cone of a packed path, degrees.
    pub cone_width_deg: f64,
    /// Maximum delay times subcarrier spacing.
    pub max_delay: f64,
    /// When set, path delays are snapped to this tap grid.
    pub delay_grid: Option<DelayGrid>,
    /// Minimum delay gap between paths, in cycles per subcarrier.
    pub min_delay_separation: f64,
    /// Minimum Doppler gap between subpaths of one well-separated path, in
    /// cycles per symbol. Zero disables the constraint.
    pub min_doppler_separation: f64,
    /// OFDM symbol duration including the cyclic prefix, seconds.
    pub symbol_duration: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            num_paths: 6,
            subpaths_per_path: 20,
            num_antennas: 4,
            antenna_spacing: 0.5,
            cone_width_deg: 10.0,
            max_delay: 16.67e-6 * 15e3,
            delay_grid: None,
            min_delay_separation: 0.0,
            min_doppler_separation: 0.0,
            symbol_duration: 83.33e-6,
        }
    }
}

const PLACEMENT_ATTEMPTS: usize = 64;

fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

fn draw_delays<R: Rng + ?Sized>(cfg: &GeneratorConfig, rng: &mut R) -> Result<Vec<f64>> {
    let mut delays: Vec<f64> = Vec::with_capacity(cfg.num_paths);
    for _ in 0..cfg.num_paths {
        let mut placed = false;
        for _ in 0..PLACEMENT_ATTEMPTS * 16 {
            let candidate = match cfg.delay_grid {
                Some(grid) => {
                    let max_tap = ((cfg.max_delay * grid.fft_size as f64 + 1e-9).floor() as usize)
                        .min(grid.num_taps.saturating_sub(1));
                    rng.random_range(0..=max_tap) as f64 / grid.fft_size as f64
                }
                None => rng.random::<f64>() * cfg.max_delay,
            };
            let gap = cfg.min_delay_separation.max(1e-12);
            if delays.iter().all(|d| (d - candidate).abs() >= gap - 1e-12) {
                delays.push(candidate);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::Config(format!(
                "cannot place {} paths with delay gap {} below {}",
                cfg.num_paths, cfg.min_delay_separation, cfg.max_delay
            )));
        }
    }
    delays.sort_by(f64::total_cmp);
    Ok(delays)
}

/// Draws one user's channel for the given scatterer layout.
///
/// Well-separated paths draw arrival angles uniformly on the circle and drop
/// a subpath whose Doppler cannot be placed `min_doppler_separation` away
/// from the ones already in the path. Packed paths draw a cone centre per
/// path and confine all arrival angles to the cone. Departure angles are
/// independent of arrival angles. Amplitudes are complex Gaussian, rescaled
/// so that the total subpath power is exactly one.
pub fn generate_user<R: Rng + ?Sized>(
    scenario: ScenarioKind,
    profile: &MobilityProfile,
    cfg: &GeneratorConfig,
    rng: &mut R,
) -> Result<UserChannelModel> {
    profile.validate()?;
    if cfg.num_paths == 0 || cfg.subpaths_per_path == 0 || cfg.num_antennas == 0 {
        return Err(Error::Config("channel needs at least one path, subpath and antenna".into()));
    }
    let zeta_max = max_doppler(profile) * cfg.symbol_duration;
    let delays = draw_delays(cfg, rng)?;
    let cone = cfg.cone_width_deg.to_radians();

    let mut paths = Vec::with_capacity(cfg.num_paths);
    for delay in delays {
        let mut dopplers: Vec<f64> = Vec::with_capacity(cfg.subpaths_per_path);
        match scenario {
            ScenarioKind::WellSeparated => {
                'subpaths: for _ in 0..cfg.subpaths_per_path {
                    for _ in 0..PLACEMENT_ATTEMPTS {
                        let z = zeta_max * (rng.random::<f64>() * 2.0 * PI).cos();
                        if dopplers.iter().all(|d| (d - z).abs() >= cfg.min_doppler_separation) {
                            dopplers.push(z);
                            continue 'subpaths;
                        }
                    }
                    break;
                }
            }
            ScenarioKind::Packed => {
                let centre = rng.random::<f64>() * 2.0 * PI;
                for _ in 0..cfg.subpaths_per_path {
                    let angle = centre + cone * (rng.random::<f64>() - 0.5);
                    dopplers.push(zeta_max * angle.cos());
                }
            }
        }
        let subpaths = dopplers
            .into_iter()
            .map(|doppler| Subpath {
                amplitude: complex_gaussian(rng),
                doppler,
                departure_angle: rng.random::<f64>() * 2.0 * PI,
            })
            .collect();
        paths.push(PathCluster { delay, subpaths });
    }

    let power: f64 = paths
        .iter()
        .flat_map(|p| p.subpaths.iter())
        .map(|s| s.amplitude.norm_sqr())
        .sum();
    let scale = power.sqrt().recip();
    for s in paths.iter_mut().flat_map(|p| p.subpaths.iter_mut()) {
        s.amplitude *= scale;
    }

    Ok(UserChannelModel {
        paths,
        num_antennas: cfg.num_antennas,
        antenna_spacing: cfg.antenna_spacing,
    })
}

impl UserChannelModel {
    /// Total subpath power `Σ|A|²`.
    pub fn power(&self) -> f64 {
        self.paths
            .iter()
            .flat_map(|p| p.subpaths.iter())
            .map(|s| s.amplitude.norm_sqr())
            .sum()
    }

    pub fn num_subpaths(&self) -> usize {
        self.paths.iter().map(|p| p.subpaths.len()).sum()
    }

    /// Largest |ζ| over all subpaths.
    pub fn max_abs_doppler(&self) -> f64 {
        self.paths
            .iter()
            .flat_map(|p| p.subpaths.iter())
            .map(|s| s.doppler.abs())
            .fold(0.0, f64::max)
    }

    fn antenna_phase(&self, subpath: &Subpath, antenna: usize) -> Complex64 {
        let phase = 2.0 * PI * antenna as f64 * self.antenna_spacing * subpath.departure_angle.sin();
        Complex64::from_polar(1.0, phase)
    }

    /// Checks every delay against `grid` and returns the tap index per path.
    pub fn tap_indices(&self, grid: &DelayGrid) -> Result<Vec<usize>> {
        self.paths
            .iter()
            .enumerate()
            .map(|(p, path)| {
                grid.tap_index(path.delay).ok_or(Error::OffGridDelay {
                    path: p,
                    delay: path.delay,
                    fft_size: grid.fft_size,
                    num_taps: grid.num_taps,
                })
            })
            .collect()
    }
}

/// Frequency-domain channel vector (one entry per antenna) at symbol `t` and
/// subcarrier `n`.
pub fn eval_freq(model: &UserChannelModel, t: f64, n: f64) -> Vec<Complex64> {
    let mut out = vec![ZERO; model.num_antennas];
    for path in &model.paths {
        let delay_phasor = Complex64::from_polar(1.0, -2.0 * PI * path.delay * n);
        for s in &path.subpaths {
            let common = s.amplitude * delay_phasor * Complex64::from_polar(1.0, 2.0 * PI * s.doppler * t);
            for (m, h) in out.iter_mut().enumerate() {
                *h += common * model.antenna_phase(s, m);
            }
        }
    }
    out
}

/// Time-domain taps `h(t, 0..L)` per antenna (outer index antenna).
pub fn eval_taps(model: &UserChannelModel, t: f64, grid: &DelayGrid) -> Result<Vec<Vec<Complex64>>> {
    let taps = model.tap_indices(grid)?;
    let mut out = vec![vec![ZERO; grid.num_taps]; model.num_antennas];
    for (path, &l) in model.paths.iter().zip(&taps) {
        for s in &path.subpaths {
            let rotated = s.amplitude * Complex64::from_polar(1.0, 2.0 * PI * s.doppler * t);
            for (m, antenna) in out.iter_mut().enumerate() {
                antenna[l] += rotated * model.antenna_phase(s, m);
            }
        }
    }
    Ok(out)
}

/// Precomputed evaluator for repeated sampling of one channel realization.
#[derive(Debug, Clone)]
pub struct ChannelEvaluator {
    num_antennas: usize,
    delays: Vec<f64>,
    /// Per path: (doppler, amplitude times array response per antenna).
    subpaths: Vec<Vec<(f64, Vec<Complex64>)>>,
}

impl ChannelEvaluator {
    pub fn new(model: &UserChannelModel) -> Self {
        let subpaths = model
            .paths
            .iter()
            .map(|path| {
                path.subpaths
                    .iter()
                    .map(|s| {
                        let weights = (0..model.num_antennas)
                            .map(|m| s.amplitude * model.antenna_phase(s, m))
                            .collect();
                        (s.doppler, weights)
                    })
                    .collect()
            })
            .collect();
        Self {
            num_antennas: model.num_antennas,
            delays: model.paths.iter().map(|p| p.delay).collect(),
            subpaths,
        }
    }

    pub fn num_antennas(&self) -> usize {
        self.num_antennas
    }

    pub fn num_paths(&self) -> usize {
        self.delays.len()
    }

    /// Per-path gains at symbol `t`, laid out `[path][antenna]`.
    pub fn path_gains(&self, t: f64) -> Vec<Complex64> {
        let m_count = self.num_antennas;
        let mut gains = vec![ZERO; self.delays.len() * m_count];
        for (p, subs) in self.subpaths.iter().enumerate() {
            let row = &mut gains[p * m_count..(p + 1) * m_count];
            for (doppler, weights) in subs {
                let rot = Complex64::from_polar(1.0, 2.0 * PI * doppler * t);
                for (g, w) in row.iter_mut().zip(weights) {
                    *g += rot * w;
                }
            }
        }
        gains
    }

    /// Delay phasors `exp(-j2π τ_p n)` for a list of subcarriers, laid out
    /// `[subcarrier][path]`.
    pub fn delay_phasors(&self, subcarriers: &[f64]) -> Vec<Complex64> {
        subcarriers
            .iter()
            .flat_map(|&n| {
                self.delays
                    .iter()
                    .map(move |d| Complex64::from_polar(1.0, -2.0 * PI * d * n))
            })
            .collect()
    }

    /// Channel vectors at symbol `t` for the subcarriers whose phasors were
    /// produced by [`delay_phasors`](Self::delay_phasors); output laid out
    /// `[subcarrier][antenna]`.
    pub fn response(&self, t: f64, phasors: &[Complex64], out: &mut [Complex64]) {
        let gains = self.path_gains(t);
        let p_count = self.delays.len();
        let m_count = self.num_antennas;
        let sc_count = phasors.len() / p_count.max(1);
        debug_assert_eq!(out.len(), sc_count * m_count);
        for s in 0..sc_count {
            let dst = &mut out[s * m_count..(s + 1) * m_count];
            dst.fill(ZERO);
            for p in 0..p_count {
                let ph = phasors[s * p_count + p];
                for (h, g) in dst.iter_mut().zip(&gains[p * m_count..(p + 1) * m_count]) {
                    *h += ph * g;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn single(delay: f64, doppler: f64) -> UserChannelModel {
        UserChannelModel {
            paths: vec![PathCluster {
                delay,
                subpaths: vec![Subpath {
                    amplitude: Complex64::new(1.0, 0.0),
                    doppler,
                    departure_angle: 0.0,
                }],
            }],
            num_antennas: 1,
            antenna_spacing: 0.5,
        }
    }

    #[test]
    fn mobility_table_values() {
        let hi = MobilityProfile::from_kmh(75.0, 2.6e9);
        let lo = MobilityProfile::from_kmh(5.0, 2.6e9);
        assert!((max_doppler(&hi) - 180.56).abs() < 0.01);
        assert!((max_doppler(&lo) - 12.04).abs() < 0.01);
        assert_eq!(max_doppler(&MobilityProfile::from_kmh(0.0, 2.6e9)), 0.0);
        match validity_horizon(&hi, 83.33e-6) {
            ValidityHorizon::Finite { seconds, .. } => assert!((seconds - 0.231).abs() < 1e-3),
            ValidityHorizon::Unbounded => panic!("moving terminal has a finite horizon"),
        }
        match validity_horizon(&lo, 83.33e-6) {
            ValidityHorizon::Finite { seconds, symbols } => {
                assert!((seconds - 3.458).abs() < 1e-3);
                assert!(symbols.abs_diff(41_500) <= 100);
            }
            ValidityHorizon::Unbounded => panic!("moving terminal has a finite horizon"),
        }
    }

    #[test]
    fn horizon_halves_when_speed_doubles() {
        let secs = |kmh| match validity_horizon(&MobilityProfile::from_kmh(kmh, 2.6e9), 83.33e-6) {
            ValidityHorizon::Finite { seconds, .. } => seconds,
            ValidityHorizon::Unbounded => f64::INFINITY,
        };
        assert!((secs(30.0) / secs(60.0) - 2.0).abs() < 1e-12);
        assert_eq!(
            validity_horizon(&MobilityProfile::from_kmh(0.0, 2.6e9), 83.33e-6),
            ValidityHorizon::Unbounded
        );
    }

    #[test]
    fn constant_channel_and_delay_phase() {
        let m = single(0.0, 0.0);
        for t in [0.0, 7.0, 1234.0] {
            for n in [0.0, 3.0, 200.0] {
                assert!((eval_freq(&m, t, n)[0] - Complex64::new(1.0, 0.0)).norm() < 1e-12);
            }
        }
        let m = single(0.25, 0.0);
        assert!((eval_freq(&m, 0.0, 2.0)[0] - Complex64::new(-1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn taps_of_single_path() {
        let grid = DelayGrid { fft_size: 64, num_taps: 8 };
        let m = single(0.0, 0.01);
        let taps = eval_taps(&m, 0.0, &grid).unwrap();
        assert_eq!(taps[0][0], Complex64::new(1.0, 0.0));
        assert!(taps[0][1..].iter().all(|z| *z == ZERO));
        let off = single(0.3 / 64.0, 0.0);
        assert!(matches!(eval_taps(&off, 0.0, &grid), Err(Error::OffGridDelay { .. })));
        let beyond = single(9.0 / 64.0, 0.0);
        assert!(eval_taps(&beyond, 0.0, &grid).is_err());
    }

    #[test]
    fn generation_is_deterministic_and_normalized() {
        let cfg = GeneratorConfig::default();
        let profile = MobilityProfile::from_kmh(75.0, 2.6e9);
        for kind in [ScenarioKind::WellSeparated, ScenarioKind::Packed] {
            let a = generate_user(kind, &profile, &cfg, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
            let b = generate_user(kind, &profile, &cfg, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
            assert_eq!(a, b);
            assert!((a.power() - 1.0).abs() < 1e-12);
            let zmax = max_doppler(&profile) * cfg.symbol_duration;
            assert!(a.max_abs_doppler() <= zmax * (1.0 + 1e-12));
        }
    }

    #[test]
    fn well_separated_dopplers_respect_gap() {
        let cfg = GeneratorConfig {
            min_doppler_separation: 1.0 / 2000.0,
            ..GeneratorConfig::default()
        };
        let profile = MobilityProfile::from_kmh(5.0, 2.6e9);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = generate_user(ScenarioKind::WellSeparated, &profile, &cfg, &mut rng).unwrap();
        for path in &m.paths {
            assert!(!path.subpaths.is_empty());
            for (i, a) in path.subpaths.iter().enumerate() {
                for b in &path.subpaths[i + 1..] {
                    assert!((a.doppler - b.doppler).abs() >= 1.0 / 2000.0);
                }
            }
        }
        // at 5 km/h the band holds only a handful of resolvable shifts
        assert!(m.paths.iter().all(|p| p.subpaths.len() <= 5));
    }

    #[test]
    fn grid_delays_are_on_grid_and_spaced() {
        let grid = DelayGrid { fft_size: 256, num_taps: 50 };
        let cfg = GeneratorConfig {
            delay_grid: Some(grid),
            min_delay_separation: 2.0 / 256.0,
            ..GeneratorConfig::default()
        };
        let profile = MobilityProfile::from_kmh(75.0, 2.6e9);
        for seed in 0..20 {
            let m = generate_user(ScenarioKind::Packed, &profile, &cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let taps = m.tap_indices(&grid).unwrap();
            assert!(taps.windows(2).all(|w| w[1] >= w[0] + 2));
            assert!(taps.iter().all(|&l| l < 50));
        }
    }

    #[test]
    fn frequency_response_is_dft_of_taps() {
        let grid = DelayGrid { fft_size: 256, num_taps: 50 };
        let cfg = GeneratorConfig {
            delay_grid: Some(grid),
            min_delay_separation: 2.0 / 256.0,
            ..GeneratorConfig::default()
        };
        let profile = MobilityProfile::from_kmh(75.0, 2.6e9);
        let m = generate_user(ScenarioKind::WellSeparated, &profile, &cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        for t in [0.0, 40.0, 1999.0] {
            let taps = eval_taps(&m, t, &grid).unwrap();
            for n in (0..256).step_by(7) {
                let h = eval_freq(&m, t, n as f64);
                for (a, tap) in taps.iter().enumerate() {
                    let dft: Complex64 = tap
                        .iter()
                        .enumerate()
                        .map(|(l, x)| x * Complex64::from_polar(1.0, -2.0 * PI * (l * n) as f64 / 256.0))
                        .sum();
                    assert!((dft - h[a]).norm() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn packed_dopplers_stay_inside_cone_image() {
        // the image of a window of width w under cos spans at most 2 sin(w/2)
        let cfg = GeneratorConfig::default();
        let profile = MobilityProfile::from_kmh(75.0, 2.6e9);
        let zmax = max_doppler(&profile) * cfg.symbol_duration;
        let span_bound = zmax * 2.0 * (cfg.cone_width_deg.to_radians() / 2.0).sin();
        for seed in 0..50 {
            let m = generate_user(ScenarioKind::Packed, &profile, &cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            for p in &m.paths {
                let lo = p.subpaths.iter().map(|s| s.doppler).fold(f64::INFINITY, f64::min);
                let hi = p.subpaths.iter().map(|s| s.doppler).fold(f64::NEG_INFINITY, f64::max);
                assert!(hi - lo <= span_bound * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn well_separated_dopplers_cover_the_band() {
        let cfg = GeneratorConfig::default();
        let profile = MobilityProfile::from_kmh(75.0, 2.6e9);
        let zmax = max_doppler(&profile) * cfg.symbol_duration;
        for seed in 0..200 {
            let m = generate_user(ScenarioKind::WellSeparated, &profile, &cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            let all = m.paths.iter().flat_map(|p| p.subpaths.iter().map(|s| s.doppler));
            let (lo, hi) = all.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), z| (a.min(z), b.max(z)));
            assert!(hi - lo >= 0.8 * 2.0 * zmax);
        }
    }

    #[test]
    fn average_power_is_unity_per_antenna() {
        let cfg = GeneratorConfig::default();
        let profile = MobilityProfile::from_kmh(75.0, 2.6e9);
        let m = generate_user(ScenarioKind::WellSeparated, &profile, &cfg, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
        let ev = ChannelEvaluator::new(&m);
        let scs: Vec<f64> = (0..200).map(f64::from).collect();
        let ph = ev.delay_phasors(&scs);
        let mut out = vec![ZERO; scs.len() * m.num_antennas];
        let mut acc = vec![0.0; m.num_antennas];
        let times = 400;
        for t in 0..times {
            ev.response(t as f64 * 97.0, &ph, &mut out);
            for (i, h) in out.iter().enumerate() {
                acc[i % m.num_antennas] += h.norm_sqr();
            }
        }
        for a in acc {
            let mean = a / (times * scs.len()) as f64;
            assert!((mean - 1.0).abs() < 0.05, "mean power {mean}");
        }
    }

    #[test]
    fn evaluator_matches_direct_evaluation() {
        let cfg = GeneratorConfig::default();
        let profile = MobilityProfile::from_kmh(75.0, 2.6e9);
        let m = generate_user(ScenarioKind::WellSeparated, &profile, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let ev = ChannelEvaluator::new(&m);
        let scs = [0.0, 13.0, 101.0];
        let ph = ev.delay_phasors(&scs);
        let mut out = vec![ZERO; scs.len() * m.num_antennas];
        ev.response(517.0, &ph, &mut out);
        for (s, &n) in scs.iter().enumerate() {
            let direct = eval_freq(&m, 517.0, n);
            for a in 0..m.num_antennas {
                assert!((direct[a] - out[s * m.num_antennas + a]).norm() < 1e-12);
            }
        }
    }
}
