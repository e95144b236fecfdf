//! Scenario configuration and named presets.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::channel::{max_doppler, DelayGrid, GeneratorConfig, MobilityProfile, ScenarioKind};
use crate::error::{Error, Result};
use crate::esprit::EspritConfig;
use crate::pilot::{check_nyquist, NyquistReport, PilotPattern};
use crate::scheduler::SchedulerKind;
use crate::tracker::TrackerConfig;
use crate::wiener::WienerConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorKind {
    /// Batch parametric prediction from frequency-domain pilots.
    Esprit,
    /// Frame-by-frame tap prediction from impulse pilots.
    Wiener,
}

impl std::str::FromStr for PredictorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "esprit" => Ok(PredictorKind::Esprit),
            "wiener" => Ok(PredictorKind::Wiener),
            other => Err(Error::Config(format!("unknown predictor `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserSpec {
    pub scenario: ScenarioKind,
    pub speed_kmh: f64,
}

/// Multipath generator settings shared by all users.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChannelSettings {
    pub num_paths: usize,
    pub subpaths_per_path: usize,
    /// Antenna spacing in wavelengths.
    pub antenna_spacing: f64,
    pub cone_width_deg: f64,
    /// Minimum spacing of path delays, in taps.
    pub min_tap_separation: usize,
    /// Minimum Doppler spacing inside a well-separated path, in units of
    /// the resolution `1/(N_t·D_t)` cycles per symbol.
    pub doppler_separation_cells: f64,
}

impl Default for ChannelSettings {
    fn default() -> Self {
        Self {
            num_paths: 6,
            subpaths_per_path: 20,
            antenna_spacing: 0.5,
            cone_width_deg: 10.0,
            min_tap_separation: 2,
            doppler_separation_cells: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HfsConfig {
    /// Fixed predictable-class share; computed from the closed forms when
    /// absent.
    pub alpha_p: Option<f64>,
    /// Step of the adaptive share correction; off when absent.
    pub adapt_step: Option<f64>,
    /// Blocks between adaptive corrections.
    pub adapt_window: usize,
}

impl Default for HfsConfig {
    fn default() -> Self {
        Self { alpha_p: None, adapt_step: None, adapt_window: 50 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    /// Base-station antennas `M`.
    pub num_antennas: usize,
    /// FFT size `N`.
    pub fft_size: usize,
    /// Active subcarriers `N_a`.
    pub active_subcarriers: usize,
    /// Subcarrier spacing in Hz.
    pub subcarrier_spacing: f64,
    /// OFDM symbol duration including the cyclic prefix, seconds.
    pub symbol_duration: f64,
    /// Cyclic prefix in samples.
    pub cp_length: usize,
    /// Sampling rate in Hz.
    pub sampling_rate: f64,
    /// Carrier frequency in Hz.
    pub carrier: f64,
    /// Maximum path delay in seconds.
    pub max_delay: f64,
    pub pilot: PilotPattern,
    pub users: Vec<UserSpec>,
    /// Data SNR, equal to the transmit power `P` with unit noise.
    pub snr_db: f64,
    pub pilot_snr_db: f64,
    pub predictor: PredictorKind,
    pub scheduler: SchedulerKind,
    /// Throughput averaging weight.
    pub beta: f64,
    /// Initial and minimum long-term throughput.
    pub throughput_floor: f64,
    pub tracker: TrackerConfig,
    /// Compare predictions against a noisy channel estimate instead of the
    /// true channel.
    pub tracker_estimate_noise: bool,
    /// Scheduled symbols after warm-up.
    pub horizon_symbols: usize,
    /// Estimation windows run before anything is scheduled.
    pub warmup_batches: usize,
    pub seed: u64,
    /// Subcarriers, spread evenly over the active band, on which channels
    /// are evaluated and users are scheduled.
    pub eval_subcarriers: usize,
    /// Evaluation subcarriers sharing one scheduling decision.
    pub group_size: usize,
    /// Symbols per block at which rates are sampled.
    pub rate_samples: usize,
    pub channel: ChannelSettings,
    pub esprit: EspritConfig,
    pub wiener: WienerConfig,
    pub hfs: HfsConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let user = UserSpec { scenario: ScenarioKind::WellSeparated, speed_kmh: 75.0 };
        Self {
            name: "table1_base".into(),
            num_antennas: 4,
            fft_size: 256,
            active_subcarriers: 200,
            subcarrier_spacing: 15e3,
            symbol_duration: 83.33e-6,
            cp_length: 64,
            sampling_rate: 3.84e6,
            carrier: 2.6e9,
            max_delay: 16.67e-6,
            pilot: PilotPattern::default(),
            users: vec![user; 8],
            snr_db: 20.0,
            pilot_snr_db: 20.0,
            predictor: PredictorKind::Esprit,
            scheduler: SchedulerKind::Pfs,
            beta: 0.01,
            throughput_floor: 1e-3,
            tracker: TrackerConfig::default(),
            tracker_estimate_noise: false,
            horizon_symbols: 20_000,
            warmup_batches: 2,
            seed: 0,
            eval_subcarriers: 8,
            group_size: 1,
            rate_samples: 4,
            channel: ChannelSettings::default(),
            esprit: EspritConfig::default(),
            wiener: WienerConfig::default(),
            hfs: HfsConfig::default(),
        }
    }
}

pub const PRESET_NAMES: [&str; 6] = [
    "table1_base",
    "table5",
    "taxonomy_lo_separated",
    "taxonomy_lo_packed",
    "taxonomy_hi_separated",
    "taxonomy_hi_packed",
];

/// Named scenario.
pub fn preset(name: &str) -> Result<ScenarioConfig> {
    let base = ScenarioConfig::default();
    let uniform = |scenario, speed_kmh, predictor| ScenarioConfig {
        name: name.to_string(),
        users: vec![UserSpec { scenario, speed_kmh }; 8],
        predictor,
        ..ScenarioConfig::default()
    };
    let cfg = match name {
        "table1_base" => base,
        "table5" => {
            let packed = UserSpec { scenario: ScenarioKind::Packed, speed_kmh: 75.0 };
            let separated = UserSpec { scenario: ScenarioKind::WellSeparated, speed_kmh: 75.0 };
            let mut users = vec![packed; 2];
            users.extend(vec![separated; 6]);
            ScenarioConfig { name: name.into(), users, ..base }
        }
        "taxonomy_lo_separated" => uniform(ScenarioKind::WellSeparated, 5.0, PredictorKind::Esprit),
        "taxonomy_hi_separated" => uniform(ScenarioKind::WellSeparated, 75.0, PredictorKind::Esprit),
        "taxonomy_lo_packed" => uniform(ScenarioKind::Packed, 5.0, PredictorKind::Wiener),
        "taxonomy_hi_packed" => uniform(ScenarioKind::Packed, 75.0, PredictorKind::Wiener),
        other => return Err(Error::UnknownPreset(other.to_string())),
    };
    Ok(cfg)
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn from_toml_file(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    /// Transmit power `P` (linear SNR).
    pub fn power(&self) -> f64 {
        10f64.powf(self.snr_db / 10.0)
    }

    pub fn pilot_snr(&self) -> f64 {
        10f64.powf(self.pilot_snr_db / 10.0)
    }

    pub fn mobility(&self, user: usize) -> MobilityProfile {
        MobilityProfile::from_kmh(self.users[user].speed_kmh, self.carrier)
    }

    /// Maximum delay in cycles per subcarrier.
    pub fn tau_max_norm(&self) -> f64 {
        self.max_delay * self.subcarrier_spacing
    }

    /// Largest Doppler shift over all users, in cycles per symbol.
    pub fn zeta_max_norm(&self) -> f64 {
        (0..self.num_users())
            .map(|k| max_doppler(&self.mobility(k)) * self.symbol_duration)
            .fold(0.0, f64::max)
    }

    pub fn nyquist(&self) -> NyquistReport {
        check_nyquist(&self.pilot, self.tau_max_norm(), self.zeta_max_norm())
    }

    /// Tap grid used for on-grid delays and impulse pilots.
    pub fn delay_grid(&self) -> DelayGrid {
        DelayGrid { fft_size: self.fft_size, num_taps: self.pilot.n_f }
    }

    pub fn generator(&self) -> GeneratorConfig {
        GeneratorConfig {
            num_paths: self.channel.num_paths,
            subpaths_per_path: self.channel.subpaths_per_path,
            num_antennas: self.num_antennas,
            antenna_spacing: self.channel.antenna_spacing,
            cone_width_deg: self.channel.cone_width_deg,
            max_delay: self.tau_max_norm(),
            delay_grid: Some(self.delay_grid()),
            min_delay_separation: self.channel.min_tap_separation as f64 / self.fft_size as f64,
            min_doppler_separation: self.channel.doppler_separation_cells / self.pilot.window_symbols() as f64,
            symbol_duration: self.symbol_duration,
        }
    }

    /// Evaluation subcarriers `round((i + 1/2)·N_a/E)`.
    pub fn evaluation_subcarriers(&self) -> Vec<f64> {
        let e = self.eval_subcarriers as f64;
        (0..self.eval_subcarriers)
            .map(|i| ((i as f64 + 0.5) * self.active_subcarriers as f64 / e).round())
            .collect()
    }

    pub fn num_groups(&self) -> usize {
        self.eval_subcarriers / self.group_size
    }

    /// Blocks scheduled after warm-up.
    pub fn horizon_blocks(&self) -> usize {
        self.horizon_symbols.div_ceil(self.pilot.d_t)
    }

    pub fn warmup_blocks(&self) -> usize {
        self.warmup_batches * self.pilot.n_t
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.num_antennas == 0 || self.users.is_empty() {
            return fail("need at least one antenna and one user".into());
        }
        if self.active_subcarriers == 0 || self.active_subcarriers > self.fft_size {
            return fail(format!("{} active subcarriers do not fit an FFT of {}", self.active_subcarriers, self.fft_size));
        }
        self.pilot.validate(self.fft_size)?;
        if self.eval_subcarriers == 0 || self.eval_subcarriers > self.active_subcarriers {
            return fail(format!("{} evaluation subcarriers for {} active", self.eval_subcarriers, self.active_subcarriers));
        }
        if self.group_size == 0 || !self.eval_subcarriers.is_multiple_of(self.group_size) {
            return fail(format!("group size {} must divide {}", self.group_size, self.eval_subcarriers));
        }
        if self.rate_samples == 0 || self.rate_samples > self.pilot.d_t {
            return fail(format!("rate samples {} must lie in 1..={}", self.rate_samples, self.pilot.d_t));
        }
        if !(self.beta > 0.0 && self.beta <= 1.0) || !(self.throughput_floor > 0.0) {
            return fail(format!("beta {} and floor {} out of range", self.beta, self.throughput_floor));
        }
        if self.predictor == PredictorKind::Esprit && self.warmup_batches == 0 {
            return fail("batch prediction needs at least one warm-up window".into());
        }
        if self.hfs.adapt_window == 0 {
            return fail("adaptive window must be positive".into());
        }
        self.tracker.validate()?;
        for k in 0..self.num_users() {
            self.mobility(k).validate()?;
        }
        let report = self.nyquist();
        if !report.passes() {
            return Err(Error::Nyquist(report));
        }
        Ok(())
    }
}
