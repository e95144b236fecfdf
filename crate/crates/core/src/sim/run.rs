//! The block-by-block simulation loop.
//!
//! Every block of `D_t` symbols goes through the same steps. Terminals
//! predict their channel for the block from the pilots seen so far and
//! update their predictability flag. Each scheduling lane then picks users
//! per subcarrier group on the fed-back information, and rates are scored
//! against the true channel. Finally the pilot at the block start is
//! observed, which feeds the next block's prediction. Several schedulers can
//! run in lock step on one channel and prediction realization.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::analytics::{t_np, t_p_lower, HfsAnalyticsInput};
use crate::channel::{generate_user, validity_horizon, ChannelEvaluator, DelayGrid, UserChannelModel};
use crate::error::Result;
use crate::esprit::{estimate, SinusoidEstimate};
use crate::linalg::{norm_sqr, ZERO};
use crate::phy::{rate_report, transmit_diversity_rate, zf_beamformer};
use crate::pilot::{freq_row, noise_sample, pilot_noise_variance, pilot_tones, time_row, ObservationMode, PilotObservations};
use crate::scheduler::{
    diversity_decision, hfs_alpha, mpfs_select, pfs_select, zf_nominal_rates, ClassPartition, HfsState,
    ScheduleDecision, SchedulerKind, ServiceClass, ServiceMode, ThroughputLedger,
};
use crate::tracker::{nmse, Predictability, PredictabilityState};
use crate::wiener::{dft_twiddles, taps_to_freq, WienerPredictor};

use super::config::{PredictorKind, ScenarioConfig};
use super::metrics::{summarize, BlockRecord, HfsBalance, Summary};

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub records: Vec<BlockRecord>,
    pub summary: Summary,
}

/// Random stream of user `k`: its channel is drawn first, then its pilot
/// noise.
pub fn user_rng(seed: u64, user: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(user as u64);
    rng
}

/// Draws user `k`'s channel and returns it with the stream positioned for
/// pilot noise.
pub fn user_channel(cfg: &ScenarioConfig, user: usize) -> Result<(UserChannelModel, ChaCha8Rng)> {
    let mut rng = user_rng(cfg.seed, user);
    let model = generate_user(cfg.users[user].scenario, &cfg.mobility(user), &cfg.generator(), &mut rng)?;
    Ok((model, rng))
}

/// An estimate in use and the symbols over which it may be extrapolated.
struct ActiveEstimate {
    est: SinusoidEstimate,
    phasors: Vec<Complex64>,
    valid_until: usize,
    stale: bool,
}

enum PredictorState {
    Esprit {
        rows: Vec<Complex64>,
        window_start: usize,
        current: Option<ActiveEstimate>,
    },
    Wiener {
        predictor: WienerPredictor,
        twiddles: Vec<Complex64>,
        rows_seen: usize,
    },
}

struct Terminal {
    model: UserChannelModel,
    evaluator: ChannelEvaluator,
    rng: ChaCha8Rng,
    /// Delay phasors of the true channel on the evaluation subcarriers.
    eval_phasors: Vec<Complex64>,
    pilot_phasors: Vec<Complex64>,
    predictor: PredictorState,
    tracker: PredictabilityState,
    /// Wideband `‖h‖²` from the latest pilot.
    norm_estimate: f64,
    horizon_symbols: usize,
}

/// A terminal's prediction for one block, laid out `[sample][subcarrier][antenna]`.
struct BlockPrediction {
    channels: Vec<Complex64>,
    fallback: bool,
}

impl Terminal {
    fn new(cfg: &ScenarioConfig, user: usize, eval_sc: &[f64]) -> Result<Self> {
        let (model, rng) = user_channel(cfg, user)?;
        let evaluator = ChannelEvaluator::new(&model);
        let window = cfg.pilot.window_symbols();
        let predictor = match cfg.predictor {
            PredictorKind::Esprit => PredictorState::Esprit { rows: Vec::new(), window_start: 0, current: None },
            PredictorKind::Wiener => {
                let grid = cfg.delay_grid();
                PredictorState::Wiener {
                    predictor: WienerPredictor::new(grid, cfg.num_antennas, cfg.wiener),
                    twiddles: dft_twiddles(&grid, eval_sc),
                    rows_seen: 0,
                }
            }
        };
        Ok(Self {
            eval_phasors: evaluator.delay_phasors(eval_sc),
            pilot_phasors: evaluator.delay_phasors(&pilot_tones(&cfg.pilot)),
            evaluator,
            model,
            rng,
            predictor,
            tracker: PredictabilityState::new(cfg.tracker)?,
            norm_estimate: 0.0,
            horizon_symbols: validity_horizon(&cfg.mobility(user), cfg.symbol_duration).symbols_or(window as u64)
                as usize,
        })
    }

    fn truth(&self, samples: &[usize], sc_count: usize) -> Vec<Complex64> {
        let m = self.evaluator.num_antennas();
        let mut out = vec![ZERO; samples.len() * sc_count * m];
        for (chunk, &t) in out.chunks_mut(sc_count * m).zip(samples) {
            self.evaluator.response(t as f64, &self.eval_phasors, chunk);
        }
        out
    }

    fn predict(&self, samples: &[usize], sc_count: usize, num_antennas: usize) -> Option<BlockPrediction> {
        let stride = sc_count * num_antennas;
        let mut channels = vec![ZERO; samples.len() * stride];
        match &self.predictor {
            PredictorState::Esprit { current, .. } => {
                let active = current.as_ref()?;
                let mut fallback = active.stale;
                for (chunk, &t) in channels.chunks_mut(stride).zip(samples) {
                    let t = if t >= active.valid_until {
                        fallback = true;
                        active.valid_until - 1
                    } else {
                        t
                    };
                    active.est.response(t as f64, &active.phasors, chunk);
                }
                Some(BlockPrediction { channels, fallback })
            }
            PredictorState::Wiener { predictor, twiddles, rows_seen } => {
                if *rows_seen == 0 {
                    return None;
                }
                let taps = predictor.predict();
                taps_to_freq(&taps.taps, num_antennas, twiddles, &mut channels[..stride]);
                let (first, rest) = channels.split_at_mut(stride);
                for chunk in rest.chunks_mut(stride) {
                    chunk.copy_from_slice(first);
                }
                Some(BlockPrediction { channels, fallback: taps.fallbacks > 0 })
            }
        }
    }

    /// Observes the pilot at `symbol` and folds it into the predictor.
    fn observe(&mut self, cfg: &ScenarioConfig, symbol: usize, eval_sc: &[f64]) -> Result<()> {
        let m = cfg.num_antennas;
        let sigma2 = pilot_noise_variance(cfg.pilot_snr());
        match &mut self.predictor {
            PredictorState::Esprit { rows, window_start, current } => {
                let row = freq_row(&self.evaluator, &self.pilot_phasors, symbol, sigma2, &mut self.rng);
                let tones = cfg.pilot.n_f as f64;
                self.norm_estimate = (norm_sqr(&row) / tones - m as f64 * sigma2).max(0.0);
                rows.extend(row);
                if rows.len() == cfg.pilot.n_t * cfg.pilot.n_f * m {
                    let grid = std::mem::take(rows);
                    let obs = PilotObservations::new(cfg.pilot, ObservationMode::Frequency, sigma2, m, *window_start, grid)?;
                    let next = symbol + cfg.pilot.d_t;
                    *window_start = next;
                    match estimate(&obs, &cfg.esprit) {
                        Ok(est) => {
                            *current = Some(ActiveEstimate {
                                phasors: est.delay_phasors(eval_sc),
                                est,
                                valid_until: next + self.horizon_symbols.min(cfg.pilot.window_symbols()),
                                stale: false,
                            });
                        }
                        Err(e) => {
                            log::warn!("estimation failed at symbol {symbol}, holding previous estimate: {e}");
                            if let Some(c) = current.as_mut() {
                                c.stale = true;
                            }
                        }
                    }
                }
            }
            PredictorState::Wiener { predictor, rows_seen, .. } => {
                let grid: DelayGrid = predictor.grid();
                let tap_var = sigma2 / cfg.pilot.n_f as f64;
                let row = time_row(&self.model, &grid, symbol, tap_var, &mut self.rng)?;
                self.norm_estimate = (norm_sqr(&row) - (grid.num_taps * m) as f64 * tap_var).max(0.0);
                predictor.update(&row);
                *rows_seen += 1;
            }
        }
        Ok(())
    }
}

/// Everything the lanes need about one block.
struct BlockContext<'a> {
    block: usize,
    batch_start: bool,
    predictions: &'a [Option<BlockPrediction>],
    truths: &'a [Vec<Complex64>],
    flags: &'a [Predictability],
    nmse: &'a [Option<f64>],
}

struct Dims {
    users: usize,
    antennas: usize,
    sc: usize,
    samples: usize,
    group: usize,
    power: f64,
    batch_payload: bool,
}

impl Dims {
    fn slice<'a>(&self, v: &'a [Complex64], sample: usize, sc: usize) -> &'a [Complex64] {
        let at = (sample * self.sc + sc) * self.antennas;
        &v[at..at + self.antennas]
    }
}

#[derive(Default)]
struct HfsAccounting {
    alpha_sum: f64,
    rate_p: f64,
    rate_np: f64,
    slots_p: usize,
    slots_np: usize,
    blocks: usize,
}

struct Lane {
    kind: SchedulerKind,
    ledger: ThroughputLedger,
    hfs: HfsState,
    hfs_fixed: Option<f64>,
    hfs_sizes: Option<(usize, usize)>,
    hfs_acc: HfsAccounting,
    hfs_window: usize,
    records: Vec<BlockRecord>,
    feedback_reals: Vec<u64>,
    feedback_payloads: Vec<u64>,
    fallback_blocks: Vec<u64>,
    sent_trajectory: Vec<bool>,
}

impl Lane {
    fn new(kind: SchedulerKind, cfg: &ScenarioConfig) -> Result<Self> {
        let k = cfg.num_users();
        Ok(Self {
            kind,
            ledger: ThroughputLedger::new(k, cfg.beta, cfg.throughput_floor)?,
            hfs: HfsState::new(cfg.hfs.alpha_p.unwrap_or(0.5), cfg.hfs.adapt_step),
            hfs_fixed: cfg.hfs.alpha_p,
            hfs_sizes: None,
            hfs_acc: HfsAccounting::default(),
            hfs_window: cfg.hfs.adapt_window,
            records: Vec::new(),
            feedback_reals: vec![0; k],
            feedback_payloads: vec![0; k],
            fallback_blocks: vec![0; k],
            sent_trajectory: vec![false; k],
        })
    }

    fn partition(&self, ctx: &BlockContext) -> ClassPartition {
        let mut part = ClassPartition::default();
        for (k, f) in ctx.flags.iter().enumerate() {
            if f.is_predictable() && ctx.predictions[k].is_some() {
                part.predictable.push(k);
            } else {
                part.non_predictable.push(k);
            }
        }
        part
    }

    /// Refreshes the hard-fairness share from the closed forms whenever the
    /// class sizes change (only once in adaptive mode).
    fn refresh_alpha(&mut self, part: &ClassPartition, d: &Dims) -> Result<()> {
        if self.hfs_fixed.is_some() {
            return Ok(());
        }
        let sizes = (part.predictable.len(), part.non_predictable.len());
        let adaptive_started = self.hfs.adapt_step.is_some() && self.hfs_sizes.is_some();
        if self.hfs_sizes == Some(sizes) || adaptive_started {
            return Ok(());
        }
        self.hfs_sizes = Some(sizes);
        self.hfs.alpha_p = match sizes {
            (_, 0) => 1.0,
            (0, _) => 0.0,
            (k_p, k_np) => {
                let input = HfsAnalyticsInput { m: d.antennas, p: d.power, k_p, k_np };
                hfs_alpha(t_p_lower(&input)?, t_np(&input)?)?
            }
        };
        Ok(())
    }

    fn step(&mut self, ctx: &BlockContext, d: &Dims, norms: &[f64]) -> Result<()> {
        let part = self.partition(ctx);
        let weights = self.ledger.weights();
        let with_prediction: Vec<usize> = (0..d.users).filter(|&k| ctx.predictions[k].is_some()).collect();

        // predicted channels at the block start, [subcarrier][user]
        let start_channels: Vec<Vec<Vec<Complex64>>> = (0..d.sc)
            .map(|s| {
                (0..d.users)
                    .map(|k| ctx.predictions[k].as_ref().map_or_else(Vec::new, |p| d.slice(&p.channels, 0, s).to_vec()))
                    .collect()
            })
            .collect();

        let hfs_class = if self.kind == SchedulerKind::Hfs {
            self.refresh_alpha(&part, d)?;
            let class = self.hfs.next_class(!part.predictable.is_empty(), !part.non_predictable.is_empty());
            let rr = match class {
                ServiceClass::NonPredictable => self.hfs.next_round_robin(&part.non_predictable),
                ServiceClass::Predictable => None,
            };
            Some((class, rr))
        } else {
            None
        };

        let groups = d.sc / d.group;
        let mut nominal = vec![0.0; d.users];
        let mut actual = vec![0.0; d.users];
        let mut served = vec![0usize; d.users];
        for g in 0..groups {
            let scs: Vec<usize> = (g * d.group..(g + 1) * d.group).collect();
            let rates = |set: &[usize]| -> Option<Vec<f64>> {
                let mut acc = vec![0.0; set.len()];
                for &s in &scs {
                    let r = zf_nominal_rates(&start_channels[s], d.power, set)?;
                    acc.iter_mut().zip(r).for_each(|(a, x)| *a += x / scs.len() as f64);
                }
                Some(acc)
            };
            let decision: ScheduleDecision = match (self.kind, hfs_class) {
                (SchedulerKind::Pfs, _) => pfs_select(&with_prediction, &weights, d.antennas, rates),
                (SchedulerKind::Mpfs, _) => mpfs_select(&part, &weights, norms, d.power, d.antennas, rates),
                (SchedulerKind::Hfs, Some((ServiceClass::Predictable, _))) => {
                    pfs_select(&part.predictable, &weights, d.antennas, rates)
                }
                (SchedulerKind::Hfs, Some((_, Some(user)))) => {
                    diversity_decision(user, &weights, norms, d.power, d.antennas)
                }
                (SchedulerKind::Hfs, _) => pfs_select(&[], &weights, d.antennas, rates),
            };
            self.ledger.record_slot(&decision.users);
            for &u in &decision.users {
                served[u] += 1;
            }
            self.score(&decision, &scs, ctx, d, norms, &mut nominal, &mut actual)?;
        }

        let cells = (d.sc * d.samples) as f64;
        nominal.iter_mut().for_each(|x| *x /= cells);
        actual.iter_mut().for_each(|x| *x /= cells);
        self.ledger.update(&actual);

        if let Some((class, _)) = hfs_class {
            self.account_hfs(class, &part, &actual);
        }
        self.account_feedback(ctx, d, &part);

        for k in 0..d.users {
            self.records.push(BlockRecord {
                block: ctx.block,
                user: k + 1,
                throughput: self.ledger.throughput[k],
                served: served[k],
                nominal_rate: nominal[k],
                actual_rate: actual[k],
                nmse: ctx.nmse[k],
                predictable_flag: ctx.flags[k].is_predictable() as u8,
            });
        }
        Ok(())
    }

    /// Adds nominal and actual rates of a group decision over all rate
    /// samples, recomputing zero-forcing beams from the fed-back trajectory.
    #[allow(clippy::too_many_arguments)]
    fn score(
        &self,
        decision: &ScheduleDecision,
        scs: &[usize],
        ctx: &BlockContext,
        d: &Dims,
        norms: &[f64],
        nominal: &mut [f64],
        actual: &mut [f64],
    ) -> Result<()> {
        if decision.users.is_empty() {
            return Ok(());
        }
        for i in 0..d.samples {
            for &s in scs {
                match decision.mode {
                    ServiceMode::TransmitDiversity => {
                        for &k in &decision.users {
                            let h = d.slice(&ctx.truths[k], i, s);
                            let (nom, act) = transmit_diversity_rate(norms[k], norm_sqr(h), d.power, d.antennas);
                            nominal[k] += nom;
                            actual[k] += act;
                        }
                    }
                    ServiceMode::ZeroForcing => {
                        let pred: Vec<&[Complex64]> = decision
                            .users
                            .iter()
                            .map(|&k| d.slice(&ctx.predictions[k].as_ref().expect("scheduled user has a prediction").channels, i, s))
                            .collect();
                        let out = zf_beamformer(&pred, &decision.users, d.power)?;
                        let kept = &out.decision.users;
                        let kept_pred: Vec<&[Complex64]> = kept
                            .iter()
                            .map(|u| pred[decision.users.iter().position(|x| x == u).expect("kept user was requested")])
                            .collect();
                        let kept_true: Vec<&[Complex64]> = kept.iter().map(|&k| d.slice(&ctx.truths[k], i, s)).collect();
                        for (r, &k) in rate_report(&kept_pred, &kept_true, &out.decision).iter().zip(kept) {
                            nominal[k] += r.nominal;
                            actual[k] += r.actual;
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn account_hfs(&mut self, class: ServiceClass, part: &ClassPartition, actual: &[f64]) {
        let acc = &mut self.hfs_acc;
        acc.alpha_sum += self.hfs.alpha_p;
        acc.blocks += 1;
        let mean_over = |users: &[usize]| users.iter().map(|&k| actual[k]).sum::<f64>() / users.len().max(1) as f64;
        match class {
            ServiceClass::Predictable => {
                acc.rate_p += mean_over(&part.predictable);
                acc.slots_p += 1;
            }
            ServiceClass::NonPredictable => {
                acc.rate_np += mean_over(&part.non_predictable);
                acc.slots_np += 1;
            }
        }
        if acc.blocks.is_multiple_of(self.hfs_window) && acc.slots_p > 0 && acc.slots_np > 0 {
            let alpha = acc.alpha_sum / acc.blocks as f64;
            let realized_p = alpha * acc.rate_p / acc.slots_p as f64;
            let realized_np = (1.0 - alpha) * acc.rate_np / acc.slots_np as f64;
            self.hfs.adapt(realized_p, realized_np);
        }
    }

    fn account_feedback(&mut self, ctx: &BlockContext, d: &Dims, part: &ClassPartition) {
        for k in 0..d.users {
            let Some(p) = ctx.predictions[k].as_ref() else {
                self.feedback_reals[k] += 1;
                self.feedback_payloads[k] += 1;
                self.sent_trajectory[k] = false;
                continue;
            };
            if p.fallback {
                self.fallback_blocks[k] += 1;
            }
            let trajectory = self.kind == SchedulerKind::Pfs || part.predictable.contains(&k);
            if trajectory {
                let slots = if d.batch_payload { d.samples } else { 1 };
                self.feedback_reals[k] += (2 * d.antennas * d.sc * slots) as u64;
                if !d.batch_payload || ctx.batch_start || !self.sent_trajectory[k] {
                    self.feedback_payloads[k] += 1;
                }
            } else {
                self.feedback_reals[k] += 1;
                self.feedback_payloads[k] += 1;
            }
            self.sent_trajectory[k] = trajectory;
        }
    }
}

/// Runs the configured scheduler.
pub fn run(cfg: &ScenarioConfig) -> Result<RunOutput> {
    Ok(run_lanes(cfg, &[cfg.scheduler])?.remove(0))
}

/// Runs several schedulers on one channel and prediction realization. The
/// result for each scheduler is identical to a separate [`run`] with it.
pub fn run_lanes(cfg: &ScenarioConfig, schedulers: &[SchedulerKind]) -> Result<Vec<RunOutput>> {
    cfg.validate()?;
    let eval_sc = cfg.evaluation_subcarriers();
    let mut terminals = (0..cfg.num_users())
        .map(|k| Terminal::new(cfg, k, &eval_sc))
        .collect::<Result<Vec<_>>>()?;
    let mut lanes = schedulers.iter().map(|&s| Lane::new(s, cfg)).collect::<Result<Vec<_>>>()?;
    let d = Dims {
        users: cfg.num_users(),
        antennas: cfg.num_antennas,
        sc: eval_sc.len(),
        samples: cfg.rate_samples,
        group: cfg.group_size,
        power: cfg.power(),
        batch_payload: cfg.predictor == PredictorKind::Esprit,
    };
    let d_t = cfg.pilot.d_t;
    let warmup = cfg.warmup_blocks();
    let tracker_noise = if cfg.tracker_estimate_noise { pilot_noise_variance(cfg.pilot_snr()) } else { 0.0 };

    for j in 0..warmup + cfg.horizon_blocks() {
        let s0 = j * d_t;
        let samples: Vec<usize> = (0..d.samples).map(|i| s0 + i * d_t / d.samples).collect();
        let flags: Vec<Predictability> = terminals.iter_mut().map(|t| t.tracker.classify()).collect();
        let predictions: Vec<Option<BlockPrediction>> =
            terminals.iter().map(|t| t.predict(&samples, d.sc, d.antennas)).collect();
        let truths: Vec<Vec<Complex64>> = terminals.iter().map(|t| t.truth(&samples, d.sc)).collect();

        let stride = d.sc * d.antennas;
        let mut errors = Vec::with_capacity(d.users);
        for ((term, pred), truth) in terminals.iter_mut().zip(&predictions).zip(&truths) {
            let e = pred.as_ref().and_then(|p| nmse(&p.channels[..stride], &truth[..stride]));
            if let Some(p) = pred {
                let reference: Vec<Complex64> = if tracker_noise > 0.0 {
                    truth[..stride].iter().map(|h| h + noise_sample(&mut term.rng, tracker_noise)).collect()
                } else {
                    truth[..stride].to_vec()
                };
                term.tracker.record_error(&p.channels[..stride], &reference);
            }
            errors.push(e);
        }

        if j >= warmup {
            let norms: Vec<f64> = terminals.iter().map(|t| t.norm_estimate).collect();
            let ctx = BlockContext {
                block: j - warmup,
                batch_start: j % cfg.pilot.n_t == 0,
                predictions: &predictions,
                truths: &truths,
                flags: &flags,
                nmse: &errors,
            };
            for lane in lanes.iter_mut() {
                lane.step(&ctx, &d, &norms)?;
            }
        }

        for term in terminals.iter_mut() {
            term.observe(cfg, s0, &eval_sc)?;
        }
    }

    lanes
        .into_iter()
        .map(|lane| {
            let mut summary = summarize(&lane.records, d.users, d.sc / d.group, &cfg.name, lane.kind, cfg.seed)?;
            summary.feedback_reals = lane.feedback_reals;
            summary.feedback_payloads = lane.feedback_payloads;
            summary.fallback_blocks = lane.fallback_blocks;
            if lane.kind == SchedulerKind::Hfs {
                let a = &lane.hfs_acc;
                summary.hfs = Some(HfsBalance {
                    alpha_p: a.alpha_sum / a.blocks.max(1) as f64,
                    class_rate_p: a.rate_p / a.slots_p.max(1) as f64,
                    class_rate_np: a.rate_np / a.slots_np.max(1) as f64,
                    slots_p: a.slots_p,
                    slots_np: a.slots_np,
                });
            }
            Ok(RunOutput { records: lane.records, summary })
        })
        .collect()
}
