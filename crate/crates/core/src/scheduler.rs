//! Proportional fair, modified proportional fair and hard-fairness
//! scheduling, with the exponentially averaged throughput ledger.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::analytics::alpha_balance;
use crate::error::{Error, Result};
use crate::phy::{nominal_rate, zf_beamformer};
use crate::tracker::Predictability;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchedulerKind {
    Pfs,
    Mpfs,
    Hfs,
}

impl SchedulerKind {
    pub const ALL: [SchedulerKind; 3] = [SchedulerKind::Pfs, SchedulerKind::Mpfs, SchedulerKind::Hfs];

    pub fn name(self) -> &'static str {
        match self {
            SchedulerKind::Pfs => "pfs",
            SchedulerKind::Mpfs => "mpfs",
            SchedulerKind::Hfs => "hfs",
        }
    }
}

impl std::str::FromStr for SchedulerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pfs" => Ok(SchedulerKind::Pfs),
            "mpfs" => Ok(SchedulerKind::Mpfs),
            "hfs" => Ok(SchedulerKind::Hfs),
            other => Err(Error::Config(format!("unknown scheduler `{other}`"))),
        }
    }
}

/// Long-term throughputs `T_k` and activity counters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThroughputLedger {
    pub throughput: Vec<f64>,
    pub beta: f64,
    pub floor: f64,
    served: Vec<u64>,
    slots: u64,
}

impl ThroughputLedger {
    pub fn new(num_users: usize, beta: f64, floor: f64) -> Result<Self> {
        if !(beta > 0.0 && beta <= 1.0) || !(floor > 0.0) {
            return Err(Error::Config(format!("ledger needs 0 < beta <= 1 and a positive floor, got {beta}, {floor}")));
        }
        Ok(Self {
            throughput: vec![floor; num_users],
            beta,
            floor,
            served: vec![0; num_users],
            slots: 0,
        })
    }

    pub fn num_users(&self) -> usize {
        self.throughput.len()
    }

    /// PF weights `1/T_k`.
    pub fn weights(&self) -> Vec<f64> {
        self.throughput.iter().map(|t| t.recip()).collect()
    }

    /// `T_k ← (1−β) T_k + β r_k`, floored.
    pub fn update(&mut self, mean_rates: &[f64]) {
        for (t, &r) in self.throughput.iter_mut().zip(mean_rates) {
            *t = ((1.0 - self.beta) * *t + self.beta * r).max(self.floor);
        }
    }

    /// Counts one scheduling slot in which `users` were served.
    pub fn record_slot(&mut self, users: &[usize]) {
        self.slots += 1;
        for &u in users {
            self.served[u] += 1;
        }
    }

    pub fn slots(&self) -> u64 {
        self.slots
    }

    pub fn served(&self) -> &[u64] {
        &self.served
    }

    /// Fraction of slots in which each user was served.
    pub fn activity(&self) -> Vec<f64> {
        self.served
            .iter()
            .map(|&s| if self.slots == 0 { 0.0 } else { s as f64 / self.slots as f64 })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClassPartition {
    pub predictable: Vec<usize>,
    pub non_predictable: Vec<usize>,
}

impl ClassPartition {
    pub fn from_flags(flags: &[Predictability]) -> Self {
        let mut part = Self::default();
        for (k, f) in flags.iter().enumerate() {
            match f {
                Predictability::Predictable => part.predictable.push(k),
                Predictability::NonPredictable => part.non_predictable.push(k),
            }
        }
        part
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ServiceMode {
    ZeroForcing,
    TransmitDiversity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleDecision {
    pub users: Vec<usize>,
    pub mode: ServiceMode,
    /// Nominal rate per scheduled user.
    pub nominal: Vec<f64>,
    /// Weighted sum `Σ R̃_k / T_k`.
    pub objective: f64,
}

impl ScheduleDecision {
    fn empty() -> Self {
        Self { users: Vec::new(), mode: ServiceMode::ZeroForcing, nominal: Vec::new(), objective: 0.0 }
    }
}

/// Nominal zero-forcing rates of a tentative user set from the fed-back
/// channel predictions, equal power. `None` when the set is not separable.
pub fn zf_nominal_rates(channels: &[Vec<Complex64>], power: f64, users: &[usize]) -> Option<Vec<f64>> {
    let chans: Vec<&[Complex64]> = users.iter().map(|&u| channels[u].as_slice()).collect();
    let out = zf_beamformer(&chans, users, power).ok()?;
    if !out.dropped.is_empty() {
        return None;
    }
    let d = out.decision;
    Some((0..users.len()).map(|k| nominal_rate(chans[k], &d.beams[k], d.powers[k])).collect())
}

/// Greedy weighted-sum-rate selection. Returns the selected set, its rates
/// and the objective after each accepted addition.
fn greedy<F>(candidates: &[usize], weights: &[f64], max_users: usize, mut rates: F) -> (Vec<usize>, Vec<f64>, Vec<f64>)
where
    F: FnMut(&[usize]) -> Option<Vec<f64>>,
{
    let mut set: Vec<usize> = Vec::new();
    let mut set_rates: Vec<f64> = Vec::new();
    let mut best = 0.0;
    let mut trace = Vec::new();
    while set.len() < max_users {
        let mut round: Option<(f64, usize, Vec<f64>)> = None;
        for &k in candidates {
            if set.contains(&k) {
                continue;
            }
            let mut trial = set.clone();
            trial.push(k);
            let Some(r) = rates(&trial) else { continue };
            let obj: f64 = trial.iter().zip(&r).map(|(&u, x)| weights[u] * x).sum();
            if round.as_ref().is_none_or(|(o, _, _)| obj > *o) {
                round = Some((obj, k, r));
            }
        }
        match round {
            Some((obj, k, r)) if obj > best => {
                set.push(k);
                set_rates = r;
                best = obj;
                trace.push(obj);
            }
            _ => break,
        }
    }
    (set, set_rates, trace)
}

/// Greedy PF selection among `candidates`: start from the best single user,
/// keep adding the user that most increases `Σ R̃_k / T_k`, stop at the first
/// non-improving step or at `max_users`.
pub fn pfs_select<F>(candidates: &[usize], weights: &[f64], max_users: usize, rates: F) -> ScheduleDecision
where
    F: FnMut(&[usize]) -> Option<Vec<f64>>,
{
    let (users, nominal, trace) = greedy(candidates, weights, max_users, rates);
    ScheduleDecision {
        users,
        mode: ServiceMode::ZeroForcing,
        nominal,
        objective: trace.last().copied().unwrap_or(0.0),
    }
}

/// Best non-predictable user served alone by transmit diversity, judged on
/// the fed-back norm.
fn best_singleton(
    non_predictable: &[usize],
    weights: &[f64],
    fed_back_norms: &[f64],
    power: f64,
    num_antennas: usize,
) -> Option<ScheduleDecision> {
    non_predictable
        .iter()
        .map(|&k| {
            let r = (power / num_antennas as f64 * fed_back_norms[k].max(0.0)).ln_1p();
            (weights[k] * r, k, r)
        })
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(obj, k, r)| ScheduleDecision {
            users: vec![k],
            mode: ServiceMode::TransmitDiversity,
            nominal: vec![r],
            objective: obj,
        })
}

/// PF with the rule that a non-predictable user is only ever served alone,
/// by transmit diversity. The zero-forcing branch over predictable users and
/// the best non-predictable singleton compete on the weighted objective.
pub fn mpfs_select<F>(
    partition: &ClassPartition,
    weights: &[f64],
    fed_back_norms: &[f64],
    power: f64,
    num_antennas: usize,
    rates: F,
) -> ScheduleDecision
where
    F: FnMut(&[usize]) -> Option<Vec<f64>>,
{
    let zf = pfs_select(&partition.predictable, weights, num_antennas, rates);
    let single = best_singleton(&partition.non_predictable, weights, fed_back_norms, power, num_antennas);
    match single {
        Some(s) if zf.users.is_empty() || s.objective > zf.objective => s,
        _ => zf,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ServiceClass {
    Predictable,
    NonPredictable,
}

/// Time sharing between the two classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HfsState {
    pub alpha_p: f64,
    pub credit: f64,
    pub cursor: usize,
    /// Step of the optional adaptive correction of `alpha_p`.
    pub adapt_step: Option<f64>,
}

impl HfsState {
    pub fn new(alpha_p: f64, adapt_step: Option<f64>) -> Self {
        Self { alpha_p: alpha_p.clamp(0.0, 1.0), credit: 0.0, cursor: 0, adapt_step }
    }

    pub fn alpha_np(&self) -> f64 {
        1.0 - self.alpha_p
    }

    /// Class of the next slot from the credit accumulator. An empty class
    /// yields its slot to the other one.
    pub fn next_class(&mut self, has_predictable: bool, has_non_predictable: bool) -> ServiceClass {
        self.credit += self.alpha_p;
        let by_credit = if self.credit >= 1.0 - 1e-12 {
            self.credit -= 1.0;
            ServiceClass::Predictable
        } else {
            ServiceClass::NonPredictable
        };
        match (by_credit, has_predictable, has_non_predictable) {
            (ServiceClass::Predictable, false, true) => ServiceClass::NonPredictable,
            (ServiceClass::NonPredictable, true, false) => ServiceClass::Predictable,
            (class, _, _) => class,
        }
    }

    /// Next non-predictable user in round robin.
    pub fn next_round_robin(&mut self, non_predictable: &[usize]) -> Option<usize> {
        if non_predictable.is_empty() {
            return None;
        }
        let u = non_predictable[self.cursor % non_predictable.len()];
        self.cursor += 1;
        Some(u)
    }

    /// Nudges `alpha_p` toward equal realized per-user throughput in the two
    /// classes: up when predictable users fall behind, down otherwise.
    pub fn adapt(&mut self, realized_p: f64, realized_np: f64) {
        if let Some(eta) = self.adapt_step {
            let gap = realized_np - realized_p;
            if gap != 0.0 {
                self.alpha_p = (self.alpha_p + eta * gap.signum()).clamp(0.0, 1.0);
            }
        }
    }
}

/// Balance point `α_p = T_np/(T_p + T_np)`, zero when non-predictable users
/// have no throughput at all.
pub fn hfs_alpha(t_p: f64, t_np: f64) -> Result<f64> {
    if t_np == 0.0 {
        return Ok(0.0);
    }
    alpha_balance(t_p, t_np)
}

/// One hard-fairness slot: PF among predictable users in their share of
/// slots, otherwise the next non-predictable user alone.
pub fn hfs_step<F>(
    state: &mut HfsState,
    partition: &ClassPartition,
    weights: &[f64],
    fed_back_norms: &[f64],
    power: f64,
    num_antennas: usize,
    rates: F,
) -> ScheduleDecision
where
    F: FnMut(&[usize]) -> Option<Vec<f64>>,
{
    let class = state.next_class(!partition.predictable.is_empty(), !partition.non_predictable.is_empty());
    match class {
        ServiceClass::Predictable => pfs_select(&partition.predictable, weights, num_antennas, rates),
        ServiceClass::NonPredictable => match state.next_round_robin(&partition.non_predictable) {
            Some(k) => diversity_decision(k, weights, fed_back_norms, power, num_antennas),
            None => ScheduleDecision::empty(),
        },
    }
}

/// A single user served by transmit diversity.
pub fn diversity_decision(
    user: usize,
    weights: &[f64],
    fed_back_norms: &[f64],
    power: f64,
    num_antennas: usize,
) -> ScheduleDecision {
    let r = (power / num_antennas as f64 * fed_back_norms[user].max(0.0)).ln_1p();
    ScheduleDecision {
        users: vec![user],
        mode: ServiceMode::TransmitDiversity,
        nominal: vec![r],
        objective: weights[user] * r,
    }
}
