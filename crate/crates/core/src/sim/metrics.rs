//! Per-block records, CSV output and run summaries.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scheduler::SchedulerKind;

/// One row of the metrics stream: one user in one scheduled block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockRecord {
    pub block: usize,
    /// 1-based user number.
    pub user: usize,
    /// Long-term throughput after this block's update.
    #[serde(rename = "T_k")]
    pub throughput: f64,
    /// Subcarrier groups in which the user was scheduled this block.
    pub served: usize,
    /// Nominal rate averaged over evaluation subcarriers and rate samples.
    pub nominal_rate: f64,
    /// Actual rate averaged the same way.
    pub actual_rate: f64,
    /// Prediction NMSE at the block start; empty when no prediction exists.
    pub nmse: Option<f64>,
    pub predictable_flag: u8,
}

pub const CSV_COLUMNS: [&str; 8] =
    ["block", "user", "T_k", "served", "nominal_rate", "actual_rate", "nmse", "predictable_flag"];

pub fn write_csv<W: Write>(records: &[BlockRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: std::io::Read>(input: R) -> Result<Vec<BlockRecord>> {
    let mut r = csv::Reader::from_reader(input);
    Ok(r.deserialize().collect::<std::result::Result<Vec<BlockRecord>, _>>()?)
}

/// Class-level throughputs of a hard-fairness run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HfsBalance {
    /// Predictable share averaged over scheduled blocks.
    pub alpha_p: f64,
    /// Per-user rate of the predictable class over its own slots.
    pub class_rate_p: f64,
    /// Per-user rate of the non-predictable class over its own slots.
    pub class_rate_np: f64,
    pub slots_p: usize,
    pub slots_np: usize,
}

impl HfsBalance {
    /// `(α_p·T_p, α_np·T_np)`.
    pub fn shares(&self) -> (f64, f64) {
        (self.alpha_p * self.class_rate_p, (1.0 - self.alpha_p) * self.class_rate_np)
    }

    /// `|α_p·T_p − α_np·T_np| / max(α_p·T_p, α_np·T_np)`.
    pub fn relative_gap(&self) -> f64 {
        let (a, b) = self.shares();
        let m = a.max(b);
        if m == 0.0 {
            0.0
        } else {
            (a - b).abs() / m
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub scenario: String,
    pub scheduler: SchedulerKind,
    pub seed: u64,
    pub blocks: usize,
    pub groups_per_block: usize,
    /// Fraction of scheduling slots (block, subcarrier group) in which each
    /// user was served.
    pub activity: Vec<f64>,
    /// Run-average actual rate per user.
    pub mean_rate: Vec<f64>,
    /// Long-term throughput `T_k` at the end of the run.
    pub final_throughput: Vec<f64>,
    /// `Σ_k` run-average rate.
    pub sum_throughput: f64,
    /// `Σ_k log` run-average rate.
    pub sum_log_throughput: f64,
    /// Mean prediction NMSE per user over blocks that had a prediction.
    pub mean_nmse: Vec<Option<f64>>,
    /// Fraction of blocks each user spent flagged predictable.
    pub predictable_fraction: Vec<f64>,
    /// Feedback real numbers sent per user.
    pub feedback_reals: Vec<u64>,
    /// Feedback messages sent per user.
    pub feedback_payloads: Vec<u64>,
    /// Blocks in which a user's prediction fell back to a held value.
    pub fallback_blocks: Vec<u64>,
    pub hfs: Option<HfsBalance>,
}

/// Aggregates a record stream. Feedback, fallback and HFS fields are left
/// empty for the caller to fill.
pub fn summarize(
    records: &[BlockRecord],
    num_users: usize,
    groups_per_block: usize,
    scenario: &str,
    scheduler: SchedulerKind,
    seed: u64,
) -> Result<Summary> {
    if records.is_empty() || num_users == 0 || groups_per_block == 0 {
        return Err(Error::Domain("cannot summarize an empty run".into()));
    }
    let mut served = vec![0usize; num_users];
    let mut rate = vec![0.0; num_users];
    let mut rows = vec![0usize; num_users];
    let mut nmse_sum = vec![0.0; num_users];
    let mut nmse_count = vec![0usize; num_users];
    let mut predictable = vec![0usize; num_users];
    let mut final_throughput = vec![0.0; num_users];
    let mut blocks = 0;
    for r in records {
        let k = r.user.checked_sub(1).filter(|&k| k < num_users).ok_or_else(|| {
            Error::Domain(format!("record for user {} outside 1..={num_users}", r.user))
        })?;
        served[k] += r.served;
        rate[k] += r.actual_rate;
        rows[k] += 1;
        if let Some(e) = r.nmse {
            nmse_sum[k] += e;
            nmse_count[k] += 1;
        }
        predictable[k] += r.predictable_flag as usize;
        final_throughput[k] = r.throughput;
        blocks = blocks.max(r.block + 1);
    }
    let per_user = |x: &[f64]| -> Vec<f64> {
        x.iter().zip(&rows).map(|(v, &n)| if n == 0 { 0.0 } else { v / n as f64 }).collect()
    };
    let mean_rate = per_user(&rate);
    let activity = served
        .iter()
        .zip(&rows)
        .map(|(&s, &n)| if n == 0 { 0.0 } else { s as f64 / (n * groups_per_block) as f64 })
        .collect();
    let predictable_fraction = per_user(&predictable.iter().map(|&p| p as f64).collect::<Vec<_>>());
    let mean_nmse = nmse_sum
        .iter()
        .zip(&nmse_count)
        .map(|(s, &n)| (n > 0).then(|| s / n as f64))
        .collect();
    Ok(Summary {
        scenario: scenario.to_string(),
        scheduler,
        seed,
        blocks,
        groups_per_block,
        activity,
        sum_throughput: mean_rate.iter().sum(),
        sum_log_throughput: mean_rate.iter().map(|r| r.ln()).sum(),
        mean_rate,
        final_throughput,
        mean_nmse,
        predictable_fraction,
        feedback_reals: vec![0; num_users],
        feedback_payloads: vec![0; num_users],
        fallback_blocks: vec![0; num_users],
        hfs: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(block: usize, user: usize, served: usize, rate: f64) -> BlockRecord {
        BlockRecord {
            block,
            user,
            throughput: rate,
            served,
            nominal_rate: rate,
            actual_rate: rate,
            nmse: if block == 0 { None } else { Some(0.5) },
            predictable_flag: 1,
        }
    }

    #[test]
    fn single_user_always_served() {
        let records: Vec<BlockRecord> = (0..10).map(|b| rec(b, 1, 4, 2.0)).collect();
        let s = summarize(&records, 1, 4, "x", SchedulerKind::Pfs, 0).unwrap();
        assert_eq!(s.activity, vec![1.0]);
        assert_eq!(s.blocks, 10);
        assert_eq!(s.sum_throughput, 2.0);
        assert!((s.sum_log_throughput - 2f64.ln()).abs() < 1e-15);
        assert_eq!(s.mean_nmse, vec![Some(0.5)]);
        assert!(summarize(&[], 1, 4, "x", SchedulerKind::Pfs, 0).is_err());
        assert!(summarize(&[rec(0, 2, 0, 1.0)], 1, 4, "x", SchedulerKind::Pfs, 0).is_err());
    }

    #[test]
    fn csv_round_trip_keeps_column_order() {
        let records = vec![rec(0, 1, 1, 0.25), rec(0, 2, 0, 0.0), rec(1, 1, 1, 1.5)];
        let mut buf = Vec::new();
        write_csv(&records, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().next().unwrap(), CSV_COLUMNS.join(","));
        assert!(text.lines().nth(1).unwrap().ends_with(",,1"));
        assert_eq!(read_csv(buf.as_slice()).unwrap(), records);
    }

    #[test]
    fn balance_gap() {
        let b = HfsBalance { alpha_p: 0.5, class_rate_p: 2.0, class_rate_np: 1.8, slots_p: 1, slots_np: 1 };
        assert!((b.relative_gap() - 0.1).abs() < 1e-12);
    }
}
