//! Zero-forcing beamforming and rate accounting.
//!
//! Noise is normalized to one, so the total transmit power `P` is the SNR.
//! All rates are in nats per channel use.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigen_desc, norm_sqr, CMatrix};

/// Channels whose stacked matrix has a larger condition number are not
/// separable by zero forcing.
pub const MAX_CONDITION: f64 = 1e8;

#[derive(Debug, Clone, PartialEq)]
pub struct BeamformingDecision {
    pub users: Vec<usize>,
    /// Unit-norm beam per scheduled user, same order as `users`.
    pub beams: Vec<Vec<Complex64>>,
    pub powers: Vec<f64>,
}

impl BeamformingDecision {
    pub fn total_power(&self) -> f64 {
        self.powers.iter().sum()
    }
}

/// Outcome of [`zf_beamformer`]: the decision over the users that could be
/// kept, and those dropped to restore a well-conditioned channel matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ZfOutcome {
    pub decision: BeamformingDecision,
    pub dropped: Vec<usize>,
}

fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Normalized pseudoinverse columns, or `None` when the Gram matrix is
/// singular or too badly conditioned.
fn zf_beams(channels: &[&[Complex64]]) -> Option<Vec<Vec<Complex64>>> {
    let s = channels.len();
    let m = channels[0].len();
    let h = CMatrix::from_fn(m, s, |r, c| channels[c][r]);
    let gram = h.adjoint() * &h;
    let (eigs, _) = hermitian_eigen_desc(gram.clone());
    let (hi, lo) = (eigs[0], eigs[s - 1]);
    if !(lo > 0.0) || hi / lo > MAX_CONDITION * MAX_CONDITION {
        return None;
    }
    // V = H (HᴴH)⁻¹ = Q R⁻ᴴ, which avoids squaring the condition number
    let qr = h.qr();
    let r_inv = qr.r().solve_upper_triangular(&CMatrix::identity(s, s))?;
    let v = qr.q() * r_inv.adjoint();
    Some(
        (0..s)
            .map(|k| {
                let col: Vec<Complex64> = v.column(k).iter().copied().collect();
                let n = norm_sqr(&col).sqrt();
                col.into_iter().map(|z| z / n).collect()
            })
            .collect(),
    )
}

/// Zero-forcing beams for `users` from their predicted channels, equal power
/// `P/|S|`. While the channel matrix is rank deficient or worse conditioned
/// than [`MAX_CONDITION`], the user with the weakest predicted channel is
/// dropped.
pub fn zf_beamformer(predicted: &[&[Complex64]], users: &[usize], total_power: f64) -> Result<ZfOutcome> {
    if predicted.len() != users.len() || users.is_empty() {
        return Err(Error::Domain("need one predicted channel per scheduled user".into()));
    }
    let m = predicted[0].len();
    if users.len() > m || predicted.iter().any(|h| h.len() != m) {
        return Err(Error::Domain(format!("cannot separate {} users with {m} antennas", users.len())));
    }
    let mut keep: Vec<usize> = (0..users.len()).collect();
    let mut dropped = Vec::new();
    while !keep.is_empty() {
        let chans: Vec<&[Complex64]> = keep.iter().map(|&i| predicted[i]).collect();
        if let Some(beams) = zf_beams(&chans) {
            let p = total_power / keep.len() as f64;
            return Ok(ZfOutcome {
                decision: BeamformingDecision {
                    users: keep.iter().map(|&i| users[i]).collect(),
                    beams,
                    powers: vec![p; keep.len()],
                },
                dropped,
            });
        }
        let weakest = (0..keep.len())
            .min_by(|&a, &b| norm_sqr(predicted[keep[a]]).total_cmp(&norm_sqr(predicted[keep[b]])))
            .expect("non-empty");
        dropped.push(users[keep.remove(weakest)]);
    }
    Ok(ZfOutcome {
        decision: BeamformingDecision { users: Vec::new(), beams: Vec::new(), powers: Vec::new() },
        dropped,
    })
}

/// `log(1 + |ĥᴴ v̂|² p)`.
pub fn nominal_rate(predicted: &[Complex64], beam: &[Complex64], power: f64) -> f64 {
    (inner(predicted, beam).norm_sqr() * power).ln_1p()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserRate {
    pub nominal: f64,
    pub actual: f64,
    pub interference: f64,
}

/// Nominal rates from the predicted channels and actual rates from the true
/// ones, `log(1 + |h_kᴴ v_k|² p_k / (1 + Σ_{j≠k} |h_kᴴ v_j|² p_j))`.
pub fn rate_report(
    predicted: &[&[Complex64]],
    actual: &[&[Complex64]],
    decision: &BeamformingDecision,
) -> Vec<UserRate> {
    (0..decision.users.len())
        .map(|k| {
            let h = actual[k];
            let signal = inner(h, &decision.beams[k]).norm_sqr() * decision.powers[k];
            let interference: f64 = (0..decision.users.len())
                .filter(|&j| j != k)
                .map(|j| inner(h, &decision.beams[j]).norm_sqr() * decision.powers[j])
                .sum();
            UserRate {
                nominal: nominal_rate(predicted[k], &decision.beams[k], decision.powers[k]),
                actual: (signal / (1.0 + interference)).ln_1p(),
                interference,
            }
        })
        .collect()
}

/// Transmit-diversity rates `log(1 + (P/M)‖h‖²)`: nominal from the fed-back
/// norm, actual from the true one.
pub fn transmit_diversity_rate(fed_back_norm_sqr: f64, true_norm_sqr: f64, total_power: f64, num_antennas: usize) -> (f64, f64) {
    let snr = total_power / num_antennas as f64;
    ((snr * fed_back_norm_sqr.max(0.0)).ln_1p(), (snr * true_norm_sqr).ln_1p())
}
