//! Special functions and closed-form class throughputs for hard-fairness
//! time sharing.
//!
//! A non-predictable user served alone by transmit diversity sees
//! `log(1 + (P/M)·z)` with `z ~ Gamma(M, 1)`. With `K_np` such users in round
//! robin the per-user throughput is
//!
//! ```text
//! T_np = (1/K_np) · (M/P)^M / (M-1)! · J_M(M/P)
//! J_n(µ) = ∫_0^∞ t^(n-1) ln(1+t) e^(-µt) dt
//! ```
//!
//! A predictable user under zero-forcing with equal power is lower bounded
//! by `T_p ≥ (M/K_p) · e^(M/P) · E_1(M/P)`.

use statrs::function::gamma::{gamma, gamma_ur, ln_gamma};

use crate::error::{Error, Result};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const TINY: f64 = 1e-300;
const EPS: f64 = 1e-16;
const MAX_ITER: usize = 10_000;

fn check_positive(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be positive and finite, got {x}")))
    }
}

/// Modified Lentz evaluation of `ln Γ(a, x)` from its continued fraction.
/// Converges quickly once `x > a + 1`, for any real `a`.
fn ln_gamma_upper_cf(a: f64, x: f64) -> f64 {
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < TINY {
            d = TINY;
        }
        c = b + an / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h.ln() - x + a * x.ln()
}

/// Generalized exponential integral `E_n(x) = ∫_1^∞ e^(-xt) t^(-n) dt`.
pub fn expint(n: u32, x: f64) -> Result<f64> {
    check_positive("x", x)?;
    if n == 0 {
        return Err(Error::Domain("expint order must be at least 1".into()));
    }
    let nm1 = n as f64 - 1.0;
    if x > 1.0 {
        let mut b = x + n as f64;
        let mut c = 1.0 / TINY;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..MAX_ITER {
            let an = -(i as f64) * (nm1 + i as f64);
            b += 2.0;
            d = 1.0 / (an * d + b);
            c = b + an / c;
            let del = c * d;
            h *= del;
            if (del - 1.0).abs() < EPS {
                break;
            }
        }
        return Ok(h * (-x).exp());
    }
    let mut ans = if n == 1 { -x.ln() - EULER_GAMMA } else { 1.0 / nm1 };
    let mut fact = 1.0;
    for i in 1..MAX_ITER {
        fact *= -x / i as f64;
        let del = if (i as f64 - nm1).abs() > 0.5 {
            -fact / (i as f64 - nm1)
        } else {
            let psi = -EULER_GAMMA + (1..=n - 1).map(|k| 1.0 / k as f64).sum::<f64>();
            fact * (-x.ln() + psi)
        };
        ans += del;
        if del.abs() < ans.abs() * EPS {
            break;
        }
    }
    Ok(ans)
}

/// Natural log of the upper incomplete gamma function.
fn ln_gamma_upper(a: f64, x: f64) -> Result<f64> {
    check_positive("x", x)?;
    if !a.is_finite() {
        return Err(Error::Domain(format!("gamma order must be finite, got {a}")));
    }
    if x > 1.0_f64.max(a + 1.0) {
        return Ok(ln_gamma_upper_cf(a, x));
    }
    if a > 0.0 {
        return Ok((gamma_ur(a, x) * gamma(a)).ln());
    }
    // Step down from an order in (0, 1], or from zero where Γ(0, x) = E_1(x).
    let steps = (-a).floor() as usize + 1;
    let start = a + steps as f64;
    let (mut order, mut value) = if (start - 1.0).abs() < 1e-12 {
        (0.0, expint(1, x)?)
    } else {
        (start, gamma_ur(start, x) * gamma(start))
    };
    let ex = (-x).exp();
    while order - a > 0.5 {
        order -= 1.0;
        value = (value - x.powf(order) * ex) / order;
    }
    Ok(value.ln())
}

/// Upper incomplete gamma function `Γ(α, x) = ∫_x^∞ t^(α-1) e^(-t) dt` for
/// any real `α` and `x > 0`.
pub fn gamma_upper(alpha: f64, x: f64) -> Result<f64> {
    ln_gamma_upper(alpha, x).map(f64::exp)
}

fn ln_j_integral(n: u32, mu: f64) -> Result<f64> {
    check_positive("mu", mu)?;
    if n == 0 {
        return Err(Error::Domain("J_n needs n >= 1".into()));
    }
    let ln_prefactor = ln_gamma(n as f64) + mu;
    let terms = (1..=n)
        .map(|k| Ok(ln_gamma_upper(k as f64 - n as f64, mu)? - k as f64 * mu.ln()))
        .collect::<Result<Vec<f64>>>()?;
    let peak = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = terms.iter().map(|t| (t - peak).exp()).sum();
    Ok(ln_prefactor + peak + sum.ln())
}

/// `J_n(µ) = ∫_0^∞ t^(n-1) ln(1+t) e^(-µt) dt`, summed in log space from
/// incomplete gamma values at non-positive orders.
pub fn j_integral(n: u32, mu: f64) -> Result<f64> {
    ln_j_integral(n, mu).map(f64::exp)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HfsAnalyticsInput {
    /// Base-station antennas.
    pub m: usize,
    /// Transmit power, equal to the SNR since noise is normalized.
    pub p: f64,
    pub k_p: usize,
    pub k_np: usize,
}

impl HfsAnalyticsInput {
    fn validate(&self) -> Result<()> {
        if self.m == 0 || self.k_p + self.k_np == 0 {
            return Err(Error::Domain(format!("degenerate analytics input {self:?}")));
        }
        check_positive("P", self.p)
    }
}

/// Round-robin transmit-diversity throughput per non-predictable user.
pub fn t_np(input: &HfsAnalyticsInput) -> Result<f64> {
    input.validate()?;
    if input.k_np == 0 {
        return Err(Error::Domain("T_np needs at least one non-predictable user".into()));
    }
    let m = input.m as f64;
    let mu = m / input.p;
    let ln = m * mu.ln() - ln_gamma(m) + ln_j_integral(input.m as u32, mu)?;
    Ok(ln.exp() / input.k_np as f64)
}

/// Equal-power lower bound on the zero-forcing throughput per predictable
/// user.
pub fn t_p_lower(input: &HfsAnalyticsInput) -> Result<f64> {
    input.validate()?;
    if input.k_p == 0 {
        return Err(Error::Domain("T_p needs at least one predictable user".into()));
    }
    let m = input.m as f64;
    let mu = m / input.p;
    Ok(m / input.k_p as f64 * mu.exp() * expint(1, mu)?)
}

/// Time share of the predictable class that equalizes class throughputs,
/// `α_p = T_np / (T_p + T_np)`.
pub fn alpha_balance(t_p: f64, t_np: f64) -> Result<f64> {
    if !(t_p >= 0.0 && t_np >= 0.0) || t_p + t_np <= 0.0 || !(t_p + t_np).is_finite() {
        return Err(Error::Domain(format!("cannot balance throughputs {t_p} and {t_np}")));
    }
    Ok(t_np / (t_p + t_np))
}
