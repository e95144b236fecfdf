//! Independent numerical oracles for the integration and acceptance tests.
#![allow(dead_code)]

/// Kronrod 15-point abscissae (positive half, last is the centre).
const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
/// Gauss 7-point weights for the odd-indexed Kronrod abscissae.
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

fn kronrod<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for i in 0..7 {
        let x = h * XGK[i];
        let pair = f(c - x) + f(c + x);
        k += WGK[i] * pair;
        if i % 2 == 1 {
            g += WG[i / 2] * pair;
        }
    }
    (k * h, ((k - g) * h).abs())
}

fn adaptive<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, rel: f64, whole: f64, depth: u32) -> f64 {
    let (k, err) = kronrod(f, a, b);
    if err <= rel * whole.abs().max(k.abs()) || depth == 0 {
        return k;
    }
    let c = 0.5 * (a + b);
    adaptive(f, a, c, rel, whole, depth - 1) + adaptive(f, c, b, rel, whole, depth - 1)
}

/// Adaptive Gauss-Kronrod 7/15 on `[a, b]`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel: f64) -> f64 {
    // a coarse pass sets the scale for the local acceptance test
    let mut coarse = 0.0;
    let n = 64;
    for i in 0..n {
        let lo = a + (b - a) * i as f64 / n as f64;
        let hi = a + (b - a) * (i + 1) as f64 / n as f64;
        coarse += kronrod(&f, lo, hi).0;
    }
    let mut total = 0.0;
    for i in 0..n {
        let lo = a + (b - a) * i as f64 / n as f64;
        let hi = a + (b - a) * (i + 1) as f64 / n as f64;
        total += adaptive(&f, lo, hi, rel / n as f64, coarse, 50);
    }
    total
}

/// `∫_a^∞ f(t) dt` through `t = a + scale·s/(1−s)`.
pub fn integrate_to_infinity<F: Fn(f64) -> f64>(f: F, a: f64, scale: f64, rel: f64) -> f64 {
    integrate(
        |s| {
            if s >= 1.0 {
                return 0.0;
            }
            let u = 1.0 - s;
            let v = f(a + scale * s / u) * scale / (u * u);
            if v.is_finite() {
                v
            } else {
                0.0
            }
        },
        0.0,
        1.0,
        rel,
    )
}

fn ln_factorial(n: u32) -> f64 {
    (1..=n).map(|i| (i as f64).ln()).sum()
}

/// `E_n(x) = ∫_1^∞ e^{−xt} t^{−n} dt`.
pub fn expint_quad(n: u32, x: f64) -> f64 {
    // factor out e^{-x} so the integrand is O(1) at the lower limit
    let scaled = integrate_to_infinity(|t| (-x * (t - 1.0)).exp() * t.powi(-(n as i32)), 1.0, 1.0 / x, 1e-13);
    scaled * (-x).exp()
}

/// `Γ(α, x) = ∫_x^∞ t^{α−1} e^{−t} dt`.
pub fn gamma_upper_quad(alpha: f64, x: f64) -> f64 {
    let scaled = integrate_to_infinity(|t| (t / x).powf(alpha - 1.0) * (-(t - x)).exp(), x, x.min(1.0), 1e-13);
    scaled * x.powf(alpha - 1.0) * (-x).exp()
}

/// `J_n(µ) = ∫_0^∞ t^{n−1} ln(1+t) e^{−µt} dt`.
pub fn j_quad(n: u32, mu: f64) -> f64 {
    let scale = (n as f64 / mu).max(1.0);
    integrate_to_infinity(|t| t.powi(n as i32 - 1) * t.ln_1p() * (-mu * t).exp(), 0.0, scale, 1e-13)
}

/// Per-user round-robin transmit-diversity throughput from its defining
/// expectation, `E[log(1 + (P/M)·X)] / K_np` with `X ~ Gamma(M, 1)`.
pub fn t_np_quad(m: u32, p: f64, k_np: usize) -> f64 {
    let ln_norm = ln_factorial(m - 1);
    let scale = m as f64;
    let e = integrate_to_infinity(
        |x| (p / m as f64 * x).ln_1p() * ((m as f64 - 1.0) * x.ln() - x - ln_norm).exp(),
        0.0,
        scale,
        1e-13,
    );
    e / k_np as f64
}

/// Equal-power zero-forcing bound per predictable user,
/// `(M/K_p)·E[log(1 + (P/M)·X)]` with `X ~ Exp(1)`.
pub fn t_p_quad(m: u32, p: f64, k_p: usize) -> f64 {
    let e = integrate_to_infinity(|x| (p / m as f64 * x).ln_1p() * (-x).exp(), 0.0, 1.0, 1e-13);
    m as f64 / k_p as f64 * e
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}
