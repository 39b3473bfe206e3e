//! Empirical constants for the two elementary power inequalities used to
//! bound `|f_ε(u+v) − f_ε(u)|`.
//!
//! Both sides are homogeneous in `(a, b)`, so the ratios depend only on
//! `t = b/a`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// `(1+t)^{β+1} − 1 − (β+1)t` for small `|t|` by its binomial series.
fn taylor_remainder(beta: f64, t: f64) -> f64 {
    let e = beta + 1.0;
    let mut coeff = e * (e - 1.0) / 2.0;
    let mut power = t * t;
    let mut sum = 0.0;
    for k in 2..40 {
        let term = coeff * power;
        sum += term;
        if term.abs() <= 1e-18 * sum.abs() {
            break;
        }
        coeff *= (e - k as f64) / (k as f64 + 1.0);
        power *= t;
    }
    sum
}

/// Ratios `(first, second)` of the left sides to the bracketed right sides at
/// `a = 1`, `b = t`. Both are zero at `t = 0`.
pub fn yyl_ratios(beta: f64, t: f64) -> (f64, f64) {
    if t == 0.0 {
        return (0.0, 0.0);
    }
    let at = t.abs();
    let s = 1.0 + t;
    let log_s = if t > -0.5 { t.ln_1p() } else { s.abs().ln() };
    let first_lhs = if s == 0.0 { 1.0 } else { (beta * log_s).exp_m1().abs() };
    let first_rhs = if beta < 1.0 { at.powf(beta).min(at) } else { at.powf(beta) + at };
    let second_lhs = if at < 1e-2 {
        taylor_remainder(beta, t).abs()
    } else {
        let signed = if s == 0.0 { 0.0 } else { s.abs().powf(beta) * s };
        (signed - 1.0 - (1.0 + beta) * t).abs()
    };
    let big = at.powf(beta + 1.0);
    let square = t * t;
    let second_rhs = if beta < 1.0 { big.min(square) } else { big.max(square) };
    (first_lhs / first_rhs, second_lhs / second_rhs)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct YylReport {
    pub beta: f64,
    /// recorded constants `c(β)` for the two inequalities
    pub c_first: f64,
    pub c_second: f64,
    /// largest ratios on the fresh validation sample
    pub max_ratio_first: f64,
    pub max_ratio_second: f64,
    /// both validation maxima stay within `c(β)(1 + 1e−6)`
    pub verified: bool,
}

fn sample_t<R: Rng>(rng: &mut R) -> f64 {
    match rng.random_range(0..4) {
        // near the zero of 1 + t
        0 => -1.0 + rng.random_range(-1.0..1.0) * 10f64.powf(rng.random_range(-8.0..0.0)),
        // (a, b) drawn directly
        1 => {
            let a = 10f64.powf(rng.random_range(-3.0..3.0));
            let b = rng.random_range(-1.0..1.0) * 10f64.powf(rng.random_range(-3.0..3.0));
            b / a
        }
        _ => {
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            sign * 10f64.powf(rng.random_range(-8.0..8.0))
        }
    }
}

/// Golden-section maximization of `f` on `[lo, hi]`.
fn golden_max<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64) -> (f64, f64) {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..200 {
        if (hi - lo).abs() <= 1e-13 * (1.0 + lo.abs()) {
            break;
        }
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1);
        }
    }
    if f1 > f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

/// Estimates `c(β)` by sampling plus local refinement, then validates it on an
/// independent sample.
pub fn yyl_inequality_probe(beta: f64, samples: usize, seed: u64) -> Result<YylReport> {
    if !(beta > 0.0) || beta == 1.0 || !beta.is_finite() {
        return domain(format!("beta must be positive and different from 1, got {beta}"));
    }
    if samples == 0 {
        return domain("need at least one sample");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = [(0.0f64, 0.0f64); 2];
    for _ in 0..samples {
        let t = sample_t(&mut rng);
        let r = yyl_ratios(beta, t);
        for (slot, value) in best.iter_mut().zip([r.0, r.1]) {
            if value > slot.1 {
                *slot = (t, value);
            }
        }
    }
    let mut constants = [0.0; 2];
    for (which, &(t, value)) in best.iter().enumerate() {
        let pick = |x: f64| {
            let r = yyl_ratios(beta, x);
            if which == 0 {
                r.0
            } else {
                r.1
            }
        };
        // refine in log|t| on the side of the sampled maximizer
        let sign = t.signum();
        let center = t.abs().ln();
        let (_, refined) = golden_max(|u| pick(sign * u.exp()), center - 1.0, center + 1.0);
        // and in t around −1, where the first ratio has a corner
        let (_, near) = golden_max(pick, -1.5, -0.5);
        constants[which] = value.max(refined).max(near);
    }

    let mut fresh = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let mut observed = [0.0f64; 2];
    for _ in 0..samples {
        let t = sample_t(&mut fresh);
        let r = yyl_ratios(beta, t);
        observed[0] = observed[0].max(r.0);
        observed[1] = observed[1].max(r.1);
    }
    let verified = observed[0] <= constants[0] * (1.0 + 1e-6) && observed[1] <= constants[1] * (1.0 + 1e-6);
    Ok(YylReport {
        beta,
        c_first: constants[0],
        c_second: constants[1],
        max_ratio_first: observed[0],
        max_ratio_second: observed[1],
        verified,
    })
}
