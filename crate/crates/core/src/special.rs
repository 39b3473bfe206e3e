//! Gamma function, the rational Gamma-integral family `I(q, p)` and the
//! per-dimension constants (bubble normalization, sphere measures).

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::quadrature::{integrate, QuadOptions};

// Lanczos approximation, g = 7, nine terms.
const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

fn lanczos_sum(z: f64) -> f64 {
    // z is the shifted argument x - 1
    LANCZOS[1..]
        .iter()
        .enumerate()
        .fold(LANCZOS[0], |acc, (i, c)| acc + c / (z + i as f64 + 1.0))
}

/// Euler's Gamma function for real arguments (poles at non-positive integers
/// return NaN).
pub fn gamma(x: f64) -> f64 {
    if x <= 0.0 && x.fract() == 0.0 {
        return f64::NAN;
    }
    if x < 0.5 {
        return PI / ((PI * x).sin() * gamma(1.0 - x));
    }
    if x.fract() == 0.0 && x <= 23.0 {
        // exact factorials
        return (1..x as u64).fold(1.0, |acc, k| acc * k as f64);
    }
    let z = x - 1.0;
    let t = z + LANCZOS_G + 0.5;
    (2.0 * PI).sqrt() * t.powf(z + 0.5) * (-t).exp() * lanczos_sum(z)
}

/// Natural log of |Γ(x)| for x > 0.
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        return (PI / (PI * x).sin()).abs().ln() - ln_gamma(1.0 - x);
    }
    let z = x - 1.0;
    let t = z + LANCZOS_G + 0.5;
    0.5 * (2.0 * PI).ln() + (z + 0.5) * t.ln() - t + lanczos_sum(z).ln()
}

/// Parameters of `I(q, p) = ∫₀^∞ r^q / (1 + r)^p dr`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaIntegralQuery {
    pub q: f64,
    pub p: f64,
}

impl GammaIntegralQuery {
    pub fn new(q: f64, p: f64) -> Result<Self> {
        let query = Self { q, p };
        query.validate()?;
        Ok(query)
    }

    fn validate(&self) -> Result<()> {
        if !(self.q.is_finite() && self.p.is_finite()) {
            return domain(format!("non-finite exponents q={}, p={}", self.q, self.p));
        }
        if self.q <= -1.0 {
            return domain(format!("integral diverges at 0 for q={}", self.q));
        }
        if self.p - self.q <= 1.0 {
            return domain(format!(
                "integral diverges at infinity: p - q = {} <= 1",
                self.p - self.q
            ));
        }
        Ok(())
    }
}

/// Closed form `Γ(q+1) Γ(p−q−1) / Γ(p)`.
pub fn gamma_integral_closed(query: GammaIntegralQuery) -> Result<f64> {
    query.validate()?;
    let GammaIntegralQuery { q, p } = query;
    if p < 150.0 {
        Ok(gamma(q + 1.0) * gamma(p - q - 1.0) / gamma(p))
    } else {
        Ok((ln_gamma(q + 1.0) + ln_gamma(p - q - 1.0) - ln_gamma(p)).exp())
    }
}

/// Adaptive quadrature of `I(q, p)` to absolute accuracy `tol`.
///
/// The half-line is split at 1. The tail goes through `r → 1/t` followed by
/// `t = u^{1/λ}` with `λ = p − q − 1`, the head through `r = v^{1/(q+1)}`;
/// both pieces become `(1/m) ∫₀¹ (1 + w^{1/m})^{−p} dw`, which is bounded.
pub fn gamma_integral_quadrature(query: GammaIntegralQuery, tol: f64) -> Result<f64> {
    query.validate()?;
    if !(tol > 0.0) {
        return domain(format!("tolerance must be positive, got {tol}"));
    }
    let GammaIntegralQuery { q, p } = query;
    let piece = |m: f64| -> Result<f64> {
        let inv = 1.0 / m;
        let opts = QuadOptions {
            abs_tol: 0.5 * tol * m,
            // roundoff floor for pieces scaled by a large 1/m
            rel_tol: 1e-14,
            max_subdivisions: 4000,
        };
        let r = integrate(|w| (1.0 + w.powf(inv)).powf(-p), 0.0, 1.0, opts)?;
        Ok(r.value * inv)
    };
    Ok(piece(q + 1.0)? + piece(p - q - 1.0)?)
}

/// Residuals of the two recurrences
/// `I(q, p+1) = (p−q−1)/p · I(q, p)` and
/// `I(q+1, p+1) = (q+1)/(p−q−1) · I(q, p+1)`, both from the closed form.
pub fn check_recurrences(q: f64, p: f64) -> Result<(f64, f64)> {
    let base = gamma_integral_closed(GammaIntegralQuery::new(q, p)?)?;
    let raised = gamma_integral_closed(GammaIntegralQuery::new(q, p + 1.0)?)?;
    let shifted = gamma_integral_closed(GammaIntegralQuery::new(q + 1.0, p + 1.0)?)?;
    let lam = p - q - 1.0;
    let first = (raised - lam / p * base).abs();
    let second = (shifted - (q + 1.0) / lam * raised).abs();
    Ok((first, second))
}

/// Surface measure of the unit sphere `S^k ⊂ ℝ^{k+1}`.
pub fn sphere_area(k: usize) -> f64 {
    let h = (k as f64 + 1.0) / 2.0;
    2.0 * PI.powf(h) / gamma(h)
}

/// Constants attached to the reduced dimension `n ≥ 5`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DimensionConstants {
    pub n: usize,
    /// `[n(n−2)]^{(n−2)/4}`
    pub alpha_n: f64,
    /// measure of `S^{n−2}`
    pub omega_n_minus_2: f64,
    /// measure of `S^{n−1}`
    pub omega_n_minus_1: f64,
}

impl DimensionConstants {
    /// Critical power `(n+2)/(n−2)`.
    pub fn critical_power(&self) -> f64 {
        critical_power(self.n)
    }
}

pub(crate) fn critical_power(n: usize) -> f64 {
    (n as f64 + 2.0) / (n as f64 - 2.0)
}

pub(crate) fn require_reduced_dimension(n: usize) -> Result<()> {
    if n < 5 {
        return domain(format!("reduced dimension must be at least 5, got {n}"));
    }
    Ok(())
}

pub(crate) fn alpha(n: usize) -> f64 {
    let nf = n as f64;
    (nf * (nf - 2.0)).powf((nf - 2.0) / 4.0)
}

pub fn dimension_constants(n: usize) -> Result<DimensionConstants> {
    require_reduced_dimension(n)?;
    Ok(DimensionConstants {
        n,
        alpha_n: alpha(n),
        omega_n_minus_2: sphere_area(n - 2),
        omega_n_minus_1: sphere_area(n - 1),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    use crate::error::Error;

    #[test]
    fn gamma_reference_values() {
        assert_relative_eq!(gamma(0.5), PI.sqrt(), max_relative = 1e-14);
        assert_relative_eq!(gamma(1.0 / 3.0), 2.678_938_534_707_747_6, max_relative = 1e-14);
        assert_relative_eq!(gamma(2.5), 0.75 * PI.sqrt(), max_relative = 1e-14);
        assert_relative_eq!(gamma(50.0), 6.082_818_640_342_675e62, max_relative = 1e-13);
        assert_relative_eq!(gamma(30.5), 4.8226969334909086e31, max_relative = 1e-13);
        assert_relative_eq!(gamma(1e-3), 999.423_772_484_595_5, max_relative = 1e-13);
        assert!(gamma(0.0).is_nan());
        assert!(gamma(-2.0).is_nan());
    }

    #[test]
    fn ln_gamma_matches_gamma() {
        for &x in &[0.1, 0.7, 1.5, 3.25, 12.0, 40.5] {
            assert_relative_eq!(ln_gamma(x).exp(), gamma(x), max_relative = 1e-12);
        }
    }

    #[test]
    fn closed_form_examples() {
        let v = |q, p| gamma_integral_closed(GammaIntegralQuery { q, p }).unwrap();
        assert_relative_eq!(v(0.0, 2.0), 1.0, max_relative = 1e-15);
        assert_relative_eq!(v(1.0, 3.0), 0.5, max_relative = 1e-15);
        assert_relative_eq!(v(2.0, 5.0), 1.0 / 12.0, max_relative = 1e-15);
    }

    #[test]
    fn quadrature_examples() {
        let q = gamma_integral_quadrature(GammaIntegralQuery { q: 0.0, p: 2.0 }, 1e-12).unwrap();
        assert!((q - 1.0).abs() <= 1e-12);
        let q = gamma_integral_quadrature(GammaIntegralQuery { q: 2.0, p: 5.0 }, 1e-12).unwrap();
        assert!((q - 1.0 / 12.0).abs() <= 1e-12);
        let err = gamma_integral_quadrature(GammaIntegralQuery { q: 2.0, p: 2.5 }, 1e-12);
        assert!(matches!(err, Err(Error::Domain(_))));
        assert!(GammaIntegralQuery::new(1.0, 2.0).is_err());
    }

    #[test]
    fn recurrence_examples() {
        assert_eq!(check_recurrences(2.0, 4.0).unwrap(), (0.0, 0.0));
        let (a, b) = check_recurrences(0.0, 2.0).unwrap();
        assert!(a <= 1e-16 && b <= 1e-16);
        let (a, b) = check_recurrences(1.5, 3.7).unwrap();
        assert!(a < 1e-13 && b < 1e-13);
    }

    #[test]
    fn dimension_constant_examples() {
        let c = dimension_constants(5).unwrap();
        assert_relative_eq!(c.alpha_n, 15f64.powf(0.75), max_relative = 1e-15);
        assert_relative_eq!(c.alpha_n, 7.621_991_222_319_221, max_relative = 1e-14);
        assert_relative_eq!(c.omega_n_minus_2, 2.0 * PI * PI, max_relative = 1e-14);
        assert_relative_eq!(c.omega_n_minus_1, 8.0 * PI * PI / 3.0, max_relative = 1e-14);
        assert!(matches!(dimension_constants(4), Err(Error::Domain(_))));
    }

    #[test]
    fn low_dimensional_sphere_areas() {
        assert_relative_eq!(sphere_area(1), 2.0 * PI, max_relative = 1e-15);
        assert_relative_eq!(sphere_area(2), 4.0 * PI, max_relative = 1e-15);
    }

    #[test]
    fn decreasing_in_p() {
        let pairs = [(0.0, 1.5), (0.5, 2.0), (1.0, 2.5), (2.0, 3.2), (3.3, 4.5), (0.2, 7.0), (5.0, 6.1), (1.7, 3.0), (4.0, 9.0), (2.5, 3.6)];
        for (q, p) in pairs {
            let lo = gamma_integral_quadrature(GammaIntegralQuery { q, p }, 1e-12).unwrap();
            let hi = gamma_integral_quadrature(GammaIntegralQuery { q, p: p + 0.25 }, 1e-12).unwrap();
            assert!(hi < lo, "I({q},{p}) not decreasing");
        }
    }

    proptest! {
        #[test]
        fn closed_form_matches_quadrature(q in 0.0f64..8.0, gap in 1.05f64..8.0) {
            let query = GammaIntegralQuery { q, p: q + gap };
            let closed = gamma_integral_closed(query).unwrap();
            let quad = gamma_integral_quadrature(query, 1e-12).unwrap();
            prop_assert!((closed - quad).abs() <= 1e-10 * (1.0 + closed));
        }
    }
}
