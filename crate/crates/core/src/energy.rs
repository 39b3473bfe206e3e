//! Constants of the reduced-energy expansion and the integral identities
//! behind them.

use std::cell::RefCell;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::geometry::weighted_curvature_from;
use crate::quadrature::{integrate_to_infinity, QuadOptions};
use crate::special::{
    alpha, critical_power, gamma_integral_closed, require_reduced_dimension, sphere_area,
    GammaIntegralQuery,
};

/// `I^{(n−1)/2}_n`.
fn base_integral(n: usize) -> Result<f64> {
    gamma_integral_closed(GammaIntegralQuery::new((n as f64 - 1.0) / 2.0, n as f64)?)
}

/// Expansion coefficients for dimension `n`; `None` marks a constant with no
/// closed form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpansionCoefficients {
    pub n: usize,
    pub c1: Option<f64>,
    pub c2: Option<f64>,
    pub c3: Option<f64>,
    pub c4: Option<f64>,
    pub c5: Option<f64>,
    pub c6: f64,
    pub c7: f64,
    pub alpha_n: f64,
    pub omega_n_minus_2: f64,
    pub i_value: f64,
}

/// Numeric values replacing the symbolic coefficients.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CoefficientOverrides {
    pub c1: Option<f64>,
    pub c2: Option<f64>,
    pub c3: Option<f64>,
    pub c4: Option<f64>,
    pub c5: Option<f64>,
}

impl ExpansionCoefficients {
    pub fn with_overrides(mut self, o: &CoefficientOverrides) -> Result<Self> {
        for (name, v) in [("c4", o.c4), ("c5", o.c5)] {
            if let Some(v) = v {
                if !(v > 0.0) {
                    return domain(format!("{name} must be positive, got {v}"));
                }
            }
        }
        self.c1 = o.c1.or(self.c1);
        self.c2 = o.c2.or(self.c2);
        self.c3 = o.c3.or(self.c3);
        self.c4 = o.c4.or(self.c4);
        self.c5 = o.c5.or(self.c5);
        Ok(self)
    }

    fn require(value: Option<f64>, name: &'static str) -> Result<f64> {
        value.ok_or(Error::SymbolicCoefficient(name))
    }
}

pub fn coefficients(n: usize) -> Result<ExpansionCoefficients> {
    require_reduced_dimension(n)?;
    let nf = n as f64;
    let alpha_n = alpha(n);
    let omega = sphere_area(n - 2);
    let i_value = base_integral(n)?;
    let common = alpha_n * alpha_n * omega * i_value * (nf - 2.0).powi(2) / (nf - 3.0);
    let c6 = common / 2.0;
    let c7 = common / (nf - 1.0);
    Ok(ExpansionCoefficients {
        n,
        c1: None,
        c2: None,
        c3: None,
        c4: Some(c6),
        c5: None,
        c6,
        c7,
        alpha_n,
        omega_n_minus_2: omega,
        i_value,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityRecord {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl IdentityRecord {
    fn new(name: &str, lhs: f64, rhs: f64, tolerance: f64) -> Self {
        let residual = (lhs - rhs).abs();
        Self {
            name: name.to_string(),
            lhs,
            rhs,
            residual,
            tolerance,
            pass: residual <= tolerance * rhs.abs(),
        }
    }
}

/// `∫_{ℝ^{n−1}} f(|y′|) dy′ = ω_{n−2} ∫₀^∞ f(r) r^{n−2} dr`.
pub fn radial_integral<F: Fn(f64) -> f64>(n: usize, f: F, rel_tol: f64) -> Result<f64> {
    let m = n as i32 - 2;
    let r = integrate_to_infinity(
        |r| f(r) * r.powi(m),
        0.0,
        QuadOptions::relative(rel_tol).with_max_subdivisions(4000),
    )?;
    Ok(sphere_area(n - 2) * r.value)
}

/// `∫_{ℝⁿ₊} f(|y′|, y_n) dy` by nested quadrature over `(|y′|, y_n)`.
pub fn half_space_integral<F: Fn(f64, f64) -> f64>(n: usize, f: F, rel_tol: f64) -> Result<f64> {
    let err = RefCell::new(None);
    let inner_opts = QuadOptions::relative(0.1 * rel_tol).with_max_subdivisions(4000);
    let m = n as i32 - 2;
    let outer = |r: f64| {
        match integrate_to_infinity(|t| f(r, t), 0.0, inner_opts) {
            Ok(v) => v.value * r.powi(m),
            Err(e) => {
                err.borrow_mut().get_or_insert(e);
                0.0
            }
        }
    };
    let result = integrate_to_infinity(outer, 0.0, QuadOptions::relative(rel_tol).with_max_subdivisions(4000));
    if let Some(e) = err.into_inner() {
        return Err(e);
    }
    Ok(sphere_area(n - 2) * result?.value)
}

fn split_integrand(n: usize) -> impl Fn(f64, f64) -> f64 {
    move |r, t| {
        let s = r * r + t * t;
        t * (s - 1.0) / (1.0 + s).powi(n as i32)
    }
}

/// Quadrature checks of the three `ℝ^{n−1}` identities and the half-space split.
pub fn appendix_identities(n: usize, tol: f64) -> Result<Vec<IdentityRecord>> {
    require_reduced_dimension(n)?;
    if !(tol > 0.0) {
        return domain(format!("tolerance must be positive, got {tol}"));
    }
    let nf = n as f64;
    let omega = sphere_area(n - 2);
    let base = omega * base_integral(n)?;
    let quad_tol = (1e-3 * tol).max(1e-13);
    let pow = |e: i32| move |r: f64| (1.0 + r * r).powi(-e);

    let p_minus_2 = radial_integral(n, pow(n as i32 - 2), quad_tol)?;
    let moment = radial_integral(n, |r| r * r * (1.0 + r * r).powi(1 - n as i32), quad_tol)?;
    let p_minus_1 = radial_integral(n, pow(n as i32 - 1), quad_tol)?;
    let split_lhs = half_space_integral(n, split_integrand(n), quad_tol)?;
    let split_rhs = p_minus_2 / (2.0 * (nf - 1.0) * (nf - 2.0)) + (moment - p_minus_1) / (2.0 * (nf - 1.0));

    Ok(vec![
        IdentityRecord::new("power_n_minus_2", p_minus_2, 2.0 * (nf - 2.0) / (nf - 3.0) * base, tol),
        IdentityRecord::new("moment_n_minus_1", moment, (nf - 1.0) / (nf - 3.0) * base, tol),
        IdentityRecord::new("power_n_minus_1", p_minus_1, base, tol),
        IdentityRecord::new("half_space_split", split_lhs, split_rhs, tol),
    ])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpansionQuery {
    pub d: f64,
    pub a: f64,
    pub dnu_a: f64,
    pub mean_curvature: f64,
    pub epsilon: f64,
}

impl ExpansionQuery {
    pub fn new(d: f64, a: f64, dnu_a: f64, mean_curvature: f64, epsilon: f64) -> Result<Self> {
        let q = Self {
            d,
            a,
            dnu_a,
            mean_curvature,
            epsilon,
        };
        q.validate()?;
        Ok(q)
    }

    fn validate(&self) -> Result<()> {
        if !(self.d > 0.0) {
            return domain(format!("d must be positive, got {}", self.d));
        }
        if !(self.a > 0.0) {
            return domain(format!("a(xi) must be positive, got {}", self.a));
        }
        if self.epsilon == 0.0 || !self.epsilon.is_finite() {
            return domain(format!("epsilon must be finite and nonzero, got {}", self.epsilon));
        }
        Ok(())
    }

    pub fn delta(&self) -> f64 {
        self.epsilon.abs() * self.d
    }
}

/// Terms of `a(ξ)[c₁ + c₂ε ln|ε| + c₃ε + c₄𝓗ₐ|ε|d + c₅ε ln d]`, each already
/// multiplied by `a(ξ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpansionTerms {
    pub constant: f64,
    pub eps_log_eps: f64,
    pub eps: f64,
    pub curvature: f64,
    pub eps_log_d: f64,
}

impl ExpansionTerms {
    pub fn total(&self) -> f64 {
        self.constant + self.eps_log_eps + self.eps + self.curvature + self.eps_log_d
    }
}

pub fn expansion_terms(
    coeffs: &ExpansionCoefficients,
    query: &ExpansionQuery,
    overrides: &CoefficientOverrides,
) -> Result<ExpansionTerms> {
    query.validate()?;
    let c = coeffs.with_overrides(overrides)?;
    let req = ExpansionCoefficients::require;
    let (c1, c2, c3, c4, c5) = (
        req(c.c1, "c1")?,
        req(c.c2, "c2")?,
        req(c.c3, "c3")?,
        req(c.c4, "c4")?,
        req(c.c5, "c5")?,
    );
    let e = query.epsilon;
    let h_a = weighted_curvature_from(c.n, query.a, query.dnu_a, query.mean_curvature)?;
    let a = query.a;
    Ok(ExpansionTerms {
        constant: a * c1,
        eps_log_eps: a * c2 * e * e.abs().ln(),
        eps: a * c3 * e,
        curvature: a * c4 * h_a * query.delta(),
        eps_log_d: a * c5 * e * query.d.ln(),
    })
}

/// Leading part of the reduced energy `J̃_ε(d, ξ)`.
pub fn expansion_eval(
    coeffs: &ExpansionCoefficients,
    query: &ExpansionQuery,
    overrides: &CoefficientOverrides,
) -> Result<f64> {
    Ok(expansion_terms(coeffs, query, overrides)?.total())
}

/// `δ ∂_ν a ∫_{ℝⁿ₊} y_n[((n−2)²/2) α²|y|² − α^{p+1}/(p+1)] (1+|y|²)^{−n} dy`, `δ = |ε| d`.
pub fn i2_direct_quadrature(n: usize, d: f64, epsilon: f64, dnu_a: f64, tol: f64) -> Result<f64> {
    require_reduced_dimension(n)?;
    if !(d > 0.0) {
        return domain(format!("d must be positive, got {d}"));
    }
    if !(tol > 0.0) {
        return domain(format!("tolerance must be positive, got {tol}"));
    }
    if dnu_a == 0.0 || epsilon == 0.0 {
        return Ok(0.0);
    }
    let nf = n as f64;
    let a = alpha(n);
    let p = critical_power(n);
    let gradient_part = 0.5 * (nf - 2.0).powi(2) * a * a;
    let power_part = a.powf(p + 1.0) / (p + 1.0);
    let integral = half_space_integral(
        n,
        |r, t| {
            let s = r * r + t * t;
            t * (gradient_part * s - power_part) / (1.0 + s).powi(n as i32)
        },
        (1e-3 * tol).max(1e-12),
    )?;
    Ok(epsilon.abs() * d * dnu_a * integral)
}

/// `c₆` from its defining integral `((n−2)²/(n−3)) α² ∫_{ℝ^{n−1}} |y′|²/(1+|y′|²)^n dy′`.
pub fn c6_by_quadrature(n: usize, rel_tol: f64) -> Result<f64> {
    require_reduced_dimension(n)?;
    let nf = n as f64;
    let a = alpha(n);
    let integral = radial_integral(n, |r| r * r * (1.0 + r * r).powi(-(n as i32)), rel_tol)?;
    Ok((nf - 2.0).powi(2) / (nf - 3.0) * a * a * integral)
}

/// `c₇` from its defining integral `((n−2)²/2) α² ∫_{ℝⁿ₊} y_n(|y|²−1)/(1+|y|²)^n dy`.
pub fn c7_by_quadrature(n: usize, rel_tol: f64) -> Result<f64> {
    require_reduced_dimension(n)?;
    let a = alpha(n);
    let integral = half_space_integral(n, split_integrand(n), rel_tol)?;
    Ok(0.5 * (n as f64 - 2.0).powi(2) * a * a * integral)
}

/// `(n−2)²/(2(n−3)) α² ω_{n−2} I^{(n−1)/2}_n`, the constant on the right of the
/// combination identity.
pub fn combination_prefactor(n: usize) -> Result<f64> {
    require_reduced_dimension(n)?;
    let nf = n as f64;
    let a = alpha(n);
    Ok((nf - 2.0).powi(2) / (2.0 * (nf - 3.0)) * a * a * sphere_area(n - 2) * base_integral(n)?)
}

/// Both sides of `−c₆ d|ε| a H + c₇ d|ε| ∂_ν a = K d|ε| a ((2/(n−1)) ∂_ν a/a − H)`.
pub fn combination_identity(
    coeffs: &ExpansionCoefficients,
    a: f64,
    dnu_a: f64,
    h: f64,
    d: f64,
    epsilon: f64,
) -> Result<(f64, f64)> {
    let scale = d * epsilon.abs();
    let lhs = -coeffs.c6 * scale * a * h + coeffs.c7 * scale * dnu_a;
    let rhs = combination_prefactor(coeffs.n)? * scale * a * weighted_curvature_from(coeffs.n, a, dnu_a, h)?;
    Ok((lhs, rhs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn c6_and_c7_at_five() {
        let c = coefficients(5).unwrap();
        let composed = 9.0 / 4.0 * 15f64.powf(1.5) * 2.0 * std::f64::consts::PI.powi(2) / 12.0;
        assert_relative_eq!(c.c6, composed, max_relative = 1e-14);
        assert_relative_eq!(c.c6, 215.014_575_819_794_13, max_relative = 1e-13);
        assert_relative_eq!(c.c7, 107.507_287_909_897_07, max_relative = 1e-13);
        assert_relative_eq!(c.c7 / c.c6, 0.5, max_relative = 1e-15);
        assert_eq!(c.c4, Some(c.c6));
        assert!(c.c1.is_none() && c.c5.is_none());
        assert!(coefficients(4).is_err());
    }

    #[test]
    fn constants_match_their_integrals() {
        for n in [5, 6, 8] {
            let c = coefficients(n).unwrap();
            assert_relative_eq!(c6_by_quadrature(n, 1e-12).unwrap(), c.c6, max_relative = 1e-10);
            assert_relative_eq!(c7_by_quadrature(n, 1e-11).unwrap(), c.c7, max_relative = 1e-9);
        }
    }

    #[test]
    fn higher_dimension_reference_values() {
        assert_relative_eq!(coefficients(6).unwrap().c6, 1488.3012806543914, max_relative = 1e-12);
        assert_relative_eq!(coefficients(7).unwrap().c6, 11_703.573_859_711_233, max_relative = 1e-12);
    }

    #[test]
    fn ratio_and_prefactor_for_all_dimensions() {
        for n in 5..=12 {
            let c = coefficients(n).unwrap();
            assert!(c.c6 > 0.0 && c.c7 > 0.0);
            assert!((c.c7 / c.c6 - 2.0 / (n as f64 - 1.0)).abs() <= 1e-13);
            assert_relative_eq!(combination_prefactor(n).unwrap(), c.c6, max_relative = 1e-14);
        }
    }

    #[test]
    fn identities_hold() {
        for n in [5, 7] {
            for rec in appendix_identities(n, 1e-8).unwrap() {
                assert!(rec.pass, "n={n} {rec:?}");
                assert!(rec.residual <= 1e-8 * (1.0 + rec.rhs.abs()));
            }
        }
    }

    #[test]
    fn identities_scale_exactly() {
        // ∫ f(λ|y′|) λ^{n−1} dy′ does not depend on λ
        let n = 6;
        let f = |r: f64| (1.0 + r * r).powi(-(n as i32 - 1));
        let base = radial_integral(n, f, 1e-12).unwrap();
        for lambda in [0.25, 3.0] {
            let scaled = radial_integral(n, |r| f(lambda * r) * lambda.powi(n as i32 - 1), 1e-12).unwrap();
            assert_relative_eq!(scaled, base, max_relative = 1e-10);
        }
        let g = split_integrand(n);
        let base = half_space_integral(n, &g, 1e-11).unwrap();
        let lambda = 2.0;
        let scaled = half_space_integral(n, |r, t| g(lambda * r, lambda * t) * lambda.powi(n as i32), 1e-11).unwrap();
        assert_relative_eq!(scaled, base, max_relative = 1e-9);
    }

    #[test]
    fn expansion_examples() {
        let c = coefficients(5).unwrap();
        let o = CoefficientOverrides {
            c1: Some(0.0),
            c2: Some(0.0),
            c3: Some(0.0),
            c4: Some(1.0),
            c5: Some(1.0),
        };
        // 𝓗ₐ = −1 with a = 1, ∂_ν a = 0, H = 1
        let q = ExpansionQuery::new(1.0, 1.0, 0.0, 1.0, 0.01).unwrap();
        assert_relative_eq!(expansion_eval(&c, &q, &o).unwrap(), -0.01, max_relative = 1e-14);
        let o1 = CoefficientOverrides { c1: Some(3.0), ..o };
        let tiny = ExpansionQuery::new(1.0, 2.0, 0.0, 1.0, 1e-300).unwrap();
        assert_relative_eq!(expansion_eval(&c, &tiny, &o1).unwrap(), 6.0, max_relative = 1e-12);
        let missing = CoefficientOverrides { c5: None, ..o };
        assert!(matches!(expansion_eval(&c, &q, &missing), Err(Error::SymbolicCoefficient("c5"))));
        let bad = CoefficientOverrides { c4: Some(-1.0), ..o };
        assert!(expansion_eval(&c, &q, &bad).is_err());
        assert!(ExpansionQuery::new(1.0, 1.0, 0.0, 1.0, 0.0).is_err());
        assert!(ExpansionQuery::new(0.0, 1.0, 0.0, 1.0, 0.1).is_err());
    }

    #[test]
    fn expansion_linear_in_weight() {
        let c = coefficients(6).unwrap();
        let o = CoefficientOverrides {
            c1: Some(0.3),
            c2: Some(-1.0),
            c3: Some(2.0),
            c4: None,
            c5: Some(0.7),
        };
        let base = ExpansionQuery::new(1.5, 1.0, 0.4, 0.8, -0.02).unwrap();
        let v = expansion_eval(&c, &base, &o).unwrap();
        for s in [0.5, 2.0, 10.0] {
            // scaling a and ∂_ν a together keeps 𝓗ₐ fixed
            let q = ExpansionQuery { a: s, dnu_a: 0.4 * s, ..base };
            assert_relative_eq!(expansion_eval(&c, &q, &o).unwrap(), s * v, max_relative = 1e-13);
        }
    }

    #[test]
    fn i2_matches_c7() {
        let c = coefficients(5).unwrap();
        let v = i2_direct_quadrature(5, 1.0, 0.01, 1.0, 1e-8).unwrap();
        assert!((v - 0.01 * c.c7).abs() <= 1e-6);
        let v2 = i2_direct_quadrature(5, 2.0, 0.01, 1.0, 1e-8).unwrap();
        assert_relative_eq!(v2 / v, 2.0, max_relative = 1e-12);
        assert_eq!(i2_direct_quadrature(5, 1.0, 0.01, 0.0, 1e-8).unwrap(), 0.0);
    }

    #[test]
    fn combination_identity_examples() {
        let c = coefficients(5).unwrap();
        let (l, r) = combination_identity(&c, 2.0, 0.7, 0.0, 1.0, 0.1).unwrap();
        assert_relative_eq!(l, c.c7 * 0.1 * 0.7, max_relative = 1e-14);
        assert_relative_eq!(r, l, max_relative = 1e-12);
        let (l, r) = combination_identity(&c, 2.0, 0.0, 0.5, 1.0, 0.1).unwrap();
        assert_relative_eq!(l, -c.c6 * 0.1 * 2.0 * 0.5, max_relative = 1e-14);
        assert_relative_eq!(r, l, max_relative = 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let (a, dnu, h, d, e) = (
                rng.random_range(0.1..5.0),
                rng.random_range(-3.0..3.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(0.1..10.0),
                rng.random_range(-0.1..0.1),
            );
            let (l, r) = combination_identity(&c, a, dnu, h, d, e).unwrap();
            assert!((l - r).abs() <= 1e-12 * l.abs().max(1e-300) + 1e-300, "{l} vs {r}");
        }
    }
}
