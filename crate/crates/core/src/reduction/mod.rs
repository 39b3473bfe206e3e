//! The finite-dimensional reduced problem: the `d`-equation and the sign of
//! `ε` it admits, constrained critical points of the weight, and the scaling
//! of the error terms.

mod scaling;
mod search;
mod yyl;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

pub use scaling::{
    error_scaling_fit, error_term_norm, remainder_bound_check, ErrorTerm, RemainderFit, ScalingFit,
    ScalingOptions,
};
pub use search::{
    boundary_critical_search, classify_hessian, stability_degree_test, tangential_hessian,
    ConcentrationCandidate, SearchOptions, Stability,
};
pub use yyl::{yyl_inequality_probe, yyl_ratios, YylReport};

/// Sign of `ε = q − 2n/(n−2)` for which a concentrating solution is produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EpsilonSide {
    /// `ε > 0`, supercritical
    Above,
    /// `ε < 0`, subcritical
    Below,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EpsilonSign {
    Positive,
    Negative,
}

impl EpsilonSign {
    pub fn of(epsilon: f64) -> Option<Self> {
        if epsilon > 0.0 {
            Some(Self::Positive)
        } else if epsilon < 0.0 {
            Some(Self::Negative)
        } else {
            None
        }
    }
}

/// Leading part of `∂_d J̃_ε(d, ξ)`: `[c₄𝓗ₐ + c₅/d]ε` for `ε > 0` and
/// `[−c₄𝓗ₐ + c₅/d]ε` for `ε < 0`.
pub fn reduced_gradient_d(c4: f64, c5: f64, h_a: f64, d: f64, epsilon: f64) -> f64 {
    if epsilon > 0.0 {
        (c4 * h_a + c5 / d) * epsilon
    } else {
        (-c4 * h_a + c5 / d) * epsilon
    }
}

/// Root of the `d`-equation for the requested sign of `ε`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateSolution {
    pub side: EpsilonSide,
    pub d0: Option<f64>,
}

/// The side of `ε` admitted by the sign of `𝓗ₐ`.
pub fn admissible_side(h_a: f64) -> EpsilonSide {
    if h_a < 0.0 {
        EpsilonSide::Above
    } else if h_a > 0.0 {
        EpsilonSide::Below
    } else {
        EpsilonSide::None
    }
}

pub fn solve_d0(c4: f64, c5: f64, h_a: f64, sign: EpsilonSign) -> Result<RateSolution> {
    if !(c4 > 0.0 && c5 > 0.0) {
        return domain(format!("c4 and c5 must be positive, got {c4}, {c5}"));
    }
    let none = RateSolution {
        side: EpsilonSide::None,
        d0: None,
    };
    Ok(match (admissible_side(h_a), sign) {
        (EpsilonSide::Above, EpsilonSign::Positive) => RateSolution {
            side: EpsilonSide::Above,
            d0: Some(-(c5 / c4) / h_a),
        },
        (EpsilonSide::Below, EpsilonSign::Negative) => RateSolution {
            side: EpsilonSide::Below,
            d0: Some((c5 / c4) / h_a),
        },
        _ => none,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn gradient_examples() {
        assert_eq!(reduced_gradient_d(1.0, 1.0, -1.0, 1.0, 0.01), 0.0);
        for d in [0.1, 1.0, 10.0] {
            assert_relative_eq!(reduced_gradient_d(2.0, 3.0, 0.0, d, 0.01), 0.03 / d, max_relative = 1e-15);
            assert_relative_eq!(reduced_gradient_d(2.0, 3.0, 0.0, d, -0.01), -0.03 / d, max_relative = 1e-15);
        }
    }

    #[test]
    fn d0_examples() {
        let s = solve_d0(2.0, 1.0, -0.5, EpsilonSign::Positive).unwrap();
        assert_eq!(s, RateSolution { side: EpsilonSide::Above, d0: Some(1.0) });
        let s = solve_d0(2.0, 1.0, 0.5, EpsilonSign::Positive).unwrap();
        assert_eq!(s.side, EpsilonSide::None);
        assert!(s.d0.is_none());
        let s = solve_d0(2.0, 1.0, 0.5, EpsilonSign::Negative).unwrap();
        assert_eq!(s, RateSolution { side: EpsilonSide::Below, d0: Some(1.0) });
        assert!(solve_d0(0.0, 1.0, 0.5, EpsilonSign::Negative).is_err());
    }

    #[test]
    fn truth_table() {
        use EpsilonSide::*;
        use EpsilonSign::*;
        let cases = [
            (-1.0, Positive, Above),
            (-1.0, Negative, None),
            (1.0, Negative, Below),
            (1.0, Positive, None),
            (0.0, Positive, None),
            (0.0, Negative, None),
        ];
        for (h, sign, expected) in cases {
            let s = solve_d0(1.5, 0.7, h, sign).unwrap();
            assert_eq!(s.side, expected, "H_a={h} {sign:?}");
            assert_eq!(s.d0.is_some(), expected != None);
            if let Some(d0) = s.d0 {
                assert!(d0 > 0.0);
            }
        }
    }

    proptest! {
        #[test]
        fn gradient_vanishes_at_root(
            c4 in 0.1f64..10.0, c5 in 0.1f64..10.0,
            h in 0.01f64..5.0, negative_h in any::<bool>(), eps in 1e-4f64..0.1,
        ) {
            let (h, e) = if negative_h { (-h, eps) } else { (h, -eps) };
            let sol = solve_d0(c4, c5, h, EpsilonSign::of(e).unwrap()).unwrap();
            let d0 = sol.d0.unwrap();
            prop_assert!(reduced_gradient_d(c4, c5, h, d0, e).abs() <= 1e-14);
            // the root is a sign change of the gradient
            let lo = reduced_gradient_d(c4, c5, h, 0.5 * d0, e);
            let hi = reduced_gradient_d(c4, c5, h, 2.0 * d0, e);
            prop_assert!(lo * hi < 0.0);
        }
    }
}
