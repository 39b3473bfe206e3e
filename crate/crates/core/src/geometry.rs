//! Boundary charts, weight fields and the weighted curvature `𝓗ₐ`.

use std::fmt;

use evalexpr::{
    build_operator_tree, ContextWithMutableVariables, DefaultNumericTypes, HashMapContext, Node,
    Value,
};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Second-order chart of the boundary at a point: `ρ(x′) = ½ Σ kᵢ xᵢ² + O(|x′|³)`,
/// with the inner normal along `+x_n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryChart {
    pub curvatures: Vec<f64>,
    pub cubic_bound: f64,
    pub radius: f64,
}

impl BoundaryChart {
    pub fn new(curvatures: Vec<f64>, cubic_bound: f64, radius: f64) -> Result<Self> {
        if curvatures.is_empty() || curvatures.iter().any(|k| !k.is_finite()) {
            return domain("chart needs finite principal curvatures");
        }
        if !(cubic_bound >= 0.0) {
            return domain(format!("cubic bound must be nonnegative, got {cubic_bound}"));
        }
        if !(radius > 0.0) {
            return domain(format!("chart radius must be positive, got {radius}"));
        }
        Ok(Self {
            curvatures,
            cubic_bound,
            radius,
        })
    }

    /// Chart with only the quadratic part.
    pub fn quadratic(curvatures: Vec<f64>) -> Result<Self> {
        Self::new(curvatures, 0.0, 1.0)
    }

    /// Ambient dimension `n`.
    pub fn dimension(&self) -> usize {
        self.curvatures.len() + 1
    }

    /// Quadratic model `½ Σ kᵢ xᵢ²`.
    pub fn rho(&self, x_prime: &[f64]) -> f64 {
        0.5 * self
            .curvatures
            .iter()
            .zip(x_prime)
            .map(|(k, x)| k * x * x)
            .sum::<f64>()
    }

    /// Whether a measured graph height is within the cubic remainder bound of the model.
    pub fn remainder_within_bound(&self, x_prime: &[f64], height: f64) -> bool {
        let r = x_prime.iter().map(|x| x * x).sum::<f64>().sqrt();
        (height - self.rho(x_prime)).abs() <= self.cubic_bound * r.powi(3) + 1e-14 * (1.0 + height.abs())
    }
}

pub fn mean_curvature(chart: &BoundaryChart) -> f64 {
    chart.curvatures.iter().sum::<f64>() / chart.curvatures.len() as f64
}

/// A boundary point with its inner unit normal and local chart.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPoint {
    pub position: Vec<f64>,
    pub normal: Vec<f64>,
    pub chart: BoundaryChart,
}

impl BoundaryPoint {
    pub fn new(position: Vec<f64>, normal: Vec<f64>, chart: BoundaryChart) -> Result<Self> {
        let n = chart.dimension();
        if position.len() != n || normal.len() != n {
            return domain(format!(
                "boundary point in dimension {} with a chart of dimension {n}",
                position.len()
            ));
        }
        let norm = normal.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 0.0) {
            return domain("normal must be nonzero");
        }
        let normal = normal.iter().map(|v| v / norm).collect();
        Ok(Self {
            position,
            normal,
            chart,
        })
    }
}

/// The coefficient `a(x)`.
pub trait WeightField: Send + Sync + fmt::Debug {
    fn dimension(&self) -> usize;

    fn value(&self, x: &[f64]) -> f64;

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        central_gradient(|y| self.value(y), x, 1e-6)
    }

    /// Derivative along the (inner) normal `nu`.
    fn normal_derivative(&self, x: &[f64], nu: &[f64]) -> f64 {
        self.gradient(x).iter().zip(nu).map(|(g, v)| g * v).sum()
    }

    /// Exponents `M₁..M_m` when the weight has the product-power form.
    fn product_exponents(&self) -> Option<&[u32]> {
        None
    }
}

pub(crate) fn central_gradient<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], h: f64) -> Vec<f64> {
    let mut y = x.to_vec();
    (0..x.len())
        .map(|i| {
            let step = h * (1.0 + x[i].abs());
            y[i] = x[i] + step;
            let up = f(&y);
            y[i] = x[i] - step;
            let down = f(&y);
            y[i] = x[i];
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// `a(x) = x₁^{M₁−1} ⋯ x_m^{M_m−1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductPower {
    pub n: usize,
    pub exponents: Vec<u32>,
}

impl ProductPower {
    pub fn new(n: usize, exponents: Vec<u32>) -> Result<Self> {
        if exponents.is_empty() || exponents.len() > n {
            return domain(format!(
                "product-power weight needs 1..={n} exponents, got {}",
                exponents.len()
            ));
        }
        if let Some(m) = exponents.iter().find(|&&m| m < 2) {
            return domain(format!("product-power exponents must be at least 2, got {m}"));
        }
        Ok(Self { n, exponents })
    }

    pub fn m(&self) -> usize {
        self.exponents.len()
    }
}

impl WeightField for ProductPower {
    fn dimension(&self) -> usize {
        self.n
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.exponents
            .iter()
            .zip(x)
            .map(|(&m, xi)| xi.powi(m as i32 - 1))
            .product()
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.n];
        for (i, &mi) in self.exponents.iter().enumerate() {
            let others: f64 = self
                .exponents
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(j, &mj)| x[j].powi(mj as i32 - 1))
                .product();
            g[i] = (mi - 1) as f64 * x[i].powi(mi as i32 - 2) * others;
        }
        g
    }

    fn product_exponents(&self) -> Option<&[u32]> {
        Some(&self.exponents)
    }
}

/// `a(x) = offset + Σ cᵢ xᵢ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Affine {
    pub coefficients: Vec<f64>,
    pub offset: f64,
}

impl WeightField for Affine {
    fn dimension(&self) -> usize {
        self.coefficients.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.offset + self.coefficients.iter().zip(x).map(|(c, v)| c * v).sum::<f64>()
    }

    fn gradient(&self, _x: &[f64]) -> Vec<f64> {
        self.coefficients.clone()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constant {
    pub n: usize,
    pub value: f64,
}

impl WeightField for Constant {
    fn dimension(&self) -> usize {
        self.n
    }

    fn value(&self, _x: &[f64]) -> f64 {
        self.value
    }

    fn gradient(&self, _x: &[f64]) -> Vec<f64> {
        vec![0.0; self.n]
    }
}

/// `a(x) = c + bᵀx + ½ xᵀAx` with symmetric `A` stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Quadratic {
    pub matrix: Vec<Vec<f64>>,
    pub linear: Vec<f64>,
    pub constant: f64,
}

impl Quadratic {
    pub fn new(matrix: Vec<Vec<f64>>, linear: Vec<f64>, constant: f64) -> Result<Self> {
        let n = linear.len();
        if matrix.len() != n || matrix.iter().any(|row| row.len() != n) {
            return domain("quadratic weight needs an n×n matrix and n linear terms");
        }
        for i in 0..n {
            for j in 0..i {
                if (matrix[i][j] - matrix[j][i]).abs() > 1e-12 * (1.0 + matrix[i][j].abs()) {
                    return domain("quadratic weight matrix must be symmetric");
                }
            }
        }
        Ok(Self {
            matrix,
            linear,
            constant,
        })
    }
}

impl WeightField for Quadratic {
    fn dimension(&self) -> usize {
        self.linear.len()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let quad: f64 = self
            .matrix
            .iter()
            .zip(x)
            .map(|(row, xi)| xi * row.iter().zip(x).map(|(a, xj)| a * xj).sum::<f64>())
            .sum();
        self.constant + self.linear.iter().zip(x).map(|(b, v)| b * v).sum::<f64>() + 0.5 * quad
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        self.matrix
            .iter()
            .zip(&self.linear)
            .map(|(row, b)| b + row.iter().zip(x).map(|(a, xj)| a * xj).sum::<f64>())
            .collect()
    }
}

/// Weight given by an expression in the variables `x1, …, xn`; gradient by
/// central differences.
pub struct Expression {
    n: usize,
    source: String,
    tree: Node<DefaultNumericTypes>,
}

impl fmt::Debug for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Expression")
            .field("n", &self.n)
            .field("source", &self.source)
            .finish()
    }
}

impl Expression {
    pub fn parse(n: usize, source: &str) -> Result<Self> {
        let tree = build_operator_tree::<DefaultNumericTypes>(source)
            .map_err(|e| Error::Expression(format!("{source}: {e}")))?;
        let expr = Self {
            n,
            source: source.to_string(),
            tree,
        };
        expr.try_value(&vec![0.5; n])?;
        Ok(expr)
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn try_value(&self, x: &[f64]) -> Result<f64> {
        let mut ctx = HashMapContext::<DefaultNumericTypes>::new();
        for (i, v) in x.iter().enumerate() {
            ctx.set_value(format!("x{}", i + 1), Value::Float(*v))
                .map_err(|e| Error::Expression(e.to_string()))?;
        }
        self.tree
            .eval_number_with_context(&ctx)
            .map_err(|e| Error::Expression(format!("{}: {e}", self.source)))
    }
}

impl WeightField for Expression {
    fn dimension(&self) -> usize {
        self.n
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.try_value(x).unwrap_or(f64::NAN)
    }
}

/// `Σ (Mᵢ−1) νᵢ / xᵢ`, the logarithmic normal derivative of a product-power weight.
pub fn weight_normal_ratio(weight: &ProductPower, xi: &[f64], nu: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    for (i, &m) in weight.exponents.iter().enumerate() {
        if !(xi[i] > 0.0) {
            return domain(format!("coordinate x{} = {} must be positive", i + 1, xi[i]));
        }
        total += (m - 1) as f64 * nu[i] / xi[i];
    }
    Ok(total)
}

/// `(2/(n−1)) ∂_ν a / a − H` from its scalar ingredients.
pub fn weighted_curvature_from(n: usize, a: f64, dnu_a: f64, h: f64) -> Result<f64> {
    if !(a > 0.0) {
        return domain(format!("weight must be positive, got a = {a}"));
    }
    Ok(2.0 / (n as f64 - 1.0) * dnu_a / a - h)
}

/// `𝓗ₐ(ξ)` at a boundary point.
pub fn weighted_curvature(a: &dyn WeightField, point: &BoundaryPoint) -> Result<f64> {
    let n = point.chart.dimension();
    let value = a.value(&point.position);
    let dnu = a.normal_derivative(&point.position, &point.normal);
    weighted_curvature_from(n, value, dnu, mean_curvature(&point.chart))
}

/// `q*_h = 2(N−h)/(N−h−2)`, infinite at `h = N−2`.
pub fn critical_exponent(big_n: usize, h: usize) -> Result<f64> {
    if big_n < 3 || h > big_n - 2 {
        return domain(format!("need 0 <= h <= N-2, got N={big_n}, h={h}"));
    }
    if h == big_n - 2 {
        return Ok(f64::INFINITY);
    }
    let k = (big_n - h) as f64;
    Ok(2.0 * k / (k - 2.0))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrbitDescriptor {
    pub big_n: usize,
    pub m_list: Vec<u32>,
    pub m: usize,
    pub h: usize,
    pub n_reduced: usize,
    /// dimensions of the sphere factors `S^{Mᵢ−1}`
    pub sphere_factors: Vec<u32>,
}

impl OrbitDescriptor {
    pub fn label(&self) -> String {
        self.sphere_factors
            .iter()
            .map(|k| format!("S^{k}"))
            .collect::<Vec<_>>()
            .join("×")
    }
}

pub fn orbit_descriptor(big_n: usize, m_list: &[u32], m: usize) -> Result<OrbitDescriptor> {
    if m_list.len() != m || m == 0 {
        return Err(Error::Consistency(format!(
            "m = {m} but {} exponents given",
            m_list.len()
        )));
    }
    if let Some(bad) = m_list.iter().find(|&&mi| mi < 2) {
        return Err(Error::Consistency(format!("exponent M = {bad} < 2")));
    }
    let total: usize = m_list.iter().map(|&v| v as usize).sum();
    let h = total - m;
    if big_n < total || big_n - h < m + 1 {
        return Err(Error::Consistency(format!(
            "N = {big_n} cannot hold M = {total} rotated coordinates and a reduced domain"
        )));
    }
    Ok(OrbitDescriptor {
        big_n,
        m_list: m_list.to_vec(),
        m,
        h,
        n_reduced: big_n - h,
        sphere_factors: m_list.iter().map(|v| v - 1).collect(),
    })
}

/// Hole size `a* = 2/((n−1)H)` at which `𝓗ₐ` vanishes for `a = x₁`, `ν₁ = 1`.
pub fn torus_threshold(h_at_min: f64, n: usize) -> Result<f64> {
    if !(h_at_min > 0.0) {
        return domain(format!("mean curvature must be positive, got {h_at_min}"));
    }
    Ok(2.0 / ((n as f64 - 1.0) * h_at_min))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn point(x: Vec<f64>, nu: Vec<f64>, k: Vec<f64>) -> BoundaryPoint {
        BoundaryPoint::new(x, nu, BoundaryChart::quadratic(k).unwrap()).unwrap()
    }

    #[test]
    fn mean_curvature_examples() {
        let h = |k: Vec<f64>| mean_curvature(&BoundaryChart::quadratic(k).unwrap());
        assert_eq!(h(vec![0.0; 4]), 0.0);
        assert_eq!(h(vec![1.0; 4]), 1.0);
        assert_relative_eq!(h(vec![2.0, -1.0, 0.5, 0.5]), 0.5, max_relative = 1e-15);
    }

    #[test]
    fn chart_model_and_remainder() {
        let chart = BoundaryChart::new(vec![1.0, 2.0], 0.5, 1.0).unwrap();
        assert_eq!(chart.rho(&[0.0, 0.0]), 0.0);
        assert_relative_eq!(chart.rho(&[1.0, 1.0]), 1.5);
        assert!(chart.remainder_within_bound(&[0.1, 0.0], 0.005 + 0.4e-3));
        assert!(!chart.remainder_within_bound(&[0.1, 0.0], 0.005 + 0.6e-3));
        assert!(BoundaryChart::new(vec![1.0], -1.0, 1.0).is_err());
        assert!(BoundaryChart::new(vec![1.0], 0.0, 0.0).is_err());
    }

    #[test]
    fn weighted_curvature_examples() {
        assert_eq!(weighted_curvature_from(5, 1.0, 0.0, 1.0).unwrap(), -1.0);
        assert_eq!(weighted_curvature_from(5, 1.0, 2.0, 1.0).unwrap(), 0.0);
        let a = ProductPower::new(5, vec![2]).unwrap();
        let p = point(vec![2.0, 0.0, 0.0, 0.0, 0.0], vec![1.0, 0.0, 0.0, 0.0, 0.0], vec![0.0; 4]);
        assert_relative_eq!(weighted_curvature(&a, &p).unwrap(), 0.25, max_relative = 1e-15);
        assert!(weighted_curvature_from(5, 0.0, 1.0, 1.0).is_err());
        assert!(weighted_curvature_from(5, -1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn normal_ratio_examples() {
        let a = ProductPower::new(5, vec![2]).unwrap();
        assert_eq!(weight_normal_ratio(&a, &[2.0, 0.0, 0.0, 0.0, 0.0], &[1.0, 0.0, 0.0, 0.0, 0.0]).unwrap(), 0.5);
        let a = ProductPower::new(5, vec![3, 2]).unwrap();
        let r = weight_normal_ratio(&a, &[1.0, 4.0, 0.0, 0.0, 0.0], &[1.0, -1.0, 0.0, 0.0, 0.0]).unwrap();
        assert_relative_eq!(r, 1.75, max_relative = 1e-15);
        assert!(weight_normal_ratio(&a, &[0.0, 4.0, 0.0, 0.0, 0.0], &[1.0, 0.0, 0.0, 0.0, 0.0]).is_err());
        assert!(ProductPower::new(5, vec![1]).is_err());
    }

    #[test]
    fn critical_exponent_examples() {
        assert_relative_eq!(critical_exponent(10, 1).unwrap(), 18.0 / 7.0, max_relative = 1e-15);
        assert_relative_eq!(critical_exponent(7, 0).unwrap(), 14.0 / 5.0, max_relative = 1e-15);
        assert_eq!(critical_exponent(6, 4).unwrap(), f64::INFINITY);
        assert!(critical_exponent(6, 5).is_err());
        for big_n in 3..20 {
            let mut last = 0.0;
            for h in 0..=big_n - 3 {
                let q = critical_exponent(big_n, h).unwrap();
                assert!(q > last);
                last = q;
            }
        }
    }

    #[test]
    fn orbit_examples() {
        let o = orbit_descriptor(6, &[2], 1).unwrap();
        assert_eq!((o.h, o.n_reduced, o.label()), (1, 5, "S^1".to_string()));
        let o = orbit_descriptor(8, &[2, 2], 2).unwrap();
        assert_eq!((o.h, o.label()), (2, "S^1×S^1".to_string()));
        let o = orbit_descriptor(8, &[3], 1).unwrap();
        assert_eq!((o.h, o.label()), (2, "S^2".to_string()));
        assert!(matches!(orbit_descriptor(8, &[2, 2], 1), Err(Error::Consistency(_))));
        assert!(matches!(orbit_descriptor(3, &[2, 2], 2), Err(Error::Consistency(_))));
    }

    #[test]
    fn torus_threshold_examples() {
        let a_star = torus_threshold(1.0, 5).unwrap();
        assert_eq!(a_star, 0.5);
        assert_eq!(weighted_curvature_from(5, a_star, 1.0, 1.0).unwrap(), 0.0);
        assert!(weighted_curvature_from(5, 0.9 * a_star, 1.0, 1.0).unwrap() > 0.0);
        assert!(weighted_curvature_from(5, 1.1 * a_star, 1.0, 1.0).unwrap() < 0.0);
        assert!(torus_threshold(0.0, 5).is_err());
        for h in [0.1, 0.5, 1.0, 3.0] {
            for a_max in [0.2, 1.0, 7.0] {
                assert!(weighted_curvature_from(5, a_max, -1.0, h).unwrap() < 0.0);
            }
        }
    }

    #[test]
    fn expression_weight() {
        let e = Expression::parse(3, "1 + x1^2 + 0.5 * x3").unwrap();
        assert_relative_eq!(e.value(&[2.0, 0.0, 1.0]), 5.5);
        let g = e.gradient(&[2.0, 0.0, 1.0]);
        assert!((g[0] - 4.0).abs() < 1e-8 && g[1].abs() < 1e-8 && (g[2] - 0.5).abs() < 1e-8);
        assert!(Expression::parse(3, "1 + ").is_err());
        assert!(Expression::parse(3, "y + 1").is_err());
    }

    #[test]
    fn quadratic_weight_gradient() {
        let q = Quadratic::new(vec![vec![2.0, 1.0], vec![1.0, -1.0]], vec![0.5, 0.0], 3.0).unwrap();
        let x = [0.3, -0.7];
        let fd = central_gradient(|y| q.value(y), &x, 1e-6);
        for (a, b) in q.gradient(&x).iter().zip(fd) {
            assert!((a - b).abs() < 1e-8);
        }
        assert!(Quadratic::new(vec![vec![1.0, 2.0], vec![0.0, 1.0]], vec![0.0, 0.0], 1.0).is_err());
    }

    proptest! {
        #[test]
        fn scaling_weight_leaves_curvature(scale in 1e-3f64..1e3, x1 in 0.1f64..5.0, h in -2.0f64..2.0) {
            let base = Affine { coefficients: vec![1.0, 0.0, 0.0, 0.0, 0.0], offset: 0.0 };
            let scaled = Affine { coefficients: vec![scale, 0.0, 0.0, 0.0, 0.0], offset: 0.0 };
            let p = point(vec![x1, 0.3, 0.0, 0.0, 0.0], vec![0.6, 0.8, 0.0, 0.0, 0.0], vec![h; 4]);
            let a = weighted_curvature(&base, &p).unwrap();
            let b = weighted_curvature(&scaled, &p).unwrap();
            prop_assert!((a - b).abs() <= 1e-13 * (1.0 + a.abs()));
        }

        #[test]
        fn mean_curvature_permutation_invariant(k in proptest::collection::vec(-5.0f64..5.0, 4), shift in 0usize..4) {
            let mut rotated = k.clone();
            rotated.rotate_left(shift);
            rotated.swap(0, 3);
            let a = mean_curvature(&BoundaryChart::quadratic(k).unwrap());
            let b = mean_curvature(&BoundaryChart::quadratic(rotated).unwrap());
            prop_assert!((a - b).abs() <= 1e-14);
        }

        #[test]
        fn normal_ratio_matches_log_derivative(
            m1 in 2u32..5, m2 in 2u32..5,
            x1 in 0.5f64..3.0, x2 in 0.5f64..3.0,
            angle in 0.0f64..std::f64::consts::TAU,
        ) {
            let a = ProductPower::new(5, vec![m1, m2]).unwrap();
            let x = [x1, x2, 0.1, -0.2, 0.3];
            let nu = [angle.cos(), angle.sin(), 0.0, 0.0, 0.0];
            let ratio = weight_normal_ratio(&a, &x, &nu).unwrap();
            let h = 1e-5;
            let shifted = |s: f64| -> f64 {
                let y: Vec<f64> = x.iter().zip(&nu).map(|(p, v)| p + s * v).collect();
                a.value(&y)
            };
            let fd = (shifted(h) - shifted(-h)) / (2.0 * h) / a.value(&x);
            prop_assert!((ratio - fd).abs() <= 1e-8 * (1.0 + ratio.abs()), "{} vs {}", ratio, fd);
        }
    }
}
