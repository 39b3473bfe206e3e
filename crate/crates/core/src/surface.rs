//! Level-set boundaries `{F = 0}` with the domain on `{F < 0}`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::geometry::{BoundaryChart, BoundaryPoint};

pub trait BoundarySurface: Send + Sync {
    fn dimension(&self) -> usize;
    fn level(&self, x: &[f64]) -> f64;
    fn level_gradient(&self, x: &[f64]) -> Vec<f64>;
    fn level_hessian(&self, x: &[f64]) -> DMatrix<f64>;

    /// A point on the surface used when a seed cannot be projected.
    fn anchor(&self) -> Vec<f64>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sphere {
    pub center: Vec<f64>,
    pub radius: f64,
}

impl Sphere {
    pub fn new(center: Vec<f64>, radius: f64) -> Result<Self> {
        if center.len() < 2 || !(radius > 0.0) {
            return domain("sphere needs dimension >= 2 and a positive radius");
        }
        Ok(Self { center, radius })
    }
}

impl BoundarySurface for Sphere {
    fn dimension(&self) -> usize {
        self.center.len()
    }

    fn level(&self, x: &[f64]) -> f64 {
        x.iter().zip(&self.center).map(|(a, c)| (a - c).powi(2)).sum::<f64>() - self.radius.powi(2)
    }

    fn level_gradient(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.center).map(|(a, c)| 2.0 * (a - c)).collect()
    }

    fn level_hessian(&self, _x: &[f64]) -> DMatrix<f64> {
        DMatrix::identity(self.dimension(), self.dimension()) * 2.0
    }

    fn anchor(&self) -> Vec<f64> {
        let mut x = self.center.clone();
        x[0] += self.radius;
        x
    }
}

/// Axis-aligned ellipsoid `Σ ((xᵢ − cᵢ)/aᵢ)² = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ellipsoid {
    pub center: Vec<f64>,
    pub semi_axes: Vec<f64>,
}

impl Ellipsoid {
    pub fn new(center: Vec<f64>, semi_axes: Vec<f64>) -> Result<Self> {
        if center.len() < 2 || center.len() != semi_axes.len() || semi_axes.iter().any(|a| !(*a > 0.0)) {
            return domain("ellipsoid needs matching center and positive semi-axes");
        }
        Ok(Self { center, semi_axes })
    }
}

impl BoundarySurface for Ellipsoid {
    fn dimension(&self) -> usize {
        self.center.len()
    }

    fn level(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(&self.center)
            .zip(&self.semi_axes)
            .map(|((v, c), a)| ((v - c) / a).powi(2))
            .sum::<f64>()
            - 1.0
    }

    fn level_gradient(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.center)
            .zip(&self.semi_axes)
            .map(|((v, c), a)| 2.0 * (v - c) / (a * a))
            .collect()
    }

    fn level_hessian(&self, _x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_iterator(
            self.dimension(),
            self.semi_axes.iter().map(|a| 2.0 / (a * a)),
        ))
    }

    fn anchor(&self) -> Vec<f64> {
        let mut x = self.center.clone();
        x[0] += self.semi_axes[0];
        x
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

/// Newton projection onto the level set along the gradient.
pub fn project(surface: &dyn BoundarySurface, x: &[f64]) -> Result<Vec<f64>> {
    let mut y = x.to_vec();
    for _ in 0..100 {
        let f = surface.level(&y);
        let g = surface.level_gradient(&y);
        let g2: f64 = g.iter().map(|v| v * v).sum();
        if !(g2 > 0.0) {
            return domain("level-set gradient vanishes; cannot project");
        }
        for (yi, gi) in y.iter_mut().zip(&g) {
            *yi -= f * gi / g2;
        }
        if (f / g2.sqrt()).abs() <= 1e-15 * (1.0 + norm(&y)) {
            return Ok(y);
        }
    }
    let residual = surface.level(&y).abs();
    if residual <= 1e-13 {
        Ok(y)
    } else {
        Err(Error::NonConvergence {
            error: residual,
            tolerance: 1e-13,
            subdivisions: 100,
        })
    }
}

/// Unit normal pointing into the domain.
pub fn inner_normal(surface: &dyn BoundarySurface, x: &[f64]) -> Vec<f64> {
    let g = surface.level_gradient(x);
    let len = norm(&g);
    g.iter().map(|v| -v / len).collect()
}

/// Orthonormal basis of the tangent space, as the columns of an `n × (n−1)` matrix.
pub fn tangent_basis(surface: &dyn BoundarySurface, x: &[f64]) -> DMatrix<f64> {
    let n = surface.dimension();
    let nu = DVector::from_vec(inner_normal(surface, x));
    // Gram–Schmidt of the coordinate axes against ν, skipping the most aligned one.
    let skip = nu.iamax();
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(n - 1);
    for i in (0..n).filter(|&i| i != skip) {
        let mut v = DVector::zeros(n);
        v[i] = 1.0;
        v -= &nu * nu[i];
        for b in &basis {
            let c = b.dot(&v);
            v -= b * c;
        }
        basis.push(v.normalize());
    }
    DMatrix::from_columns(&basis)
}

/// Principal curvatures (positive for convex boundaries) in ascending order.
pub fn principal_curvatures(surface: &dyn BoundarySurface, x: &[f64]) -> Vec<f64> {
    let t = tangent_basis(surface, x);
    let hess = surface.level_hessian(x);
    let scale = norm(&surface.level_gradient(x));
    let shape = t.transpose() * hess * &t / scale;
    let mut k: Vec<f64> = SymmetricEigen::new(shape).eigenvalues.iter().copied().collect();
    k.sort_by(f64::total_cmp);
    k
}

/// Boundary point at the projection of `x`, with its quadratic chart.
pub fn boundary_point(surface: &dyn BoundarySurface, x: &[f64]) -> Result<BoundaryPoint> {
    let y = project(surface, x)?;
    let nu = inner_normal(surface, &y);
    let chart = BoundaryChart::quadratic(principal_curvatures(surface, &y))?;
    BoundaryPoint::new(y, nu, chart)
}
