use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{admissible_side, solve_d0, EpsilonSide, EpsilonSign};
use crate::error::{domain, Error, Result};
use crate::geometry::{weighted_curvature_from, WeightField};
use crate::surface::{inner_normal, principal_curvatures, project, tangent_basis, BoundarySurface};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stability {
    Min,
    Max,
    Nondegenerate,
    Unstable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchOptions {
    pub gradient_tol: f64,
    pub max_iterations: usize,
    pub hessian_step: f64,
    pub eigen_threshold: f64,
    /// limits closer than this are merged
    pub merge_radius: f64,
    /// `(c₄, c₅)` used to fill `d₀`
    pub rate_constants: Option<(f64, f64)>,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            gradient_tol: 1e-10,
            max_iterations: 20_000,
            hessian_step: 1e-4,
            eigen_threshold: 1e-8,
            merge_radius: 1e-6,
            rate_constants: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationCandidate {
    pub xi0: Vec<f64>,
    pub normal: Vec<f64>,
    pub weight: f64,
    /// `None` where the weight is not positive
    pub h_a: Option<f64>,
    pub epsilon_side: EpsilonSide,
    pub d0: Option<f64>,
    pub stability: Stability,
    pub hessian_eigenvalues: Vec<f64>,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

fn tangential_gradient(a: &dyn WeightField, surface: &dyn BoundarySurface, x: &[f64]) -> Vec<f64> {
    let g = a.gradient(x);
    let nu = inner_normal(surface, x);
    let gn: f64 = g.iter().zip(&nu).map(|(a, b)| a * b).sum();
    g.iter().zip(&nu).map(|(gi, ni)| gi - gn * ni).collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

struct Walk {
    x: Vec<f64>,
    gradient_norm: f64,
    iterations: usize,
    converged: bool,
}

/// Projected gradient walk; `sign = 1` ascends, `−1` descends.
fn walk(
    a: &dyn WeightField,
    surface: &dyn BoundarySurface,
    seed: &[f64],
    sign: f64,
    opts: &SearchOptions,
) -> Result<Walk> {
    let mut x = project(surface, seed)?;
    let mut step = 1.0;
    let mut g = tangential_gradient(a, surface, &x);
    let mut gnorm = norm(&g);
    let mut value = a.value(&x);
    for it in 0..opts.max_iterations {
        if gnorm <= opts.gradient_tol {
            return Ok(Walk { x, gradient_norm: gnorm, iterations: it, converged: true });
        }
        let mut accepted = false;
        while step > 1e-14 {
            let trial: Vec<f64> = x.iter().zip(&g).map(|(xi, gi)| xi + sign * step * gi).collect();
            let y = project(surface, &trial)?;
            let vy = a.value(&y);
            let gy = tangential_gradient(a, surface, &y);
            let gy_norm = norm(&gy);
            let gain = sign * (vy - value);
            let sufficient = gain >= 1e-4 * step * gnorm * gnorm;
            // below roundoff in the value only the gradient can steer
            let flat = gain.abs() <= 1e-13 * (1.0 + value.abs()) && gy_norm <= 0.5 * gnorm;
            if sufficient || flat {
                x = y;
                value = vy;
                g = gy;
                gnorm = gy_norm;
                step = (2.0 * step).min(1e3);
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    let converged = gnorm <= opts.gradient_tol;
    Ok(Walk { x, gradient_norm: gnorm, iterations: opts.max_iterations, converged })
}

/// Hessian of `u ↦ a(π(x + T u))` at `u = 0` by central differences, where `π`
/// projects on the surface and `T` is the tangent basis at `x`.
pub fn tangential_hessian(
    a: &dyn WeightField,
    surface: &dyn BoundarySurface,
    x: &[f64],
    step: f64,
) -> Result<DMatrix<f64>> {
    let t = tangent_basis(surface, x);
    let k = t.ncols();
    let base = DVector::from_column_slice(x);
    let f = |u: &[(usize, f64)]| -> Result<f64> {
        let mut p = base.clone();
        for &(i, s) in u {
            p += t.column(i) * s;
        }
        Ok(a.value(&project(surface, p.as_slice())?))
    };
    let f0 = a.value(x);
    let h = step;
    let mut hess = DMatrix::zeros(k, k);
    for i in 0..k {
        hess[(i, i)] = (f(&[(i, h)])? - 2.0 * f0 + f(&[(i, -h)])?) / (h * h);
        for j in 0..i {
            let v = (f(&[(i, h), (j, h)])? - f(&[(i, h), (j, -h)])? - f(&[(i, -h), (j, h)])?
                + f(&[(i, -h), (j, -h)])?)
                / (4.0 * h * h);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    Ok(hess)
}

/// Classification from the eigenvalue signs, with the eigenvalues in ascending order.
pub fn classify_hessian(hess: &DMatrix<f64>, threshold: f64) -> (Stability, Vec<f64>) {
    let mut eig: Vec<f64> = SymmetricEigen::new(hess.clone()).eigenvalues.iter().copied().collect();
    eig.sort_by(f64::total_cmp);
    let stability = if eig.iter().any(|e| e.abs() <= threshold) {
        Stability::Unstable
    } else if eig.iter().all(|&e| e > 0.0) {
        Stability::Min
    } else if eig.iter().all(|&e| e < 0.0) {
        Stability::Max
    } else {
        Stability::Nondegenerate
    };
    (stability, eig)
}

fn candidate(
    a: &dyn WeightField,
    surface: &dyn BoundarySurface,
    w: Walk,
    opts: &SearchOptions,
) -> Result<ConcentrationCandidate> {
    let hess = tangential_hessian(a, surface, &w.x, opts.hessian_step)?;
    let (stability, eig) = classify_hessian(&hess, opts.eigen_threshold);
    let normal = inner_normal(surface, &w.x);
    let weight = a.value(&w.x);
    let k = principal_curvatures(surface, &w.x);
    let h = k.iter().sum::<f64>() / k.len() as f64;
    let h_a = if weight > 0.0 {
        Some(weighted_curvature_from(surface.dimension(), weight, a.normal_derivative(&w.x, &normal), h)?)
    } else {
        None
    };
    let (epsilon_side, d0) = match (h_a, opts.rate_constants) {
        (Some(h_a), Some((c4, c5))) => {
            let sign = if h_a < 0.0 { EpsilonSign::Positive } else { EpsilonSign::Negative };
            let s = solve_d0(c4, c5, h_a, sign)?;
            (s.side, s.d0)
        }
        (Some(h_a), None) => (admissible_side(h_a), None),
        (None, _) => (EpsilonSide::None, None),
    };
    Ok(ConcentrationCandidate {
        xi0: w.x,
        normal,
        weight,
        h_a,
        epsilon_side,
        d0,
        stability,
        hessian_eigenvalues: eig,
        gradient_norm: w.gradient_norm,
        iterations: w.iterations,
        converged: w.converged,
    })
}

fn lexicographic(a: &[f64], b: &[f64]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Ascent and descent from every seed; limits are merged and returned sorted.
pub fn boundary_critical_search(
    a: &dyn WeightField,
    surface: &dyn BoundarySurface,
    seeds: &[Vec<f64>],
    opts: &SearchOptions,
) -> Result<Vec<ConcentrationCandidate>> {
    if a.dimension() != surface.dimension() {
        return domain(format!(
            "weight lives in dimension {}, surface in {}",
            a.dimension(),
            surface.dimension()
        ));
    }
    if seeds.iter().any(|s| s.len() != surface.dimension()) {
        return domain("seed dimension does not match the surface");
    }
    let found: Vec<ConcentrationCandidate> = seeds
        .par_iter()
        .flat_map_iter(|s| [(s, 1.0), (s, -1.0)])
        .map(|(s, sign)| candidate(a, surface, walk(a, surface, s, sign, opts)?, opts))
        .collect::<Result<_>>()?;
    let mut merged: Vec<ConcentrationCandidate> = Vec::new();
    for c in found {
        match merged.iter_mut().find(|m| {
            m.xi0.iter().zip(&c.xi0).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt() <= opts.merge_radius
        }) {
            Some(m) if c.gradient_norm < m.gradient_norm => *m = c,
            Some(_) => {}
            None => merged.push(c),
        }
    }
    merged.sort_by(|p, q| p.stability.cmp(&q.stability).then_with(|| lexicographic(&p.xi0, &q.xi0)));
    Ok(merged)
}

/// Degree surrogate for the tangential gradient on a sphere of radius
/// `box_radius` around the candidate, in tangent coordinates.
///
/// Nondegenerate points pass when `g(u)·(H u) > 0` on every sample, which makes
/// `g` homotopic to the linear field `H u` without zeros. Degenerate points pass
/// when the radial component `g(u)·u` keeps one sign.
pub fn stability_degree_test(
    a: &dyn WeightField,
    surface: &dyn BoundarySurface,
    candidate: &ConcentrationCandidate,
    box_radius: f64,
    samples: usize,
    seed: u64,
    opts: &SearchOptions,
) -> Result<bool> {
    if !(box_radius > 0.0) {
        return domain(format!("box radius must be positive, got {box_radius}"));
    }
    let x0 = &candidate.xi0;
    let t = tangent_basis(surface, x0);
    let k = t.ncols();
    let hess = tangential_hessian(a, surface, x0, opts.hessian_step)?;
    let (stability, _) = classify_hessian(&hess, opts.eigen_threshold);

    let mut directions: Vec<DVector<f64>> = Vec::new();
    for i in 0..k {
        for s in [1.0, -1.0] {
            let mut e = DVector::zeros(k);
            e[i] = s;
            directions.push(e);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while directions.len() < samples.max(2 * k) {
        let v = DVector::from_fn(k, |_, _| rng.random_range(-1.0..1.0));
        if v.norm() > 1e-3 {
            directions.push(v.normalize());
        }
    }

    let base = DVector::from_column_slice(x0);
    let mut min_norm = f64::INFINITY;
    let mut linear_ok = true;
    let mut radial_signs = (false, false);
    for dir in &directions {
        let u = dir * box_radius;
        let p = project(surface, (&base + &t * &u).as_slice())?;
        let g = DVector::from_vec(tangential_gradient(a, surface, &p));
        let local = t.transpose() * g;
        min_norm = min_norm.min(local.norm());
        if local.dot(&(&hess * &u)) <= 0.0 {
            linear_ok = false;
        }
        let radial = local.dot(&u);
        if radial > 0.0 {
            radial_signs.0 = true;
        } else if radial < 0.0 {
            radial_signs.1 = true;
        } else {
            radial_signs = (true, true);
        }
    }
    if min_norm < 1e-12 {
        return Err(Error::Inconclusive(min_norm));
    }
    if stability != Stability::Unstable {
        Ok(linear_ok)
    } else {
        Ok(radial_signs.0 != radial_signs.1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Affine, Constant, Quadratic};
    use crate::surface::{Ellipsoid, Sphere};
    use std::f64::consts::PI;

    fn circle_seeds(count: usize, radius: f64) -> Vec<Vec<f64>> {
        (0..count)
            .map(|i| {
                let t = 0.3 + 2.0 * PI * i as f64 / count as f64;
                vec![radius * t.cos(), radius * t.sin()]
            })
            .collect()
    }

    #[test]
    fn circle_extrema_of_first_coordinate() {
        let a = Affine { coefficients: vec![1.0, 0.0], offset: 0.0 };
        let s = Sphere::new(vec![0.0, 0.0], 1.0).unwrap();
        let found = boundary_critical_search(&a, &s, &circle_seeds(7, 1.0), &SearchOptions::default()).unwrap();
        assert_eq!(found.len(), 2, "{found:?}");
        let min = &found[0];
        let max = &found[1];
        assert_eq!(min.stability, Stability::Min);
        assert_eq!(max.stability, Stability::Max);
        assert!((min.xi0[0] + 1.0).abs() < 1e-8 && min.xi0[1].abs() < 1e-8);
        assert!((max.xi0[0] - 1.0).abs() < 1e-8 && max.xi0[1].abs() < 1e-8);
        assert!(min.converged && max.converged);
        assert!((max.hessian_eigenvalues[0] + 1.0).abs() < 1e-6);
    }

    #[test]
    fn ellipse_second_derivatives() {
        let (big, small) = (3.0, 2.0);
        let a = Affine { coefficients: vec![1.0, 0.0], offset: 0.0 };
        let e = Ellipsoid::new(vec![0.0, 0.0], vec![big, small]).unwrap();
        let seeds: Vec<Vec<f64>> = circle_seeds(5, 2.5);
        let found = boundary_critical_search(&a, &e, &seeds, &SearchOptions::default()).unwrap();
        assert_eq!(found.len(), 2);
        let analytic = big / (small * small);
        assert!((found[0].xi0[0] + big).abs() < 1e-8);
        assert!((found[0].hessian_eigenvalues[0] - analytic).abs() < 1e-5);
        assert!((found[1].xi0[0] - big).abs() < 1e-8);
        assert!((found[1].hessian_eigenvalues[0] + analytic).abs() < 1e-5);
    }

    #[test]
    fn limits_are_fixed_points() {
        let a = Affine { coefficients: vec![1.0, 0.5, 0.0], offset: 0.0 };
        let e = Ellipsoid::new(vec![0.0; 3], vec![1.0, 2.0, 1.5]).unwrap();
        let seeds = vec![vec![0.3, 0.4, 1.0], vec![-1.0, 0.2, -0.3]];
        let opts = SearchOptions::default();
        let first = boundary_critical_search(&a, &e, &seeds, &opts).unwrap();
        let limits: Vec<Vec<f64>> = first.iter().map(|c| c.xi0.clone()).collect();
        let again = boundary_critical_search(&a, &e, &limits, &opts).unwrap();
        assert_eq!(first.len(), again.len());
        for (p, q) in first.iter().zip(&again) {
            for (u, v) in p.xi0.iter().zip(&q.xi0) {
                assert!((u - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn constant_weight_is_degenerate() {
        let a = Constant { n: 2, value: 3.0 };
        let s = Sphere::new(vec![0.0, 0.0], 1.0).unwrap();
        let opts = SearchOptions::default();
        let found = boundary_critical_search(&a, &s, &[vec![0.0, 1.0]], &opts).unwrap();
        assert_eq!(found.len(), 1);
        assert_eq!(found[0].stability, Stability::Unstable);
        assert_eq!(found[0].iterations, 0);
        let verdict = stability_degree_test(&a, &s, &found[0], 0.1, 16, 1, &opts);
        assert!(matches!(verdict, Err(Error::Inconclusive(_))));
    }

    #[test]
    fn strict_extrema_are_stable() {
        let a = Affine { coefficients: vec![1.0, 0.0], offset: 2.0 };
        let s = Sphere::new(vec![0.0, 0.0], 1.0).unwrap();
        let opts = SearchOptions { rate_constants: Some((1.0, 1.0)), ..SearchOptions::default() };
        let found = boundary_critical_search(&a, &s, &circle_seeds(4, 1.0), &opts).unwrap();
        for c in &found {
            assert!(stability_degree_test(&a, &s, c, 0.05, 32, 7, &opts).unwrap());
        }
        // at (1, 0): ∂_ν a = −1, so 𝓗ₐ < 0 and ε > 0 is admitted
        let max = &found[1];
        assert!(max.h_a.unwrap() < 0.0);
        assert_eq!(max.epsilon_side, EpsilonSide::Above);
        assert!(max.d0.unwrap() > 0.0);
    }

    #[test]
    fn saddle_is_stable() {
        let a = Quadratic::new(
            vec![vec![2.0, 0.0, 0.0], vec![0.0, -2.0, 0.0], vec![0.0, 0.0, 0.0]],
            vec![0.0; 3],
            2.0,
        )
        .unwrap();
        let s = Sphere::new(vec![0.0; 3], 1.0).unwrap();
        let opts = SearchOptions::default();
        let x0 = vec![0.0, 0.0, -1.0];
        let found = boundary_critical_search(&a, &s, &[x0], &opts).unwrap();
        let saddle = found.iter().find(|c| (c.xi0[2] + 1.0).abs() < 1e-9).unwrap();
        assert_eq!(saddle.stability, Stability::Nondegenerate);
        assert!(stability_degree_test(&a, &s, saddle, 0.05, 64, 3, &opts).unwrap());
    }

    #[test]
    fn degenerate_maximum_passes_radial_test() {
        // a = 2 − x₁⁴ on the unit circle has a flat maximum at (0, ±1)
        #[derive(Debug)]
        struct Quartic;
        impl WeightField for Quartic {
            fn dimension(&self) -> usize {
                2
            }
            fn value(&self, x: &[f64]) -> f64 {
                2.0 - x[0].powi(4)
            }
            fn gradient(&self, x: &[f64]) -> Vec<f64> {
                vec![-4.0 * x[0].powi(3), 0.0]
            }
        }
        let s = Sphere::new(vec![0.0, 0.0], 1.0).unwrap();
        let opts = SearchOptions::default();
        let c = candidate(
            &Quartic,
            &s,
            Walk { x: vec![0.0, 1.0], gradient_norm: 0.0, iterations: 0, converged: true },
            &opts,
        )
        .unwrap();
        assert_eq!(c.stability, Stability::Unstable);
        assert!(stability_degree_test(&Quartic, &s, &c, 0.1, 8, 1, &opts).unwrap());
    }
}
