//! Standard bubbles, their linearized kernels, the half-space corrector and
//! the two-term expansion of the projected bubble.

use std::cell::RefCell;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::quadrature::{integrate_breaks, integrate_to_infinity, QuadOptions};
use crate::special::{alpha, critical_power, require_reduced_dimension, sphere_area};

/// `U(x) = α_n δ^{(n−2)/2} / (δ² + |x−ξ|²)^{(n−2)/2}`, a positive entire
/// solution of `−ΔU = U^p` with `p = (n+2)/(n−2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bubble {
    n: usize,
    delta: f64,
    xi: Vec<f64>,
    alpha_n: f64,
}

impl Bubble {
    pub fn new(n: usize, delta: f64, xi: Vec<f64>) -> Result<Self> {
        require_reduced_dimension(n)?;
        if !(delta > 0.0 && delta.is_finite()) {
            return domain(format!("concentration scale must be positive, got {delta}"));
        }
        if xi.len() != n {
            return domain(format!("center has {} coordinates, expected {n}", xi.len()));
        }
        Ok(Self {
            n,
            delta,
            xi,
            alpha_n: alpha(n),
        })
    }

    pub fn centered(n: usize, delta: f64) -> Result<Self> {
        Self::new(n, delta, vec![0.0; n])
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn center(&self) -> &[f64] {
        &self.xi
    }

    /// The power `p = (n+2)/(n−2)` of the limit equation.
    pub fn power(&self) -> f64 {
        critical_power(self.n)
    }

    fn dist2(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.n);
        x.iter().zip(&self.xi).map(|(a, b)| (a - b) * (a - b)).sum()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let nf = self.n as f64;
        let d2 = self.delta * self.delta;
        self.alpha_n * self.delta.powf(0.5 * (nf - 2.0)) / (d2 + self.dist2(x)).powf(0.5 * (nf - 2.0))
    }

    /// Radial profile `U` as a function of `|x − ξ|`.
    pub fn radial(&self, r: f64) -> f64 {
        let nf = self.n as f64;
        self.alpha_n * self.delta.powf(0.5 * (nf - 2.0))
            / (self.delta * self.delta + r * r).powf(0.5 * (nf - 2.0))
    }

    /// `|∇U|` as a function of `|x − ξ|`.
    pub fn radial_gradient_norm(&self, r: f64) -> f64 {
        let nf = self.n as f64;
        self.alpha_n * (nf - 2.0) * self.delta.powf(0.5 * (nf - 2.0)) * r
            / (self.delta * self.delta + r * r).powf(0.5 * nf)
    }

    pub fn kernel(&self, j: KernelIndex, x: &[f64]) -> f64 {
        let nf = self.n as f64;
        let d2 = self.delta * self.delta;
        let r2 = self.dist2(x);
        let denom = (d2 + r2).powf(0.5 * nf);
        match j.0 {
            0 => {
                self.alpha_n * 0.5 * (nf - 2.0) * self.delta.powf(0.5 * (nf - 4.0)) * (r2 - d2) / denom
            }
            k => {
                self.alpha_n * (nf - 2.0) * self.delta.powf(0.5 * (nf - 2.0)) * (x[k - 1] - self.xi[k - 1])
                    / denom
            }
        }
    }
}

/// Selects `Z⁰ = ∂U/∂δ` (index 0) or `Zʲ = ∂U/∂ξ_j` (index `1..=n`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct KernelIndex(usize);

impl KernelIndex {
    pub fn new(j: usize, n: usize) -> Result<Self> {
        if j > n {
            return domain(format!("kernel index {j} out of range 0..={n}"));
        }
        Ok(Self(j))
    }

    pub fn dilation() -> Self {
        Self(0)
    }

    pub fn get(self) -> usize {
        self.0
    }
}

pub fn bubble_eval(b: &Bubble, x: &[f64]) -> f64 {
    b.eval(x)
}

pub fn kernel_eval(b: &Bubble, j: KernelIndex, x: &[f64]) -> f64 {
    b.kernel(j, x)
}

/// Second-order central-difference Laplacian.
pub fn discrete_laplacian<F: Fn(&[f64]) -> f64>(f: F, x: &[f64], h: f64) -> f64 {
    let mut y = x.to_vec();
    let f0 = f(x);
    let mut acc = 0.0;
    for i in 0..x.len() {
        y[i] = x[i] + h;
        let fp = f(&y);
        y[i] = x[i] - h;
        let fm = f(&y);
        y[i] = x[i];
        acc += fp - 2.0 * f0 + fm;
    }
    acc / (h * h)
}

/// `|−Δ_h U(x) − U(x)^p|`.
pub fn bubble_residual(b: &Bubble, x: &[f64], h: f64) -> f64 {
    let lap = discrete_laplacian(|y| b.eval(y), x, h);
    (-lap - b.eval(x).powf(b.power())).abs()
}

/// `|−Δ_h Z(x) − p U(x)^{p−1} Z(x)|` for the linearized equation.
pub fn kernel_residual(b: &Bubble, j: KernelIndex, x: &[f64], h: f64) -> f64 {
    let p = b.power();
    let lap = discrete_laplacian(|y| b.kernel(j, y), x, h);
    (-lap - p * b.eval(x).powf(p - 1.0) * b.kernel(j, x)).abs()
}

/// Harmonic function `φ₀` on the upper half-space `{x_n > 0}` with Neumann
/// datum `∂φ₀/∂x_n = α_n (n−2)/2 Σ k_i x_i² / (1+|x|²)^{n/2}` and decay at
/// infinity, evaluated through its single-layer representation
///
/// `φ₀(x) = −(α_n/ω_{n−1}) Σ k_i ∫ y_i² (1+|y'|²)^{−n/2} |x−y'|^{2−n} dy'`.
///
/// The `(n−1)`-dimensional integral is reduced to `(r, θ)` with `θ` the angle
/// between `y'` and `x'`; the angular average of `y_i²` over the remaining
/// `S^{n−3}` is done in closed form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectorField {
    n: usize,
    curvatures: Vec<f64>,
    alpha_n: f64,
    prefactor: f64,
    trace: f64,
    rel_tol: f64,
    far_field_radius: f64,
}

const DEFAULT_CORRECTOR_TOL: f64 = 1e-10;
const FAR_FIELD_RADIUS: f64 = 1e4;

impl CorrectorField {
    /// `curvatures` are the `n − 1` principal curvatures at the chart origin.
    pub fn new(curvatures: Vec<f64>) -> Result<Self> {
        let n = curvatures.len() + 1;
        require_reduced_dimension(n)?;
        if curvatures.iter().any(|k| !k.is_finite()) {
            return domain("curvatures must be finite");
        }
        let alpha_n = alpha(n);
        let prefactor = -alpha_n / sphere_area(n - 1) * sphere_area(n - 3);
        let trace = curvatures.iter().sum();
        Ok(Self {
            n,
            curvatures,
            alpha_n,
            prefactor,
            trace,
            rel_tol: DEFAULT_CORRECTOR_TOL,
            far_field_radius: FAR_FIELD_RADIUS,
        })
    }

    pub fn with_tolerance(mut self, rel_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn curvatures(&self) -> &[f64] {
        &self.curvatures
    }

    pub fn tolerance(&self) -> f64 {
        self.rel_tol
    }

    /// Prescribed normal derivative on `{x_n = 0}` at tangential point `x'`.
    pub fn neumann_datum(&self, xp: &[f64]) -> f64 {
        let nf = self.n as f64;
        let r2: f64 = xp.iter().map(|v| v * v).sum();
        let q: f64 = self.curvatures.iter().zip(xp).map(|(k, v)| k * v * v).sum();
        self.alpha_n * 0.5 * (nf - 2.0) * q / (1.0 + r2).powf(0.5 * nf)
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n {
            return domain(format!("point has {} coordinates, expected {}", x.len(), self.n));
        }
        let z = x[self.n - 1];
        if z < 0.0 {
            return domain(format!("corrector lives on x_n >= 0, got x_n = {z}"));
        }
        if self.curvatures.iter().all(|&k| k == 0.0) {
            return Ok(0.0);
        }
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > self.far_field_radius {
            let unit: Vec<f64> = x.iter().map(|v| v / norm).collect();
            let shape = self.representation(&unit, true)?;
            return Ok(shape * norm.powf(3.0 - self.n as f64));
        }
        self.representation(x, false)
    }

    /// Quadratic-form weights `(A, B)` with `Σ k_i ω_i²` averaged over the
    /// `S^{n−3}` orthogonal to `x'` equal to `A cos²θ + B sin²θ`.
    fn angular_weights(&self, xp: &[f64]) -> (f64, f64) {
        let rho2: f64 = xp.iter().map(|v| v * v).sum();
        let along = if rho2 > 0.0 {
            self.curvatures.iter().zip(xp).map(|(k, v)| k * v * v).sum::<f64>() / rho2
        } else {
            self.curvatures[0]
        };
        let across = (self.trace - along) / (self.n as f64 - 2.0);
        (along, across)
    }

    fn representation(&self, x: &[f64], far: bool) -> Result<f64> {
        let n = self.n;
        let nf = n as f64;
        let xp = &x[..n - 1];
        let z = x[n - 1];
        let rho = xp.iter().map(|v| v * v).sum::<f64>().sqrt();
        let (a, b) = self.angular_weights(xp);
        let half_power = 0.5 * (nf - 2.0);
        let inner_opts = QuadOptions::relative(0.1 * self.rel_tol).with_max_subdivisions(4000);
        let outer_opts = QuadOptions::relative(self.rel_tol).with_max_subdivisions(4000);

        // ∫₀^π sin^{n−3}θ {cos²θ, sin²θ} D^{−(n−2)/2} dθ
        let angular = |r: f64, weight: AngularWeight| -> Result<f64> {
            let gap = ((r - rho).powi(2) + z * z).sqrt();
            let width = if rho > 0.0 && r > 0.0 { gap / (r * rho).sqrt() } else { std::f64::consts::PI };
            let breaks = geometric_breaks(0.0, width, 0.0, std::f64::consts::PI);
            let f = |t: f64| {
                let s = t.sin();
                let half = (0.5 * t).sin();
                let d = (r - rho) * (r - rho) + 4.0 * r * rho * half * half + z * z;
                let ang = match weight {
                    AngularWeight::Cos => t.cos().powi(2),
                    AngularWeight::Sin => s * s,
                    AngularWeight::One => 1.0,
                };
                s.powi(n as i32 - 3) * ang / d.powf(half_power)
            };
            Ok(integrate_breaks(f, &breaks, inner_opts)?.value)
        };
        let radial_weight = |r: f64| {
            if far {
                1.0
            } else {
                r.powi(n as i32) / (1.0 + r * r).powf(0.5 * nf)
            }
        };
        let outer = |weight: AngularWeight| -> Result<f64> {
            let err = RefCell::new(None);
            let f = |r: f64| {
                if r == 0.0 && rho == 0.0 && z == 0.0 {
                    return 0.0;
                }
                match angular(r, weight) {
                    Ok(v) => radial_weight(r) * v,
                    Err(e) => {
                        err.borrow_mut().get_or_insert(e);
                        f64::NAN
                    }
                }
            };
            let cut = 2.0 * (rho + z) + 1.0;
            let mut breaks = vec![0.0, 1.0, z, cut];
            if rho > 0.0 {
                let w0 = z.max(1e-9 * rho);
                breaks.extend(geometric_breaks(rho, w0, 0.0, cut));
            }
            breaks.retain(|v| *v >= 0.0 && *v <= cut);
            breaks.sort_by(f64::total_cmp);
            breaks.dedup();
            let head = integrate_breaks(f, &breaks, outer_opts);
            let tail = integrate_to_infinity(f, cut, outer_opts);
            if let Some(e) = err.into_inner() {
                return Err(e);
            }
            Ok(head?.value + tail?.value)
        };
        let mut total = 0.0;
        if a == b {
            total = a * outer(AngularWeight::One)?;
        } else {
            if a != 0.0 {
                total += a * outer(AngularWeight::Cos)?;
            }
            if b != 0.0 {
                total += b * outer(AngularWeight::Sin)?;
            }
        }
        Ok(self.prefactor * total)
    }
}

#[derive(Debug, Clone, Copy)]
enum AngularWeight {
    Cos,
    Sin,
    One,
}

/// Points `center ± w0·4^k` inside `(lo, hi)`, plus `lo`, `hi` and `center`.
fn geometric_breaks(center: f64, w0: f64, lo: f64, hi: f64) -> Vec<f64> {
    let mut out = vec![lo, hi];
    if center > lo && center < hi {
        out.push(center);
    }
    if w0 > 0.0 {
        let mut w = w0;
        while w < hi - lo {
            for p in [center - w, center + w] {
                if p > lo && p < hi {
                    out.push(p);
                }
            }
            w *= 4.0;
        }
    }
    out.sort_by(f64::total_cmp);
    out.dedup();
    out
}

pub fn corrector_eval(c: &CorrectorField, x: &[f64]) -> Result<f64> {
    c.eval(x)
}

/// `|∂_h φ₀(x', 0) − datum(x')|` with the second-order one-sided difference
/// `(−3φ(0) + 4φ(h) − φ(2h)) / 2h` in the normal direction.
pub fn corrector_boundary_flux_check(c: &CorrectorField, xp: &[f64], h: f64) -> Result<f64> {
    if !(h > 0.0) {
        return domain(format!("step must be positive, got {h}"));
    }
    if xp.len() + 1 != c.n {
        return domain(format!("boundary point has {} coordinates, expected {}", xp.len(), c.n - 1));
    }
    let at = |t: f64| {
        let mut x = xp.to_vec();
        x.push(t);
        c.eval(&x)
    };
    let (f0, f1, f2) = (at(0.0)?, at(h)?, at(2.0 * h)?);
    let slope = (-3.0 * f0 + 4.0 * f1 - f2) / (2.0 * h);
    Ok((slope - c.neumann_datum(xp)).abs())
}

/// `U_{δ,ξ}(x) − δ^{(4−n)/2} φ₀((x−ξ)/δ)`.
pub fn projection_expansion(b: &Bubble, c: &CorrectorField, x: &[f64]) -> Result<f64> {
    Ok(b.eval(x) - projection_correction(b, c, x)?)
}

/// The correction term `δ^{(4−n)/2} φ₀((x−ξ)/δ)` alone.
pub fn projection_correction(b: &Bubble, c: &CorrectorField, x: &[f64]) -> Result<f64> {
    if b.n != c.n {
        return domain(format!("bubble dimension {} differs from corrector dimension {}", b.n, c.n));
    }
    let y: Vec<f64> = x.iter().zip(&b.xi).map(|(a, s)| (a - s) / b.delta).collect();
    let nf = b.n as f64;
    Ok(b.delta.powf(0.5 * (4.0 - nf)) * c.eval(&y)?)
}
